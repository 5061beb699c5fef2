"""Alignment-free sequence loss over a log-probability lattice.

The loss marginalizes over every frame-level path whose collapse (merge
repeats, drop blanks) equals the target label sequence. The efficient route
is the usual forward-backward recursion over the blank-extended label
sequence, entirely in log space; `ctc_loss_bruteforce` is an independent
oracle that literally enumerates paths and sums their probabilities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff
from .autodiff import NEG_INF, Node

BRUTEFORCE_PATH_LIMIT = 10**7
_BRUTEFORCE_CHUNK = 1 << 18


class CtcInfeasibleError(ValueError):
    """The lattice has too few frames to realize the label sequence."""


@dataclass
class CtcResult:
    """Loss value and its gradient w.r.t. the log-probability lattice."""

    loss: float
    grad: np.ndarray  # (T, V+1), equals minus the state-occupancy marginals


def expand_with_blanks(labels, blank: int) -> np.ndarray:
    """Interleave blanks around and between labels: [a, b] -> [_, a, _, b, _]."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.ndim != 1:
        raise ValueError(f"labels must be 1-D, got shape {labels.shape}")
    if np.any(labels == blank):
        raise ValueError("label sequence contains the blank symbol")
    ext = np.full(2 * labels.size + 1, blank, dtype=np.int64)
    ext[1::2] = labels
    return ext


def min_feasible_length(labels) -> int:
    """Fewest frames that can realize `labels`: one per label plus one
    separating blank per adjacent repeat."""
    labels = np.asarray(labels, dtype=np.int64)
    repeats = int(np.sum(labels[1:] == labels[:-1])) if labels.size > 1 else 0
    return int(labels.size) + repeats


def _check_lattice(lattice: np.ndarray, blank: int) -> np.ndarray:
    lattice = np.asarray(lattice, dtype=np.float64)
    if lattice.ndim != 2:
        raise ValueError(f"lattice must be 2-D, got shape {lattice.shape}")
    if not 0 <= blank < lattice.shape[1]:
        raise ValueError(f"blank index {blank} outside lattice width {lattice.shape[1]}")
    return lattice


def ctc_alpha_beta(lattice: np.ndarray, ext: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Log-space forward/backward tables over the extended label states.

    Both tables include the emission at their own frame, so for every t
    logsumexp_s(alpha[t,s] + beta[t,s] - lattice[t, ext[s]]) equals the total
    log-probability of the target.
    """
    T, _ = lattice.shape
    if T == 0:
        raise ValueError("empty lattice")
    S = ext.size
    emit = lattice[:, ext]  # (T, S)

    # skip transition s-2 -> s is allowed only between distinct non-blank
    # symbols; labels sit at the odd positions of ext
    can_skip = np.zeros(S, dtype=bool)
    if S > 3:
        can_skip[3::2] = ext[3::2] != ext[1:-2:2]

    alpha = np.full((T, S), NEG_INF)
    alpha[0, 0] = emit[0, 0]
    if S > 1:
        alpha[0, 1] = emit[0, 1]
    for t in range(1, T):
        prev = alpha[t - 1]
        step = np.concatenate(([NEG_INF], prev[:-1]))
        acc = np.logaddexp(prev, step)
        if S > 2:
            skip = np.concatenate(([NEG_INF, NEG_INF], prev[:-2]))
            acc = np.where(can_skip, np.logaddexp(acc, skip), acc)
        alpha[t] = acc + emit[t]

    beta = np.full((T, S), NEG_INF)
    beta[T - 1, S - 1] = emit[T - 1, S - 1]
    if S > 1:
        beta[T - 1, S - 2] = emit[T - 1, S - 2]
    # the mirrored skip: from state s jump to s+2 when that state may skip in
    reachable_by_skip = np.zeros(S, dtype=bool)
    if S > 2:
        reachable_by_skip[:-2] = can_skip[2:]
    for t in range(T - 2, -1, -1):
        nxt = beta[t + 1]
        step = np.concatenate((nxt[1:], [NEG_INF]))
        acc = np.logaddexp(nxt, step)
        if S > 2:
            skip = np.concatenate((nxt[2:], [NEG_INF, NEG_INF]))
            acc = np.where(reachable_by_skip, np.logaddexp(acc, skip), acc)
        beta[t] = acc + emit[t]

    return alpha, beta


def ctc_loss(lattice, labels, blank: int) -> CtcResult:
    """Negative log-probability of `labels` under the lattice, with gradient.

    The lattice rows are per-frame log-distributions over V labels plus the
    blank. Infeasible instances (T below `min_feasible_length`) raise
    CtcInfeasibleError rather than returning an infinite loss.
    """
    lattice = _check_lattice(lattice, blank)
    labels = np.asarray(labels, dtype=np.int64)
    T = lattice.shape[0]
    if T < min_feasible_length(labels):
        raise CtcInfeasibleError(
            f"{T} frames cannot realize {labels.size} labels "
            f"(minimum {min_feasible_length(labels)})"
        )
    ext = expand_with_blanks(labels, blank)
    alpha, beta = ctc_alpha_beta(lattice, ext)

    S = ext.size
    if S > 1:
        total = np.logaddexp(alpha[T - 1, S - 1], alpha[T - 1, S - 2])
    else:
        total = alpha[T - 1, 0]

    # occupancy gamma[t, s] = P(path passes state s at frame t | target);
    # d loss / d lattice[t, k] = -sum_{s: ext[s]=k} gamma[t, s]
    occ = np.exp(alpha + beta - lattice[:, ext] - total)
    grad = np.zeros_like(lattice)
    np.add.at(grad.T, ext, -occ.T)
    return CtcResult(loss=float(-total), grad=grad)


def ctc_node(logprobs: Node, labels, blank: int) -> Node:
    """Attach the loss to a graph node holding the log-probability lattice."""
    res = ctc_loss(logprobs.value, labels, blank)
    out = Node([[res.loss]], parents=(logprobs,))

    def _bwd():
        if logprobs.requires_grad:
            logprobs.grad += out.grad[0, 0] * res.grad

    out._backward = _bwd
    return out


# ---------------------------------------------------------------------------
# Enumeration oracle
# ---------------------------------------------------------------------------


def ctc_loss_bruteforce(lattice, labels, blank: int) -> float:
    """-log P(labels) by enumerating every (V+1)^T frame-label path.

    Keeps the paths whose collapse equals `labels` and sums their
    probabilities with exact (fsum) accumulation. Refuses instances with more
    than BRUTEFORCE_PATH_LIMIT paths. Deliberately shares no code with the
    forward-backward recursion.
    """
    lattice = _check_lattice(lattice, blank)
    labels = np.asarray(labels, dtype=np.int64)
    T, W = lattice.shape
    n_paths = W**T
    if n_paths > BRUTEFORCE_PATH_LIMIT:
        raise ValueError(f"{n_paths} paths exceed the enumeration guard")

    U = labels.size
    weights = W ** np.arange(T - 1, -1, -1, dtype=np.int64)
    matched: list[float] = []
    for start in range(0, n_paths, _BRUTEFORCE_CHUNK):
        stop = min(start + _BRUTEFORCE_CHUNK, n_paths)
        codes = np.arange(start, stop, dtype=np.int64)
        paths = (codes[:, None] // weights) % W  # (n, T)

        keep = np.ones(paths.shape, dtype=bool)
        keep[:, 1:] = paths[:, 1:] != paths[:, :-1]  # merge repeats
        keep &= paths != blank  # drop blanks
        rows = np.flatnonzero(keep.sum(axis=1) == U)
        if rows.size == 0:
            continue
        collapsed = paths[rows][keep[rows]].reshape(rows.size, U)
        hit = rows[np.all(collapsed == labels, axis=1)]
        if hit.size == 0:
            continue
        logp = lattice[np.arange(T), paths[hit]].sum(axis=1)
        matched.extend(np.exp(logp).tolist())

    total = math.fsum(matched)
    return float("inf") if total == 0.0 else -math.log(total)
