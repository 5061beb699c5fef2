"""Unidirectional LSTMP encoder with frame stacking and inter-layer time
reduction, producing a per-step log-probability lattice over labels + blank.

Two forward implementations share the same cell math:

* a streaming pipeline (`new_stream` / `stream_push` / `stream_close`) that
  consumes raw frames row by row and is, by construction, independent of how
  the input is chunked — `forward` is just a fresh stream fed everything;
* a graph builder (`forward_graph`) for training, which fuses each recurrent
  layer into a single autodiff node with a hand-written BPTT backward.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import DimensionError, Node

try:  # hot recurrence loops JIT-compile when numba is present
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    _HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def deco(f):
            return f

        return deco


CHECKPOINT_MAGIC = "streamslu-checkpoint"
CHECKPOINT_VERSION = 1


class StreamClosedError(RuntimeError):
    """Frames were pushed into (or close was called on) a closed stream."""


class CheckpointError(ValueError):
    """Checkpoint file is missing, malformed, or of an unsupported version."""


# ---------------------------------------------------------------------------
# Configuration and parameters
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EncoderConfig:
    """Architecture constants. Defaults are the desk-scale setup: an 8-dim
    frontend stacked 7 left / skip 3, three LSTMP layers with reduction 4
    before layers 2 and 3, and a two-layer output head."""

    feature_dim: int = 8
    stack_left: int = 7
    frame_skip: int = 3
    reduction_factors: tuple[int, ...] = (4, 4)
    hidden_dim: int = 64
    proj_dim: int = 32
    head_hidden: int = 32
    vocab_size: int = 12
    hop_ms: float = 10.0
    dropout: float = 0.1
    label_names: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.stack_left < 0:
            raise ValueError("stack_left must be >= 0")
        if self.frame_skip < 1:
            raise ValueError("frame_skip must be >= 1")
        if any(lam < 1 for lam in self.reduction_factors):
            raise ValueError("reduction factors must be >= 1")
        if self.vocab_size < 1:
            raise ValueError("vocab_size must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        object.__setattr__(self, "reduction_factors", tuple(self.reduction_factors))
        if self.label_names is not None:
            if len(self.label_names) != self.vocab_size:
                raise ValueError("label_names length must equal vocab_size")
            object.__setattr__(self, "label_names", tuple(self.label_names))

    @property
    def blank_index(self) -> int:
        # blank is pinned to the last output slot and serialized as such
        return self.vocab_size

    @property
    def num_layers(self) -> int:
        return 1 + len(self.reduction_factors)

    @property
    def frames_per_step(self) -> int:
        """Raw input frames consumed per output lattice row."""
        return self.frame_skip * math.prod(self.reduction_factors)

    @property
    def step_ms(self) -> float:
        return self.frames_per_step * self.hop_ms

    def layer_input_dim(self, i: int) -> int:
        if i == 0:
            return self.feature_dim * (self.stack_left + 1)
        return self.proj_dim * self.reduction_factors[i - 1]

    def output_length(self, n_frames: int) -> int:
        n = -(-n_frames // self.frame_skip)
        for lam in self.reduction_factors:
            n = -(-n // lam)
        return n

    def names(self) -> tuple[str, ...]:
        if self.label_names is not None:
            return self.label_names
        return tuple(f"intent_{k:02d}" for k in range(self.vocab_size))


def _uniform_init(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    r = 1.0 / math.sqrt(rows)
    return rng.uniform(-r, r, size=(rows, cols))


class LstmpLayer:
    """Gate weights and the output projection of one recurrent layer.

    Gate layout along the 4H axis is [input, forget, output, candidate]; the
    forget-gate bias starts at +1. The projected output (dim `proj_dim`)
    feeds both the recurrence and the next layer.
    """

    def __init__(self, input_dim: int, hidden_dim: int, proj_dim: int,
                 rng: np.random.Generator):
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        self.proj_dim = proj_dim
        self.wx = ad.parameter(_uniform_init(rng, input_dim, 4 * hidden_dim))
        self.wh = ad.parameter(_uniform_init(rng, proj_dim, 4 * hidden_dim))
        bias = np.zeros((1, 4 * hidden_dim))
        bias[0, hidden_dim : 2 * hidden_dim] = 1.0
        self.bias = ad.parameter(bias)
        self.proj = ad.parameter(_uniform_init(rng, hidden_dim, proj_dim))

    def params(self) -> list[tuple[str, Node, bool]]:
        return [
            ("wx", self.wx, False),
            ("wh", self.wh, False),
            ("bias", self.bias, True),
            ("proj", self.proj, False),
        ]

    def set_trainable(self, flag: bool) -> None:
        for _, node, _ in self.params():
            node.requires_grad = flag
            if flag and node.grad is None:
                node.grad = np.zeros_like(node.value)


class OutputHead:
    """Two affine layers (tanh between) mapping projections to V+1 logits."""

    def __init__(self, in_dim: int, hidden: int, out_dim: int,
                 rng: np.random.Generator):
        self.w1 = ad.parameter(_uniform_init(rng, in_dim, hidden))
        self.b1 = ad.parameter(np.zeros((1, hidden)))
        self.w2 = ad.parameter(_uniform_init(rng, hidden, out_dim))
        self.b2 = ad.parameter(np.zeros((1, out_dim)))

    def params(self) -> list[tuple[str, Node, bool]]:
        return [("w1", self.w1, False), ("b1", self.b1, True),
                ("w2", self.w2, False), ("b2", self.b2, True)]


@dataclass
class EncoderModel:
    config: EncoderConfig
    layers: list[LstmpLayer]
    head: OutputHead
    frozen: list[bool]
    cmvn_mean: np.ndarray | None = None
    cmvn_std: np.ndarray | None = None

    def named_parameters(self) -> list[tuple[str, Node, bool]]:
        out = []
        for i, layer in enumerate(self.layers):
            out.extend((f"layer{i}.{n}", node, is_bias)
                       for n, node, is_bias in layer.params())
        out.extend((f"head.{n}", node, is_bias)
                   for n, node, is_bias in self.head.params())
        return out

    def set_layer_frozen(self, i: int, frozen: bool = True) -> None:
        self.frozen[i] = frozen
        self.layers[i].set_trainable(not frozen)

    def set_cmvn(self, mean: np.ndarray, std: np.ndarray) -> None:
        self.cmvn_mean = np.asarray(mean, dtype=np.float64).reshape(-1)
        self.cmvn_std = np.asarray(std, dtype=np.float64).reshape(-1)

    def normalize(self, features: np.ndarray) -> np.ndarray:
        if self.cmvn_mean is None:
            return features
        return (features - self.cmvn_mean) / self.cmvn_std


def init_model(config: EncoderConfig, rng: np.random.Generator) -> EncoderModel:
    layers = [
        LstmpLayer(config.layer_input_dim(i), config.hidden_dim, config.proj_dim, rng)
        for i in range(config.num_layers)
    ]
    head = OutputHead(config.proj_dim, config.head_hidden, config.vocab_size + 1, rng)
    return EncoderModel(config=config, layers=layers, head=head,
                        frozen=[False] * config.num_layers)


# ---------------------------------------------------------------------------
# Frame geometry ops (pure, input side)
# ---------------------------------------------------------------------------


def stack_frames(seq: np.ndarray, left: int, skip: int) -> np.ndarray:
    """Concatenate each kept frame with its `left` predecessors (oldest
    first), keeping every `skip`-th frame. Early positions repeat frame 0.

    (T, D) -> (ceil(T/skip), D*(left+1)).
    """
    if left < 0 or skip < 1:
        raise ValueError("need left >= 0 and skip >= 1")
    seq = np.asarray(seq, dtype=np.float64)
    T, D = seq.shape
    if T == 0:
        return np.zeros((0, D * (left + 1)))
    pos = np.arange(0, T, skip)
    idx = np.clip(pos[:, None] + np.arange(-left, 1)[None, :], 0, None)
    return seq[idx].reshape(pos.size, D * (left + 1))


def time_reduce(seq: np.ndarray, lam: int) -> np.ndarray:
    """Concatenate non-overlapping windows of `lam` frames along features;
    a final partial window repeats its last frame. (T, D) -> (ceil(T/lam), D*lam)."""
    if lam < 1:
        raise ValueError("reduction factor must be >= 1")
    seq = np.asarray(seq, dtype=np.float64)
    T, D = seq.shape
    if T == 0:
        return np.zeros((0, D * lam))
    n = -(-T // lam)
    idx = np.minimum(np.arange(n)[:, None] * lam + np.arange(lam)[None, :], T - 1)
    return seq[idx].reshape(n, D * lam)


# ---------------------------------------------------------------------------
# Recurrent cell kernels (shared by streaming and training paths, so both
# produce bitwise-identical activations)
# ---------------------------------------------------------------------------


@njit(cache=True)
def _seq_forward(xw, c0, r0, wh, bias, proj):
    """Run the recurrence over a precomputed input projection xw = X @ wx.

    Returns the per-step internals needed by the backward pass plus the
    final (cell, projection) state. All arrays are float64; gate layout is
    [input, forget, output, candidate] along the 4H axis.
    """
    T = xw.shape[0]
    H = c0.shape[0]
    P = r0.shape[0]
    I = np.empty((T, H))
    F = np.empty((T, H))
    O = np.empty((T, H))
    G = np.empty((T, H))
    Cprev = np.empty((T, H))
    TC = np.empty((T, H))
    Hh = np.empty((T, H))
    Rprev = np.empty((T, P))
    R = np.empty((T, P))
    c = c0.copy()
    r = r0.copy()
    for t in range(T):
        z = xw[t] + np.dot(r, wh) + bias
        gates = 1.0 / (1.0 + np.exp(-z[: 3 * H]))
        g = np.tanh(z[3 * H :])
        Cprev[t] = c
        Rprev[t] = r
        c = gates[H : 2 * H] * c + gates[:H] * g
        tc = np.tanh(c)
        h = gates[2 * H : 3 * H] * tc
        r = np.dot(h, proj)
        I[t] = gates[:H]
        F[t] = gates[H : 2 * H]
        O[t] = gates[2 * H : 3 * H]
        G[t] = g
        TC[t] = tc
        Hh[t] = h
        R[t] = r
    return I, F, O, G, Cprev, TC, Hh, Rprev, R, c, r


@njit(cache=True)
def _seq_backward(gR, I, F, O, G, Cprev, TC, whT, projT):
    """BPTT over the saved internals. Returns dZ (T, 4H) and the total
    per-step projection gradients dRtot (T, P); the parameter gradients are
    batched matmuls over these."""
    T, H = I.shape
    P = gR.shape[1]
    dZ = np.empty((T, 4 * H))
    dRtot = np.empty((T, P))
    dc = np.zeros(H)
    dr = np.zeros(P)
    for t in range(T - 1, -1, -1):
        dr = dr + gR[t]
        dRtot[t] = dr
        dh = np.dot(dr, projT)
        do = dh * TC[t]
        dc = dc + dh * O[t] * (1.0 - TC[t] * TC[t])
        dZ[t, :H] = dc * G[t] * I[t] * (1.0 - I[t])
        dZ[t, H : 2 * H] = dc * Cprev[t] * F[t] * (1.0 - F[t])
        dZ[t, 2 * H : 3 * H] = do * O[t] * (1.0 - O[t])
        dZ[t, 3 * H :] = dc * I[t] * (1.0 - G[t] * G[t])
        dc = dc * F[t]
        dr = np.dot(dZ[t], whT)
    return dZ, dRtot


def _cell(xw: np.ndarray, c: np.ndarray, r: np.ndarray, layer: LstmpLayer):
    """One step given xw = x @ wx. Returns (r_new, c_new, h)."""
    out = _seq_forward(xw.reshape(1, -1), c, r, layer.wh.value,
                       layer.bias.value[0], layer.proj.value)
    _, _, _, _, _, _, Hh, _, _, c_new, r_new = out
    return r_new, c_new, Hh[0]


def lstmp_step(x: np.ndarray, layer: LstmpLayer, state: tuple[np.ndarray, np.ndarray]):
    """Advance one frame. `state` is (cell, projected output); a fresh state
    is `zero_state(layer)`. Returns (projected output, new state)."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.size != layer.input_dim:
        raise DimensionError(
            f"lstmp_step: input dim {x.size}, layer expects {layer.input_dim}"
        )
    c, r = state
    r_new, c_new, _ = _cell(x @ layer.wx.value, c, r, layer)
    return r_new, (c_new, r_new)


def zero_state(layer: LstmpLayer) -> tuple[np.ndarray, np.ndarray]:
    return np.zeros(layer.hidden_dim), np.zeros(layer.proj_dim)


# ---------------------------------------------------------------------------
# Streaming pipeline
# ---------------------------------------------------------------------------


class _Stacker:
    """Incremental stack_frames. Keeps only the trailing frames still needed
    plus a copy of frame 0 for left-edge padding."""

    def __init__(self, left: int, skip: int, dim: int):
        self.left = left
        self.skip = skip
        self.dim = dim
        self.first: np.ndarray | None = None
        self.buf: list[np.ndarray] = []
        self.start = 0  # absolute index of buf[0]
        self.seen = 0
        self.next_pos = 0

    def _frame(self, j: int) -> np.ndarray:
        j = max(j, 0)
        if j == 0:
            return self.first
        return self.buf[j - self.start]

    def push(self, frames: np.ndarray) -> np.ndarray:
        out = []
        for row in frames:
            if self.first is None:
                self.first = row.copy()
            self.buf.append(row)
            self.seen += 1
            while self.next_pos < self.seen:
                window = [self._frame(j)
                          for j in range(self.next_pos - self.left, self.next_pos + 1)]
                out.append(np.concatenate(window))
                self.next_pos += self.skip
                keep_from = self.next_pos - self.left
                while self.start < keep_from and self.buf:
                    self.buf.pop(0)
                    self.start += 1
        if not out:
            return np.zeros((0, self.dim * (self.left + 1)))
        return np.vstack(out)


class _Reducer:
    """Incremental time_reduce: emits a concatenated window every `lam` rows;
    `flush` pads a trailing partial window by repeating its last row."""

    def __init__(self, lam: int, dim: int):
        self.lam = lam
        self.dim = dim
        self.pending: list[np.ndarray] = []

    def push(self, rows: np.ndarray) -> np.ndarray:
        out = []
        for row in rows:
            self.pending.append(row)
            if len(self.pending) == self.lam:
                out.append(np.concatenate(self.pending))
                self.pending = []
        if not out:
            return np.zeros((0, self.dim * self.lam))
        return np.vstack(out)

    def flush(self) -> np.ndarray:
        if not self.pending:
            return np.zeros((0, self.dim * self.lam))
        window = self.pending + [self.pending[-1]] * (self.lam - len(self.pending))
        self.pending = []
        return np.concatenate(window)[None, :]


@dataclass
class EncoderState:
    """Private per-stream state: stacking/reduction buffers plus each layer's
    (cell, projection) pair. Chunking never changes what comes out."""

    stacker: _Stacker
    reducers: list[_Reducer | None]
    cells: list[tuple[np.ndarray, np.ndarray]]
    closed: bool = False
    rows_emitted: int = 0


def new_stream(model: EncoderModel) -> EncoderState:
    cfg = model.config
    reducers: list[_Reducer | None] = [None]
    reducers += [_Reducer(lam, cfg.proj_dim) for lam in cfg.reduction_factors]
    return EncoderState(
        stacker=_Stacker(cfg.stack_left, cfg.frame_skip, cfg.feature_dim),
        reducers=reducers,
        cells=[zero_state(layer) for layer in model.layers],
    )


def _head_rows(model: EncoderModel, rows: np.ndarray) -> np.ndarray:
    out = np.empty((rows.shape[0], model.config.vocab_size + 1))
    h = model.head
    for k, row in enumerate(rows):
        hidden = np.tanh(row @ h.w1.value + h.b1.value[0])
        out[k] = ad.log_softmax(hidden @ h.w2.value + h.b2.value[0])
    return out


def _run_layer(model: EncoderModel, state: EncoderState, i: int,
               rows: np.ndarray) -> np.ndarray:
    layer = model.layers[i]
    c, r = state.cells[i]
    xw = np.ascontiguousarray(rows @ layer.wx.value)
    out = _seq_forward(xw, c, r, layer.wh.value, layer.bias.value[0],
                       layer.proj.value)
    R, c_new, r_new = out[8], out[9], out[10]
    state.cells[i] = (c_new, r_new)
    return R


def _advance(model: EncoderModel, state: EncoderState, rows: np.ndarray,
             start_layer: int, skip_first_reduce: bool = False) -> np.ndarray:
    for i in range(start_layer, model.config.num_layers):
        if i > 0 and not (skip_first_reduce and i == start_layer):
            rows = state.reducers[i].push(rows)
        if rows.shape[0] == 0:
            return np.zeros((0, model.config.vocab_size + 1))
        rows = _run_layer(model, state, i, rows)
    return _head_rows(model, rows)


def stream_push(model: EncoderModel, state: EncoderState,
                chunk: np.ndarray) -> np.ndarray:
    """Feed raw frames; returns every lattice row whose receptive field is
    now complete (possibly none)."""
    if state.closed:
        raise StreamClosedError("stream_push after stream_close")
    chunk = np.asarray(chunk, dtype=np.float64)
    if chunk.ndim != 2 or chunk.shape[1] != model.config.feature_dim:
        raise DimensionError(
            f"chunk shape {chunk.shape} does not match feature dim "
            f"{model.config.feature_dim}"
        )
    stacked = state.stacker.push(model.normalize(chunk))
    out = _advance(model, state, stacked, 0)
    state.rows_emitted += out.shape[0]
    return out


def stream_close(model: EncoderModel, state: EncoderState) -> np.ndarray:
    """End of input: pad and flush the partial reduction windows, returning
    the final lattice rows."""
    if state.closed:
        raise StreamClosedError("stream already closed")
    state.closed = True
    outs = []
    for i in range(1, model.config.num_layers):
        pad = state.reducers[i].flush()
        if pad.shape[0]:
            outs.append(_advance(model, state, pad, i, skip_first_reduce=True))
    if not outs:
        return np.zeros((0, model.config.vocab_size + 1))
    out = np.vstack(outs)
    state.rows_emitted += out.shape[0]
    return out


def forward(model: EncoderModel, features: np.ndarray) -> np.ndarray:
    """Whole-utterance lattice: a fresh stream fed everything at once."""
    state = new_stream(model)
    head = stream_push(model, state, features)
    tail = stream_close(model, state)
    return np.vstack([head, tail])


# ---------------------------------------------------------------------------
# Training graph
# ---------------------------------------------------------------------------


def time_reduce_node(a: Node, lam: int) -> Node:
    T, D = a.value.shape
    n = -(-T // lam)
    idx = np.minimum(np.arange(n)[:, None] * lam + np.arange(lam)[None, :], T - 1)
    out = Node(a.value[idx].reshape(n, D * lam), parents=(a,))

    def _bwd():
        if a.requires_grad:
            np.add.at(a.grad, idx, out.grad.reshape(n, lam, D))

    out._backward = _bwd
    return out


def lstmp_layer_node(x: Node, layer: LstmpLayer) -> Node:
    """Run the whole recurrence as one fused graph op (BPTT backward)."""
    T, D = x.value.shape
    if D != layer.input_dim:
        raise DimensionError(
            f"lstmp layer: input dim {D}, layer expects {layer.input_dim}"
        )
    H = layer.hidden_dim
    wx, wh, bias, proj = layer.wx, layer.wh, layer.bias, layer.proj

    xw = x.value @ wx.value
    I, F, O, G, Cprev, TC, Hh, Rprev, R, _, _ = _seq_forward(
        xw, np.zeros(H), np.zeros(layer.proj_dim),
        wh.value, bias.value[0], proj.value)
    out = Node(R, parents=(x, wx, wh, bias, proj))

    def _bwd():
        dZ, dRtot = _seq_backward(out.grad, I, F, O, G, Cprev, TC,
                                  np.ascontiguousarray(wh.value.T),
                                  np.ascontiguousarray(proj.value.T))
        if x.requires_grad:
            x.grad += dZ @ wx.value.T
        if wx.requires_grad:
            wx.grad += x.value.T @ dZ
        if wh.requires_grad:
            wh.grad += Rprev.T @ dZ
        if bias.requires_grad:
            bias.grad += dZ.sum(axis=0, keepdims=True)
        if proj.requires_grad:
            proj.grad += Hh.T @ dRtot

    out._backward = _bwd
    return out


def forward_graph(model: EncoderModel, features: np.ndarray,
                  dropout_rng: np.random.Generator | None = None
                  ) -> tuple[Node, Node]:
    """Differentiable forward pass. Returns (logits, log_probs) nodes, each
    (T', V+1). Dropout masks the projected layer outputs and is applied only
    when a generator is supplied (training)."""
    cfg = model.config
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[1] != cfg.feature_dim:
        raise DimensionError(
            f"features shape {features.shape} does not match feature dim "
            f"{cfg.feature_dim}"
        )
    if features.shape[0] == 0:
        raise ValueError("cannot encode an empty sequence")
    x = stack_frames(model.normalize(features), cfg.stack_left, cfg.frame_skip)
    node = ad.constant(x)
    p = cfg.dropout
    for i, layer in enumerate(model.layers):
        if i > 0:
            node = time_reduce_node(node, cfg.reduction_factors[i - 1])
        node = lstmp_layer_node(node, layer)
        if dropout_rng is not None and p > 0.0:
            keep = (dropout_rng.random(node.value.shape) >= p) / (1.0 - p)
            node = ad.mul(node, ad.constant(keep))
    hidden = ad.tanh(ad.affine(node, model.head.w1, model.head.b1))
    logits = ad.affine(hidden, model.head.w2, model.head.b2)
    return logits, ad.log_softmax_rows(logits)


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(model: EncoderModel, path) -> None:
    cfg = model.config
    record = {
        "magic": CHECKPOINT_MAGIC,
        "format_version": CHECKPOINT_VERSION,
        "config": {
            "feature_dim": cfg.feature_dim,
            "stack_left": cfg.stack_left,
            "frame_skip": cfg.frame_skip,
            "reduction_factors": list(cfg.reduction_factors),
            "hidden_dim": cfg.hidden_dim,
            "proj_dim": cfg.proj_dim,
            "head_hidden": cfg.head_hidden,
            "vocab_size": cfg.vocab_size,
            "hop_ms": cfg.hop_ms,
            "dropout": cfg.dropout,
            "label_names": list(cfg.label_names) if cfg.label_names else None,
            "blank_index": cfg.blank_index,
        },
        "frozen_layers": [i for i, f in enumerate(model.frozen) if f],
        "cmvn": None if model.cmvn_mean is None else {
            "mean": model.cmvn_mean.tolist(),
            "std": model.cmvn_std.tolist(),
        },
        "params": {
            name: {"shape": list(node.value.shape),
                   "data": node.value.reshape(-1).tolist()}
            for name, node, _ in model.named_parameters()
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(record, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_checkpoint(path) -> EncoderModel:
    try:
        with open(path, encoding="utf-8") as fh:
            record = json.load(fh)
    except FileNotFoundError as e:
        raise CheckpointError(f"checkpoint not found: {path}") from e
    except json.JSONDecodeError as e:
        raise CheckpointError(f"malformed checkpoint {path}: {e}") from e
    if not isinstance(record, dict) or record.get("magic") != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path} is not an encoder checkpoint")
    if record.get("format_version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"checkpoint version {record.get('format_version')} unsupported "
            f"(expected {CHECKPOINT_VERSION})"
        )
    c = record["config"]
    if c.get("blank_index") != c["vocab_size"]:
        raise CheckpointError("blank index must be the last output slot")
    cfg = EncoderConfig(
        feature_dim=c["feature_dim"], stack_left=c["stack_left"],
        frame_skip=c["frame_skip"],
        reduction_factors=tuple(c["reduction_factors"]),
        hidden_dim=c["hidden_dim"], proj_dim=c["proj_dim"],
        head_hidden=c["head_hidden"], vocab_size=c["vocab_size"],
        hop_ms=c["hop_ms"], dropout=c["dropout"],
        label_names=tuple(c["label_names"]) if c.get("label_names") else None,
    )
    model = init_model(cfg, np.random.default_rng(0))
    for name, node, _ in model.named_parameters():
        try:
            entry = record["params"][name]
        except KeyError as e:
            raise CheckpointError(f"checkpoint missing parameter {name}") from e
        arr = np.asarray(entry["data"], dtype=np.float64).reshape(entry["shape"])
        if arr.shape != node.value.shape:
            raise CheckpointError(
                f"parameter {name}: stored shape {arr.shape}, "
                f"expected {node.value.shape}"
            )
        node.value[...] = arr
    for i in record.get("frozen_layers", []):
        model.set_layer_frozen(i, True)
    if record.get("cmvn"):
        model.set_cmvn(np.asarray(record["cmvn"]["mean"]),
                       np.asarray(record["cmvn"]["std"]))
    return model
