"""Three-phase optimization pipeline.

Phase 1 trains a throwaway network (first recurrent layer + a small affine
head) on sub-unit sequences under the lattice loss, then copies the layer
into the intent model and freezes it. Phase 2 pre-trains the upper stack
with a cross-entropy loss computed at the last lattice step only. Phase 3
fine-tunes with the lattice loss on intent labels. Ablation modes skip the
first one or two phases.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import ctc, decoder, encoder
from .data import DataError, Dataset, compute_cmvn

MODES = ("ctc_only", "asr_ctc", "full")

# seed-domain tags for the independent training streams
_DOM_INIT = 10
_DOM_SHUFFLE = 11
_DOM_DROPOUT = 12


@dataclass
class TrainConfig:
    """Every knob of a training run; serializes to/from JSON so a run is
    fully described by one file."""

    seed: int = 0
    mode: str = "full"
    train_split: str = "S1"
    lr: float = 1e-4
    weight_decay: float = 0.2
    dropout: float = 0.1
    batch_size: int = 16
    asr_epochs: int = 30
    ce_epochs: int = 10
    ctc_epochs: int = 60
    patience: int = 10
    clip_norm: float = 5.0
    hidden_dim: int = 64
    proj_dim: int = 32
    head_hidden: int = 32
    deterministic: bool = True  # serial execution; the only implemented mode

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(asdict(self), fh, sort_keys=True, indent=2)
            fh.write("\n")

    @classmethod
    def from_json(cls, path) -> "TrainConfig":
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        unknown = set(raw) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**raw)


@dataclass
class LogRow:
    epoch: int
    phase: str
    train_loss: float
    val_accuracy: float
    skipped: int


def write_log(rows: list[LogRow], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "phase", "train_loss", "val_accuracy", "skipped"])
        for r in rows:
            writer.writerow([r.epoch, r.phase, repr(r.train_loss),
                             repr(r.val_accuracy), r.skipped])


def _rng(*key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(key)))


# ---------------------------------------------------------------------------
# Optimizer
# ---------------------------------------------------------------------------


class AdamW:
    """Adaptive moments with bias correction and decoupled weight decay.

    Decay is skipped for biases; frozen parameters (requires_grad False) are
    skipped entirely. A non-finite gradient anywhere skips the whole update
    and bumps `skipped`.
    """

    def __init__(self, params: list[tuple[str, ad.Node, bool]],
                 lr: float = 1e-4, weight_decay: float = 0.2,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.skipped = 0
        self.m = {name: np.zeros_like(node.value) for name, node, _ in params}
        self.v = {name: np.zeros_like(node.value) for name, node, _ in params}

    def _trainable(self):
        return [(n, p, b) for n, p, b in self.params if p.requires_grad]

    def step(self) -> bool:
        live = self._trainable()
        if any(not np.isfinite(p.grad).all() for _, p, _ in live):
            self.skipped += 1
            return False
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for name, p, is_bias in live:
            g = p.grad
            m = self.m[name]
            v = self.v[name]
            m += (1.0 - self.beta1) * (g - m)
            v += (1.0 - self.beta2) * (g * g - v)
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            if not is_bias and self.weight_decay:
                update = update + self.weight_decay * p.value
            p.value -= self.lr * update
        return True


def clip_gradients(params: list[tuple[str, ad.Node, bool]], max_norm: float) -> float:
    """Scale all trainable gradients so their global norm is <= max_norm."""
    live = [p.grad for _, p, _ in params if p.requires_grad]
    norm = math.sqrt(sum(float((g * g).sum()) for g in live))
    if max_norm and norm > max_norm:
        factor = max_norm / norm
        for g in live:
            g *= factor
    return norm


# ---------------------------------------------------------------------------
# Shared epoch machinery
# ---------------------------------------------------------------------------


class DivergenceError(RuntimeError):
    """Training loss went non-finite on consecutive batches."""


def _run_epoch(examples, loss_fn, params, opt: AdamW, cfg: TrainConfig,
               shuffle_rng) -> tuple[float, int]:
    """One pass: per-sequence graphs, gradient averaging over the batch,
    clipping, one optimizer step per batch. Returns (mean loss, skipped)."""
    order = shuffle_rng.permutation(len(examples))
    losses: list[float] = []
    skipped = 0
    nonfinite_streak = 0
    for start in range(0, len(order), cfg.batch_size):
        idxs = order[start : start + cfg.batch_size]
        ad.zero_grads([p for _, p, _ in params])
        batch_losses = []
        for i in idxs:
            try:
                loss_node = loss_fn(examples[i])
            except ctc.CtcInfeasibleError:
                skipped += 1
                continue
            ad.backward(loss_node)
            batch_losses.append(float(loss_node.value[0, 0]))
        if not batch_losses:
            continue
        batch_loss = float(np.mean(batch_losses))
        if not math.isfinite(batch_loss):
            nonfinite_streak += 1
            if nonfinite_streak >= 2:
                raise DivergenceError(
                    f"loss non-finite on {nonfinite_streak} consecutive batches "
                    f"(last={batch_loss}, step={opt.t})"
                )
            continue
        nonfinite_streak = 0
        inv = 1.0 / len(batch_losses)
        for _, p, _ in params:
            if p.requires_grad:
                p.grad *= inv
        clip_gradients(params, cfg.clip_norm)
        opt.step()
        losses.append(batch_loss)
    return (float(np.mean(losses)) if losses else float("nan")), skipped


# ---------------------------------------------------------------------------
# Phase 1: sub-unit pre-training of the first layer
# ---------------------------------------------------------------------------


def pretrain_asr(model: encoder.EncoderModel, char_corpus: dict[str, Dataset],
                 cfg: TrainConfig, log: list[LogRow]) -> None:
    """Train (first layer + temporary head) on character targets under the
    lattice loss, then copy the layer into `model` and freeze it. The head
    is discarded."""
    emc = model.config
    n_chars = 1 + max(
        (c for u in char_corpus["train"].utterances for c in u.char_labels),
        default=0,
    )
    init_rng = _rng(cfg.seed, _DOM_INIT, 1)
    layer = encoder.LstmpLayer(emc.layer_input_dim(0), emc.hidden_dim,
                               emc.proj_dim, init_rng)
    head_w = ad.parameter(encoder._uniform_init(init_rng, emc.proj_dim, n_chars + 1))
    head_b = ad.parameter(np.zeros((1, n_chars + 1)))
    params = [(n, p, b) for n, p, b in layer.params()]
    params += [("head_w", head_w, False), ("head_b", head_b, True)]
    opt = AdamW(params, lr=cfg.lr, weight_decay=cfg.weight_decay)
    shuffle_rng = _rng(cfg.seed, _DOM_SHUFFLE, 1)
    dropout_rng = _rng(cfg.seed, _DOM_DROPOUT, 1)

    def net(utt, rng):
        x = encoder.stack_frames(model.normalize(utt.features),
                                 emc.stack_left, emc.frame_skip)
        h = encoder.lstmp_layer_node(ad.constant(x), layer)
        if rng is not None and cfg.dropout > 0:
            keep = (rng.random(h.value.shape) >= cfg.dropout) / (1 - cfg.dropout)
            h = ad.mul(h, ad.constant(keep))
        return ad.log_softmax_rows(ad.affine(h, head_w, head_b))

    def loss_fn(utt):
        return ctc.ctc_node(net(utt, dropout_rng), utt.char_labels, blank=n_chars)

    val = char_corpus["val"].utterances
    for epoch in range(1, cfg.asr_epochs + 1):
        loss, skipped = _run_epoch(char_corpus["train"].utterances, loss_fn,
                                   params, opt, cfg, shuffle_rng)
        correct = sum(
            decoder.decode_offline(net(u, None).value, blank=n_chars)[0]
            == u.char_labels
            for u in val
        )
        log.append(LogRow(epoch, "asr", loss, correct / max(len(val), 1), skipped))

    for (_, src, _), (_, dst, _) in zip(layer.params(), model.layers[0].params()):
        dst.value[...] = src.value
    model.set_layer_frozen(0, True)


# ---------------------------------------------------------------------------
# Phase 2: last-step cross-entropy
# ---------------------------------------------------------------------------


def _ce_loss_node(model: encoder.EncoderModel, utt, dropout_rng) -> ad.Node:
    if len(utt.intent_labels) != 1:
        raise DataError(
            f"cross-entropy stage needs single-intent utterances, "
            f"got {len(utt.intent_labels)} intents"
        )
    logits, _ = encoder.forward_graph(model, utt.features, dropout_rng)
    last = ad.take_row(logits, logits.value.shape[0] - 1)
    # the blank logit carries no class meaning here; score intents only
    intents_only = ad.slice_cols(last, 0, model.config.vocab_size)
    logp = ad.log_softmax_rows(intents_only)
    return ad.neg(ad.pick(logp, 0, utt.intent_labels[0]))


def _last_step_accuracy(model: encoder.EncoderModel, utts) -> float:
    if not utts:
        return 0.0
    correct = 0
    for u in utts:
        lattice = encoder.forward(model, u.features)
        pred = int(np.argmax(lattice[-1, : model.config.vocab_size]))
        correct += pred == u.intent_labels[0]
    return correct / len(utts)


def pretrain_ce(model: encoder.EncoderModel, corpus: dict[str, Dataset],
                cfg: TrainConfig, log: list[LogRow]) -> None:
    """Cross-entropy at the final lattice step, back-propagated through the
    whole sequence; the frozen first layer is untouched."""
    params = model.named_parameters()
    opt = AdamW(params, lr=cfg.lr, weight_decay=cfg.weight_decay)
    shuffle_rng = _rng(cfg.seed, _DOM_SHUFFLE, 2)
    dropout_rng = _rng(cfg.seed, _DOM_DROPOUT, 2)

    def loss_fn(utt):
        return _ce_loss_node(model, utt, dropout_rng)

    for epoch in range(1, cfg.ce_epochs + 1):
        loss, skipped = _run_epoch(corpus["train"].utterances, loss_fn,
                                   params, opt, cfg, shuffle_rng)
        acc = _last_step_accuracy(model, corpus["val"].utterances)
        log.append(LogRow(epoch, "ce", loss, acc, skipped))


# ---------------------------------------------------------------------------
# Phase 3: lattice-loss fine-tuning
# ---------------------------------------------------------------------------


def sequence_accuracy_on(model: encoder.EncoderModel, utts) -> float:
    if not utts:
        return 0.0
    blank = model.config.blank_index
    correct = 0
    for u in utts:
        pred, _ = decoder.decode_offline(encoder.forward(model, u.features), blank)
        correct += pred == u.intent_labels
    return correct / len(utts)


def train_ctc(model: encoder.EncoderModel, corpus: dict[str, Dataset],
              cfg: TrainConfig, log: list[LogRow]) -> None:
    """Fine-tune on intent labels; keeps the checkpoint with the best
    validation sequence accuracy (ties: lower train loss) and stops early
    after `patience` epochs without improvement."""
    params = model.named_parameters()
    opt = AdamW(params, lr=cfg.lr, weight_decay=cfg.weight_decay)
    shuffle_rng = _rng(cfg.seed, _DOM_SHUFFLE, 3)
    dropout_rng = _rng(cfg.seed, _DOM_DROPOUT, 3)
    blank = model.config.blank_index

    def loss_fn(utt):
        _, logp = encoder.forward_graph(model, utt.features, dropout_rng)
        return ctc.ctc_node(logp, utt.intent_labels, blank=blank)

    train = corpus["train"].utterances
    best: tuple[float, float] | None = None  # (accuracy, -loss)
    best_values: list[np.ndarray] | None = None
    since_best = 0
    for epoch in range(1, cfg.ctc_epochs + 1):
        loss, skipped = _run_epoch(train, loss_fn, params, opt, cfg, shuffle_rng)
        if skipped > 0.01 * len(train):
            raise RuntimeError(
                f"{skipped}/{len(train)} sequences infeasible; reduction "
                f"factors are mis-scaled for this corpus"
            )
        acc = sequence_accuracy_on(model, corpus["val"].utterances)
        log.append(LogRow(epoch, "ctc", loss, acc, skipped))
        score = (acc, -loss if math.isfinite(loss) else -float("inf"))
        if best is None or score > best:
            best = score
            best_values = [node.value.copy() for _, node, _ in params]
            since_best = 0
        else:
            since_best += 1
            if since_best >= cfg.patience:
                break
    if best_values is not None:
        for (_, node, _), value in zip(params, best_values):
            node.value[...] = value


# ---------------------------------------------------------------------------
# Pipeline
# ---------------------------------------------------------------------------


@dataclass
class PipelineResult:
    model: encoder.EncoderModel
    log: list[LogRow] = field(default_factory=list)


def _infer_vocab(corpora: dict[str, dict[str, Dataset]]) -> int:
    labels = [
        int(k)
        for parts in corpora.values()
        for ds in parts.values()
        for k in ds.manifest.intent_distribution
    ]
    if not labels:
        raise DataError("no intent labels found in the corpora")
    return max(labels) + 1


def run_pipeline(cfg: TrainConfig,
                 corpora: dict[str, dict[str, Dataset]]) -> PipelineResult:
    """Run the configured ablation mode end to end and return the trained
    model (cmvn baked in) plus the per-epoch log."""
    if cfg.train_split not in corpora:
        raise DataError(f"train split {cfg.train_split!r} not in corpora")
    if cfg.mode != "ctc_only" and "CHAR" not in corpora:
        raise DataError("modes with pre-training need the CHAR corpus")
    split = corpora[cfg.train_split]
    manifest = split["train"].manifest
    emc = encoder.EncoderConfig(
        feature_dim=manifest.feature_dim,
        hidden_dim=cfg.hidden_dim,
        proj_dim=cfg.proj_dim,
        head_hidden=cfg.head_hidden,
        vocab_size=_infer_vocab(corpora),
        hop_ms=manifest.hop_ms,
        dropout=cfg.dropout,
    )
    model = encoder.init_model(emc, _rng(cfg.seed, _DOM_INIT, 0))
    stats = compute_cmvn(split["train"].utterances)
    model.set_cmvn(stats.mean, stats.std)

    result = PipelineResult(model=model)
    if cfg.mode in ("asr_ctc", "full"):
        pretrain_asr(model, corpora["CHAR"], cfg, result.log)
    if cfg.mode == "full":
        pretrain_ce(model, split, cfg, result.log)
    train_ctc(model, split, cfg, result.log)
    return result
