"""Deterministic synthetic corpora for the multi-intent task.

Each intent is realized by a fixed template of sub-unit ("character")
prototype vectors; an utterance renders the template as jittered,
speaker-colored, noisy frame blocks between stretches of near-zero silence.
Multi-intent material concatenates same-speaker utterances with silence
gaps, mirroring how the original recordings would be spliced.

Every random draw is keyed by explicit integer-tuple seeds (corpus seed,
domain, split part, index), so regeneration is bit-exact and independent of
generation order.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

RECORD_MAGIC = b"SLUREC01"

# seed-domain tags, one per independent random stream
_DOM_LANGUAGE = 1
_DOM_SPEAKER = 2
_DOM_UTTERANCE = 3

PARTS = ("train", "val", "test")
CORPORA = ("CHAR", "S1", "M2", "M3", "MM")


class DataError(ValueError):
    """Malformed dataset input or violated generator precondition."""


# ---------------------------------------------------------------------------
# Specs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GeneratorParams:
    feature_dim: int = 8
    char_vocab: int = 10
    n_intents: int = 12
    template_len: tuple[int, int] = (3, 8)
    char_frames: tuple[int, int] = (5, 15)  # duration jitter per sub-unit
    lead_silence: tuple[int, int] = (5, 20)
    trail_silence: tuple[int, int] = (5, 20)
    gap_frames: tuple[int, int] = (10, 30)
    char_string_len: tuple[int, int] = (4, 16)  # free-text lengths, CHAR split
    proto_scale: float = 2.0
    speaker_scale: float = 0.5
    emit_noise: float = 0.3
    silence_noise: float = 0.02
    silence_threshold: float = 0.4
    center_floor: float = 1.0  # min norm of a voiced block's center
    hop_ms: float = 10.0
    n_train_speakers: int = 20
    n_val_speakers: int = 6
    n_test_speakers: int = 8

    def speaker_pool(self, part: str) -> range:
        a = self.n_train_speakers
        b = a + self.n_val_speakers
        c = b + self.n_test_speakers
        return {"train": range(0, a), "val": range(a, b), "test": range(b, c)}[part]


@dataclass(frozen=True)
class CorpusSizes:
    s1_train: int = 2000
    s1_val: int = 200
    s1_test: int = 400
    multi_scale: float = 1.5  # M2/M3 sizes relative to the S1 sizes
    char_train: int = 800
    char_val: int = 100
    char_test: int = 100
    mm_fraction: float = 0.4

    def multi(self, part: str) -> int:
        base = {"train": self.s1_train, "val": self.s1_val, "test": self.s1_test}
        return int(round(base[part] * self.multi_scale))

    def s1(self, part: str) -> int:
        return {"train": self.s1_train, "val": self.s1_val, "test": self.s1_test}[part]

    def char(self, part: str) -> int:
        return {"train": self.char_train, "val": self.char_val,
                "test": self.char_test}[part]


@dataclass(frozen=True)
class IntentSpec:
    intent_id: int
    template: tuple[int, ...]  # sub-unit ids realizing the intent
    char_frames: tuple[int, int]  # duration jitter range per sub-unit


@dataclass(frozen=True)
class Language:
    """The shared 'phonetics': one prototype vector per sub-unit plus the
    per-intent templates."""

    prototypes: np.ndarray  # (char_vocab, feature_dim)
    intents: tuple[IntentSpec, ...]


@dataclass
class Utterance:
    features: np.ndarray  # (T, D) float64
    intent_labels: list[int]
    char_labels: list[int]
    boundaries_ms: list[float]  # per intent: end of its last voiced frame
    speaker: int

    def __post_init__(self):
        if len(self.boundaries_ms) != len(self.intent_labels):
            raise DataError("boundary count must equal intent count")
        if any(x >= y for x, y in zip(self.boundaries_ms, self.boundaries_ms[1:])):
            raise DataError("boundaries must be strictly increasing")


@dataclass(frozen=True)
class DatasetManifest:
    split: str
    count: int
    seed: int
    feature_dim: int
    hop_ms: float
    intent_distribution: dict[str, int]


@dataclass
class Dataset:
    manifest: DatasetManifest
    utterances: list[Utterance]

    def __len__(self):
        return len(self.utterances)


# ---------------------------------------------------------------------------
# Seeded construction
# ---------------------------------------------------------------------------


def _rng(*key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(key)))


def build_language(seed: int, params: GeneratorParams) -> Language:
    rng = _rng(seed, _DOM_LANGUAGE)
    protos = rng.normal(size=(params.char_vocab, params.feature_dim))
    protos *= params.proto_scale / np.linalg.norm(protos, axis=1, keepdims=True)
    lo, hi = params.template_len
    templates: set[tuple[int, ...]] = set()
    intents = []
    for k in range(params.n_intents):
        while True:
            length = int(rng.integers(lo, hi + 1))
            template = tuple(int(c) for c in rng.integers(0, params.char_vocab, length))
            if template not in templates:
                templates.add(template)
                break
        intents.append(IntentSpec(intent_id=k, template=template,
                                  char_frames=params.char_frames))
    return Language(prototypes=protos, intents=tuple(intents))


def speaker_vector(seed: int, speaker: int, params: GeneratorParams) -> np.ndarray:
    rng = _rng(seed, _DOM_SPEAKER, speaker)
    v = rng.normal(size=params.feature_dim)
    return v * (params.speaker_scale / np.linalg.norm(v))


def frame_energy(features: np.ndarray) -> np.ndarray:
    return np.linalg.norm(features, axis=1)


def last_voiced_frame(features: np.ndarray, threshold: float) -> int:
    """Index of the last frame whose energy exceeds the threshold, -1 if none."""
    voiced = np.flatnonzero(frame_energy(features) > threshold)
    return int(voiced[-1]) if voiced.size else -1


def _silence(rng, n: int, params: GeneratorParams) -> np.ndarray:
    return rng.normal(0.0, params.silence_noise, size=(n, params.feature_dim))


def _voiced_block(rng, proto: np.ndarray, spk: np.ndarray, n: int,
                  params: GeneratorParams) -> np.ndarray:
    """n noisy copies of proto+speaker, resampled so every frame stays above
    the silence threshold (keeps boundaries recoverable from energy alone)."""
    center = proto + spk
    norm = np.linalg.norm(center)
    if norm < params.center_floor:  # a speaker shift must never cancel a sub-unit
        center = center * (params.center_floor / max(norm, 1e-12))
    block = center + rng.normal(0.0, params.emit_noise,
                                size=(n, params.feature_dim))
    floor = params.silence_threshold * 1.05
    for _ in range(100):
        weak = frame_energy(block) <= floor
        if not weak.any():
            return block
        block[weak] = center + rng.normal(
            0.0, params.emit_noise, size=(int(weak.sum()), params.feature_dim))
    block[frame_energy(block) <= floor] = center
    return block


def render_chars(rng, chars, speaker: int, seed: int, language: Language,
                 params: GeneratorParams,
                 char_frames: tuple[int, int] | None = None
                 ) -> tuple[np.ndarray, int, int]:
    """Silence + per-char blocks + silence. Returns (features, first voiced
    frame index, last voiced frame index)."""
    if len(chars) == 0:
        raise DataError("cannot render an empty template")
    spk = speaker_vector(seed, speaker, params)
    lo, hi = char_frames or params.char_frames
    lead = int(rng.integers(params.lead_silence[0], params.lead_silence[1] + 1))
    trail = int(rng.integers(params.trail_silence[0], params.trail_silence[1] + 1))
    blocks = [_silence(rng, lead, params)]
    for c in chars:
        n = int(rng.integers(lo, hi + 1))
        blocks.append(_voiced_block(rng, language.prototypes[c], spk, n, params))
    blocks.append(_silence(rng, trail, params))
    features = np.vstack(blocks)
    last = features.shape[0] - trail - 1
    return features, lead, last


def generate_utterance(rng, intent: IntentSpec, speaker: int, seed: int,
                       language: Language, params: GeneratorParams) -> Utterance:
    """One single-intent recording by `speaker`."""
    features, _, last = render_chars(rng, intent.template, speaker, seed,
                                     language, params, intent.char_frames)
    return Utterance(
        features=features,
        intent_labels=[intent.intent_id],
        char_labels=list(intent.template),
        boundaries_ms=[(last + 1) * params.hop_ms],
        speaker=speaker,
    )


def generate_char_utterance(rng, chars, speaker: int, seed: int,
                            language: Language, params: GeneratorParams
                            ) -> Utterance:
    """Free-text rendering for the character-level pre-training task: no
    intent labels, only sub-unit labels."""
    features, _, _ = render_chars(rng, chars, speaker, seed, language, params)
    return Utterance(features=features, intent_labels=[],
                     char_labels=[int(c) for c in chars],
                     boundaries_ms=[], speaker=speaker)


def concat_utterances(rng, utts: list[Utterance], params: GeneratorParams,
                      gap_frames: tuple[int, int] | None = None) -> Utterance:
    """Splice same-speaker utterances into one sentence with silence gaps."""
    if not utts:
        raise DataError("need at least one utterance")
    speakers = {u.speaker for u in utts}
    if len(speakers) > 1:
        raise DataError(f"cannot concatenate mixed speakers {sorted(speakers)}")
    lo, hi = gap_frames or params.gap_frames
    blocks = []
    intent_labels: list[int] = []
    char_labels: list[int] = []
    boundaries: list[float] = []
    offset = 0
    for k, u in enumerate(utts):
        if k > 0:
            gap = int(rng.integers(lo, hi + 1))
            blocks.append(_silence(rng, gap, params))
            offset += gap
        blocks.append(u.features)
        intent_labels.extend(u.intent_labels)
        char_labels.extend(u.char_labels)
        boundaries.extend(b + offset * params.hop_ms for b in u.boundaries_ms)
        offset += u.features.shape[0]
    return Utterance(features=np.vstack(blocks), intent_labels=intent_labels,
                     char_labels=char_labels, boundaries_ms=boundaries,
                     speaker=utts[0].speaker)


# ---------------------------------------------------------------------------
# Corpora
# ---------------------------------------------------------------------------


def _combo_order(seed: int, n_intents: int, arity: int, part: str) -> list[tuple]:
    """All ordered intent tuples of the given arity, in a seeded shuffle;
    cycling through it stratifies the combination counts."""
    combos = [()]
    for _ in range(arity):
        combos = [c + (i,) for c in combos for i in range(n_intents)]
    order = _rng(seed, _DOM_UTTERANCE, arity, PARTS.index(part)).permutation(len(combos))
    return [combos[i] for i in order]


def _manifest(name: str, utts: list[Utterance], seed: int,
              params: GeneratorParams) -> DatasetManifest:
    dist: dict[str, int] = {}
    for u in utts:
        for label in u.intent_labels:
            dist[str(label)] = dist.get(str(label), 0) + 1
    return DatasetManifest(split=name, count=len(utts), seed=seed,
                           feature_dim=params.feature_dim, hop_ms=params.hop_ms,
                           intent_distribution=dict(sorted(dist.items())))


def build_corpora(seed: int, sizes: CorpusSizes | None = None,
                  params: GeneratorParams | None = None
                  ) -> dict[str, dict[str, Dataset]]:
    """All five corpora (CHAR, S1, M2, M3, MM) with disjoint speaker pools
    per train/val/test part. MM samples a fixed fraction of each of the
    other intent corpora."""
    sizes = sizes or CorpusSizes()
    params = params or GeneratorParams()
    language = build_language(seed, params)

    out: dict[str, dict[str, Dataset]] = {c: {} for c in CORPORA}
    for part_id, part in enumerate(PARTS):
        pool = list(params.speaker_pool(part))

        # CHAR: free-text sub-unit strings for the pre-training task
        chars = []
        for k in range(sizes.char(part)):
            rng = _rng(seed, _DOM_UTTERANCE, 0, part_id, k)
            length = int(rng.integers(params.char_string_len[0],
                                      params.char_string_len[1] + 1))
            string = rng.integers(0, params.char_vocab, size=length)
            speaker = int(pool[rng.integers(len(pool))])
            chars.append(generate_char_utterance(rng, string, speaker, seed,
                                                 language, params))
        out["CHAR"][part] = Dataset(_manifest(f"CHAR_{part}", chars, seed, params),
                                    chars)

        # S1 / M2 / M3: stratified over intents resp. ordered combinations
        multi: dict[int, list[Utterance]] = {}
        for arity, count in ((1, sizes.s1(part)), (2, sizes.multi(part)),
                             (3, sizes.multi(part))):
            order = _combo_order(seed, params.n_intents, arity, part)
            utts = []
            for k in range(count):
                rng = _rng(seed, _DOM_UTTERANCE, arity, part_id, k)
                combo = order[k % len(order)]
                speaker = int(pool[rng.integers(len(pool))])
                pieces = [generate_utterance(rng, language.intents[i], speaker,
                                             seed, language, params)
                          for i in combo]
                utts.append(pieces[0] if arity == 1
                            else concat_utterances(rng, pieces, params))
            multi[arity] = utts
        out["S1"][part] = Dataset(_manifest(f"S1_{part}", multi[1], seed, params),
                                  multi[1])
        out["M2"][part] = Dataset(_manifest(f"M2_{part}", multi[2], seed, params),
                                  multi[2])
        out["M3"][part] = Dataset(_manifest(f"M3_{part}", multi[3], seed, params),
                                  multi[3])

        # MM: fixed-fraction mixture of the three intent corpora
        mixed: list[Utterance] = []
        for arity in (1, 2, 3):
            src = multi[arity]
            take = int(round(len(src) * sizes.mm_fraction))
            idx = _rng(seed, _DOM_UTTERANCE, 4, part_id, arity).permutation(len(src))
            mixed.extend(src[i] for i in sorted(idx[:take]))
        out["MM"][part] = Dataset(_manifest(f"MM_{part}", mixed, seed, params),
                                  mixed)
    return out


# ---------------------------------------------------------------------------
# Normalization
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CmvnStats:
    mean: np.ndarray
    std: np.ndarray  # floored at 1e-8


def compute_cmvn(utterances: list[Utterance]) -> CmvnStats:
    """Global per-dimension statistics; compute these on the training split
    only and reuse them everywhere else."""
    stacked = np.vstack([u.features for u in utterances])
    mean = stacked.mean(axis=0)
    std = np.maximum(stacked.std(axis=0), 1e-8)
    return CmvnStats(mean=mean, std=std)


def cmvn(features: np.ndarray, stats: CmvnStats) -> np.ndarray:
    return (features - stats.mean) / stats.std


# ---------------------------------------------------------------------------
# Serialization (manifest JSON + binary record file)
# ---------------------------------------------------------------------------


def save_dataset(ds: Dataset, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    name = ds.manifest.split
    manifest = {
        "split": ds.manifest.split,
        "count": ds.manifest.count,
        "seed": ds.manifest.seed,
        "feature_dim": ds.manifest.feature_dim,
        "hop_ms": ds.manifest.hop_ms,
        "intent_distribution": ds.manifest.intent_distribution,
    }
    with open(directory / f"{name}.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")
    with open(directory / f"{name}.bin", "wb") as fh:
        fh.write(RECORD_MAGIC)
        fh.write(struct.pack("<i", len(ds.utterances)))
        for u in ds.utterances:
            feats = np.ascontiguousarray(u.features, dtype="<f8")
            T, D = feats.shape
            fh.write(struct.pack("<5i", T, D, len(u.intent_labels),
                                 len(u.char_labels), u.speaker))
            fh.write(np.asarray(u.intent_labels, dtype="<i4").tobytes())
            fh.write(np.asarray(u.boundaries_ms, dtype="<f8").tobytes())
            fh.write(np.asarray(u.char_labels, dtype="<i4").tobytes())
            fh.write(feats.tobytes())


def load_dataset(directory, name: str) -> Dataset:
    directory = Path(directory)
    manifest_path = directory / f"{name}.json"
    record_path = directory / f"{name}.bin"
    if not manifest_path.exists() or not record_path.exists():
        raise DataError(f"dataset {name} not found under {directory}")
    try:
        m = json.loads(manifest_path.read_text(encoding="utf-8"))
        manifest = DatasetManifest(
            split=m["split"], count=m["count"], seed=m["seed"],
            feature_dim=m["feature_dim"], hop_ms=m["hop_ms"],
            intent_distribution=m["intent_distribution"],
        )
    except (json.JSONDecodeError, KeyError) as e:
        raise DataError(f"malformed manifest {manifest_path}: {e}") from e
    raw = record_path.read_bytes()
    if raw[: len(RECORD_MAGIC)] != RECORD_MAGIC:
        raise DataError(f"{record_path} is not a record file")
    off = len(RECORD_MAGIC)
    (count,) = struct.unpack_from("<i", raw, off)
    off += 4
    utts = []
    try:
        for _ in range(count):
            T, D, U, n_chars, speaker = struct.unpack_from("<5i", raw, off)
            off += 20
            labels = np.frombuffer(raw, dtype="<i4", count=U, offset=off)
            off += 4 * U
            bounds = np.frombuffer(raw, dtype="<f8", count=U, offset=off)
            off += 8 * U
            chars = np.frombuffer(raw, dtype="<i4", count=n_chars, offset=off)
            off += 4 * n_chars
            feats = np.frombuffer(raw, dtype="<f8", count=T * D, offset=off)
            off += 8 * T * D
            utts.append(Utterance(
                features=feats.reshape(T, D).copy(),
                intent_labels=[int(x) for x in labels],
                char_labels=[int(x) for x in chars],
                boundaries_ms=[float(x) for x in bounds],
                speaker=speaker,
            ))
    except (struct.error, ValueError) as e:
        raise DataError(f"truncated or corrupt record file {record_path}") from e
    if off != len(raw):
        raise DataError(f"trailing bytes in record file {record_path}")
    if count != manifest.count:
        raise DataError(f"manifest says {manifest.count} records, file has {count}")
    return Dataset(manifest=manifest, utterances=utts)


def save_corpora(corpora: dict[str, dict[str, Dataset]], directory) -> None:
    for parts in corpora.values():
        for ds in parts.values():
            save_dataset(ds, directory)
