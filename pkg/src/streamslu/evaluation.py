"""Evaluation: exact-sequence accuracy, early-spotting statistics, and the
length/position relation.

Sequence accuracy is the strict multi-intent criterion: an utterance counts
only when the predicted label sequence equals the reference exactly, order
and length included.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .decoder import SpottingEvent


def sequence_accuracy(predictions, references) -> float:
    """Fraction of utterances whose whole predicted sequence matches."""
    if len(predictions) != len(references):
        raise ValueError(
            f"{len(predictions)} predictions vs {len(references)} references"
        )
    if not references:
        return 0.0
    hits = sum(list(p) == list(r) for p, r in zip(predictions, references))
    return hits / len(references)


def confusion_matrix(predictions, references, n_labels: int) -> np.ndarray:
    """(ref, pred) counts accumulated positionally over pairs of equal
    length; length-mismatched utterances are diagnosed elsewhere."""
    counts = np.zeros((n_labels, n_labels), dtype=np.int64)
    for pred, ref in zip(predictions, references):
        if len(pred) != len(ref):
            continue
        for p, r in zip(pred, ref):
            counts[r, p] += 1
    return counts


# ---------------------------------------------------------------------------
# Early spotting
# ---------------------------------------------------------------------------


@dataclass
class SpottingReport:
    count: int
    fraction_early: float  # relative position < 0
    fraction_late: float
    fraction_exact: float
    mean_ms: float
    median_ms: float
    bucket_ms: float
    histogram: list[tuple[float, int]]  # (bucket lower edge, count)

    def summary_rows(self) -> list[tuple[str, float]]:
        return [
            ("events", self.count),
            ("fraction_early", self.fraction_early),
            ("fraction_late", self.fraction_late),
            ("fraction_exact", self.fraction_exact),
            ("mean_relative_ms", self.mean_ms),
            ("median_relative_ms", self.median_ms),
        ]


def early_spotting_report(events: list[SpottingEvent],
                          bucket_ms: float = 100.0) -> SpottingReport:
    if not events:
        raise ValueError("no spotting events to report")
    rel = np.array([e.relative_ms for e in events])
    edges = np.floor(rel / bucket_ms).astype(int)
    histogram = [
        (float(k * bucket_ms), int((edges == k).sum()))
        for k in range(edges.min(), edges.max() + 1)
    ]
    n = rel.size
    return SpottingReport(
        count=int(n),
        fraction_early=float((rel < 0).sum() / n),
        fraction_late=float((rel > 0).sum() / n),
        fraction_exact=float((rel == 0).sum() / n),
        mean_ms=float(rel.mean()),
        median_ms=float(np.median(rel)),
        bucket_ms=bucket_ms,
        histogram=histogram,
    )


# ---------------------------------------------------------------------------
# Length vs relative position
# ---------------------------------------------------------------------------


def _ranks(values: np.ndarray) -> np.ndarray:
    """Average ranks (ties share the mean of their rank range)."""
    order = np.argsort(values, kind="stable")
    sorted_vals = values[order]
    ranks = np.empty(values.size)
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def rank_correlation(x, y) -> float:
    """Spearman correlation; nan when either side is constant."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.size != y.size:
        raise ValueError(f"paired series differ in length: {x.size} vs {y.size}")
    if x.size < 2:
        return math.nan
    rx, ry = _ranks(x), _ranks(y)
    sx, sy = rx.std(), ry.std()
    if sx == 0.0 or sy == 0.0:
        return math.nan
    return float(((rx - rx.mean()) * (ry - ry.mean())).mean() / (sx * sy))


@dataclass
class LengthPositionSeries:
    pairs: list[tuple[float, float]]  # (length in sub-units, relative ms)
    correlation: float


def length_vs_position(events: list[SpottingEvent],
                       lengths) -> LengthPositionSeries:
    """Pair each event's relative position with its utterance (or segment)
    length and report the rank correlation between them."""
    if len(events) != len(lengths):
        raise ValueError(
            f"{len(events)} events vs {len(lengths)} lengths"
        )
    rel = [e.relative_ms for e in events]
    return LengthPositionSeries(
        pairs=[(float(l), float(r)) for l, r in zip(lengths, rel)],
        correlation=rank_correlation(lengths, rel),
    )
