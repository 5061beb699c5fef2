"""Metric tests."""

import math

import numpy as np
import pytest

from streamslu import evaluation
from streamslu.decoder import SpottingEvent


def event(rel_ms):
    return SpottingEvent(label=0, emit_frame=0, emit_ms=480.0 + rel_ms,
                         boundary_ms=480.0)


# ---------------------------------------------------------------------------
# sequence accuracy
# ---------------------------------------------------------------------------


def test_exact_match_counts():
    assert evaluation.sequence_accuracy([[0, 1]], [[0, 1]]) == 1.0


def test_missing_intent_is_incorrect():
    assert evaluation.sequence_accuracy([[0]], [[0, 1]]) == 0.0


def test_order_sensitive():
    # convention: reversed intents do not count as identified
    assert evaluation.sequence_accuracy([[1, 0]], [[0, 1]]) == 0.0


def test_accuracy_range_and_identity():
    rng = np.random.default_rng(0)
    refs = [list(rng.integers(0, 3, size=rng.integers(1, 4))) for _ in range(30)]
    assert evaluation.sequence_accuracy(refs, refs) == 1.0
    preds = [r[:-1] for r in refs]
    acc = evaluation.sequence_accuracy(preds, refs)
    assert 0.0 <= acc <= 1.0


def test_accuracy_rejects_length_mismatch():
    with pytest.raises(ValueError):
        evaluation.sequence_accuracy([[0]], [[0], [1]])


def test_confusion_matrix_on_length_matched_pairs():
    preds = [[0, 1], [2], [0, 1, 2]]
    refs = [[0, 2], [2], [0, 1]]  # last pair length-mismatched: ignored
    cm = evaluation.confusion_matrix(preds, refs, n_labels=3)
    assert cm[0, 0] == 1
    assert cm[2, 1] == 1
    assert cm[2, 2] == 1
    assert cm.sum() == 3


# ---------------------------------------------------------------------------
# spotting report
# ---------------------------------------------------------------------------


def test_fractions_partition():
    events = [event(-250), event(-50), event(0), event(120), event(480)]
    rep = evaluation.early_spotting_report(events)
    assert rep.count == 5
    assert rep.fraction_early + rep.fraction_late + rep.fraction_exact == 1.0
    assert rep.fraction_early == 0.4
    assert rep.fraction_exact == 0.2


def test_histogram_counts_sum_to_events():
    rng = np.random.default_rng(1)
    events = [event(float(r)) for r in rng.integers(-1000, 1000, size=200)]
    rep = evaluation.early_spotting_report(events, bucket_ms=100.0)
    assert sum(c for _, c in rep.histogram) == 200
    # buckets are contiguous lower edges
    edges = [lo for lo, _ in rep.histogram]
    assert edges == sorted(edges)
    assert all(abs((b - a) - 100.0) < 1e-9 for a, b in zip(edges, edges[1:]))


def test_report_statistics():
    events = [event(-100), event(100)]
    rep = evaluation.early_spotting_report(events)
    assert rep.mean_ms == 0.0
    assert rep.median_ms == 0.0
    assert ("fraction_early", 0.5) in rep.summary_rows()


def test_report_needs_events():
    with pytest.raises(ValueError):
        evaluation.early_spotting_report([])


# ---------------------------------------------------------------------------
# rank correlation
# ---------------------------------------------------------------------------


def test_rank_correlation_monotone():
    x = [1, 2, 3, 4, 5]
    assert abs(evaluation.rank_correlation(x, [2, 4, 6, 8, 10]) - 1.0) < 1e-12
    assert abs(evaluation.rank_correlation(x, [5, 4, 3, 2, 1]) + 1.0) < 1e-12


def test_rank_correlation_handles_ties():
    r = evaluation.rank_correlation([1, 1, 2, 2], [1, 1, 2, 2])
    assert abs(r - 1.0) < 1e-12


def test_rank_correlation_constant_is_nan():
    assert math.isnan(evaluation.rank_correlation([1, 1, 1], [1, 2, 3]))


def test_rank_correlation_matches_pearson_on_ranks():
    # oracle: direct Pearson on hand-computed ranks
    x = np.array([3.0, 1.0, 4.0, 1.0, 5.0])
    y = np.array([2.0, 7.0, 1.0, 8.0, 2.0])
    rx = np.array([3.0, 1.5, 4.0, 1.5, 5.0])
    ry = np.array([2.5, 4.0, 1.0, 5.0, 2.5])
    expect = float(np.corrcoef(rx, ry)[0, 1])
    assert abs(evaluation.rank_correlation(x, y) - expect) < 1e-12


def test_length_vs_position_series():
    events = [event(-100), event(0), event(200)]
    series = evaluation.length_vs_position(events, [8, 5, 3])
    assert series.pairs == [(8.0, -100.0), (5.0, 0.0), (3.0, 200.0)]
    assert series.correlation < 0
    with pytest.raises(ValueError):
        evaluation.length_vs_position(events, [1, 2])
