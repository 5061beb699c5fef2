"""Generator and serialization tests. Corpus-level checks run on a small
configuration; the defaults are exercised by the acceptance suite."""

import numpy as np
import pytest

from streamslu import data
from streamslu.data import CorpusSizes, GeneratorParams

SMALL_SIZES = CorpusSizes(s1_train=60, s1_val=12, s1_test=12,
                          char_train=20, char_val=6, char_test=6)
SMALL_PARAMS = GeneratorParams(n_intents=5, n_train_speakers=4,
                               n_val_speakers=2, n_test_speakers=2)


@pytest.fixture(scope="module")
def corpora():
    return data.build_corpora(seed=77, sizes=SMALL_SIZES, params=SMALL_PARAMS)


def utterances_equal(a, b):
    return (np.array_equal(a.features, b.features)
            and a.intent_labels == b.intent_labels
            and a.char_labels == b.char_labels
            and a.boundaries_ms == b.boundaries_ms
            and a.speaker == b.speaker)


# ---------------------------------------------------------------------------
# single-utterance generation
# ---------------------------------------------------------------------------


def test_generation_is_deterministic():
    params = GeneratorParams()
    lang = data.build_language(3, params)
    a = data.generate_utterance(data._rng(3, 9, 0), lang.intents[0], 1, 3, lang, params)
    b = data.generate_utterance(data._rng(3, 9, 0), lang.intents[0], 1, 3, lang, params)
    assert utterances_equal(a, b)
    assert a.features.tobytes() == b.features.tobytes()


def test_empty_template_rejected():
    params = GeneratorParams()
    lang = data.build_language(4, params)
    bad = data.IntentSpec(intent_id=0, template=(), char_frames=(5, 15))
    with pytest.raises(data.DataError):
        data.generate_utterance(data._rng(4, 9, 0), bad, 0, 4, lang, params)


def test_two_speakers_same_intent_differ_in_features_only():
    params = GeneratorParams()
    lang = data.build_language(5, params)
    a = data.generate_utterance(data._rng(5, 9, 1), lang.intents[2], 0, 5, lang, params)
    b = data.generate_utterance(data._rng(5, 9, 1), lang.intents[2], 7, 5, lang, params)
    assert a.intent_labels == b.intent_labels == [2]
    assert a.char_labels == b.char_labels
    assert not np.array_equal(
        a.features[: min(len(a.features), len(b.features))],
        b.features[: min(len(a.features), len(b.features))])


def test_boundary_matches_energy_rule():
    params = GeneratorParams()
    lang = data.build_language(6, params)
    for k in range(20):
        u = data.generate_utterance(data._rng(6, 9, k), lang.intents[k % 12],
                                    1, 6, lang, params)
        last = data.last_voiced_frame(u.features, params.silence_threshold)
        assert u.boundaries_ms[-1] == (last + 1) * params.hop_ms


# ---------------------------------------------------------------------------
# concatenation
# ---------------------------------------------------------------------------


def make_pair(seed, speaker_a=1, speaker_b=1):
    params = GeneratorParams()
    lang = data.build_language(seed, params)
    u1 = data.generate_utterance(data._rng(seed, 9, 0), lang.intents[0],
                                 speaker_a, seed, lang, params)
    u2 = data.generate_utterance(data._rng(seed, 9, 1), lang.intents[3],
                                 speaker_b, seed, lang, params)
    return params, u1, u2


def test_concat_two_singles_gives_two_intents():
    params, u1, u2 = make_pair(7)
    cat = data.concat_utterances(data._rng(7, 9, 2), [u1, u2], params)
    assert cat.intent_labels == [0, 3]
    assert len(cat.boundaries_ms) == 2
    assert cat.boundaries_ms[0] == u1.boundaries_ms[0]
    # second boundary shifted by first utterance length plus the gap
    gap_ms = (cat.features.shape[0] - u1.features.shape[0]
              - u2.features.shape[0]) * params.hop_ms
    assert gap_ms >= params.gap_frames[0] * params.hop_ms
    assert cat.boundaries_ms[1] == u2.boundaries_ms[0] + \
        u1.features.shape[0] * params.hop_ms + gap_ms


def test_concat_three_singles_gives_three_intents():
    params, u1, u2 = make_pair(8)
    lang = data.build_language(8, params)
    u3 = data.generate_utterance(data._rng(8, 9, 5), lang.intents[4], 1, 8,
                                 lang, params)
    cat = data.concat_utterances(data._rng(8, 9, 6), [u1, u2, u3], params)
    assert cat.intent_labels == [0, 3, 4]
    assert list(cat.boundaries_ms) == sorted(cat.boundaries_ms)


def test_concat_single_is_identity():
    params, u1, _ = make_pair(9)
    cat = data.concat_utterances(data._rng(9, 9, 3), [u1], params)
    assert utterances_equal(cat, u1)


def test_concat_rejects_mixed_speakers():
    params, u1, u2 = make_pair(10, speaker_a=1, speaker_b=2)
    with pytest.raises(data.DataError):
        data.concat_utterances(data._rng(10, 9, 4), [u1, u2], params)


def test_concat_boundaries_match_energy_rule():
    params, u1, u2 = make_pair(11)
    cat = data.concat_utterances(data._rng(11, 9, 5), [u1, u2], params)
    hop = params.hop_ms
    for b in cat.boundaries_ms:
        idx = int(round(b / hop)) - 1
        assert data.frame_energy(cat.features[idx : idx + 1])[0] > \
            params.silence_threshold
        assert data.frame_energy(cat.features[idx + 1 : idx + 2])[0] <= \
            params.silence_threshold


# ---------------------------------------------------------------------------
# corpora
# ---------------------------------------------------------------------------


def test_regeneration_is_bit_exact(corpora):
    again = data.build_corpora(seed=77, sizes=SMALL_SIZES, params=SMALL_PARAMS)
    for corpus in data.CORPORA:
        for part in data.PARTS:
            a, b = corpora[corpus][part], again[corpus][part]
            assert len(a) == len(b)
            for ua, ub in zip(a.utterances, b.utterances):
                assert utterances_equal(ua, ub)


def test_speaker_pools_are_disjoint(corpora):
    for corpus in data.CORPORA:
        pools = {part: {u.speaker for u in corpora[corpus][part].utterances}
                 for part in data.PARTS}
        assert not pools["train"] & pools["val"]
        assert not pools["train"] & pools["test"]
        assert not pools["val"] & pools["test"]


def test_m2_covers_every_ordered_pair(corpora):
    # 60 * 1.5 = 90 samples over 25 ordered pairs: coverage is guaranteed
    pairs = {tuple(u.intent_labels) for u in corpora["M2"]["train"].utterances}
    want = {(i, j) for i in range(5) for j in range(5)}
    assert pairs == want


def test_m3_covers_every_ordered_triple_when_sizes_permit():
    sizes = CorpusSizes(s1_train=20, s1_val=4, s1_test=4, multi_scale=1.5,
                        char_train=4, char_val=2, char_test=2)
    params = GeneratorParams(n_intents=3, n_train_speakers=3,
                             n_val_speakers=1, n_test_speakers=1)
    corp = data.build_corpora(seed=13, sizes=sizes, params=params)
    triples = {tuple(u.intent_labels) for u in corp["M3"]["train"].utterances}
    assert len(triples) == 27  # 30 samples >= 3^3 combos


def test_mm_is_a_mixture(corpora):
    arities = {len(u.intent_labels) for u in corpora["MM"]["train"].utterances}
    assert arities == {1, 2, 3}
    n = len(corpora["MM"]["train"])
    expect = round(0.4 * (60 + 90 + 90))
    assert abs(n - expect) <= 2


def test_char_split_has_no_intents(corpora):
    for u in corpora["CHAR"]["train"].utterances:
        assert u.intent_labels == []
        assert len(u.char_labels) >= 4


def test_manifest_counts(corpora):
    ds = corpora["S1"]["train"]
    assert ds.manifest.count == len(ds) == 60
    assert sum(ds.manifest.intent_distribution.values()) == 60


# ---------------------------------------------------------------------------
# cmvn
# ---------------------------------------------------------------------------


def test_cmvn_constant_dimension_becomes_zero():
    utt = data.Utterance(features=np.full((10, 3), 5.0), intent_labels=[0],
                         char_labels=[1], boundaries_ms=[10.0], speaker=0)
    stats = data.compute_cmvn([utt])
    out = data.cmvn(utt.features, stats)
    assert np.allclose(out, 0.0)


def test_cmvn_train_split_is_standardized(corpora):
    train = corpora["S1"]["train"].utterances
    stats = data.compute_cmvn(train)
    stacked = np.vstack([data.cmvn(u.features, stats) for u in train])
    assert np.all(np.abs(stacked.mean(axis=0)) < 1e-10)
    assert np.all(np.abs(stacked.var(axis=0) - 1.0) < 1e-6)


def test_cmvn_test_split_uses_train_stats(corpora):
    train_stats = data.compute_cmvn(corpora["S1"]["train"].utterances)
    test = corpora["S1"]["test"].utterances
    normalized = np.vstack([data.cmvn(u.features, train_stats) for u in test])
    # normalized with foreign stats the test split is close to, but not
    # exactly, zero mean
    assert np.all(np.abs(normalized.mean(axis=0)) < 0.5)
    assert normalized.mean(axis=0).any()


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def test_roundtrip_is_bit_exact(corpora, tmp_path):
    d1, d2 = tmp_path / "one", tmp_path / "two"
    for corpus in data.CORPORA:
        ds = corpora[corpus]["val"]
        data.save_dataset(ds, d1)
        loaded = data.load_dataset(d1, ds.manifest.split)
        data.save_dataset(loaded, d2)
        name = ds.manifest.split
        assert (d1 / f"{name}.bin").read_bytes() == (d2 / f"{name}.bin").read_bytes()
        assert (d1 / f"{name}.json").read_bytes() == (d2 / f"{name}.json").read_bytes()
        for ua, ub in zip(ds.utterances, loaded.utterances):
            assert utterances_equal(ua, ub)


def test_load_missing_dataset(tmp_path):
    with pytest.raises(data.DataError):
        data.load_dataset(tmp_path, "S1_train")


def test_load_rejects_bad_magic(tmp_path):
    (tmp_path / "X.json").write_text(
        '{"split": "X", "count": 0, "seed": 1, "feature_dim": 8, '
        '"hop_ms": 10.0, "intent_distribution": {}}')
    (tmp_path / "X.bin").write_bytes(b"NOTMAGIC" + b"\x00" * 4)
    with pytest.raises(data.DataError):
        data.load_dataset(tmp_path, "X")


def test_load_rejects_truncation(corpora, tmp_path):
    ds = corpora["S1"]["val"]
    data.save_dataset(ds, tmp_path)
    name = ds.manifest.split
    raw = (tmp_path / f"{name}.bin").read_bytes()
    (tmp_path / f"{name}.bin").write_bytes(raw[:-16])
    with pytest.raises(data.DataError):
        data.load_dataset(tmp_path, name)
