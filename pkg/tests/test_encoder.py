"""Encoder tests: geometry ops, cell semantics, streaming consistency,
gradients of the fused recurrent layer, checkpoint round-trips."""

import math

import numpy as np
import pytest

from streamslu import autodiff as ad
from streamslu import ctc, encoder


def tiny_config(**kw):
    base = dict(feature_dim=3, stack_left=2, frame_skip=2, reduction_factors=(2, 2),
                hidden_dim=5, proj_dim=4, head_hidden=4, vocab_size=3, dropout=0.0)
    base.update(kw)
    return encoder.EncoderConfig(**base)


def tiny_model(seed=0, **kw):
    return encoder.init_model(tiny_config(**kw), np.random.default_rng(seed))


def default_model(seed=0, dropout=0.0):
    return encoder.init_model(encoder.EncoderConfig(dropout=dropout),
                              np.random.default_rng(seed))


def random_chunks(rng, features):
    """Split a sequence at random cut points (possibly empty chunks)."""
    T = features.shape[0]
    n_cuts = int(rng.integers(0, 6))
    cuts = sorted(rng.integers(0, T + 1, size=n_cuts).tolist())
    bounds = [0] + cuts + [T]
    return [features[a:b] for a, b in zip(bounds[:-1], bounds[1:])]


# ---------------------------------------------------------------------------
# stack_frames / time_reduce
# ---------------------------------------------------------------------------


def stack_oracle(seq, left, skip):
    rows = []
    for t in range(0, len(seq), skip):
        rows.append(np.concatenate([seq[max(j, 0)] for j in range(t - left, t + 1)]))
    return np.array(rows)


def reduce_oracle(seq, lam):
    T = len(seq)
    rows = []
    for t0 in range(0, T, lam):
        rows.append(np.concatenate([seq[min(t0 + j, T - 1)] for j in range(lam)]))
    return np.array(rows)


def test_stack_frames_default_geometry():
    seq = np.arange(9, dtype=float).reshape(9, 1)
    out = encoder.stack_frames(seq, left=7, skip=3)
    assert out.shape == (3, 8)
    assert np.array_equal(out, stack_oracle(seq, 7, 3))


def test_stack_frames_identity():
    seq = np.random.default_rng(0).normal(size=(5, 2))
    assert np.array_equal(encoder.stack_frames(seq, left=0, skip=1), seq)


def test_stack_frames_single_frame_repeats():
    seq = np.array([[1.0, 2.0]])
    out = encoder.stack_frames(seq, left=7, skip=3)
    assert out.shape == (1, 16)
    assert np.array_equal(out.reshape(8, 2), np.tile(seq, (8, 1)))


def test_stack_frames_empty():
    out = encoder.stack_frames(np.zeros((0, 4)), left=7, skip=3)
    assert out.shape == (0, 32)


def test_stack_frames_random_against_oracle():
    rng = np.random.default_rng(1)
    for _ in range(25):
        T = int(rng.integers(1, 30))
        D = int(rng.integers(1, 4))
        left = int(rng.integers(0, 9))
        skip = int(rng.integers(1, 5))
        seq = rng.normal(size=(T, D))
        got = encoder.stack_frames(seq, left, skip)
        want = stack_oracle(seq, left, skip)
        assert got.shape == (math.ceil(T / skip), D * (left + 1))
        assert np.array_equal(got, want)


def test_time_reduce_identity():
    seq = np.random.default_rng(2).normal(size=(6, 3))
    assert np.array_equal(encoder.time_reduce(seq, 1), seq)


def test_time_reduce_pads_last_window():
    seq = np.arange(10, dtype=float).reshape(10, 1)
    out = encoder.time_reduce(seq, 4)
    assert out.shape == (3, 4)
    assert np.array_equal(out[2], [8, 9, 9, 9])
    assert np.array_equal(out, reduce_oracle(seq, 4))


def test_time_reduce_exact_division():
    seq = np.random.default_rng(3).normal(size=(8, 2))
    out = encoder.time_reduce(seq, 4)
    assert out.shape == (2, 8)
    assert np.array_equal(out, reduce_oracle(seq, 4))


# ---------------------------------------------------------------------------
# cell semantics
# ---------------------------------------------------------------------------


def test_lstmp_step_zero_weights_zero_state():
    layer = encoder.LstmpLayer(3, 5, 4, np.random.default_rng(0))
    for _, node, _ in layer.params():
        node.value[...] = 0.0
    out, _ = encoder.lstmp_step(np.ones(3), layer, encoder.zero_state(layer))
    assert np.array_equal(out, np.zeros(4))


def test_lstmp_recurrence_is_live():
    layer = encoder.LstmpLayer(3, 5, 4, np.random.default_rng(4))
    x = np.ones(3)
    _, s1 = encoder.lstmp_step(x, layer, encoder.zero_state(layer))
    _, s2 = encoder.lstmp_step(np.zeros(3), layer, s1)
    assert not np.array_equal(s1[0], s2[0])
    assert not np.array_equal(s1[1], s2[1])


def test_lstmp_step_dim_mismatch():
    layer = encoder.LstmpLayer(3, 5, 4, np.random.default_rng(5))
    with pytest.raises(ad.DimensionError):
        encoder.lstmp_step(np.ones(4), layer, encoder.zero_state(layer))


def test_lstmp_layer_gradient():
    rng = np.random.default_rng(6)
    for trial in range(5):
        layer = encoder.LstmpLayer(3, 4, 3, rng)
        x = ad.parameter(rng.normal(size=(4, 3)))

        def f():
            return ad.sum_all(encoder.lstmp_layer_node(x, layer))

        params = [x] + [n for _, n, _ in layer.params()]
        assert ad.grad_check(f, params) < 1e-4


def test_lstmp_layer_node_matches_step_loop():
    rng = np.random.default_rng(7)
    layer = encoder.LstmpLayer(3, 5, 4, rng)
    x = rng.normal(size=(6, 3))
    fused = encoder.lstmp_layer_node(ad.constant(x), layer).value
    state = encoder.zero_state(layer)
    rows = []
    for t in range(6):
        out, state = encoder.lstmp_step(x[t], layer, state)
        rows.append(out)
    assert np.allclose(fused, np.array(rows), atol=1e-14)


# ---------------------------------------------------------------------------
# whole-encoder forward
# ---------------------------------------------------------------------------


def test_output_length_formula():
    cfg = encoder.EncoderConfig()
    # ceil(ceil(ceil(96/3)/4)/4) = ceil(ceil(32/4)/4) = ceil(8/4) = 2
    assert cfg.output_length(96) == 2
    for T in [1, 5, 47, 48, 49, 96, 97, 300]:
        n = math.ceil(T / 3)
        n = math.ceil(n / 4)
        assert cfg.output_length(T) == math.ceil(n / 4)


def test_all_zero_parameters_give_uniform_rows():
    model = tiny_model()
    for _, node, _ in model.named_parameters():
        node.value[...] = 0.0
    lattice = encoder.forward(model, np.random.default_rng(8).normal(size=(12, 3)))
    assert np.allclose(lattice, -math.log(model.config.vocab_size + 1), atol=1e-15)


def test_rows_are_log_distributions():
    model = tiny_model(seed=9)
    lattice = encoder.forward(model, np.random.default_rng(9).normal(size=(21, 3)))
    assert lattice.shape == (model.config.output_length(21), 4)
    sums = [ad.logsumexp(row) for row in lattice]
    assert np.allclose(sums, 0.0, atol=1e-10)


def test_graph_forward_matches_pipeline():
    rng = np.random.default_rng(10)
    for seed in range(5):
        model = tiny_model(seed=seed)
        feats = rng.normal(size=(int(rng.integers(3, 40)), 3))
        _, lp = encoder.forward_graph(model, feats)
        assert np.allclose(lp.value, encoder.forward(model, feats), atol=1e-12)


def test_graph_forward_deterministic():
    model = tiny_model(seed=11)
    feats = np.random.default_rng(11).normal(size=(15, 3))
    a = encoder.forward_graph(model, feats)[1].value
    b = encoder.forward_graph(model, feats)[1].value
    assert np.array_equal(a, b)


def test_dropout_only_when_rng_supplied():
    model = tiny_model(seed=12, dropout=0.5)
    feats = np.random.default_rng(12).normal(size=(20, 3))
    plain = encoder.forward_graph(model, feats)[1].value
    dropped = encoder.forward_graph(
        model, feats, dropout_rng=np.random.default_rng(0))[1].value
    assert np.array_equal(plain, encoder.forward_graph(model, feats)[1].value)
    assert not np.allclose(plain, dropped)


def test_full_encoder_gradient_through_ctc():
    rng = np.random.default_rng(13)
    model = tiny_model(seed=13)
    feats = rng.normal(size=(14, 3))
    labels = [1]

    def f():
        _, lp = encoder.forward_graph(model, feats)
        return ctc.ctc_node(lp, labels, blank=model.config.blank_index)

    params = [n for _, n, _ in model.named_parameters()]
    assert ad.grad_check(f, params, max_entries_per_param=6,
                         rng=np.random.default_rng(99)) < 1e-4


def test_frozen_layer_receives_no_gradient():
    model = tiny_model(seed=14)
    model.set_layer_frozen(0, True)
    feats = np.random.default_rng(14).normal(size=(12, 3))
    _, lp = encoder.forward_graph(model, feats)
    ad.backward(ctc.ctc_node(lp, [2], blank=model.config.blank_index))
    for _, node, _ in model.layers[0].params():
        assert node.grad is None or not node.grad.any()
    assert any(node.grad.any() for _, node, _ in model.layers[1].params())


# ---------------------------------------------------------------------------
# streaming
# ---------------------------------------------------------------------------


def test_streaming_matches_batch_for_random_chunkings():
    rng = np.random.default_rng(15)
    model = tiny_model(seed=15)
    for _ in range(30):
        T = int(rng.integers(1, 60))
        feats = rng.normal(size=(T, 3))
        whole = encoder.forward(model, feats)
        state = encoder.new_stream(model)
        parts = [encoder.stream_push(model, state, c)
                 for c in random_chunks(rng, feats)]
        parts.append(encoder.stream_close(model, state))
        streamed = np.vstack(parts)
        assert streamed.shape == whole.shape
        assert np.allclose(streamed, whole, atol=1e-12)


def test_streaming_default_geometry():
    rng = np.random.default_rng(16)
    model = default_model(seed=16)
    feats = rng.normal(size=(150, 8))
    whole = encoder.forward(model, feats)
    assert whole.shape == (model.config.output_length(150), 13)
    state = encoder.new_stream(model)
    parts = [encoder.stream_push(model, state, c)
             for c in np.array_split(feats, 7)]
    parts.append(encoder.stream_close(model, state))
    assert np.allclose(np.vstack(parts), whole, atol=1e-12)


def test_push_after_close_is_an_error():
    model = tiny_model(seed=17)
    state = encoder.new_stream(model)
    encoder.stream_push(model, state, np.zeros((4, 3)))
    encoder.stream_close(model, state)
    with pytest.raises(encoder.StreamClosedError):
        encoder.stream_push(model, state, np.zeros((1, 3)))
    with pytest.raises(encoder.StreamClosedError):
        encoder.stream_close(model, state)


def test_causality_perturbation():
    """Perturbing frame t leaves every row whose receptive field ends
    before t unchanged."""
    rng = np.random.default_rng(18)
    model = default_model(seed=18)
    feats = rng.normal(size=(200, 8))
    base = encoder.forward(model, feats)
    fps = model.config.frames_per_step
    for row in range(base.shape[0] - 1):
        t = (row + 1) * fps  # first frame beyond row's receptive field
        if t >= feats.shape[0]:
            break
        bumped = feats.copy()
        bumped[t] += 10.0
        changed = encoder.forward(model, bumped)
        assert np.array_equal(changed[: row + 1], base[: row + 1])
        assert not np.array_equal(changed, base)


def test_receptive_field_bookkeeping():
    cfg = encoder.EncoderConfig()
    assert cfg.frames_per_step == 48
    assert cfg.step_ms == 480.0


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


def test_checkpoint_roundtrip_is_bit_exact(tmp_path):
    model = tiny_model(seed=19)
    model.set_layer_frozen(0, True)
    model.set_cmvn(np.arange(3.0), np.ones(3) * 2.0)
    p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    encoder.save_checkpoint(model, p1)
    loaded = encoder.load_checkpoint(p1)
    encoder.save_checkpoint(loaded, p2)
    assert p1.read_bytes() == p2.read_bytes()
    assert loaded.frozen == [True, False, False]
    feats = np.random.default_rng(19).normal(size=(17, 3))
    assert np.array_equal(encoder.forward(model, feats),
                          encoder.forward(loaded, feats))


def test_checkpoint_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_text('{"magic": "other", "format_version": 1}')
    with pytest.raises(encoder.CheckpointError):
        encoder.load_checkpoint(path)


def test_checkpoint_rejects_bad_version(tmp_path):
    model = tiny_model(seed=20)
    path = tmp_path / "v.ckpt"
    encoder.save_checkpoint(model, path)
    import json

    record = json.loads(path.read_text())
    record["format_version"] = 99
    path.write_text(json.dumps(record))
    with pytest.raises(encoder.CheckpointError, match="version"):
        encoder.load_checkpoint(path)


def test_checkpoint_missing_file():
    with pytest.raises(encoder.CheckpointError):
        encoder.load_checkpoint("/nonexistent/model.ckpt")


def test_config_validation():
    with pytest.raises(ValueError):
        encoder.EncoderConfig(frame_skip=0)
    with pytest.raises(ValueError):
        encoder.EncoderConfig(stack_left=-1)
    with pytest.raises(ValueError):
        encoder.EncoderConfig(reduction_factors=(4, 0))
    with pytest.raises(ValueError):
        encoder.EncoderConfig(label_names=("a",), vocab_size=3)
