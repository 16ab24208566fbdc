import math

import numpy as np
import pytest

from pgformer.config import PGformerConfig
from pgformer.model import PGformer, ShapeError, parameter_groups, positional_encoding
from pgformer.numerics import Tensor, no_grad
from pgformer.pose import Scene, dct_matrix, synthetic_skeleton
from pgformer.xqa import ConfigError


def _model(seed=0, **kw):
    return PGformer(PGformerConfig.tiny(**kw), np.random.default_rng(seed))


def _history(cfg, n=2, B=1, seed=0, T=None):
    rng = np.random.default_rng(seed)
    return rng.normal(0, 300, size=(n, B, T or cfg.T, cfg.J, 3))


def _scene(cfg, frames, n=2, seed=0):
    poses = np.random.default_rng(seed).normal(0, 300, size=(n, frames, cfg.J, 3))
    return Scene(poses, fps=cfg.fps, skeleton=synthetic_skeleton(cfg.J))


# ----------------------------------------------------------------------
# pose encoding
def test_positional_encoding_position_zero():
    pe = positional_encoding(5, 8)
    np.testing.assert_array_equal(pe[0, 0::2], 0.0)
    np.testing.assert_array_equal(pe[0, 1::2], 1.0)
    assert abs(pe[3, 2] - math.sin(3 / 10000 ** (2 / 8))) < 1e-15


def test_pose_encode_zero_input_gives_pe():
    m = _model()
    m.pose_encoder.bias.data[...] = 0.0
    out = m.pose_encode(np.zeros((m.cfg.T, 3 * m.cfg.J))).data
    np.testing.assert_array_equal(out, positional_encoding(m.cfg.T, m.cfg.D))


def test_pose_encode_positions_differ_by_pe():
    m = _model()
    row = np.random.default_rng(0).normal(size=3 * m.cfg.J)
    out = m.pose_encode(np.tile(row, (m.cfg.T, 1))).data
    pe = positional_encoding(m.cfg.T, m.cfg.D)
    np.testing.assert_allclose(out[3] - out[1], pe[3] - pe[1], atol=1e-14)
    with pytest.raises(ShapeError):
        m.pose_encode(np.zeros((m.cfg.T, 3 * m.cfg.J + 1)))


# ----------------------------------------------------------------------
# encoder
def test_encoder_isolation_without_xqa():
    m = _model(use_xqa=False)
    E = np.random.default_rng(0).normal(size=(2, 1, m.cfg.T, m.cfg.D))
    H1 = m.encoder_forward(Tensor(E))[0].data
    E[1] += np.random.default_rng(1).normal(size=E[1].shape)
    H2 = m.encoder_forward(Tensor(E))[0].data
    assert H1[0].tobytes() == H2[0].tobytes()
    assert not np.array_equal(H1[1], H2[1])


def test_encoder_zero_layers_is_identity():
    m = _model(L=0)
    E = Tensor(np.random.default_rng(0).normal(size=(2, 3, m.cfg.T, m.cfg.D)))
    H, T_en = m.encoder_forward(E)
    assert H.data.tobytes() == E.data.tobytes()
    assert T_en.shape == (m.cfg.M, m.cfg.D)


@pytest.mark.parametrize("T", [2, 5, 8])
def test_encoder_shapes(T):
    m = _model()
    H, _ = m.encoder_forward(Tensor(np.random.default_rng(T).normal(size=(2, 1, T, m.cfg.D))))
    assert H.shape == (2, 1, T, m.cfg.D)


# ----------------------------------------------------------------------
# queries
def test_queries_are_copies_plus_pe():
    m = _model()
    hist = np.random.default_rng(0).normal(size=(m.cfg.T, 3 * m.cfg.J))
    Q = m.build_queries(hist).data - positional_encoding(m.cfg.K, m.cfg.D)
    np.testing.assert_allclose(Q, np.repeat(Q[:1], m.cfg.K, axis=0), atol=1e-15)
    assert Q.shape == (m.cfg.K, m.cfg.D)


def test_single_frame_window_is_linear_in_last_frame():
    m = _model(M_q=1)
    rng = np.random.default_rng(1)
    hist = rng.normal(size=(m.cfg.T, 3 * m.cfg.J))
    q = m.build_queries(hist).data[0] - positional_encoding(1, m.cfg.D)[0]
    fc, conv = m.query_fc, m.query_conv
    ref = (hist[-1] @ fc.weight.data + fc.bias.data) @ conv.weight.data + conv.bias.data
    np.testing.assert_allclose(q, ref, atol=1e-12)
    hist2 = hist.copy()
    hist2[:-1] = rng.normal(size=hist2[:-1].shape)
    np.testing.assert_array_equal(m.build_queries(hist2).data, m.build_queries(hist).data)


def test_constant_history_query_window_invariant():
    m = _model(M_q=3)
    frame = np.random.default_rng(2).normal(size=3 * m.cfg.J)
    a = m.build_queries(np.tile(frame, (m.cfg.T, 1))).data
    b = m.build_queries(np.tile(frame, (m.cfg.T - 2, 1))).data
    np.testing.assert_array_equal(a, b)


def test_query_window_errors():
    with pytest.raises(ConfigError):
        PGformerConfig.tiny(M_q=9)
    m = _model(M_q=3)
    with pytest.raises(ShapeError):
        m.build_queries(np.zeros((2, 3 * m.cfg.J)))


# ----------------------------------------------------------------------
# decoder
def test_decoder_memory_cut_by_zero_value_projection():
    m = _model()
    for layer in m.decoder:
        layer.cross_attn.v.weight.data[...] = 0.0
        layer.cross_attn.v.bias.data[...] = 0.0
    rng = np.random.default_rng(0)
    Q = Tensor(rng.normal(size=(2, 1, m.cfg.K, m.cfg.D)))
    mem1 = Tensor(rng.normal(size=(2, 1, m.cfg.T, m.cfg.D)))
    mem2 = Tensor(rng.normal(size=(2, 1, m.cfg.T, m.cfg.D)) * 5)
    out1 = m.decoder_forward(Q, mem1, m.templates.encoder).data
    out2 = m.decoder_forward(Q, mem2, m.templates.encoder).data
    assert out1.shape == (2, 1, m.cfg.K, m.cfg.D)
    np.testing.assert_array_equal(out1, out2)


# ----------------------------------------------------------------------
# pose decoding
def test_zero_gcn_passes_projection_through():
    m = _model(use_dct=False)
    for w in m.pose_decoder.weights:
        w.data[...] = 0.0
    rng = np.random.default_rng(0)
    D_out = rng.normal(size=(m.cfg.K, m.cfg.D))
    x_T = rng.normal(size=3 * m.cfg.J)
    out = m.pose_decode(Tensor(D_out), x_T).data
    proj = D_out @ m.pose_decoder.proj.weight.data + m.pose_decoder.proj.bias.data
    np.testing.assert_array_equal(out, proj.reshape(m.cfg.K, m.cfg.J, 3))


def test_dct_flag_changes_only_temporal_stage():
    on, off = _model(seed=3), _model(seed=3, use_dct=False)
    for w in on.pose_decoder.weights + off.pose_decoder.weights:
        w.data[...] = 0.0
    rng = np.random.default_rng(1)
    D_out, x_T = rng.normal(size=(on.cfg.K, on.cfg.D)), rng.normal(size=3 * on.cfg.J)
    K = on.cfg.K
    proj = D_out @ on.pose_decoder.proj.weight.data + on.pose_decoder.proj.bias.data
    tokens = np.concatenate([x_T[None] * math.sqrt(K + 1), proj])
    ref = (dct_matrix(K + 1).T @ tokens)[1:]
    np.testing.assert_allclose(on.pose_decode(Tensor(D_out), x_T).data.reshape(K, -1), ref, atol=1e-12)
    np.testing.assert_array_equal(off.pose_decode(Tensor(D_out), x_T).data.reshape(K, -1), proj)


def test_zero_decoder_output_predicts_static_pose():
    m = _model()
    for w in m.pose_decoder.weights:
        w.data[...] = 0.0
    m.pose_decoder.proj.weight.data[...] = 0.0
    m.pose_decoder.proj.bias.data[...] = 0.0
    x_T = np.random.default_rng(0).normal(size=3 * m.cfg.J)
    out = m.pose_decode(Tensor(np.zeros((m.cfg.K, m.cfg.D))), x_T).data
    np.testing.assert_allclose(out.reshape(m.cfg.K, -1), np.tile(x_T, (m.cfg.K, 1)), atol=1e-12)


# ----------------------------------------------------------------------
# end to end
@pytest.mark.parametrize("T,K,J,n", [(8, 4, 4, 2), (5, 3, 6, 2), (6, 2, 4, 3), (4, 1, 3, 4)])
def test_shape_contract(T, K, J, n):
    m = _model(T=T, K=K, J=J, M_q=min(2, T), query_mode="last_frame" if n > 2 else "window")
    with no_grad():
        out = m(_history(m.cfg, n=n, B=2)).data
    assert out.shape == (n, 2, K, J, 3)
    assert np.all(np.isfinite(out))


def test_forward_errors():
    m = _model()
    with pytest.raises(ShapeError):
        m(_history(m.cfg, T=m.cfg.T - 1))
    with pytest.raises(ShapeError):
        m(_history(m.cfg, n=1))
    with pytest.raises(ShapeError):
        m.predict(_scene(m.cfg, m.cfg.T - 1))


def test_isolation_and_sensitivity():
    for use_xqa in (False, True):
        m = _model(seed=5, use_xqa=use_xqa)
        h = _history(m.cfg)
        with no_grad():
            a = m(h).data
            h[1] += np.random.default_rng(9).normal(0, 50, size=h[1].shape)
            b = m(h).data
        if use_xqa:
            assert np.max(np.abs(a[0] - b[0])) > 0
        else:
            assert a[0].tobytes() == b[0].tobytes()


def test_predict_deterministic_and_shaped():
    m = _model()
    scene = _scene(m.cfg, m.cfg.T + 3)
    a, b = m.predict(scene), m.predict(scene)
    assert a.poses.tobytes() == b.poses.tobytes()
    assert a.poses.shape == (2, m.cfg.K, m.cfg.J, 3)
    assert np.all(np.isfinite(a.poses))
    # canonicalisation round trip: a rigidly moved scene gives the rigidly moved prediction
    R = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    moved = m.predict(scene.with_poses(scene.poses @ R.T + [500.0, -20.0, 0.0]))
    np.testing.assert_allclose(moved.poses, a.poses @ R.T + [500.0, -20.0, 0.0], atol=1e-8)


def test_recursive_passes_and_windows(monkeypatch):
    m = _model(K=10, T=8)
    scene = _scene(m.cfg, 12)
    single = m.predict(scene)
    np.testing.assert_array_equal(m.predict_recursive(scene, m.cfg.K).poses, single.poses)

    seen = []
    original = PGformer.predict_array

    def spy(self, history, skeleton=None):
        seen.append(np.array(history[:, -self.cfg.T:]))
        return original(self, history, skeleton)

    monkeypatch.setattr(PGformer, "predict_array", spy)
    out = m.predict_recursive(scene, 25)
    assert len(seen) == 3
    assert out.poses.shape[1] == 25
    np.testing.assert_array_equal(seen[0], scene.poses[:, -8:])
    # second pass sees the last 8 frames of history + first prediction
    np.testing.assert_array_equal(seen[1], out.poses[:, 2:10])
    np.testing.assert_array_equal(seen[2], out.poses[:, 12:20])
    with pytest.raises(ValueError):
        m.predict_recursive(scene, 0)


def test_checkpoint_roundtrip(tmp_path):
    m = _model(seed=4)
    m.save(tmp_path / "m.ckpt", {"epoch": 3})
    loaded, meta = PGformer.load(tmp_path / "m.ckpt")
    assert meta["epoch"] == 3
    h = _history(m.cfg)
    with no_grad():
        assert m(h).data.tobytes() == loaded(h).data.tobytes()
    groups = parameter_groups(m)
    assert "encoder.0" in groups and "pose_decoder" in groups
    assert sum(len(v) for v in groups.values()) == len(list(m.named_parameters()))
