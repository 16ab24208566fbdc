import math

import numpy as np
import pytest

from pgformer.numerics import Parameter, Tensor, softmax_rows
from pgformer.numerics.gradcheck import check_gradients
from pgformer.xqa import (ConfigError, ProxyTemplates, XQAParams, attention_map, build_proxy,
                          cross_queries, future_templates, gate_variants, proxy_gate,
                          shared_attention, xqa_forward, xqa_multi)

D, M, T = 6, 3, 5


def _setup(seed, mode="bilinear", **kw):
    rng = np.random.default_rng(seed)
    params = XQAParams(D, M, rng, proxy_mode=mode, **kw)
    templates = Parameter(rng.normal(0, 0.5, size=(M, D)))
    E_l, E_f = Tensor(rng.normal(size=(T, D))), Tensor(rng.normal(size=(T, D)))
    return params, templates, E_l, E_f


def _softmax(a):
    e = np.exp(a - a.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


# ----------------------------------------------------------------------
# queries
def test_identity_projection_passes_nonnegative_input():
    params, _, _, _ = _setup(0)
    params.query.weight.data[...] = np.eye(D)
    params.query.bias.data[...] = 0.0
    E = Tensor(np.abs(np.random.default_rng(1).normal(size=(T, D))))
    Q_l, _ = cross_queries(E, E, params)
    np.testing.assert_array_equal(Q_l.data, E.data)


def test_shared_projection_and_relu():
    params, _, E_l, E_f = _setup(1)
    Q_a, Q_b = cross_queries(E_l, E_l, params)
    np.testing.assert_array_equal(Q_a.data, Q_b.data)
    Q_l, Q_f = cross_queries(E_l, E_f, params)
    assert np.all(Q_l.data >= 0) and np.all(Q_f.data >= 0)
    with pytest.raises(ValueError):
        cross_queries(E_l, Tensor(np.zeros((T, D + 1))), params)


# ----------------------------------------------------------------------
# proxy
def test_zero_template_weights_give_zero_proxy():
    params, templates, E_l, E_f = _setup(2)
    params.template_proj.weight.data[...] = 0.0
    params.template_proj.bias.data[...] = 0.0
    np.testing.assert_array_equal(build_proxy(E_l, E_f, params, templates).data, np.zeros((D, D)))


def test_rank_one_proxy_trace():
    rng = np.random.default_rng(0)
    params = XQAParams(4, 1, rng)
    params.template_proj.weight.data[...] = 0.0
    params.template_proj.weight.data[0, 0] = 1.0
    params.template_proj.bias.data[...] = 0.0
    E_l = np.zeros((2, 4))
    E_l[:, 0] = [1.0, 2.0]                    # W_t column w = [1, 2]
    t = Parameter([[1.0, 0.0, 0.0, 0.0]])
    P = build_proxy(Tensor(E_l), Tensor(np.zeros((2, 4))), params, t).data
    assert abs(np.trace(P) - 5.0) < 1e-12
    assert np.linalg.matrix_rank(P) == 1
    np.testing.assert_allclose(P, 5.0 * np.outer(t.data[0], t.data[0]), atol=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_proxy_symmetric_psd(seed):
    params, templates, E_l, E_f = _setup(seed)
    P = build_proxy(E_l, E_f, params, templates).data
    assert np.max(np.abs(P - P.T)) < 1e-12
    x = np.random.default_rng(seed + 100).normal(size=(100, D))
    rayleigh = np.einsum("id,de,ie->i", x, P, x) / np.einsum("id,id->i", x, x)
    assert rayleigh.min() >= -1e-9
    Pg = proxy_gate(E_l, E_f, params, templates).data
    assert np.max(np.abs(Pg - Pg.T)) < 1e-12


# ----------------------------------------------------------------------
# shared map
def test_hand_case():
    A = shared_attention(Tensor([[1.0, 0.0], [0.0, 1.0]]), Tensor([[1.0, 1.0], [2.0, 0.0]]))
    np.testing.assert_array_equal(A.data, [[1.0, 2.0], [1.0, 0.0]])


def test_gram_map_symmetric_and_identity_proxy():
    Q = Tensor(np.abs(np.random.default_rng(0).normal(size=(T, D))))
    Qf = Tensor(np.abs(np.random.default_rng(1).normal(size=(T, D))))
    A = shared_attention(Q, Q).data
    assert np.max(np.abs(A - A.T)) < 1e-12
    np.testing.assert_array_equal(shared_attention(Q, Qf, Tensor(np.eye(D))).data,
                                  shared_attention(Q, Qf).data)


def test_bilinear_map_oracle():
    params, templates, E_l, E_f = _setup(3)
    A = attention_map(E_l, E_f, params, templates).data
    W, b = params.query.weight.data, params.query.bias.data
    Ql, Qf = np.maximum(E_l.data @ W + b, 0), np.maximum(E_f.data @ W + b, 0)
    Wt = np.concatenate([E_l.data, E_f.data], axis=1) @ params.template_proj.weight.data \
        + params.template_proj.bias.data
    G = Wt @ templates.data
    np.testing.assert_allclose(A, Ql @ (G.T @ G) @ Qf.T, rtol=1e-12, atol=1e-12)


# ----------------------------------------------------------------------
# forward
def test_single_frame_swaps_values():
    params, templates, _, _ = _setup(4)
    rng = np.random.default_rng(5)
    E_l, E_f = Tensor(rng.normal(size=(1, D))), Tensor(rng.normal(size=(1, D)))
    O_l, O_f = xqa_forward(E_l, E_f, params, templates)
    np.testing.assert_array_equal(O_l.data, E_f.data)
    np.testing.assert_array_equal(O_f.data, E_l.data)


def test_zeroed_queries_average_values():
    params, templates, E_l, E_f = _setup(5)
    params.query.weight.data[...] = 0.0
    params.query.bias.data[...] = 0.0
    O_l, O_f = xqa_forward(E_l, E_f, params, templates)
    np.testing.assert_allclose(O_l.data, np.tile(E_f.data.mean(axis=0), (T, 1)), atol=1e-12)
    np.testing.assert_allclose(O_f.data, np.tile(E_l.data.mean(axis=0), (T, 1)), atol=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_swap_symmetry_without_proxy(seed):
    params, _, E_l, E_f = _setup(seed, mode="off")
    O_l, O_f = xqa_forward(E_l, E_f, params)
    S_l, S_f = xqa_forward(E_f, E_l, params)
    np.testing.assert_array_equal(S_l.data, O_f.data)
    np.testing.assert_array_equal(S_f.data, O_l.data)


@pytest.mark.parametrize("seed", range(5))
def test_forward_oracle_and_convex_bound(seed):
    params, templates, E_l, E_f = _setup(seed)
    A = attention_map(E_l, E_f, params, templates).data
    O_l, O_f = xqa_forward(E_l, E_f, params, templates)
    np.testing.assert_allclose(O_l.data, _softmax(A) @ E_f.data, atol=1e-12)
    np.testing.assert_allclose(O_f.data, _softmax(A.T) @ E_l.data, atol=1e-12)
    for S in (softmax_rows(Tensor(A)).data, softmax_rows(Tensor(A.T)).data):
        np.testing.assert_allclose(S.sum(axis=-1), 1.0, atol=1e-12)
    lo, hi = E_f.data.min(axis=0), E_f.data.max(axis=0)
    assert np.all(O_l.data >= lo - 1e-12) and np.all(O_l.data <= hi + 1e-12)


def test_forward_rejects_mismatch():
    params, templates, E_l, _ = _setup(0)
    with pytest.raises(ValueError):
        xqa_forward(E_l, Tensor(np.zeros((T + 1, D))), params, templates)


# ----------------------------------------------------------------------
# gates
def test_gate_examples():
    params, templates, E_l, E_f = _setup(6, mode="gate_multiply")
    A = Tensor(np.random.default_rng(0).normal(size=(T, T)))
    # P' = 1 everywhere: one template, W_t = 1 (bias), template with unit norm
    params1 = XQAParams(D, 1, np.random.default_rng(0), proxy_mode="gate_multiply")
    params1.template_proj.weight.data[...] = 0.0
    params1.template_proj.bias.data[...] = 1.0
    unit = Parameter(np.eye(1, D))
    np.testing.assert_allclose(gate_variants(A, E_l, E_f, params1, unit).data, A.data, atol=1e-15)
    params1.proxy_mode = "gate_add"
    params1.template_proj.bias.data[...] = 0.0
    np.testing.assert_array_equal(gate_variants(A, E_l, E_f, params1, unit).data, A.data)
    params1.proxy_mode = "bilinear"
    with pytest.raises(ConfigError):
        gate_variants(A, E_l, E_f, params1, unit)
    with pytest.raises(ConfigError):
        XQAParams(D, M, np.random.default_rng(0), proxy_mode="nonsense")


# ----------------------------------------------------------------------
# future templates
def test_future_templates_single_template():
    tpl = ProxyTemplates(D, 1, np.random.default_rng(0))
    T_en = Tensor(np.random.default_rng(1).normal(size=(1, D)))
    v = T_en.data @ tpl.attn_v.weight.data + tpl.attn_v.bias.data
    for s in range(3):
        T_q = Tensor(np.random.default_rng(10 + s).normal(size=(1, D)))
        np.testing.assert_allclose(future_templates(T_en, T_q, tpl).data, v, atol=1e-15)


def test_future_templates_identical_rows():
    tpl = ProxyTemplates(D, M, np.random.default_rng(0))
    row = np.random.default_rng(1).normal(size=(1, D))
    out = future_templates(Tensor(np.repeat(row, M, axis=0)), tpl.future_query, tpl).data
    np.testing.assert_allclose(out, np.repeat(out[:1], M, axis=0), atol=1e-15)


def test_future_templates_oracle():
    tpl = ProxyTemplates(D, M, np.random.default_rng(2))
    out = future_templates(tpl.encoder, tpl.future_query, tpl).data
    q = tpl.future_query.data @ tpl.attn_q.weight.data + tpl.attn_q.bias.data
    k = tpl.encoder.data @ tpl.attn_k.weight.data
    v = tpl.encoder.data @ tpl.attn_v.weight.data + tpl.attn_v.bias.data
    ref = np.zeros((M, D))
    for i in range(M):
        s = np.array([q[i] @ k[j] for j in range(M)]) / math.sqrt(D)
        w = np.exp(s - s.max())
        w /= w.sum()
        for j in range(M):
            ref[i] += w[j] * v[j]
    np.testing.assert_allclose(out, ref, rtol=0, atol=1e-12)


# ----------------------------------------------------------------------
# n persons
def test_multi_two_persons_matches_pairwise():
    params, templates, E_l, E_f = _setup(7)
    out = xqa_multi([E_l, E_f], params, templates)
    np.testing.assert_allclose(out[0].data, xqa_forward(E_l, E_f, params, templates)[0].data,
                               atol=1e-12)


def test_multi_identical_persons_and_rows():
    params, templates, E_a, E_b = _setup(8)
    out = xqa_multi([E_a, E_b, E_b], params, templates)
    np.testing.assert_allclose(out[1].data, out[2].data, atol=1e-12)
    # attention over (n-1)T keys: a convex combination of the others' rows
    E_f = np.concatenate([E_b.data, E_b.data])
    lo, hi = E_f.min(axis=0), E_f.max(axis=0)
    assert np.all(out[0].data >= lo - 1e-12) and np.all(out[0].data <= hi + 1e-12)
    with pytest.raises(ValueError):
        xqa_multi([E_a], params, templates)


def test_multi_oracle_three_persons():
    params, templates, E_a, E_b = _setup(9)
    E_c = Tensor(np.random.default_rng(99).normal(size=(T, D)))
    out = xqa_multi([E_a, E_b, E_c], params, templates)
    W, b = params.query.weight.data, params.query.bias.data
    E_f = np.concatenate([E_b.data, E_c.data])
    partner = (E_b.data + E_c.data) / 2
    Wt = np.concatenate([E_a.data, partner], axis=1) @ params.template_proj.weight.data \
        + params.template_proj.bias.data
    G = Wt @ templates.data
    A = np.maximum(E_a.data @ W + b, 0) @ (G.T @ G) @ np.maximum(E_f @ W + b, 0).T
    assert A.shape == (T, 2 * T)
    np.testing.assert_allclose(out[0].data, _softmax(A) @ E_f, atol=1e-12)


# ----------------------------------------------------------------------
@pytest.mark.parametrize("mode", ["bilinear", "off", "gate_multiply", "gate_add"])
def test_xqa_gradients(mode):
    params, templates, E_l, E_f = _setup(11, mode=mode)
    c_l = np.random.default_rng(0).normal(size=(T, D))
    c_f = np.random.default_rng(1).normal(size=(T, D))

    def loss():
        O_l, O_f = xqa_forward(E_l, E_f, params, templates)
        return (O_l * c_l).sum() + (O_f * c_f).sum()

    named = dict(params.named_parameters())
    if mode != "off":
        named["templates"] = templates
    report = check_gradients(loss, named)
    assert max(report.values()) < 1e-5, report


def test_multi_head_gradients():
    params, templates, E_l, E_f = _setup(12, heads=2)
    c = np.random.default_rng(0).normal(size=(T, D))

    def loss():
        O_l, O_f = xqa_forward(E_l, E_f, params, templates)
        return ((O_l - O_f) * c).sum()

    named = dict(params.named_parameters(), templates=templates)
    assert max(check_gradients(loss, named).values()) < 1e-5
