"""Cross-query attention with a shared score map and a template-built proxy.

All functions take autograd tensors shaped ``[..., T, D]``; leading axes are
batch axes and are carried through untouched.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .numerics import (Linear, Module, Parameter, Tensor, concat, matmul, relu, softmax_rows,
                       stack)

PROXY_MODES = ("bilinear", "off", "gate_multiply", "gate_add")
_MODE_ALIASES = {"gate_mul": "gate_multiply", "none": "off"}


class ConfigError(ValueError):
    pass


def canonical_proxy_mode(mode: str) -> str:
    mode = _MODE_ALIASES.get(mode, mode)
    if mode not in PROXY_MODES:
        raise ConfigError(f"unknown proxy mode {mode!r}; expected one of {PROXY_MODES}")
    return mode


class XQAParams(Module):
    """Per-layer XQA weights: query projection(s) and the template-weight FC (W_t)."""

    def __init__(self, D: int, M: int, rng: np.random.Generator, proxy_mode: str = "bilinear",
                 shared_query: bool = True, heads: int = 1):
        if M < 1 or D < 1:
            raise ConfigError("XQA needs D >= 1 and M >= 1")
        if D % heads:
            raise ConfigError(f"XQA heads ({heads}) must divide D ({D})")
        self.query = Linear(D, D, rng)
        self.query_f = None if shared_query else Linear(D, D, rng)
        self.template_proj = Linear(2 * D, M, rng)
        self.proxy_mode = canonical_proxy_mode(proxy_mode)
        self.heads = heads
        self.D, self.M = D, M


class ProxyTemplates(Module):
    """Encoder templates T_en, future queries T_q and the attention that maps them to T_de."""

    def __init__(self, D: int, M: int, rng: np.random.Generator):
        self.encoder = Parameter(rng.normal(0.0, 1.0 / np.sqrt(D), size=(M, D)))
        self.future_query = Parameter(rng.normal(0.0, 1.0 / np.sqrt(D), size=(M, D)))
        self.attn_q = Linear(D, D, rng)
        self.attn_k = Linear(D, D, rng, bias=False)
        self.attn_v = Linear(D, D, rng)


# ----------------------------------------------------------------------
def cross_queries(E_l: Tensor, E_f: Tensor, params: XQAParams) -> tuple[Tensor, Tensor]:
    """``Q = ReLU(FC(E))`` for both streams (one shared FC unless configured otherwise)."""
    if E_l.shape[-1] != E_f.shape[-1]:
        raise ValueError(f"XQA streams disagree on width: {E_l.shape} vs {E_f.shape}")
    fc_f = params.query_f or params.query
    return relu(params.query(E_l)), relu(fc_f(E_f))


def template_weights(E_l: Tensor, E_f: Tensor, params: XQAParams) -> Tensor:
    """W_t = FC(channel-concat(E_l, E_f)), shape ``[..., T, M]``."""
    return params.template_proj(concat([E_l, E_f], axis=-1))


def _spread(W_t: Tensor, templates) -> Tensor:
    return matmul(W_t, templates)  # [..., T, D]


def build_proxy(E_l: Tensor, E_f: Tensor, params: XQAParams, templates) -> Tensor:
    """Symmetric PSD proxy ``P = T^T W_t^T W_t T``, shape ``[..., D, D]``."""
    G = _spread(template_weights(E_l, E_f, params), templates)
    return matmul(G.T, G)


def proxy_gate(E_l: Tensor, E_f: Tensor, params: XQAParams, templates) -> Tensor:
    """Time-domain proxy ``P' = W_t T T^T W_t^T``, shape ``[..., T, T]``."""
    G = _spread(template_weights(E_l, E_f, params), templates)
    return matmul(G, G.T)


def shared_attention(Q_l: Tensor, Q_f: Tensor, proxy: Tensor | None = None) -> Tensor:
    """Unscaled shared score map ``Q_l [P] Q_f^T``."""
    if proxy is None:
        return matmul(Q_l, Q_f.T)
    return matmul(matmul(Q_l, proxy), Q_f.T)


def gate_variants(A: Tensor, E_l: Tensor, E_f: Tensor, params: XQAParams, templates) -> Tensor:
    """Combine the map with ``P'`` elementwise (gate_multiply) or additively (gate_add)."""
    if params.proxy_mode == "gate_multiply":
        return A * proxy_gate(E_l, E_f, params, templates)
    if params.proxy_mode == "gate_add":
        return A + proxy_gate(E_l, E_f, params, templates)
    raise ConfigError(f"gate_variants called in proxy mode {params.proxy_mode!r}")


def attention_map(E_l: Tensor, E_f: Tensor, params: XQAParams, templates=None,
                  use_proxy: bool = True) -> Tensor:
    Q_l, Q_f = cross_queries(E_l, E_f, params)
    mode = params.proxy_mode if use_proxy else "off"
    if mode == "off":
        return shared_attention(Q_l, Q_f)
    if templates is None:
        raise ConfigError("proxy mode needs templates")
    if mode == "bilinear":
        return shared_attention(Q_l, Q_f, build_proxy(E_l, E_f, params, templates))
    return gate_variants(shared_attention(Q_l, Q_f), E_l, E_f, params, templates)


def xqa_forward(E_l: Tensor, E_f: Tensor, params: XQAParams, templates=None,
                use_proxy: bool = True) -> tuple[Tensor, Tensor]:
    """``O_l = SM(A) E_f`` and ``O_f = SM(A^T) E_l`` with one shared map ``A``."""
    if E_l.shape != E_f.shape:
        raise ValueError(f"XQA streams must match: {E_l.shape} vs {E_f.shape}")
    if params.heads > 1:
        return _xqa_heads(E_l, E_f, params, templates, use_proxy)
    A = attention_map(E_l, E_f, params, templates, use_proxy)
    return matmul(softmax_rows(A), E_f), matmul(softmax_rows(A.T), E_l)


def _split_heads(x: Tensor, h: int) -> Tensor:
    *lead, T, D = x.shape
    nl = len(lead)
    return x.reshape(*lead, T, h, D // h).transpose(*range(nl), nl + 1, nl, nl + 2)


def _merge_heads(x: Tensor) -> Tensor:
    *lead, h, T, dh = x.shape
    nl = len(lead)
    return x.transpose(*range(nl), nl + 1, nl, nl + 2).reshape(*lead, T, h * dh)


def _xqa_heads(E_l, E_f, params: XQAParams, templates, use_proxy):
    # one map and one proxy per head; proxies share the templates, split by column blocks
    h = params.heads
    Q_l, Q_f = cross_queries(E_l, E_f, params)
    Q_l, Q_f = _split_heads(Q_l, h), _split_heads(Q_f, h)
    V_l, V_f = _split_heads(E_l, h), _split_heads(E_f, h)
    mode = params.proxy_mode if use_proxy else "off"
    if mode == "off":
        A = shared_attention(Q_l, Q_f)
    else:
        G = _split_heads(_spread(template_weights(E_l, E_f, params), templates), h)
        if mode == "bilinear":
            A = shared_attention(Q_l, Q_f, matmul(G.T, G))
        elif mode == "gate_multiply":
            A = shared_attention(Q_l, Q_f) * matmul(G, G.T)
        else:
            A = shared_attention(Q_l, Q_f) + matmul(G, G.T)
    O_l = matmul(softmax_rows(A), V_f)
    O_f = matmul(softmax_rows(A.T), V_l)
    return _merge_heads(O_l), _merge_heads(O_f)


def future_templates(T_en, T_q, templates: ProxyTemplates) -> Tensor:
    """Scaled dot-product attention of the future queries over the encoder templates."""
    if T_en.shape != T_q.shape:
        raise ValueError(f"template shapes differ: {T_en.shape} vs {T_q.shape}")
    D = T_en.shape[-1]
    q = templates.attn_q(T_q)
    k = templates.attn_k(T_en)
    v = templates.attn_v(T_en)
    w = softmax_rows(matmul(q, k.T) * (1.0 / np.sqrt(D)))
    return matmul(w, v)


def xqa_multi(E_all: Sequence[Tensor], params: XQAParams, templates=None,
              use_proxy: bool = True) -> list[Tensor]:
    """n-person XQA: each person queries the time-concatenation of all others.

    Only the querying person's output is produced per pass; the proxy's W_t sees
    the person and the mean of the others.
    """
    n = len(E_all)
    if n < 2:
        raise ValueError("xqa_multi needs at least two persons")
    if len({e.shape for e in E_all}) != 1:
        raise ValueError("xqa_multi streams must share a shape")
    mode = params.proxy_mode if use_proxy else "off"
    if mode in ("gate_multiply", "gate_add") and n > 2:
        raise ConfigError("gate proxy modes are defined for pairs only")
    if params.heads > 1 and n > 2:
        raise ConfigError("multi-head XQA is defined for pairs only")
    outputs = []
    for i in range(n):
        others = [E_all[j] for j in range(n) if j != i]
        if n == 2:
            outputs.append(xqa_forward(E_all[i], others[0], params, templates, use_proxy)[0])
            continue
        E_l = E_all[i]
        E_f = concat(others, axis=-2)
        Q_l, Q_f = cross_queries(E_l, E_f, params)
        if mode == "bilinear":
            partner = stack(others, axis=0).mean(axis=0)
            A = shared_attention(Q_l, Q_f, build_proxy(E_l, partner, params, templates))
        else:
            A = shared_attention(Q_l, Q_f)
        outputs.append(matmul(softmax_rows(A), E_f))
    return outputs
