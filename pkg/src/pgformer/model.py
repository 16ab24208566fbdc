"""The PGformer network: pose encoding, XQA-augmented encoder/decoder, GCN pose decoding.

Internally every person stream is stacked on a leading axis, so activations are
``[n, B, tokens, D]`` and all per-person sub-layers share parameters.
"""
from __future__ import annotations

import math

import numpy as np

from .config import PGformerConfig
from .numerics import (LayerNorm, Linear, Module, Parameter, Tensor, concat, matmul, no_grad,
                       relu, softmax_rows, stack, tanh)
from .pose import (Scene, Skeleton, apply_transform, canonical_transform, dct_matrix,
                   invert_transform)
from .training import GravityWeights
from .xqa import ProxyTemplates, XQAParams, future_templates, xqa_forward, xqa_multi


OUTPUT_INIT_SCALE = 0.01


class ShapeError(ValueError):
    pass


def positional_encoding(length: int, D: int) -> np.ndarray:
    pos = np.arange(length)[:, None]
    i = np.arange(0, D, 2)[None, :]
    angle = pos / np.power(10000.0, i / D)
    pe = np.zeros((length, D))
    pe[:, 0::2] = np.sin(angle)
    pe[:, 1::2] = np.cos(angle)[:, : D // 2]
    return pe


# ----------------------------------------------------------------------
# building blocks
# ----------------------------------------------------------------------
class MultiHeadAttention(Module):
    def __init__(self, D: int, H: int, d_h: int, rng: np.random.Generator):
        self.q = Linear(D, H * d_h, rng)
        self.k = Linear(D, H * d_h, rng, bias=False)  # a key bias cancels in the softmax
        self.v = Linear(D, H * d_h, rng)
        self.out = Linear(H * d_h, D, rng)
        self.H, self.d_h = H, d_h

    def _split(self, x: Tensor) -> Tensor:
        *lead, T, _ = x.shape
        nl = len(lead)
        return x.reshape(*lead, T, self.H, self.d_h).transpose(*range(nl), nl + 1, nl, nl + 2)

    def __call__(self, x: Tensor, memory: Tensor | None = None) -> Tensor:
        src = x if memory is None else memory
        q, k, v = self._split(self.q(x)), self._split(self.k(src)), self._split(self.v(src))
        w = softmax_rows(matmul(q, k.T) * (1.0 / math.sqrt(self.d_h)))
        o = matmul(w, v)
        *lead, H, T, dh = o.shape
        nl = len(lead)
        o = o.transpose(*range(nl), nl + 1, nl, nl + 2).reshape(*lead, T, H * dh)
        return self.out(o)


class FeedForward(Module):
    def __init__(self, D: int, d_ffn: int, rng: np.random.Generator):
        self.fc1 = Linear(D, d_ffn, rng)
        self.fc2 = Linear(d_ffn, D, rng)

    def __call__(self, x):
        return self.fc2(relu(self.fc1(x)))


def _cross_person(E: Tensor, xqa: XQAParams, templates, use_proxy: bool) -> Tensor:
    n = E.shape[0]
    streams = [E[i] for i in range(n)]
    if n == 2:
        O_l, O_f = xqa_forward(streams[0], streams[1], xqa, templates, use_proxy)
        return stack([O_l, O_f], axis=0)
    return stack(xqa_multi(streams, xqa, templates, use_proxy), axis=0)


class EncoderLayer(Module):
    def __init__(self, cfg: PGformerConfig, rng: np.random.Generator):
        self.ln_attn = LayerNorm(cfg.D)
        self.attn = MultiHeadAttention(cfg.D, cfg.H, cfg.d_h, rng)
        self.ln_ffn = LayerNorm(cfg.D)
        self.ffn = FeedForward(cfg.D, cfg.d_ffn, rng)
        self.ln_xqa = LayerNorm(cfg.D)
        self.xqa = XQAParams(cfg.D, cfg.M, rng, cfg.proxy_mode, cfg.shared_query, cfg.xqa_heads)
        self.xqa_out = Linear(cfg.D, cfg.D, rng) if cfg.xqa_projection else None

    def __call__(self, x: Tensor, templates, cfg: PGformerConfig) -> Tensor:
        x = x + self.attn(self.ln_attn(x))
        x = x + self.ffn(self.ln_ffn(x))
        if cfg.use_xqa:
            O = _cross_person(self.ln_xqa(x), self.xqa, templates, cfg.use_proxy)
            if self.xqa_out is not None:
                O = self.xqa_out(O)
            x = x + O if cfg.xqa_residual else O
        return x


class DecoderLayer(Module):
    def __init__(self, cfg: PGformerConfig, rng: np.random.Generator):
        self.ln_self = LayerNorm(cfg.D)
        self.self_attn = MultiHeadAttention(cfg.D, cfg.H, cfg.d_h, rng)
        self.ln_cross = LayerNorm(cfg.D)
        self.cross_attn = MultiHeadAttention(cfg.D, cfg.H, cfg.d_h, rng)
        self.ln_ffn = LayerNorm(cfg.D)
        self.ffn = FeedForward(cfg.D, cfg.d_ffn, rng)
        self.ln_xqa = LayerNorm(cfg.D)
        self.xqa = XQAParams(cfg.D, cfg.M, rng, cfg.proxy_mode, cfg.shared_query, cfg.xqa_heads)
        self.xqa_out = Linear(cfg.D, cfg.D, rng) if cfg.xqa_projection else None

    def __call__(self, x: Tensor, memory: Tensor, templates, cfg: PGformerConfig) -> Tensor:
        x = x + self.self_attn(self.ln_self(x))
        x = x + self.cross_attn(self.ln_cross(x), memory)
        x = x + self.ffn(self.ln_ffn(x))
        if cfg.use_xqa:
            O = _cross_person(self.ln_xqa(x), self.xqa, templates, cfg.use_proxy)
            if self.xqa_out is not None:
                O = self.xqa_out(O)
            x = x + O if cfg.xqa_residual else O
        return x


class GCNDecoder(Module):
    """Per-token D -> 3J projection followed by a residual stack of graph convolutions
    over joints with a dense learnable (symmetrised) adjacency."""

    def __init__(self, cfg: PGformerConfig, rng: np.random.Generator):
        J, h = cfg.J, cfg.gcn_hidden
        self.proj = Linear(cfg.D, 3 * J, rng)
        self.adjacency = Parameter(rng.normal(0.0, 0.1, size=(J, J)))
        dims = [3] + [h] * (cfg.gcn_layers - 1) + [3]
        self.weights = [Parameter(rng.normal(0.0, 1.0 / math.sqrt(a), size=(a, b)))
                        for a, b in zip(dims[:-1], dims[1:])]
        # near-zero output paths: an untrained model predicts an almost static pose
        self.proj.weight.data *= OUTPUT_INIT_SCALE
        self.weights[-1].data *= OUTPUT_INIT_SCALE

    def graph(self, seq: Tensor) -> Tensor:
        """Residual GCN block on ``[..., J, 3]`` joint features."""
        adj = (self.adjacency + self.adjacency.T) * 0.5
        z = seq
        last = len(self.weights) - 1
        for i, w in enumerate(self.weights):
            z = matmul(matmul(adj, z), w)
            if i < last:
                z = tanh(z)
        return seq + z


# ----------------------------------------------------------------------
class PGformer(Module):
    def __init__(self, cfg: PGformerConfig, rng: np.random.Generator | None = None):
        cfg.validate()
        self.cfg = cfg
        rng = rng if rng is not None else np.random.default_rng(cfg.seed)
        D, J = cfg.D, cfg.J
        self.pose_encoder = Linear(3 * J, D, rng)
        self.query_fc = Linear(3 * J, D, rng)
        window = 1 if cfg.query_mode == "last_frame" else cfg.M_q
        self.query_conv = Linear(window * D, D, rng)  # Conv1D, kernel = window, one output step
        self.templates = ProxyTemplates(D, cfg.M, rng)
        self.encoder = [EncoderLayer(cfg, rng) for _ in range(cfg.L)]
        self.decoder = [DecoderLayer(cfg, rng) for _ in range(cfg.L)]
        self.pose_decoder = GCNDecoder(cfg, rng)
        # gravity-centre joint logits for the leader and the remaining persons
        self.gravity = [GravityWeights(J), GravityWeights(J)]
        self._pe_enc = positional_encoding(cfg.T, D)
        self._pe_dec = positional_encoding(cfg.K, D)

    # -- stages ----------------------------------------------------------
    def pose_encode(self, tokens: Tensor | np.ndarray) -> Tensor:
        """FC ``3J -> D`` per token plus sinusoidal positions."""
        tokens = tokens if isinstance(tokens, Tensor) else Tensor(tokens)
        if tokens.shape[-1] != 3 * self.cfg.J:
            raise ShapeError(f"pose_encode expects trailing dim {3 * self.cfg.J}, got {tokens.shape}")
        T = tokens.shape[-2]
        pe = self._pe_enc if T <= self.cfg.T else positional_encoding(T, self.cfg.D)
        return self.pose_encoder(tokens) + pe[:T]

    def encoder_forward(self, E: Tensor) -> tuple[Tensor, Tensor]:
        """Run the encoder stack on stacked streams ``[n, ..., T, D]``; returns (H, T_en)."""
        T_en = self.templates.encoder
        x = E
        for layer in self.encoder:
            x = layer(x, T_en, self.cfg)
        return x, T_en

    def build_queries(self, history: np.ndarray | Tensor) -> Tensor:
        """Squeeze the last frames of ``[..., T, 3J]`` into q and copy it K times (+PE)."""
        cfg = self.cfg
        history = history if isinstance(history, Tensor) else Tensor(history)
        window = 1 if cfg.query_mode == "last_frame" else cfg.M_q
        if window > history.shape[-2]:
            raise ShapeError(f"query window {window} exceeds history length {history.shape[-2]}")
        lead = history.shape[:-2]
        frames = history[..., history.shape[-2] - window:, :]
        feats = self.query_fc(frames).reshape(*lead, window * cfg.D)
        q = self.query_conv(feats).reshape(*lead, 1, cfg.D)
        return q + self._pe_dec

    def decoder_forward(self, queries: Tensor, memory: Tensor, T_en) -> Tensor:
        T_de = future_templates(T_en, self.templates.future_query, self.templates)
        x = queries
        for layer in self.decoder:
            x = layer(x, memory, T_de, self.cfg)
        return x

    def pose_decode(self, D_out: Tensor, last_frame: np.ndarray | Tensor) -> Tensor:
        """``[..., K, D]`` decoder tokens + last observation ``[..., 3J]`` -> ``[..., K, J, 3]``
        in model units.

        The last observation becomes token 0 (the DC coefficient of a constant
        segment when the DCT is used), so zero decoder output predicts a static pose.
        """
        cfg = self.cfg
        K = D_out.shape[-2]
        lead = D_out.shape[:-2]
        x_T = last_frame if isinstance(last_frame, Tensor) else Tensor(last_frame)
        if cfg.use_dct:
            x_T = x_T * math.sqrt(K + 1)
        tokens = concat([x_T.reshape(*lead, 1, 3 * cfg.J), self.pose_decoder.proj(D_out)], axis=-2)
        joints = self.pose_decoder.graph(tokens.reshape(*lead, K + 1, cfg.J, 3))
        flat = joints.reshape(*lead, K + 1, 3 * cfg.J)
        if cfg.use_dct:
            flat = matmul(Tensor(dct_matrix(K + 1).T), flat)
        return flat[..., 1:, :].reshape(*lead, K, cfg.J, 3)

    # -- end to end -------------------------------------------------------
    def forward(self, history: np.ndarray) -> Tensor:
        """``history`` ``[n, B, T, J, 3]`` in mm -> prediction ``[n, B, K, J, 3]`` in mm."""
        cfg = self.cfg
        history = np.asarray(history, dtype=np.float64)
        if history.ndim != 5 or history.shape[-2:] != (cfg.J, 3):
            raise ShapeError(f"expected history [n, B, T, {cfg.J}, 3], got {history.shape}")
        if history.shape[2] != cfg.T:
            raise ShapeError(f"expected T={cfg.T} history frames, got {history.shape[2]}")
        if history.shape[0] < 2:
            raise ShapeError("PGformer needs at least two persons")
        x = history.reshape(history.shape[:3] + (3 * cfg.J,)) * cfg.coord_scale
        enc_in = dct_matrix(cfg.T) @ x if cfg.use_dct else x
        E = self.pose_encode(enc_in)
        memory, T_en = self.encoder_forward(E)
        queries = self.build_queries(x)
        D_out = self.decoder_forward(queries, memory, T_en)
        return self.pose_decode(D_out, x[..., -1, :]) * (1.0 / cfg.coord_scale)

    __call__ = forward

    def predict_array(self, history: np.ndarray, skeleton: Skeleton | None = None) -> np.ndarray:
        """Inference on ``[n, T', J, 3]`` (uses the last T frames); no graph is recorded.

        With a skeleton, the window is canonicalised on the leader's first frame
        and the prediction mapped back.
        """
        cfg = self.cfg
        history = np.asarray(history, dtype=np.float64)
        if history.shape[1] < cfg.T:
            raise ShapeError(f"history has {history.shape[1]} frames, model needs T={cfg.T}")
        window = history[:, history.shape[1] - cfg.T:]
        if skeleton is not None:
            R, origin = canonical_transform(window[0, 0], skeleton)
            window = apply_transform(window, R, origin)
        with no_grad():
            pred = self.forward(window[:, None]).data[:, 0]
        if skeleton is not None:
            pred = invert_transform(pred, R, origin)
        return pred

    def predict(self, scene_history: Scene) -> Scene:
        """K future frames for every person of ``scene_history``."""
        pred = self.predict_array(scene_history.poses, scene_history.skeleton)
        return scene_history.with_poses(pred)

    def predict_recursive(self, scene_history: Scene, horizon_frames: int) -> Scene:
        """Roll the model forward ``ceil(horizon / K)`` times, each pass seeing the latest T frames."""
        if horizon_frames < 1:
            raise ValueError("horizon_frames must be >= 1")
        cfg = self.cfg
        rolling = scene_history.poses
        outputs = []
        produced = 0
        while produced < horizon_frames:
            step = self.predict_array(rolling, scene_history.skeleton)
            outputs.append(step)
            rolling = np.concatenate([rolling[:, -cfg.T:], step], axis=1)
            produced += cfg.K
        return scene_history.with_poses(np.concatenate(outputs, axis=1)[:, :horizon_frames])

    # -- persistence ---------------------------------------------------
    def save(self, path, extra: dict | None = None) -> None:
        from .numerics import save_parameters
        meta = {"model_config": self.cfg.to_dict()}
        if extra:
            meta.update(extra)
        save_parameters(path, self.state_dict(), meta)

    @classmethod
    def load(cls, path) -> tuple["PGformer", dict]:
        from .numerics import load_parameters
        params, meta = load_parameters(path)
        if "model_config" not in meta:
            raise ValueError(f"{path}: checkpoint carries no model config")
        model = cls(PGformerConfig.from_dict(meta["model_config"]))
        model.load_state_dict(params)
        return model, meta


def parameter_groups(model: PGformer) -> dict[str, list[str]]:
    """Parameter paths grouped by sub-module (``encoder.0``, ``pose_decoder``, ...)."""
    groups: dict[str, list[str]] = {}
    for name, _ in model.named_parameters():
        parts = name.split(".")
        key = ".".join(parts[:2]) if parts[0] in ("encoder", "decoder") else parts[0]
        groups.setdefault(key, []).append(name)
    return groups
