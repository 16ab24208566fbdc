from __future__ import annotations

import dataclasses
from dataclasses import dataclass

from .xqa import ConfigError, canonical_proxy_mode


@dataclass
class PGformerConfig:
    """Architecture hyperparameters. Defaults are the full-size setting."""

    L: int = 4              # PGformer layers in encoder and in decoder
    D: int = 128            # model width
    H: int = 4              # MHA heads
    d_h: int = 64           # MHA head width (H * d_h may differ from D)
    d_ffn: int = 1024
    M: int = 3              # proxy templates
    M_q: int = 3            # frames squeezed into the decoder query
    T: int = 50             # observed frames
    K: int = 10             # frames predicted per pass
    J: int = 18
    fps: float = 25.0
    use_dct: bool = True
    use_xqa: bool = True
    use_proxy: bool = True
    proxy_mode: str = "bilinear"
    use_gravity_loss: bool = True
    shared_query: bool = True
    xqa_residual: bool = True
    xqa_heads: int = 1
    xqa_projection: bool = True  # output FC on the XQA result before the residual add
    gcn_layers: int = 4
    gcn_hidden: int = 32
    query_mode: str = "window"   # "last_frame" uses x_T alone (n > 2 setting)
    coord_scale: float = 1e-3    # mm -> model units
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for name in ("D", "H", "d_h", "d_ffn", "M", "M_q", "T", "K", "J", "xqa_heads", "gcn_layers",
                     "gcn_hidden"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.L < 0:
            raise ConfigError("L must be >= 0")
        if self.M_q > self.T:
            raise ConfigError(f"M_q ({self.M_q}) must not exceed T ({self.T})")
        if self.fps <= 0 or self.coord_scale <= 0:
            raise ConfigError("fps and coord_scale must be positive")
        if self.query_mode not in ("window", "last_frame"):
            raise ConfigError(f"query_mode must be 'window' or 'last_frame', got {self.query_mode!r}")
        self.proxy_mode = canonical_proxy_mode(self.proxy_mode)

    def replace(self, **kw) -> "PGformerConfig":
        return dataclasses.replace(self, **kw)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PGformerConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown model config keys: {unknown}")
        return cls(**d)

    @classmethod
    def tiny(cls, **kw) -> "PGformerConfig":
        """The gradient-check configuration."""
        base = dict(T=8, K=4, J=4, D=16, L=2, M=2, H=2, d_h=8, d_ffn=8, M_q=2, gcn_hidden=4)
        base.update(kw)
        return cls(**base)
