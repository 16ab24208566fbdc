"""Pose-forecast metrics: MPJPE, joint mean error (JME) and aligned mean error (AME).

Scenes are ``[n, K, J, 3]`` arrays (or :class:`Scene` objects) in millimetres.
Horizons are seconds; horizon ``h`` reads predicted frame ``round(h * fps)``,
counted from 1.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .pose import Scene, Skeleton, apply_transform, canonical_transform

DEFAULT_HORIZONS = (0.2, 0.4, 0.6, 1.0)


class MetricError(ValueError):
    pass


class AlignmentError(MetricError):
    pass


def _poses(x) -> np.ndarray:
    arr = x.poses if isinstance(x, Scene) else np.asarray(x, dtype=np.float64)
    if arr.ndim != 4 or arr.shape[-1] != 3:
        raise MetricError(f"scenes must be [n, K, J, 3], got {arr.shape}")
    return arr


def _pair(pred, gt) -> tuple[np.ndarray, np.ndarray]:
    p, g = _poses(pred), _poses(gt)
    if p.shape != g.shape:
        raise MetricError(f"prediction and ground truth differ in shape: {p.shape} vs {g.shape}")
    return p, g


def mpjpe(pred, gt) -> float:
    """Mean Euclidean distance over every joint of ``[..., J, 3]``."""
    pred, gt = np.asarray(pred, dtype=np.float64), np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise MetricError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    return float(np.mean(np.linalg.norm(pred - gt, axis=-1)))


def horizon_frames(horizons, fps: float, n_frames: int | None = None) -> list[int]:
    """1-based predicted-frame index of each horizon."""
    hs = [float(h) for h in horizons]
    if not hs:
        raise MetricError("no horizons requested")
    if any(b <= a for a, b in zip(hs, hs[1:])):
        raise MetricError(f"horizons must be strictly increasing: {hs}")
    frames = [int(round(h * fps)) for h in hs]
    for h, f in zip(hs, frames):
        if f < 1:
            raise MetricError(f"horizon {h}s maps to frame {f} at {fps} fps; it must be >= 1")
        if n_frames is not None and f > n_frames:
            raise MetricError(f"horizon {h}s needs frame {f} but the prediction has {n_frames} frames")
    return frames


def jme_canonical(pred, gt, skeleton: Skeleton) -> tuple[np.ndarray, np.ndarray]:
    """Map both scenes by the one rigid transform fixed by the ground-truth leader's first frame."""
    p, g = _pair(pred, gt)
    R, origin = canonical_transform(g[0, 0], skeleton)
    return apply_transform(p, R, origin), apply_transform(g, R, origin)


def jme(pred, gt, skeleton: Skeleton, horizons=DEFAULT_HORIZONS, fps: float = 25.0) -> list[float]:
    """MPJPE over all persons jointly at each horizon frame, in the leader-anchored frame."""
    p, g = jme_canonical(pred, gt, skeleton)
    frames = horizon_frames(horizons, fps, p.shape[1])
    return [mpjpe(p[:, f - 1], g[:, f - 1]) for f in frames]


# ----------------------------------------------------------------------
def procrustes_align(pred, gt, scaling: bool = False, return_transform: bool = False):
    """Rigidly align ``pred`` [J, 3] onto ``gt`` [J, 3] (least squares, proper rotation).

    ``scaling`` adds the optimal uniform scale (similarity alignment).
    """
    pred, gt = np.asarray(pred, dtype=np.float64), np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape or pred.ndim != 2 or pred.shape[1] != 3:
        raise AlignmentError(f"procrustes needs matching [J, 3] inputs, got {pred.shape} and {gt.shape}")
    mu_p, mu_g = pred.mean(axis=0), gt.mean(axis=0)
    P, G = pred - mu_p, gt - mu_g
    M = P.T @ G
    U, S, Vt = np.linalg.svd(M)
    if S[0] == 0.0 or S[1] <= 1e-12 * S[0]:
        raise AlignmentError(f"degenerate point set (singular values {S}); rotation not unique")
    d = np.sign(np.linalg.det(Vt.T @ U.T)) or 1.0
    D = np.diag([1.0, 1.0, d])
    R = Vt.T @ D @ U.T
    s = float(np.sum(S * np.diag(D)) / np.sum(P * P)) if scaling else 1.0
    aligned = s * (P @ R.T) + mu_g
    if return_transform:
        return aligned, (R, s, mu_g - s * (mu_p @ R.T))
    return aligned


def root_center(poses: np.ndarray, skeleton: Skeleton) -> np.ndarray:
    """Subtract each pose's root-joint centroid (``[..., J, 3]``)."""
    poses = np.asarray(poses, dtype=np.float64)
    return poses - poses[..., list(skeleton.root_joints), :].mean(axis=-2, keepdims=True)


def aligned_frames(pred, gt, skeleton: Skeleton, frames=None, scaling: bool = False) -> np.ndarray:
    """Root-centred, per-person per-frame Procrustes-aligned prediction ``[n, len(frames), J, 3]``
    together with the matching root-centred ground truth stacked on a new leading axis."""
    p, g = _pair(pred, gt)
    frames = range(p.shape[1]) if frames is None else frames
    p, g = root_center(p[:, list(frames)], skeleton), root_center(g[:, list(frames)], skeleton)
    out = np.empty_like(p)
    for i in range(p.shape[0]):
        for k in range(p.shape[1]):
            out[i, k] = procrustes_align(p[i, k], g[i, k], scaling=scaling)
    return np.stack([out, g])


def ame(pred, gt, skeleton: Skeleton, horizons=DEFAULT_HORIZONS, fps: float = 25.0,
        scaling: bool = False) -> list[float]:
    """MPJPE after per-person root centring and per-frame rigid alignment, at each horizon."""
    p, _ = _pair(pred, gt)
    frames = horizon_frames(horizons, fps, p.shape[1])
    al, g = aligned_frames(pred, gt, skeleton, [f - 1 for f in frames], scaling)
    return [mpjpe(al[:, k], g[:, k]) for k in range(len(frames))]


def per_joint_errors(pred, gt, skeleton: Skeleton | None = None) -> np.ndarray:
    """Mean error ``[n, J]`` per person and joint over all frames (leader-anchored frame)."""
    p, g = _pair(pred, gt)
    if skeleton is not None:
        p, g = jme_canonical(p, g, skeleton)
    return np.linalg.norm(p - g, axis=-1).mean(axis=1)


# ----------------------------------------------------------------------
@dataclass
class MetricReport:
    horizons: list[float]
    jme: list[float] = field(default_factory=list)
    ame: list[float] = field(default_factory=list)
    mpjpe: list[float] = field(default_factory=list)   # mean over predicted frames 1..h
    per_joint: np.ndarray | None = None               # [n, J]
    count: int = 0

    def __post_init__(self):
        self.horizons = [float(h) for h in self.horizons]
        if any(b <= a for a, b in zip(self.horizons, self.horizons[1:])):
            raise MetricError("horizon list must be strictly increasing")
        for name in ("jme", "ame", "mpjpe"):
            vals = getattr(self, name)
            if any(v < 0 for v in vals):
                raise MetricError(f"{name} values must be >= 0")

    def records(self, **tags) -> list[dict]:
        rows = []
        for i, h in enumerate(self.horizons):
            row = {**tags, "horizon": h}
            for name in ("jme", "ame", "mpjpe"):
                vals = getattr(self, name)
                if vals:
                    row[name] = vals[i]
            rows.append(row)
        return rows

    def to_json(self, **tags) -> str:
        return "\n".join(json.dumps(r) for r in self.records(**tags))

    def table(self, title: str = "") -> str:
        head = f"{'metric':<8}" + "".join(f"{h:>9.1f}s" for h in self.horizons)
        lines = [title] if title else []
        lines.append(head)
        for name in ("jme", "ame", "mpjpe"):
            vals = getattr(self, name)
            if vals:
                lines.append(f"{name.upper():<8}" + "".join(f"{v:>10.1f}" for v in vals))
        return "\n".join(lines)

    def per_joint_csv(self, joint_names=None) -> str:
        if self.per_joint is None:
            return ""
        n, J = self.per_joint.shape
        names = list(joint_names) if joint_names is not None else [f"j{j}" for j in range(J)]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["person", "joint", "error_mm"])
        for i in range(n):
            for j in range(J):
                w.writerow([i, names[j], f"{self.per_joint[i, j]:.6f}"])
        return buf.getvalue()


def evaluate(preds, gts, skeleton: Skeleton, horizons=DEFAULT_HORIZONS, fps: float = 25.0,
             metric: str = "both", scaling: bool = False) -> MetricReport:
    """Average per-scene metrics over paired lists of predicted and ground-truth futures."""
    if metric not in ("jme", "ame", "both"):
        raise MetricError(f"metric must be jme, ame or both, got {metric!r}")
    if len(preds) != len(gts) or not preds:
        raise MetricError(f"need equal, non-zero numbers of predictions and targets "
                          f"({len(preds)} vs {len(gts)})")
    j_acc, a_acc, m_acc, pj = [], [], [], []
    for p, g in zip(preds, gts):
        p, g = _pair(p, g)
        frames = horizon_frames(horizons, fps, p.shape[1])
        pc, gc = jme_canonical(p, g, skeleton)
        err = np.linalg.norm(pc - gc, axis=-1)               # [n, K, J]
        m_acc.append([float(err[:, :f].mean()) for f in frames])
        pj.append(err.mean(axis=1))
        if metric in ("jme", "both"):
            j_acc.append([float(err[:, f - 1].mean()) for f in frames])
        if metric in ("ame", "both"):
            a_acc.append(ame(p, g, skeleton, horizons, fps, scaling))
    return MetricReport(list(horizons), jme=_column_mean(j_acc), ame=_column_mean(a_acc),
                        mpjpe=_column_mean(m_acc), per_joint=np.mean(pj, axis=0), count=len(preds))


def _column_mean(rows) -> list[float]:
    return [float(v) for v in np.mean(np.asarray(rows), axis=0)] if rows else []
