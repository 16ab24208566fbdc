"""Motion files, training windows, dataset splits and the lag-coupled synthetic generator.

MotionFile layout (all multi-byte numbers little-endian)::

    PGMOTION <version>\\n
    <one-line JSON header>\\n
    DATA\\n
    <float64 block>

The header holds ``fps``, ``skeleton`` (joint_names, edges, root_joints,
hip_joints, up_axis) and ``sequences``: a list of ``{name, action, frames,
persons}``. The float64 block concatenates the sequences in header order; each
is laid out frames-major, then person, joint, axis (C order of
``[frames, persons, J, 3]``), in millimetres.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .pose import (FormatError, Scene, Skeleton, apply_transform, canonical_transform,
                   synthetic_skeleton)

MAGIC = b"PGMOTION"
FORMAT_VERSION = 1
_LE_F8 = np.dtype("<f8")


class ParseError(FormatError):
    pass


# ----------------------------------------------------------------------
# file format
# ----------------------------------------------------------------------
def encode_scene_file(scenes: list[Scene], skeleton: Skeleton, fps: float | None = None) -> bytes:
    if fps is None:
        fps = scenes[0].fps if scenes else 25.0
    seqs = []
    blocks = []
    for i, sc in enumerate(scenes):
        if sc.n_joints != skeleton.joint_count:
            raise FormatError(f"scene {i} has {sc.n_joints} joints, skeleton has {skeleton.joint_count}")
        if sc.fps != fps:
            raise FormatError(f"scene {i} fps {sc.fps} differs from file fps {fps}")
        if not np.all(np.isfinite(sc.poses)):
            raise FormatError(f"scene {i} contains non-finite coordinates")
        seqs.append({"name": sc.name or f"seq{i:03d}", "action": sc.action,
                     "frames": sc.n_frames, "persons": sc.n_persons})
        blocks.append(np.ascontiguousarray(np.swapaxes(sc.poses, 0, 1), dtype=_LE_F8).tobytes())
    header = {"fps": fps, "skeleton": skeleton.to_dict(), "sequences": seqs}
    head = MAGIC + f" {FORMAT_VERSION}\n".encode() + json.dumps(header).encode() + b"\nDATA\n"
    return head + b"".join(blocks)


def save_scene_file(path, scenes: list[Scene], skeleton: Skeleton, fps: float | None = None) -> None:
    Path(path).write_bytes(encode_scene_file(scenes, skeleton, fps))


def _read_line(buf: bytes, pos: int, what: str) -> tuple[bytes, int]:
    end = buf.find(b"\n", pos)
    if end < 0:
        raise ParseError(f"truncated file: missing {what} line starting at byte {pos}")
    return buf[pos:end], end + 1


def decode_scene_file(buf: bytes, source: str = "<bytes>") -> tuple[list[Scene], Skeleton]:
    line, pos = _read_line(buf, 0, "version")
    parts = line.split()
    if len(parts) != 2 or parts[0] != MAGIC:
        raise ParseError(f"{source}: not a motion file (bad magic at byte 0)")
    try:
        version = int(parts[1])
    except ValueError:
        raise ParseError(f"{source}: unreadable format version {parts[1]!r}") from None
    if version != FORMAT_VERSION:
        raise ParseError(f"{source}: format version {version} unsupported (expected {FORMAT_VERSION})")
    start = pos
    line, pos = _read_line(buf, pos, "header")
    try:
        header = json.loads(line)
        fps = float(header["fps"])
        skeleton = Skeleton.from_dict(header["skeleton"])
        seqs = header["sequences"]
    except (ValueError, KeyError, TypeError) as exc:
        raise ParseError(f"{source}: malformed header at byte {start}: {exc}") from None
    line, pos = _read_line(buf, pos, "DATA")
    if line != b"DATA":
        raise ParseError(f"{source}: expected DATA marker at byte {pos - len(line) - 1}")
    J = skeleton.joint_count
    scenes = []
    for i, s in enumerate(seqs):
        frames, persons = int(s["frames"]), int(s["persons"])
        if frames < 1 or persons < 2:
            raise ParseError(f"{source}: sequence {i} has {frames} frames and {persons} persons")
        nbytes = frames * persons * J * 3 * 8
        if pos + nbytes > len(buf):
            raise ParseError(f"{source}: truncated data in sequence {i}: needs bytes {pos}..{pos + nbytes}, "
                             f"file ends at byte {len(buf)}")
        arr = np.frombuffer(buf, dtype=_LE_F8, count=nbytes // 8, offset=pos)
        arr = arr.reshape(frames, persons, J, 3).astype(np.float64)
        bad = np.argwhere(~np.isfinite(arr))
        if bad.size:
            f, p, j, _ = bad[0]
            raise ParseError(f"{source}: non-finite coordinate in sequence {i} ({s.get('name')}) "
                             f"at frame {f}, person {p}, joint {j}")
        scenes.append(Scene(np.swapaxes(arr, 0, 1), fps=fps, name=s.get("name", f"seq{i:03d}"),
                            action=s.get("action"), skeleton=skeleton))
        pos += nbytes
    if pos != len(buf):
        raise ParseError(f"{source}: {len(buf) - pos} trailing bytes after byte {pos}")
    return scenes, skeleton


def load_scene_file(path) -> tuple[list[Scene], Skeleton]:
    path = Path(path)
    return decode_scene_file(path.read_bytes(), str(path))


# ----------------------------------------------------------------------
# windows
# ----------------------------------------------------------------------
def make_windows(scene: Scene, T: int, horizon: int, stride: int = 1) -> list[tuple[np.ndarray, np.ndarray]]:
    """Sliding (history [n, T, J, 3], future [n, horizon, J, 3]) pairs; empty if the scene is short."""
    if T < 1 or horizon < 1 or stride < 1:
        raise ValueError("T, horizon and stride must be >= 1")
    length = scene.n_frames
    if length < T + horizon:
        return []
    count = (length - T - horizon) // stride + 1
    out = []
    for k in range(count):
        s = k * stride
        out.append((scene.poses[:, s:s + T], scene.poses[:, s + T:s + T + horizon]))
    return out


def window_arrays(scenes: list[Scene], T: int, horizon: int, stride: int = 1,
                  skeleton: Skeleton | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Stack every window of every scene into ``(H [N, n, T, J, 3], F [N, n, horizon, J, 3])``.

    With a skeleton, each window is canonicalised on the leader's first history frame.
    """
    H, F = [], []
    for sc in scenes:
        skel = skeleton or sc.skeleton
        for hist, fut in make_windows(sc, T, horizon, stride):
            if skel is not None:
                R, origin = canonical_transform(hist[0, 0], skel)
                hist, fut = apply_transform(hist, R, origin), apply_transform(fut, R, origin)
            H.append(hist)
            F.append(fut)
    if not H:
        n = scenes[0].n_persons if scenes else 2
        J = scenes[0].n_joints if scenes else 0
        return np.zeros((0, n, T, J, 3)), np.zeros((0, n, horizon, J, 3))
    return np.stack(H), np.stack(F)


# ----------------------------------------------------------------------
# splits
# ----------------------------------------------------------------------
def split(scenes: list[Scene], mode: str = "common", ratio: float = 0.8, test_actions=None,
          seed: int = 0) -> tuple[list[Scene], list[Scene]]:
    """``common``: every action contributes sequences to both sides.
    ``unseen``: whole actions are held out (``test_actions`` or a seeded pick)."""
    if not 0.0 < ratio < 1.0:
        raise ValueError("ratio must lie strictly between 0 and 1")
    rng = np.random.default_rng(seed)
    if mode == "common":
        groups: dict = {}
        for i, sc in enumerate(scenes):
            groups.setdefault(sc.action, []).append(i)
        train_idx, test_idx = [], []
        for action in sorted(groups, key=str):
            idx = list(rng.permutation(groups[action]))
            n_train = min(max(int(round(ratio * len(idx))), 1), max(len(idx) - 1, 1))
            train_idx += idx[:n_train]
            test_idx += idx[n_train:]
        return [scenes[i] for i in sorted(train_idx)], [scenes[i] for i in sorted(test_idx)]
    if mode == "unseen":
        if any(sc.action is None for sc in scenes):
            raise ValueError("unseen split needs an action label on every sequence")
        labels = sorted({sc.action for sc in scenes})
        if test_actions is None:
            if len(labels) < 2:
                raise ValueError("unseen split needs at least two action labels")
            n_test = min(max(int(round((1.0 - ratio) * len(labels))), 1), len(labels) - 1)
            test_actions = [labels[i] for i in rng.permutation(len(labels))[:n_test]]
        held = set(test_actions)
        unknown = held - set(labels)
        if unknown:
            raise ValueError(f"test actions not present in the data: {sorted(unknown)}")
        return ([sc for sc in scenes if sc.action not in held],
                [sc for sc in scenes if sc.action in held])
    raise ValueError(f"split mode must be 'common' or 'unseen', got {mode!r}")


# ----------------------------------------------------------------------
# synthetic lag-coupled pairs
# ----------------------------------------------------------------------
@dataclass
class SyntheticConfig:
    n_sequences: int = 8
    n_frames: int = 120
    J: int = 9
    fps: float = 25.0
    lag: int = 5                  # tau, frames
    angle: float = math.pi        # follower yaw about the vertical axis (rad)
    offset: tuple[float, float] = (1000.0, 0.0)   # horizontal follower offset (mm)
    joint_amplitude: float = 120.0    # per-axis limb oscillation envelope (mm)
    root_amplitude: float = 60.0      # per-axis root sway envelope (mm)
    drift_speed: float = 100.0        # root drift (mm/s)
    freq_range: tuple[float, float] = (0.5, 2.0)   # Hz
    n_components: int = 3
    n_actions: int = 2
    noise: float = 2.0            # sigma (mm)
    seed: int = 0

    def __post_init__(self):
        self.offset = tuple(float(v) for v in self.offset)
        self.freq_range = tuple(float(v) for v in self.freq_range)
        if self.lag < 1:
            raise ValueError("lag (tau) must be >= 1")
        if self.noise < 0:
            raise ValueError("noise sigma must be >= 0")
        if self.n_sequences < 0 or self.n_frames < 1 or self.n_components < 1 or self.n_actions < 1:
            raise ValueError("n_sequences >= 0 and n_frames, n_components, n_actions >= 1 required")
        if len(self.offset) != 2 or len(self.freq_range) != 2 or self.freq_range[0] <= 0 \
                or self.freq_range[1] < self.freq_range[0]:
            raise ValueError("offset needs two values and freq_range must be 0 < lo <= hi")
        if self.J < 3:
            raise ValueError("synthetic scenes need J >= 3")
        if self.fps <= 0:
            raise ValueError("fps must be positive")
        if self.joint_amplitude < 0 or self.root_amplitude < 0 or self.drift_speed < 0:
            raise ValueError("amplitudes and drift speed must be >= 0")
        # hips must keep a horizontal separation for canonicalisation
        if 2 * _ROOT_JOINT_SCALE * self.joint_amplitude >= _HIP_HALF_WIDTH:
            raise ValueError(f"joint_amplitude too large: hips could cross "
                             f"(need < {_HIP_HALF_WIDTH / (2 * _ROOT_JOINT_SCALE):.0f} mm)")

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ValueError(f"unknown synthetic config keys: {unknown}")
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["offset"], d["freq_range"] = list(self.offset), list(self.freq_range)
        return d


_HIP_HALF_WIDTH = 100.0
_ROOT_JOINT_SCALE = 0.2   # roots oscillate at a fifth of the limb envelope
_REST = {"lhip": (-100.0, 0.0, 900.0), "rhip": (100.0, 0.0, 900.0), "back": (0.0, 0.0, 1150.0),
         "neck": (0.0, 0.0, 1450.0), "head": (0.0, 0.0, 1650.0), "lknee": (-100.0, 0.0, 500.0),
         "rknee": (100.0, 0.0, 500.0), "lhand": (-350.0, 0.0, 1150.0), "rhand": (350.0, 0.0, 1150.0)}


def rest_pose(skeleton: Skeleton) -> np.ndarray:
    """Standing z-up pose ``[J, 3]`` for :func:`synthetic_skeleton` joints."""
    out = np.zeros((skeleton.joint_count, 3))
    for j, name in enumerate(skeleton.joint_names):
        if name in _REST:
            out[j] = _REST[name]
        else:  # extra joints stack above the head
            out[j] = (0.0, 0.0, 1650.0 + 100.0 * (j - len(_REST) + 1))
    return out


def _yaw(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _sinusoids(t: np.ndarray, amp: float, shape: tuple, cfg: SyntheticConfig, band: tuple,
               rng: np.random.Generator) -> np.ndarray:
    """``[len(t), *shape]`` sums of n_components sinusoids; |value| <= amp everywhere."""
    C = cfg.n_components
    freq = rng.uniform(band[0], band[1], size=(C,) + shape)
    phase = rng.uniform(0.0, 2 * np.pi, size=(C,) + shape)
    weight = rng.dirichlet(np.ones(C), size=shape)          # [*shape, C], rows sum to 1
    weight = np.moveaxis(weight, -1, 0)
    wave = np.sin(2 * np.pi * freq[None] * t.reshape((-1, 1) + (1,) * len(shape)) + phase[None])
    return amp * np.sum(weight[None] * wave, axis=1)


def _action_band(cfg: SyntheticConfig, action: int) -> tuple[float, float]:
    lo, hi = cfg.freq_range
    width = (hi - lo) / cfg.n_actions
    return lo + action * width, lo + (action + 1) * width


def synth_leader(cfg: SyntheticConfig, length: int, action: int, rng: np.random.Generator,
                 skeleton: Skeleton) -> np.ndarray:
    """Noise-free leader ``[length, J, 3]`` in millimetres."""
    J = skeleton.joint_count
    t = np.arange(length) / cfg.fps
    band = _action_band(cfg, action)
    heading = rng.uniform(0.0, 2 * np.pi)
    velocity = cfg.drift_speed * np.array([math.cos(heading), math.sin(heading), 0.0])
    root = t[:, None] * velocity + _sinusoids(t, cfg.root_amplitude, (3,), cfg, band, rng)
    scale = np.ones((J, 1))
    scale[list(skeleton.root_joints)] = _ROOT_JOINT_SCALE
    limbs = _sinusoids(t, cfg.joint_amplitude, (J, 3), cfg, band, rng) * scale
    return rest_pose(skeleton)[None] + root[:, None, :] + limbs


def synth_coupled(cfg: SyntheticConfig) -> list[Scene]:
    """Leader/follower pairs where the follower replays the leader ``lag`` frames late,
    turned by ``angle`` about the vertical axis through the origin and shifted by ``offset``."""
    skeleton = synthetic_skeleton(cfg.J)
    rng = np.random.default_rng(cfg.seed)
    R = _yaw(cfg.angle)
    offset = np.array([cfg.offset[0], cfg.offset[1], 0.0])
    scenes = []
    for i in range(cfg.n_sequences):
        action = i % cfg.n_actions
        full = synth_leader(cfg, cfg.n_frames + cfg.lag, action, rng, skeleton)
        leader = full[cfg.lag:]
        follower = full[:cfg.n_frames] @ R.T + offset
        poses = np.stack([leader, follower])
        if cfg.noise > 0:
            poses = poses + rng.normal(0.0, cfg.noise, size=poses.shape)
        scenes.append(Scene(poses, fps=cfg.fps, name=f"seq{i:03d}", action=f"action{action}",
                            skeleton=skeleton))
    return scenes


def coordinate_bound(cfg: SyntheticConfig) -> float:
    """Closed-form bound on |coordinate| over every generated frame, allowing 6 sigma of noise.

    Each noise-free point lies within ``|rest| + drift + sqrt(3)(root + limb envelopes)``
    of the origin; the follower's yaw keeps that radius and its offset adds to it.
    """
    rest = synthetic_skeleton(cfg.J)
    radius = float(np.max(np.linalg.norm(rest_pose(rest), axis=1)))
    duration = (cfg.n_frames + cfg.lag - 1) / cfg.fps
    radius += cfg.drift_speed * duration + math.sqrt(3.0) * (cfg.root_amplitude + cfg.joint_amplitude)
    return radius + math.hypot(*cfg.offset) + 6.0 * cfg.noise


def lag_predictor_residuals(scenes: list[Scene], lag: int) -> tuple[float, float]:
    """Mean squared residual of the least-squares predictor follower[t] ~ A leader[t - lag] + b,
    fitted with the real leader and with the leader zeroed (which leaves only b)."""
    X, Y = [], []
    for sc in scenes:
        if sc.n_frames <= lag:
            continue
        X.append(sc.poses[0, :-lag].reshape(sc.n_frames - lag, -1))
        Y.append(sc.poses[1, lag:].reshape(sc.n_frames - lag, -1))
    if not X:
        raise ValueError("no scene is longer than the lag")
    X, Y = np.concatenate(X), np.concatenate(Y)
    out = []
    for design in (X, np.zeros_like(X)):
        A = np.hstack([design, np.ones((len(design), 1))])
        coef, *_ = np.linalg.lstsq(A, Y, rcond=None)
        out.append(float(np.mean((A @ coef - Y) ** 2)))
    return out[0], out[1]


__all__ = ["FORMAT_VERSION", "ParseError", "SyntheticConfig", "coordinate_bound", "decode_scene_file",
           "encode_scene_file", "lag_predictor_residuals", "load_scene_file", "make_windows",
           "rest_pose", "save_scene_file", "split", "synth_coupled", "synth_leader", "window_arrays"]
