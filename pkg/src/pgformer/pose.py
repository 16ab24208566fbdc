"""Skeletons, scenes, temporal DCT and leader-anchored canonicalisation.

Coordinates are millimetres throughout; frames are stored as ``[..., J, 3]``.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np


class FormatError(ValueError):
    pass


class NormalizationError(ValueError):
    pass


@dataclass(frozen=True)
class Skeleton:
    joint_names: tuple[str, ...]
    edges: tuple[tuple[int, int], ...]
    root_joints: tuple[int, ...]
    # (left, right) hip pair defining body yaw; defaults to the first two roots
    hip_joints: tuple[int, int] | None = None
    up_axis: int = 2

    def __post_init__(self):
        object.__setattr__(self, "joint_names", tuple(self.joint_names))
        object.__setattr__(self, "edges", tuple((int(a), int(b)) for a, b in self.edges))
        object.__setattr__(self, "root_joints", tuple(int(r) for r in self.root_joints))
        J = len(self.joint_names)
        if J < 1:
            raise ValueError("skeleton needs at least one joint")
        for a, b in self.edges:
            if not (0 <= a < J and 0 <= b < J):
                raise ValueError(f"edge ({a}, {b}) out of range for {J} joints")
            if a == b:
                raise ValueError(f"self-loop edge on joint {a}")
        if not self.root_joints:
            raise ValueError("root_joints must be non-empty")
        if len(set(self.root_joints)) != len(self.root_joints):
            raise ValueError(f"root_joints must be distinct: {self.root_joints}")
        if any(not 0 <= r < J for r in self.root_joints):
            raise ValueError(f"root_joints out of range: {self.root_joints}")
        if self.hip_joints is None:
            if len(self.root_joints) < 2:
                raise ValueError("hip_joints needed when fewer than two root joints are given")
            object.__setattr__(self, "hip_joints", tuple(self.root_joints[:2]))
        else:
            object.__setattr__(self, "hip_joints", tuple(int(h) for h in self.hip_joints))
        if self.up_axis not in (1, 2):
            raise ValueError("up_axis must be 1 (y-up) or 2 (z-up)")

    @property
    def joint_count(self) -> int:
        return len(self.joint_names)

    def to_dict(self) -> dict:
        return {"joint_names": list(self.joint_names), "edges": [list(e) for e in self.edges],
                "root_joints": list(self.root_joints), "hip_joints": list(self.hip_joints),
                "up_axis": self.up_axis}

    @classmethod
    def from_dict(cls, d: dict) -> "Skeleton":
        return cls(tuple(d["joint_names"]), tuple(tuple(e) for e in d["edges"]),
                   tuple(d["root_joints"]), tuple(d["hip_joints"]) if d.get("hip_joints") else None,
                   int(d.get("up_axis", 2)))


# 18-joint layout using ExPI joint naming; roots are the hips and back.
EXPI_JOINTS = ("fhead", "lhead", "rhead", "back", "lshoulder", "rshoulder", "lelbow", "relbow",
               "lwrist", "rwrist", "lhip", "rhip", "lknee", "rknee", "lheel", "rheel",
               "ltoes", "rtoes")
EXPI_SKELETON = Skeleton(
    EXPI_JOINTS,
    ((0, 1), (0, 2), (1, 2), (0, 3), (3, 4), (3, 5), (4, 6), (5, 7), (6, 8), (7, 9),
     (3, 10), (3, 11), (10, 12), (11, 13), (12, 14), (13, 15), (14, 16), (15, 17)),
    root_joints=(10, 11, 3),
    hip_joints=(10, 11),
)

_SYNTH_NAMES = ("lhip", "rhip", "back", "neck", "head", "lknee", "rknee", "lhand", "rhand")
_SYNTH_EDGES = ((0, 2), (1, 2), (2, 3), (3, 4), (0, 5), (1, 6), (3, 7), (3, 8))


def synthetic_skeleton(J: int) -> Skeleton:
    """Small body-like skeleton; joints beyond nine extend a chain off the neck."""
    if J < 3:
        raise ValueError("synthetic skeleton needs J >= 3 (two hips and a back)")
    names = list(_SYNTH_NAMES[:J]) + [f"extra{i}" for i in range(max(0, J - len(_SYNTH_NAMES)))]
    edges = [e for e in _SYNTH_EDGES if e[0] < J and e[1] < J]
    for j in range(len(_SYNTH_NAMES), J):
        edges.append((j - 1 if j > len(_SYNTH_NAMES) else 3, j))
    return Skeleton(tuple(names), tuple(edges), root_joints=(0, 1, 2), hip_joints=(0, 1))


@dataclass
class PoseSequence:
    frames: np.ndarray  # [T, J, 3]
    fps: float = 25.0

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 3 or self.frames.shape[-1] != 3 or self.frames.shape[0] < 1:
            raise FormatError(f"pose sequence must be [T>=1, J, 3], got {self.frames.shape}")
        if not np.all(np.isfinite(self.frames)):
            raise FormatError("pose sequence contains non-finite coordinates")
        if self.fps <= 0:
            raise ValueError("fps must be positive")


@dataclass
class Scene:
    """n time-aligned persons; person 0 is the leader, person 1 the follower."""

    poses: np.ndarray  # [n, T, J, 3]
    fps: float = 25.0
    roles: tuple[str, ...] = ()
    name: str = ""
    action: str | None = None
    skeleton: Skeleton | None = field(default=None, repr=False)

    def __post_init__(self):
        self.poses = np.asarray(self.poses, dtype=np.float64)
        if self.poses.ndim != 4 or self.poses.shape[-1] != 3:
            raise FormatError(f"scene poses must be [n, T, J, 3], got {self.poses.shape}")
        if self.poses.shape[0] < 2:
            raise FormatError("a scene needs at least two persons")
        if not self.roles:
            n = self.poses.shape[0]
            self.roles = ("leader", "follower") + tuple(f"person{i}" for i in range(2, n))
        if self.skeleton is not None and self.skeleton.joint_count != self.poses.shape[2]:
            raise FormatError(f"skeleton has {self.skeleton.joint_count} joints, poses have {self.poses.shape[2]}")

    @classmethod
    def from_persons(cls, persons: Sequence[PoseSequence], **kw) -> "Scene":
        shapes = {p.frames.shape for p in persons}
        fpss = {p.fps for p in persons}
        if len(shapes) != 1 or len(fpss) != 1:
            raise FormatError("persons must share T, J and fps")
        return cls(np.stack([p.frames for p in persons]), fps=fpss.pop(), **kw)

    @property
    def persons(self) -> list[PoseSequence]:
        return [PoseSequence(p, self.fps) for p in self.poses]

    @property
    def n_persons(self) -> int:
        return self.poses.shape[0]

    @property
    def n_frames(self) -> int:
        return self.poses.shape[1]

    @property
    def n_joints(self) -> int:
        return self.poses.shape[2]

    def with_poses(self, poses: np.ndarray) -> "Scene":
        return replace(self, poses=poses)

    def frames(self, start: int, stop: int) -> "Scene":
        return self.with_poses(self.poses[:, start:stop])


# ----------------------------------------------------------------------
# temporal DCT
# ----------------------------------------------------------------------
@functools.lru_cache(maxsize=64)
def _dct_matrix_cached(T: int) -> np.ndarray:
    k = np.arange(T)[:, None]
    t = np.arange(T)[None, :]
    C = np.cos(np.pi * (2 * t + 1) * k / (2 * T)) * np.sqrt(2.0 / T)
    C[0] /= np.sqrt(2.0)
    C.setflags(write=False)
    return C


def dct_matrix(T: int) -> np.ndarray:
    """Orthonormal DCT-II matrix ``C`` (rows = frequencies); its inverse is ``C.T``."""
    if T < 1:
        raise ValueError("T must be >= 1")
    return _dct_matrix_cached(int(T))


def dct_time(seq: np.ndarray) -> np.ndarray:
    """Orthonormal DCT-II along axis 0 (time), independently per channel."""
    seq = np.asarray(seq, dtype=np.float64)
    C = dct_matrix(seq.shape[0])
    return (C @ seq.reshape(seq.shape[0], -1)).reshape(seq.shape)


def idct_time(coeffs: np.ndarray) -> np.ndarray:
    """Inverse of :func:`dct_time`."""
    coeffs = np.asarray(coeffs, dtype=np.float64)
    C = dct_matrix(coeffs.shape[0])
    return (C.T @ coeffs.reshape(coeffs.shape[0], -1)).reshape(coeffs.shape)


# ----------------------------------------------------------------------
# flattening
# ----------------------------------------------------------------------
def flatten_pose(frame: np.ndarray) -> np.ndarray:
    """``[..., J, 3] -> [..., 3J]``, joint-major."""
    frame = np.asarray(frame)
    if frame.shape[-1] != 3:
        raise FormatError(f"pose frames must end in a coordinate axis of 3, got {frame.shape}")
    return frame.reshape(frame.shape[:-2] + (frame.shape[-2] * 3,))


def unflatten_pose(vec: np.ndarray) -> np.ndarray:
    """``[..., 3J] -> [..., J, 3]``."""
    vec = np.asarray(vec)
    if vec.shape[-1] % 3:
        raise FormatError(f"flattened pose length {vec.shape[-1]} is not divisible by 3")
    return vec.reshape(vec.shape[:-1] + (vec.shape[-1] // 3, 3))


# ----------------------------------------------------------------------
# canonicalisation
# ----------------------------------------------------------------------
def _rotation_about(axis: np.ndarray, angle: float) -> np.ndarray:
    K = np.array([[0.0, -axis[2], axis[1]], [axis[2], 0.0, -axis[0]], [-axis[1], axis[0], 0.0]])
    return np.eye(3) + np.sin(angle) * K + (1.0 - np.cos(angle)) * (K @ K)


def canonical_transform(frame: np.ndarray, skeleton: Skeleton) -> tuple[np.ndarray, np.ndarray]:
    """Rigid map ``x -> (x - origin) @ R.T`` putting the root centroid of ``frame``
    at the origin and its horizontal hip axis along +x (rotation about the up axis)."""
    frame = np.asarray(frame, dtype=np.float64)
    origin = frame[list(skeleton.root_joints)].mean(axis=0)
    left, right = skeleton.hip_joints
    hip = frame[right] - frame[left]
    hip[skeleton.up_axis] = 0.0
    if np.linalg.norm(hip) < 1e-9:
        raise NormalizationError("degenerate hip axis: zero horizontal length")
    up = np.zeros(3)
    up[skeleton.up_axis] = 1.0
    x_axis = np.array([1.0, 0.0, 0.0])
    angle = np.arctan2(np.dot(up, np.cross(x_axis, hip)), np.dot(x_axis, hip))
    return _rotation_about(up, -angle), origin


def apply_transform(points: np.ndarray, R: np.ndarray, origin: np.ndarray) -> np.ndarray:
    return (np.asarray(points, dtype=np.float64) - origin) @ R.T


def invert_transform(points: np.ndarray, R: np.ndarray, origin: np.ndarray) -> np.ndarray:
    return np.asarray(points, dtype=np.float64) @ R + origin


def leader_normalize(scene: Scene, anchor_person: int = 0, skeleton: Skeleton | None = None) -> Scene:
    """Apply one rigid transform, fixed by the anchor's first frame, to every person and frame."""
    skeleton = skeleton or scene.skeleton
    if skeleton is None:
        raise NormalizationError("leader_normalize needs a skeleton with root and hip joints")
    if not 0 <= anchor_person < scene.n_persons:
        raise IndexError(f"anchor_person {anchor_person} out of range for {scene.n_persons} persons")
    R, origin = canonical_transform(scene.poses[anchor_person, 0], skeleton)
    return scene.with_poses(apply_transform(scene.poses, R, origin))
