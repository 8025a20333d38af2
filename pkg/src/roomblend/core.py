"""Shared geometric and raster types used across the blending pipeline.

Conventions: right-handed coordinates, +Y up, floor at Y=0. A camera looks
down its local -Z axis with +Y up and +X right. Depth images store the
planar distance along the camera forward axis in meters; pixels with no
depth carry NaN (the missing sentinel), so legitimate near-zero depths
stay representable.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

MISSING_DEPTH = np.nan

_ORTHO_TOL = 1e-9


class PipelineError(Exception):
    """Base error for the blending pipeline."""


class StageError(PipelineError):
    """Error tagged with the pipeline stage that produced it."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


class BackendError(StageError):
    """A model backend failed or returned out-of-contract output."""


def depth_missing_mask(depth: np.ndarray) -> np.ndarray:
    """True where a depth image has no value (NaN/inf sentinel)."""
    return ~np.isfinite(depth)


def depth_valid_mask(depth: np.ndarray) -> np.ndarray:
    return np.isfinite(depth)


@dataclass(frozen=True)
class RigidTransform:
    """Rotation + translation; rotation must be orthonormal with det +1."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)
        if not np.allclose(r @ r.T, np.eye(3), atol=1e-8):
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(r) - 1.0) > 1e-6:
            raise ValueError("rotation determinant is not +1")

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform(np.eye(3), np.zeros(3))

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Map points (N,3) or (3,) through R @ p + t."""
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.rotation.T + self.translation

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """self ∘ other: apply `other` first, then `self`."""
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def inverse(self) -> "RigidTransform":
        rt = self.rotation.T
        return RigidTransform(rt, -rt @ self.translation)


def rotation_about_y(angle_deg: float) -> np.ndarray:
    a = np.deg2rad(angle_deg)
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rotation_about_x(angle_deg: float) -> np.ndarray:
    a = np.deg2rad(angle_deg)
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rotation_aligning(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Minimal rotation taking unit vector src onto unit vector dst."""
    a = np.asarray(src, dtype=np.float64)
    b = np.asarray(dst, dtype=np.float64)
    a = a / np.linalg.norm(a)
    b = b / np.linalg.norm(b)
    v = np.cross(a, b)
    c = float(np.dot(a, b))
    s = float(np.linalg.norm(v))
    if s < 1e-15:
        if c > 0:
            return np.eye(3)
        # 180°: rotate about any axis orthogonal to a
        axis = np.cross(a, [1.0, 0.0, 0.0])
        if np.linalg.norm(axis) < 1e-8:
            axis = np.cross(a, [0.0, 1.0, 0.0])
        axis /= np.linalg.norm(axis)
        k = _cross_matrix(axis)
        return np.eye(3) + 2.0 * (k @ k)
    k = _cross_matrix(v / s)
    return np.eye(3) + s * k + (1.0 - c) * (k @ k)


def _cross_matrix(v: np.ndarray) -> np.ndarray:
    return np.array(
        [[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]]
    )


def look_rotation(forward: np.ndarray, up_hint=(0.0, 1.0, 0.0)) -> np.ndarray:
    """Camera-to-world rotation for a camera facing `forward`.

    Columns are (right, up, back) so that R @ (0,0,-1) == forward.
    """
    f = np.asarray(forward, dtype=np.float64)
    f = f / np.linalg.norm(f)
    back = -f
    right = np.cross(np.asarray(up_hint, dtype=np.float64), back)
    n = np.linalg.norm(right)
    if n < 1e-9:
        raise ValueError("forward parallel to up hint")
    right /= n
    up = np.cross(back, right)
    return np.stack([right, up, back], axis=1)


@dataclass(frozen=True)
class CameraView:
    """Pinhole camera: camera-to-world pose plus vertical FOV and resolution."""

    pose: RigidTransform
    fov_vertical_deg: float = 55.0
    width_px: int = 512
    height_px: int = 512

    def __post_init__(self):
        if not (0.0 < self.fov_vertical_deg < 180.0):
            raise ValueError("vertical FOV must be in (0, 180) degrees")
        if self.width_px <= 0 or self.height_px <= 0:
            raise ValueError("resolution must be positive")

    def intrinsics(self) -> tuple[float, float, float, float]:
        """(fx, fy, cx, cy) in pixels; square pixels, principal point centered."""
        fy = self.height_px / (2.0 * np.tan(np.deg2rad(self.fov_vertical_deg) / 2.0))
        return fy, fy, self.width_px / 2.0, self.height_px / 2.0

    @property
    def position(self) -> np.ndarray:
        return self.pose.translation

    @property
    def forward(self) -> np.ndarray:
        return self.pose.rotation @ np.array([0.0, 0.0, -1.0])

    @property
    def yaw_deg(self) -> float:
        f = self.forward
        return float(np.degrees(np.arctan2(f[0], f[2])) % 360.0)


def camera_at(
    position,
    yaw_deg: float = 0.0,
    pitch_deg: float = 0.0,
    fov_vertical_deg: float = 55.0,
    width_px: int = 512,
    height_px: int = 512,
) -> CameraView:
    """Camera at `position` facing yaw (degrees from +Z, top-down) and pitch (up +)."""
    y = np.deg2rad(yaw_deg)
    p = np.deg2rad(pitch_deg)
    forward = np.array(
        [np.cos(p) * np.sin(y), np.sin(p), np.cos(p) * np.cos(y)]
    )
    rot = look_rotation(forward)
    return CameraView(
        RigidTransform(rot, np.asarray(position, dtype=np.float64)),
        fov_vertical_deg=fov_vertical_deg,
        width_px=width_px,
        height_px=height_px,
    )


def circular_diff_deg(a: float, b: float) -> float:
    """Absolute angular difference in degrees, in [0, 180]."""
    d = abs(a - b) % 360.0
    return min(d, 360.0 - d)


@dataclass(frozen=True)
class TriangleMesh:
    """Triangle soup with per-vertex color and optional semantic label.

    vertices: (N,3) float64 meters; faces: (M,3) int64 vertex indices;
    vertex_colors: (N,3) RGB in [0,1]; vertex_labels: optional (N,) int32.
    """

    vertices: np.ndarray
    faces: np.ndarray
    vertex_colors: np.ndarray
    vertex_labels: Optional[np.ndarray] = None

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3))
        f = np.ascontiguousarray(np.asarray(self.faces, dtype=np.int64).reshape(-1, 3))
        c = np.ascontiguousarray(np.asarray(self.vertex_colors, dtype=np.float64).reshape(-1, 3))
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)
        object.__setattr__(self, "vertex_colors", c)
        if self.vertex_labels is not None:
            l = np.ascontiguousarray(np.asarray(self.vertex_labels, dtype=np.int32).reshape(-1))
            object.__setattr__(self, "vertex_labels", l)

    @staticmethod
    def empty(with_labels: bool = False) -> "TriangleMesh":
        return TriangleMesh(
            np.zeros((0, 3)),
            np.zeros((0, 3), dtype=np.int64),
            np.zeros((0, 3)),
            np.zeros(0, dtype=np.int32) if with_labels else None,
        )

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_faces(self) -> int:
        return self.faces.shape[0]

    @property
    def has_labels(self) -> bool:
        return self.vertex_labels is not None

    def validate(self) -> None:
        """Raise ValueError if any structural invariant is violated."""
        n = self.n_vertices
        if self.vertex_colors.shape[0] != n:
            raise ValueError("vertex_colors length must equal vertex count")
        if self.vertex_labels is not None and self.vertex_labels.shape[0] != n:
            raise ValueError("vertex_labels length must equal vertex count")
        if self.n_faces:
            if self.faces.min() < 0 or self.faces.max() >= n:
                raise ValueError("face index out of range")
            a, b, c = self.faces[:, 0], self.faces[:, 1], self.faces[:, 2]
            if np.any((a == b) | (b == c) | (a == c)):
                raise ValueError("degenerate face (repeated vertex index)")


def apply_rigid_transform(mesh: TriangleMesh, t: RigidTransform) -> TriangleMesh:
    """Return the mesh with every vertex mapped to R @ v + t."""
    return TriangleMesh(
        t.apply(mesh.vertices),
        mesh.faces.copy(),
        mesh.vertex_colors.copy(),
        None if mesh.vertex_labels is None else mesh.vertex_labels.copy(),
    )


def append_mesh(dst: TriangleMesh, src: TriangleMesh) -> TriangleMesh:
    """Concatenate src onto dst, offsetting src face indices.

    Both meshes must agree on label presence; mixing a labeled mesh with an
    unlabeled one signals inconsistent pipeline state and is rejected.
    """
    if dst.has_labels != src.has_labels:
        raise ValueError("append_mesh: label presence mismatch")
    offset = dst.n_vertices
    labels = None
    if dst.has_labels:
        labels = np.concatenate([dst.vertex_labels, src.vertex_labels])
    return TriangleMesh(
        np.concatenate([dst.vertices, src.vertices]),
        np.concatenate([dst.faces, src.faces + offset]),
        np.concatenate([dst.vertex_colors, src.vertex_colors]),
        labels,
    )
