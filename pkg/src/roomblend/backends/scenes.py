"""Analytic test scenes and the color conventions of the synthetic world.

Synthetic images encode their semantics in chromaticity (each class keeps
the hue of its ADE20K palette color) and their depth in brightness through
a fixed shading function, so the synthetic backends can read both back
exactly. Scenes are ray-cast in closed form and are exact by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import ade20k
from ..core import CameraView, StageError, rotation_about_x

SHADE_FAR_M = 10.0

# classes the synthetic world can paint and recognize; rug is omitted
# because its chromaticity collides with person
SOFA = 23
CHAIR = 19
SYNTH_CLASSES = (ade20k.WALL, ade20k.FLOOR, ade20k.CEILING, ade20k.PERSON, SOFA, CHAIR)


def shade_factor(depth_m: np.ndarray) -> np.ndarray:
    """Brightness factor in [0.5, 1]: nearer is brighter."""
    return 1.0 - 0.5 * np.minimum(depth_m, SHADE_FAR_M) / SHADE_FAR_M


def depth_from_factor(factor: np.ndarray) -> np.ndarray:
    return np.clip(2.0 * SHADE_FAR_M * (1.0 - factor), 0.05, SHADE_FAR_M)


def shaded_color(labels: np.ndarray, depth_m: np.ndarray) -> np.ndarray:
    base = ade20k.palette().astype(np.float64)[labels] / 255.0
    return base * shade_factor(depth_m)[..., None]


def _class_chromas() -> np.ndarray:
    base = ade20k.palette().astype(np.float64)[list(SYNTH_CLASSES)]
    return base / base.sum(axis=1, keepdims=True)


_CHROMAS = None


def classify_colors(color: np.ndarray) -> np.ndarray:
    """Label image from chromaticity; shading-invariant by construction."""
    global _CHROMAS
    if _CHROMAS is None:
        _CHROMAS = _class_chromas()
    flat = color.reshape(-1, 3)
    sums = flat.sum(axis=1, keepdims=True)
    chroma = np.divide(flat, sums, out=np.full_like(flat, 1.0 / 3.0), where=sums > 1e-9)
    dists = ((chroma[:, None, :] - _CHROMAS[None, :, :]) ** 2).sum(axis=2)
    labels = np.asarray(SYNTH_CLASSES, dtype=np.int32)[np.argmin(dists, axis=1)]
    return labels.reshape(color.shape[:2])


def mean_base_brightness(labels: np.ndarray) -> np.ndarray:
    base = ade20k.palette().astype(np.float64)[labels] / 255.0
    return base.mean(axis=-1)


@dataclass(frozen=True)
class Slab:
    """Fronto-parallel overlay at constant planar depth, in frame fractions."""

    top: float
    bottom: float
    left: float
    right: float
    label: int
    depth_m: float


@dataclass(frozen=True)
class BoxRoom:
    """Axis-aligned room centered on the origin, floor through the origin.

    size is (width_x, height_y, length_z); the floor may be tilted about
    the X axis. Optional slabs overlay furniture or a person.
    """

    size: tuple[float, float, float] = (4.0, 2.5, 4.0)
    floor_tilt_deg: float = 0.0
    slabs: tuple[Slab, ...] = ()

    def render(self, cam: CameraView) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        w, h = cam.width_px, cam.height_px
        fx, fy, cx, cy = cam.intrinsics()
        us = np.arange(w) + 0.5
        vs = np.arange(h) + 0.5
        uu, vv = np.meshgrid(us, vs)
        local = np.stack(
            [(uu - cx) / fx, (cy - vv) / fy, -np.ones_like(uu)], axis=-1
        )
        rays = local @ cam.pose.rotation.T  # p = origin + depth * ray
        origin = cam.position

        sx, sy, sz = self.size
        floor_n = rotation_about_x(self.floor_tilt_deg) @ np.array([0.0, 1.0, 0.0])
        eps = 1e-9
        planes = [
            (floor_n, 0.0, ade20k.FLOOR),
            (np.array([0.0, 1.0, 0.0]), sy, ade20k.CEILING),
            (np.array([1.0, 0.0, 0.0]), sx / 2.0, ade20k.WALL),
            (np.array([-1.0, 0.0, 0.0]), sx / 2.0, ade20k.WALL),
            (np.array([0.0, 0.0, 1.0]), sz / 2.0, ade20k.WALL),
            (np.array([0.0, 0.0, -1.0]), sz / 2.0, ade20k.WALL),
        ]
        depth = np.full((h, w), np.inf)
        labels = np.full((h, w), ade20k.WALL, dtype=np.int32)
        for n, off, label in planes:
            denom = rays @ n
            with np.errstate(divide="ignore", invalid="ignore"):
                t = (off - origin @ n) / denom
            hit = origin + t[..., None] * rays
            valid = (np.abs(denom) > 1e-12) & (t > 1e-6)
            if label == ade20k.FLOOR:
                valid &= (np.abs(hit[..., 0]) <= sx / 2 + eps) & (np.abs(hit[..., 2]) <= sz / 2 + eps)
            elif label == ade20k.CEILING:
                valid &= (np.abs(hit[..., 0]) <= sx / 2 + eps) & (np.abs(hit[..., 2]) <= sz / 2 + eps)
            else:
                above_floor = (hit @ floor_n) >= -1e-6
                valid &= above_floor & (hit[..., 1] <= sy + eps)
                valid &= (np.abs(hit[..., 0]) <= sx / 2 + 1e-6) & (np.abs(hit[..., 2]) <= sz / 2 + 1e-6)
            better = valid & (t < depth)
            depth[better] = t[better]
            labels[better] = label

        if not np.all(np.isfinite(depth)):
            raise StageError("backends", "scene ray cast missed; camera outside the room?")

        for slab in self.slabs:
            r0, r1 = int(slab.top * h), int(slab.bottom * h)
            c0, c1 = int(slab.left * w), int(slab.right * w)
            region = np.zeros((h, w), dtype=bool)
            region[r0:r1, c0:c1] = True
            region &= slab.depth_m < depth
            depth[region] = slab.depth_m
            labels[region] = slab.label

        return shaded_color(labels, depth), depth, labels


@dataclass(frozen=True)
class TwoPlane:
    """Camera-frame test pattern: two fronto-parallel wall halves."""

    left_depth_m: float = 1.0
    right_depth_m: float = 3.0

    def render(self, cam: CameraView) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        w, h = cam.width_px, cam.height_px
        depth = np.full((h, w), self.right_depth_m)
        depth[:, : w // 2] = self.left_depth_m
        labels = np.full((h, w), ade20k.WALL, dtype=np.int32)
        return shaded_color(labels, depth), depth, labels


_SCENES = {
    "box_room": BoxRoom(),
    "two_plane": TwoPlane(),
    "tilted_floor": BoxRoom(floor_tilt_deg=20.0),
    "furnished_room": BoxRoom(slabs=(
        Slab(0.30, 0.72, 0.44, 0.58, ade20k.PERSON, 1.6),
        Slab(0.58, 0.85, 0.10, 0.36, SOFA, 1.8),
        Slab(0.55, 0.78, 0.68, 0.90, CHAIR, 1.7),
    )),
}


def synthetic_scene_oracle(scene_id: str, cam: CameraView):
    """(color, depth, labels) for a built-in analytic scene."""
    if scene_id not in _SCENES:
        raise StageError("backends", f"unknown synthetic scene '{scene_id}'")
    return _SCENES[scene_id].render(cam)
