"""Circular arrangement of aligned submeshes.

Submeshes sit at equally spaced yaws with the front side (the side that
faced the capture camera) on the perimeter of a circle of configurable
diameter, front facing the circle center so every submesh has a clear
line of sight to the others. Sparse inputs (three or fewer) additionally
reserve slots for generated intermediate submeshes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import RigidTransform, StageError, rotation_about_y
from .lift3d import Submesh, transform_submesh

FRONT_FRACTION = 0.10
MAX_GAP_DEG = 120.0


@dataclass(frozen=True)
class Placement:
    submesh_id: int
    transform: RigidTransform
    yaw_deg: float
    front_center: np.ndarray        # world, on the layout circle, y=0
    footprint_centroid: np.ndarray  # world, y=0
    height_m: float
    aligned: bool


@dataclass(frozen=True)
class PlacedLayout:
    placements: list[Placement]
    diameter_m: float
    intermediate_slots: list[tuple[float, RigidTransform]] = field(default_factory=list)

    def occupied_yaws(self) -> list[float]:
        yaws = [p.yaw_deg for p in self.placements]
        yaws += [y for y, _ in self.intermediate_slots]
        return sorted(y % 360.0 for y in yaws)


def circle_point(yaw_deg: float, diameter_m: float) -> np.ndarray:
    """Point on the layout circle at a yaw (degrees from +Z, top-down)."""
    r = diameter_m / 2.0
    a = np.deg2rad(yaw_deg)
    return np.array([r * np.sin(a), 0.0, r * np.cos(a)])


def front_center_local(sub: Submesh) -> np.ndarray:
    """Anchor for the submesh's front side, projected to the floor plane.

    Centroid of the 10% of vertices nearest the capture camera; that is the
    computable stand-in for "the side facing the camera".
    """
    verts = sub.mesh.vertices
    if verts.shape[0] == 0:
        raise StageError("layout", "cannot place an empty submesh")
    dist = np.linalg.norm(verts - sub.capture_camera.position, axis=1)
    k = max(1, int(round(FRONT_FRACTION * verts.shape[0])))
    nearest = np.argpartition(dist, k - 1)[:k]
    center = verts[nearest].mean(axis=0)
    center[1] = 0.0
    return center


def placement_transform(sub: Submesh, yaw_deg: float, diameter_m: float) -> RigidTransform:
    """Rigid transform placing the submesh at a layout yaw.

    Rotates about Y only (floor level stays untouched) so the front
    direction points at the circle center, then translates the front
    center onto the circle.
    """
    fd = sub.front_direction
    horiz = np.hypot(fd[0], fd[2])
    current_yaw = np.degrees(np.arctan2(fd[0], fd[2])) if horiz > 1e-9 else 0.0
    rot = rotation_about_y(yaw_deg + 180.0 - current_yaw)
    fc = front_center_local(sub)
    t = circle_point(yaw_deg, diameter_m) - rot @ fc
    return RigidTransform(rot, t)


def make_placement(sub: Submesh, submesh_id: int, yaw_deg: float, d: float) -> Placement:
    t = placement_transform(sub, yaw_deg, d)
    placed = transform_submesh(sub, t)
    verts = placed.mesh.vertices
    centroid = verts.mean(axis=0)
    return Placement(
        submesh_id=submesh_id,
        transform=t,
        yaw_deg=yaw_deg,
        front_center=circle_point(yaw_deg, d),
        footprint_centroid=np.array([centroid[0], 0.0, centroid[2]]),
        height_m=float(verts[:, 1].max()),
        aligned=sub.aligned,
    )


def layout_submeshes(subs: Sequence[Submesh], d: float) -> PlacedLayout:
    """Place n submeshes at equally spaced yaws on a circle of diameter d.

    Unaligned submeshes are placed all the same, flagged through the
    placement record.
    """
    if len(subs) == 0:
        raise StageError("layout", "no submeshes to lay out")
    if d <= 0:
        raise StageError("layout", "layout diameter must be positive")
    step = 360.0 / len(subs)
    placements = [make_placement(sub, i, i * step, d) for i, sub in enumerate(subs)]
    return PlacedLayout(
        placements=placements,
        diameter_m=d,
        intermediate_slots=plan_intermediate_slots(len(subs), d),
    )


def plan_intermediate_slots(n: int, d: float) -> list[tuple[float, RigidTransform]]:
    """Slots for generated submeshes that bridge over-wide gaps.

    With four or more inputs the circle is dense enough to blend directly
    and no slots are made. With three or fewer, a slot is placed at the
    midpoint of every adjacent pair, then midpoints keep splitting until no
    angular gap exceeds 120 degrees (one wide frame of context).
    """
    if n >= 4:
        return []
    yaws = sorted(i * 360.0 / n for i in range(n))
    occupied = list(yaws)
    first_round = True
    while True:
        gaps = []
        for i, y in enumerate(occupied):
            nxt = occupied[(i + 1) % len(occupied)]
            gap = (nxt - y) % 360.0
            if gap == 0.0:
                gap = 360.0
            gaps.append((y, gap))
        if not first_round and max(g for _, g in gaps) <= MAX_GAP_DEG:
            break
        new = [(y + g / 2.0) % 360.0 for y, g in gaps if first_round or g > MAX_GAP_DEG]
        occupied = sorted(set(occupied) | set(new))
        first_round = False
    slot_yaws = sorted(set(occupied) - set(yaws))
    return [
        (y, RigidTransform(rotation_about_y(y + 180.0), circle_point(y, d)))
        for y in slot_yaws
    ]
