"""Camera sequences for blending and mesh completion.

Blending uses wide 512x1280 frames from the circle center so one inpainting
step spans two neighboring submeshes. Completion adds floor/ceiling sweeps,
a center-to-submesh path per submesh, and a randomized look-around pass
from each submesh center; all randomness flows from one seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .core import CameraView, StageError, camera_at
from .layout import PlacedLayout

EYE_HEIGHT_M = 1.5
WIDE_WIDTH = 1280
WIDE_HEIGHT = 512
SQUARE_SIZE = 512
FOV_DEG = 55.0

FLOOR_PASS_PITCHES = np.linspace(-20.0, -75.0, 6)
FLOOR_PASS_YAWS = np.arange(0.0, 360.0, 45.0)
SUBMESH_PATH_STEPS = 5
LOOK_AROUND_YAWS = np.arange(0.0, 360.0, 45.0)
LOOK_AROUND_YAW_JITTER = 10.0
LOOK_AROUND_PITCH_JITTER = 5.0


class StepPurpose(str, Enum):
    BLEND = "blend"
    FLOOR = "floor"
    CEILING = "ceiling"
    SUBMESH_PATH = "submesh_path"
    LOOK_AROUND = "look_around"
    FLOOR_GENERATION = "floor_generation"


@dataclass(frozen=True)
class TrajectoryStep:
    cam: CameraView
    purpose: StepPurpose
    prompt_hint: Optional[float] = None

    def __post_init__(self):
        wide = self.purpose == StepPurpose.BLEND
        want_w = WIDE_WIDTH if wide else SQUARE_SIZE
        want_h = WIDE_HEIGHT if wide else SQUARE_SIZE
        if self.cam.width_px != want_w or self.cam.height_px != want_h:
            raise ValueError(
                f"{self.purpose.value} steps must be {want_w}x{want_h}, "
                f"got {self.cam.width_px}x{self.cam.height_px}"
            )


def midpoint_yaws(yaws: Sequence[float]) -> list[float]:
    """Circular midpoint of each adjacent pair of yaws."""
    out = []
    n = len(yaws)
    for i, y in enumerate(yaws):
        nxt = yaws[(i + 1) % n]
        gap = (nxt - y) % 360.0
        if gap == 0.0:
            gap = 360.0
        out.append((y + gap / 2.0) % 360.0)
    return out


def blending_viewpoints(layout: PlacedLayout) -> list[TrajectoryStep]:
    """One wide frame per adjacent pair of occupied yaws, from the center.

    Cameras sit at the circle center at eye height, yawed at each pair's
    midpoint, ordered by yaw.
    """
    occupied = layout.occupied_yaws()
    if len(occupied) < 2:
        raise StageError("trajectory", "blending needs at least two occupied yaws")
    steps = []
    for yaw in sorted(midpoint_yaws(occupied)):
        cam = camera_at(
            (0.0, EYE_HEIGHT_M, 0.0), yaw_deg=yaw,
            fov_vertical_deg=FOV_DEG, width_px=WIDE_WIDTH, height_px=WIDE_HEIGHT,
        )
        steps.append(TrajectoryStep(cam, StepPurpose.BLEND, prompt_hint=yaw))
    return steps


def completion_trajectories(layout: PlacedLayout, rng_seed: int) -> list[TrajectoryStep]:
    """Floor/ceiling sweeps, per-submesh paths, then the look-around pass."""
    rng = np.random.default_rng(rng_seed)
    steps: list[TrajectoryStep] = []

    for pitches, purpose in (
        (FLOOR_PASS_PITCHES, StepPurpose.FLOOR),
        (-FLOOR_PASS_PITCHES, StepPurpose.CEILING),
    ):
        for pitch in pitches:
            for yaw in FLOOR_PASS_YAWS:
                cam = camera_at((0.0, EYE_HEIGHT_M, 0.0), yaw_deg=float(yaw),
                                pitch_deg=float(pitch))
                steps.append(TrajectoryStep(cam, purpose))

    placements = sorted(layout.placements, key=lambda p: p.yaw_deg)
    n = len(placements)
    for i, placement in enumerate(placements):
        start = np.array([0.0, EYE_HEIGHT_M, 0.0])
        end = np.array([placement.front_center[0], EYE_HEIGHT_M, placement.front_center[2]])
        side = 1 if (n > 1 and rng.integers(0, 2) == 1) else 0
        adjacent = placements[(i + (1 if side else -1)) % n] if n > 1 else placement
        start_yaw = placement.yaw_deg
        to_adj = adjacent.front_center - end
        if np.hypot(to_adj[0], to_adj[2]) > 1e-9:
            end_yaw = float(np.degrees(np.arctan2(to_adj[0], to_adj[2])) % 360.0)
        else:
            end_yaw = start_yaw
        delta = (end_yaw - start_yaw + 180.0) % 360.0 - 180.0
        for k in range(SUBMESH_PATH_STEPS):
            t = k / (SUBMESH_PATH_STEPS - 1)
            pos = start + t * (end - start)
            yaw = (start_yaw + t * delta) % 360.0
            cam = camera_at(pos, yaw_deg=yaw)
            steps.append(TrajectoryStep(cam, StepPurpose.SUBMESH_PATH))

    for placement in placements:
        center = np.array([
            placement.footprint_centroid[0], EYE_HEIGHT_M, placement.footprint_centroid[2],
        ])
        for yaw in LOOK_AROUND_YAWS:
            jy = rng.uniform(-LOOK_AROUND_YAW_JITTER, LOOK_AROUND_YAW_JITTER)
            jp = rng.uniform(-LOOK_AROUND_PITCH_JITTER, LOOK_AROUND_PITCH_JITTER)
            cam = camera_at(center, yaw_deg=float((yaw + jy) % 360.0), pitch_deg=float(jp))
            steps.append(TrajectoryStep(cam, StepPurpose.LOOK_AROUND))

    return steps


def export_trajectory_json(steps: Sequence[TrajectoryStep], path) -> None:
    """Ordered steps with pose, resolution, and purpose, for offline replay."""
    payload = []
    for s in steps:
        payload.append({
            "purpose": s.purpose.value,
            "prompt_hint_yaw_deg": s.prompt_hint,
            "fov_vertical_deg": s.cam.fov_vertical_deg,
            "width_px": s.cam.width_px,
            "height_px": s.cam.height_px,
            "rotation": s.cam.pose.rotation.tolist(),
            "translation": s.cam.pose.translation.tolist(),
        })
    with open(path, "w") as f:
        json.dump({"steps": payload}, f, indent=2)
