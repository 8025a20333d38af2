"""Floor detection and normalization.

Each submesh's floor plane is found by RANSAC over its floor-labeled
vertices, gated by three admissibility heuristics: the hypothesis normal
must lie within 45 degrees of +Y, have a positive Y component, and its
inliers must span at least 0.5 m along both X and Z. The winning plane is
rotated onto Y=0 and the submesh's minimum Z is moved to 0. When no floor
is visible, a short look-down camera sweep inpaints one in.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
from numba import njit, prange

from . import ade20k
from .core import (
    BackendError,
    CameraView,
    RigidTransform,
    rotation_about_x,
    rotation_aligning,
    StageError,
)
from .lift3d import Submesh, align_depth, fuse_view, transform_submesh
from .render import render_view

RANSAC_ITERATIONS = 1000
INLIER_DISTANCE_M = 0.02
MIN_EXTENT_M = 0.5
MAX_TILT_DEG = 45.0
MEDIAN_BAND_M = 0.3
FLOOR_GEN_STEPS = 5
FLOOR_GEN_MAX_ATTEMPTS = 10


@dataclass(frozen=True)
class FloorPlane:
    """Plane n . x = offset with its supporting inliers."""

    normal: np.ndarray
    offset: float
    inlier_indices: np.ndarray
    inlier_extent_xz: tuple[float, float]
    inlier_centroid: np.ndarray

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=np.float64).reshape(3)
        if abs(np.linalg.norm(n) - 1.0) > 1e-9:
            raise ValueError("plane normal must be unit length")
        if n[1] <= 0:
            raise ValueError("floor plane normal must have positive Y")
        object.__setattr__(self, "normal", n)


def extract_floor_vertices(
    sub: Submesh, floor_labels: Sequence[int] = ade20k.DEFAULT_FLOOR_LABELS
) -> np.ndarray:
    """Floor-like vertices of the submesh, as an (K,3) point array.

    Keeps vertices whose label is floor-like and whose Y lies within 0.3 m
    of the median Y of that set; the band filters pixels where segmentation
    and depth estimation disagree.
    """
    idx = floor_vertex_indices(sub, floor_labels)
    return sub.mesh.vertices[idx]


def floor_vertex_indices(
    sub: Submesh, floor_labels: Sequence[int] = ade20k.DEFAULT_FLOOR_LABELS
) -> np.ndarray:
    if sub.mesh.vertex_labels is None:
        raise StageError("floor_align", "submesh has no vertex labels")
    labels = sub.mesh.vertex_labels
    mask = np.isin(labels, np.asarray(floor_labels, dtype=labels.dtype))
    idx = np.nonzero(mask)[0]
    if idx.size == 0:
        return idx
    ys = sub.mesh.vertices[idx, 1]
    med = np.median(ys)
    return idx[np.abs(ys - med) <= MEDIAN_BAND_M]


@njit(cache=True, parallel=True)
def _score_hypotheses(pts, samples, tol, min_y_cos, min_extent):
    n_hyp = samples.shape[0]
    counts = np.zeros(n_hyp, dtype=np.int64)
    normals = np.zeros((n_hyp, 3))
    offsets = np.zeros(n_hyp)
    admissible = np.zeros(n_hyp, dtype=np.bool_)
    for h in prange(n_hyp):
        i0, i1, i2 = samples[h, 0], samples[h, 1], samples[h, 2]
        ax = pts[i1, 0] - pts[i0, 0]
        ay = pts[i1, 1] - pts[i0, 1]
        az = pts[i1, 2] - pts[i0, 2]
        bx = pts[i2, 0] - pts[i0, 0]
        by = pts[i2, 1] - pts[i0, 1]
        bz = pts[i2, 2] - pts[i0, 2]
        nx = ay * bz - az * by
        ny = az * bx - ax * bz
        nz = ax * by - ay * bx
        norm = np.sqrt(nx * nx + ny * ny + nz * nz)
        if norm < 1e-12:
            continue
        nx /= norm
        ny /= norm
        nz /= norm
        # heuristics: positive Y component, within 45 deg of +Y
        if ny <= 0.0 or ny < min_y_cos:
            continue
        off = nx * pts[i0, 0] + ny * pts[i0, 1] + nz * pts[i0, 2]
        cnt = 0
        minx = np.inf
        maxx = -np.inf
        minz = np.inf
        maxz = -np.inf
        for p in range(pts.shape[0]):
            dist = nx * pts[p, 0] + ny * pts[p, 1] + nz * pts[p, 2] - off
            if -tol <= dist <= tol:
                cnt += 1
                x = pts[p, 0]
                z = pts[p, 2]
                if x < minx:
                    minx = x
                if x > maxx:
                    maxx = x
                if z < minz:
                    minz = z
                if z > maxz:
                    maxz = z
        if cnt == 0:
            continue
        if (maxx - minx) < min_extent or (maxz - minz) < min_extent:
            continue
        counts[h] = cnt
        normals[h, 0] = nx
        normals[h, 1] = ny
        normals[h, 2] = nz
        offsets[h] = off
        admissible[h] = True
    return counts, normals, offsets, admissible


def _plane_stats(points: np.ndarray, normal: np.ndarray, offset: float, tol: float):
    dist = points @ normal - offset
    inliers = np.nonzero(np.abs(dist) <= tol)[0]
    if inliers.size == 0:
        return inliers, (0.0, 0.0), np.zeros(3)
    sel = points[inliers]
    extent = (
        float(sel[:, 0].max() - sel[:, 0].min()),
        float(sel[:, 2].max() - sel[:, 2].min()),
    )
    return inliers, extent, sel.mean(axis=0)


def _admissible(normal: np.ndarray, extent: tuple[float, float]) -> bool:
    if normal[1] <= 0:
        return False
    if normal[1] < np.cos(np.deg2rad(MAX_TILT_DEG)):
        return False
    return extent[0] >= MIN_EXTENT_M and extent[1] >= MIN_EXTENT_M


def _refine_plane(points: np.ndarray, inliers: np.ndarray):
    sel = points[inliers]
    centroid = sel.mean(axis=0)
    cov = np.cov((sel - centroid).T)
    _, vecs = np.linalg.eigh(cov)
    normal = vecs[:, 0]
    if normal[1] < 0:
        normal = -normal
    normal = normal / np.linalg.norm(normal)
    return normal, float(normal @ centroid)


def fit_floor_plane(points: np.ndarray, rng_seed: int) -> Optional[FloorPlane]:
    """RANSAC floor fit over a point set; None when no admissible plane exists.

    1000 iterations with 0.02 m inlier distance; the best admissible
    hypothesis is refined by least squares on its inliers. Deterministic
    for a fixed seed.
    """
    points = np.ascontiguousarray(np.asarray(points, dtype=np.float64).reshape(-1, 3))
    n = points.shape[0]
    if n < 3:
        return None
    rng = np.random.default_rng(rng_seed)
    samples = np.empty((RANSAC_ITERATIONS, 3), dtype=np.int64)
    for i in range(RANSAC_ITERATIONS):
        samples[i] = rng.choice(n, size=3, replace=False)
    counts, normals, offsets, admissible = _score_hypotheses(
        points, samples, INLIER_DISTANCE_M,
        float(np.cos(np.deg2rad(MAX_TILT_DEG))), MIN_EXTENT_M,
    )
    if not admissible.any():
        return None
    masked = np.where(admissible, counts, -1)
    best = int(np.argmax(masked))

    raw_normal = normals[best]
    raw_offset = float(offsets[best])
    inliers, extent, centroid = _plane_stats(points, raw_normal, raw_offset, INLIER_DISTANCE_M)

    normal, offset = _refine_plane(points, inliers)
    r_inliers, r_extent, r_centroid = _plane_stats(points, normal, offset, INLIER_DISTANCE_M)
    if _admissible(normal, r_extent):
        return FloorPlane(normal, offset, r_inliers, r_extent, r_centroid)
    return FloorPlane(raw_normal, raw_offset, inliers, extent, centroid)


def find_floor(
    sub: Submesh,
    rng_seed: int,
    floor_labels: Sequence[int] = ade20k.DEFAULT_FLOOR_LABELS,
) -> Optional[FloorPlane]:
    """Extract floor-like vertices and fit; None when nothing admissible."""
    pts = extract_floor_vertices(sub, floor_labels)
    if pts.shape[0] < 3:
        return None
    return fit_floor_plane(pts, rng_seed)


def align_submesh_to_floor(sub: Submesh, plane: FloorPlane) -> tuple[Submesh, RigidTransform]:
    """Rotate the plane normal onto +Y, put the floor at Y=0 and min Z at 0."""
    rot = rotation_aligning(plane.normal, np.array([0.0, 1.0, 0.0]))
    ty = -(rot @ plane.inlier_centroid)[1]
    rotated_z = sub.mesh.vertices @ rot.T[:, 2]
    tz = -float(rotated_z.min()) if rotated_z.size else 0.0
    t = RigidTransform(rot, np.array([0.0, ty, tz]))
    moved = transform_submesh(sub, t)
    return replace(moved, aligned=True, floor_found=True), t


def floor_generation_camera(base: CameraView, step: int) -> CameraView:
    """Camera for step k of the five-step floor-synthesis sweep.

    Interpolates looking downward (-5 to -30 degrees), moving backward
    (1 to 1.5 m) and upward (0.3 to 1 m) relative to the capture view.
    """
    k = step % FLOOR_GEN_STEPS
    frac = k / (FLOOR_GEN_STEPS - 1)
    pitch = -5.0 + frac * -25.0
    back = 1.0 + frac * 0.5
    up = 0.3 + frac * 0.7
    r = base.pose.rotation
    pos = base.position + back * (r @ np.array([0.0, 0.0, 1.0])) + up * (r @ np.array([0.0, 1.0, 0.0]))
    return CameraView(
        RigidTransform(r @ rotation_about_x(pitch), pos),
        fov_vertical_deg=base.fov_vertical_deg,
        width_px=base.width_px,
        height_px=base.height_px,
    )


def generate_floor(sub: Submesh, backends, rng_seed: int) -> Submesh:
    """Synthesize a floor for a submesh whose images show none.

    Walks the five-step sweep (repeating it) and, at each step, inpaints the
    missing region with an LLM-generated floor description, completes depth
    conditioned on the rendered view, fuses, and retries the floor fit. Ten
    failed attempts leave the submesh unaligned and untransformed.
    """
    from .prompts import caption_image, infer_floor_prompt
    from .ingest import PreparedImage

    caption = sub.source_caption
    if not caption:
        rendered = render_view(sub.mesh, sub.capture_camera)
        caption = backends.vlm.caption(rendered.color)
    floor_desc = infer_floor_prompt(caption, backends.llm)

    rng = np.random.default_rng(rng_seed)
    attempt_seeds = rng.integers(0, 2**31 - 1, size=FLOOR_GEN_MAX_ATTEMPTS)

    current = sub
    for attempt in range(FLOOR_GEN_MAX_ATTEMPTS):
        cam = floor_generation_camera(current.capture_camera, attempt)
        rv = render_view(current.mesh, cam)
        if rv.missing.any():
            inpainted = backends.inpaint.inpaint(
                rv.color, rv.missing, floor_desc, seed=int(attempt_seeds[attempt])
            )
            known_mask = ~rv.missing
            pred = backends.depth.predict(
                inpainted, known_depth=rv.depth, known_mask=known_mask, cam=cam
            )
            if not np.all(np.isfinite(pred[rv.missing])) or np.any(pred[rv.missing] <= 0):
                raise BackendError("floor_align", "depth completion returned invalid values")
            ad = align_depth(pred, rv.depth, known_mask)
            fused_depth = ad.depth.copy()
            fused_depth[known_mask] = rv.depth[known_mask]
            labels = backends.seg.segment(inpainted)
            mesh = fuse_view(current.mesh, cam, inpainted, fused_depth, rv.missing, labels=labels)
            current = replace(current, mesh=mesh)
        plane = find_floor(current, rng_seed)
        if plane is not None:
            aligned, _ = align_submesh_to_floor(current, plane)
            return aligned
    return replace(current, aligned=False, floor_found=False)
