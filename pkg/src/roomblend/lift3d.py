"""Lift a prepared image into a textured submesh.

One vertex per pixel, inverse pinhole projection, two triangles per pixel
quad. Faces spanning a depth discontinuity (relative jump above 10%
between adjacent pixels) are dropped so foreground silhouettes don't get
rubber-sheeted onto the background.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .core import (
    BackendError,
    CameraView,
    RigidTransform,
    StageError,
    TriangleMesh,
    append_mesh,
    depth_valid_mask,
)
from .ingest import PreparedImage
from .render import render_view

DEPTH_JUMP_FRACTION = 0.10
MIN_ALIGN_PIXELS = 16


@dataclass(frozen=True)
class Submesh:
    """A lifted photograph: mesh + capture camera + alignment state.

    front_direction is the outward normal of the submesh's front side (the
    side that faced the capture camera), expressed in the same frame as the
    mesh vertices. It starts as the camera's backward axis and is rotated
    along with the mesh.
    """

    mesh: TriangleMesh
    capture_camera: CameraView
    aligned: bool = False
    floor_found: bool = False
    front_direction: np.ndarray = None
    source_caption: str = ""

    def __post_init__(self):
        d = self.front_direction
        if d is None:
            d = self.capture_camera.pose.rotation @ np.array([0.0, 0.0, 1.0])
        d = np.asarray(d, dtype=np.float64).reshape(3)
        n = np.linalg.norm(d)
        if abs(n - 1.0) > 1e-6:
            raise ValueError("front_direction must be unit length")
        object.__setattr__(self, "front_direction", d / n)


def transform_submesh(sub: Submesh, t: RigidTransform) -> Submesh:
    """Apply a rigid transform to the mesh, capture camera, and front direction."""
    from .core import apply_rigid_transform

    cam = sub.capture_camera
    new_cam = CameraView(
        t.compose(cam.pose),
        fov_vertical_deg=cam.fov_vertical_deg,
        width_px=cam.width_px,
        height_px=cam.height_px,
    )
    return replace(
        sub,
        mesh=apply_rigid_transform(sub.mesh, t),
        capture_camera=new_cam,
        front_direction=t.rotation @ sub.front_direction,
    )


def backproject_grid(depth: np.ndarray, cam: CameraView) -> np.ndarray:
    """Per-pixel 3D points (H*W,3) in world space; pixel centers at +0.5."""
    h, w = depth.shape
    fx, fy, cx, cy = cam.intrinsics()
    us = np.arange(w) + 0.5
    vs = np.arange(h) + 0.5
    uu, vv = np.meshgrid(us, vs)
    x = (uu - cx) / fx * depth
    y = (cy - vv) / fy * depth
    z = -depth
    pts = np.stack([x, y, z], axis=-1).reshape(-1, 3)
    return cam.pose.apply(pts)


def _edge_broken(da: np.ndarray, db: np.ndarray, jump: float) -> np.ndarray:
    with np.errstate(invalid="ignore", divide="ignore"):
        rel = np.abs(da - db) / np.minimum(da, db)
    return ~(rel <= jump)  # NaN counts as broken


def grid_mesh(
    points: np.ndarray,
    colors: np.ndarray,
    depth: np.ndarray,
    include: Optional[np.ndarray] = None,
    require: Optional[np.ndarray] = None,
    labels: Optional[np.ndarray] = None,
    jump: float = DEPTH_JUMP_FRACTION,
) -> TriangleMesh:
    """Triangulate a pixel grid into a mesh.

    points (H*W,3), colors (H,W,3), depth (H,W). Vertices are kept for every
    pixel in `include` (default: all), row-major. A triangle survives only if
    all three vertices are included, no edge exceeds the relative depth jump,
    and (when `require` is given) at least one vertex lies in `require`.
    """
    h, w = depth.shape
    if h < 2 or w < 2:
        raise StageError("lift3d", f"cannot triangulate a {w}x{h} grid")
    if include is None:
        include = np.ones((h, w), dtype=bool)
    count = int(include.sum())
    vidx = np.full((h, w), -1, dtype=np.int64)
    vidx[include] = np.arange(count)

    d = depth
    ok_h = ~_edge_broken(d[:, :-1], d[:, 1:], jump)      # (h, w-1)
    ok_v = ~_edge_broken(d[:-1, :], d[1:, :], jump)      # (h-1, w)
    ok_d = ~_edge_broken(d[1:, :-1], d[:-1, 1:], jump)   # (h-1, w-1)

    inc00 = include[:-1, :-1]
    inc01 = include[:-1, 1:]
    inc10 = include[1:, :-1]
    inc11 = include[1:, 1:]

    tri_a = inc00 & inc10 & inc01 & ok_v[:, :-1] & ok_d & ok_h[:-1, :]
    tri_b = inc01 & inc10 & inc11 & ok_d & ok_h[1:, :] & ok_v[:, 1:]
    if require is not None:
        req00 = require[:-1, :-1]
        req01 = require[:-1, 1:]
        req10 = require[1:, :-1]
        req11 = require[1:, 1:]
        tri_a &= req00 | req10 | req01
        tri_b &= req01 | req10 | req11

    i00 = vidx[:-1, :-1]
    i01 = vidx[:-1, 1:]
    i10 = vidx[1:, :-1]
    i11 = vidx[1:, 1:]
    faces_a = np.stack([i00[tri_a], i10[tri_a], i01[tri_a]], axis=1)
    faces_b = np.stack([i01[tri_b], i10[tri_b], i11[tri_b]], axis=1)
    faces = np.concatenate([faces_a, faces_b])

    flat = include.reshape(-1)
    return TriangleMesh(
        points[flat],
        faces,
        colors.reshape(-1, 3)[flat],
        None if labels is None else labels.reshape(-1)[flat],
    )


def estimate_and_backproject(img: PreparedImage, cam: CameraView, depth, seg) -> Submesh:
    """Predict depth for the image, backproject, and triangulate.

    Vertex labels come from segmenting the image; the result keeps the
    capture camera so the submesh can be re-rendered during floor synthesis.
    """
    predicted = depth.predict(img.color, cam=cam)
    if predicted.shape != img.color.shape[:2]:
        raise BackendError("lift3d", "depth backend returned wrong dimensions")
    if not np.all(np.isfinite(predicted)) or np.any(predicted <= 0):
        raise BackendError("lift3d", "depth backend returned non-positive or NaN values")
    labels = seg.segment(img.color)
    points = backproject_grid(predicted, cam)
    mesh = grid_mesh(points, img.color, predicted, labels=labels)
    return Submesh(
        mesh=mesh,
        capture_camera=cam,
        aligned=False,
        floor_found=False,
        source_caption=img.caption or "",
    )


@dataclass(frozen=True)
class AlignedDepth:
    depth: np.ndarray
    scale: float
    offset: float
    aligned: bool


def _fit_affine(p: np.ndarray, k: np.ndarray) -> tuple[float, float]:
    mp, mk = p.mean(), k.mean()
    var = np.mean((p - mp) ** 2)
    if var <= 0:
        return 1.0, float(mk - mp)
    s = float(np.mean((p - mp) * (k - mk)) / var)
    if s <= 0:
        s = 1e-6
    return s, float(mk - s * mp)


def align_depth(predicted: np.ndarray, known: np.ndarray, known_mask: np.ndarray) -> AlignedDepth:
    """Least-squares affine fit of predicted depth onto known depth.

    Returns s * predicted + b with s > 0. One trimmed refit discards
    residuals beyond 3 sigma (MAD-estimated), since inpainted seams
    contain outliers. Fewer than 16 usable pixels: predicted is returned
    unchanged, flagged unaligned.
    """
    usable = known_mask & depth_valid_mask(known) & depth_valid_mask(predicted)
    p = predicted[usable]
    k = known[usable]
    if p.size < MIN_ALIGN_PIXELS:
        return AlignedDepth(predicted, 1.0, 0.0, aligned=False)
    s, b = _fit_affine(p, k)
    resid = s * p + b - k
    # robust center and scale: a plain std is itself inflated by the
    # outliers, and a skewed first fit shifts every inlier residual
    center = np.median(resid)
    sigma = 1.4826 * np.median(np.abs(resid - center))
    if sigma > 0:
        keep = np.abs(resid - center) <= 3.0 * sigma
        if MIN_ALIGN_PIXELS <= keep.sum() < p.size:
            s, b = _fit_affine(p[keep], k[keep])
    return AlignedDepth(s * predicted + b, s, b, aligned=True)


def fuse_view(
    mesh: TriangleMesh,
    cam: CameraView,
    color: np.ndarray,
    depth: np.ndarray,
    inpaint_mask: np.ndarray,
    labels: Optional[np.ndarray] = None,
    rendered=None,
) -> TriangleMesh:
    """Backproject masked pixels as new geometry and stitch it to the mesh.

    Only pixels in inpaint_mask become new surface. Mask-boundary pixels
    with existing geometry are added with their depth snapped to the
    rendered surface so the new patch welds on; the discontinuity filter
    then drops any face that would bridge incompatible depths. Pre-existing
    vertices are never moved or deleted.
    """
    h, w = depth.shape
    if color.shape[:2] != (h, w) or inpaint_mask.shape != (h, w):
        raise StageError("lift3d", "fuse_view images must share dimensions")
    if not inpaint_mask.any():
        return mesh
    md = depth[inpaint_mask]
    if not np.all(np.isfinite(md)) or np.any(md <= 0):
        raise StageError("lift3d", "fuse depth must be positive at masked pixels")
    if mesh.n_vertices and mesh.has_labels and labels is None:
        raise StageError("lift3d", "mesh carries labels; fuse needs a label image")

    if rendered is None:
        rendered = render_view(mesh, cam)
    neighbor = np.zeros((h, w), dtype=bool)
    neighbor[:-1, :] |= inpaint_mask[1:, :]
    neighbor[1:, :] |= inpaint_mask[:-1, :]
    neighbor[:, :-1] |= inpaint_mask[:, 1:]
    neighbor[:, 1:] |= inpaint_mask[:, :-1]
    boundary = neighbor & ~inpaint_mask & ~rendered.missing

    grid_depth = np.where(inpaint_mask, depth, rendered.depth)
    include = inpaint_mask | boundary
    points = backproject_grid(grid_depth, cam)
    new = grid_mesh(
        points, color, grid_depth,
        include=include, require=inpaint_mask, labels=labels,
    )
    if mesh.n_vertices == 0 and mesh.vertex_labels is None and labels is not None:
        mesh = TriangleMesh.empty(with_labels=True)
    return append_mesh(mesh, new)
