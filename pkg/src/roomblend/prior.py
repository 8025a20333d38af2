"""Convex-hull room shell and the conditioning images rendered from it.

The prior mesh is the convex hull of the placed submeshes extruded into
walls plus a floor and ceiling, colored with the ADE20K palette. Three
image families are rendered from it for the inpainting model: relative
depth, a layout-edge image (white junction lines on black), and a flat
semantic render.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import cv2
import numpy as np
from scipy.spatial import ConvexHull, QhullError

from . import ade20k
from .core import CameraView, StageError, TriangleMesh, depth_valid_mask
from .layout import PlacedLayout
from .lift3d import Submesh
from .render import render_view

MIN_HEIGHT_M = 2.5
CANNY_LOW = 0.1
CANNY_HIGH = 0.2
DEPTH_PERCENTILE = 99.0


@dataclass(frozen=True)
class PriorMesh:
    """Room shell with one semantic role (ADE20K id) per face."""

    mesh: TriangleMesh
    face_roles: np.ndarray
    height_m: float
    hull_polygon: np.ndarray  # (K,2) XZ, convex, counter-clockwise


@dataclass(frozen=True)
class PriorImageSet:
    """Conditioning images; depth is relative in [0,1], metric_depth is meters."""

    depth: np.ndarray
    layout_edges: np.ndarray
    semantic: np.ndarray
    metric_depth: np.ndarray


def _gathered_vertices(layout: PlacedLayout, subs: Sequence[Submesh]) -> np.ndarray:
    chunks = []
    for placement in layout.placements:
        sub = subs[placement.submesh_id]
        chunks.append(placement.transform.apply(sub.mesh.vertices))
    return np.concatenate(chunks)


def build_geometric_prior(layout: PlacedLayout, subs: Sequence[Submesh]) -> PriorMesh:
    """Hull the placed submeshes and extrude the shell.

    Height is the tallest submesh, or 2.5 m if none is taller. Walls,
    floor, and ceiling take their ADE20K palette colors.
    """
    if not layout.placements:
        raise StageError("prior", "layout has no placements")
    verts = _gathered_vertices(layout, subs)
    xz = verts[:, [0, 2]]
    try:
        hull = ConvexHull(xz)
    except QhullError as e:
        raise StageError("prior", f"degenerate submesh footprint: {e}") from e
    polygon = xz[hull.vertices]  # counter-clockwise for 2D qhull
    height = max(MIN_HEIGHT_M, float(verts[:, 1].max()))
    mesh, roles = _shell_mesh(polygon, height)
    return PriorMesh(mesh=mesh, face_roles=roles, height_m=height, hull_polygon=polygon)


def _shell_mesh(polygon: np.ndarray, height: float) -> tuple[TriangleMesh, np.ndarray]:
    """Extrude the hull polygon into wall/floor/ceiling triangles.

    Every face gets its own three vertices so role colors stay flat under
    interpolation.
    """
    k = polygon.shape[0]
    bottom = np.column_stack([polygon[:, 0], np.zeros(k), polygon[:, 1]])
    top = np.column_stack([polygon[:, 0], np.full(k, height), polygon[:, 1]])

    tris = []
    roles = []
    for i in range(k):
        j = (i + 1) % k
        tris.append((bottom[i], bottom[j], top[j]))
        tris.append((bottom[i], top[j], top[i]))
        roles += [ade20k.WALL, ade20k.WALL]
    for i in range(1, k - 1):
        tris.append((bottom[0], bottom[i], bottom[i + 1]))
        roles.append(ade20k.FLOOR)
        tris.append((top[0], top[i + 1], top[i]))
        roles.append(ade20k.CEILING)

    roles = np.asarray(roles, dtype=np.int32)
    vertices = np.asarray(tris, dtype=np.float64).reshape(-1, 3)
    faces = np.arange(vertices.shape[0], dtype=np.int64).reshape(-1, 3)
    colors = (ade20k.palette()[roles].astype(np.float64) / 255.0).repeat(3, axis=0)
    labels = roles.repeat(3).astype(np.int32)
    return TriangleMesh(vertices, faces, colors, labels), roles


def point_in_hull(polygon: np.ndarray, xz: np.ndarray, tol: float = 1e-9) -> bool:
    """True if the XZ point is inside or on the counter-clockwise polygon."""
    p = np.asarray(xz, dtype=np.float64)
    k = polygon.shape[0]
    for i in range(k):
        a = polygon[i]
        b = polygon[(i + 1) % k]
        edge = b - a
        cross = edge[0] * (p[1] - a[1]) - edge[1] * (p[0] - a[0])
        if cross < -tol * max(1.0, np.linalg.norm(edge)):
            return False
    return True


def hull_signed_margin(polygon: np.ndarray, xz: np.ndarray) -> float:
    """Distance from the point to the hull boundary; positive inside."""
    p = np.asarray(xz, dtype=np.float64)
    k = polygon.shape[0]
    margin = np.inf
    for i in range(k):
        a = polygon[i]
        b = polygon[(i + 1) % k]
        edge = b - a
        n = np.linalg.norm(edge)
        if n < 1e-12:
            continue
        cross = (edge[0] * (p[1] - a[1]) - edge[1] * (p[0] - a[0])) / n
        margin = min(margin, cross)
    return float(margin)


def layout_edge_image(relative_depth: np.ndarray) -> np.ndarray:
    """Junction-line image: Sobel gradients -> surface normals -> magnitude
    of the tangential part, rescaled to [0,1], then Canny."""
    gx = cv2.Sobel(relative_depth, cv2.CV_64F, 1, 0, ksize=3)
    gy = cv2.Sobel(relative_depth, cv2.CV_64F, 0, 1, ksize=3)
    grad = np.sqrt(gx * gx + gy * gy)
    tangential = grad / np.sqrt(grad * grad + 1.0)
    peak = tangential.max()
    if peak > 0:
        tangential = tangential / peak
    img8 = np.clip(np.round(tangential * 255.0), 0, 255).astype(np.uint8)
    edges = cv2.Canny(img8, CANNY_LOW * 255.0, CANNY_HIGH * 255.0)
    return edges > 0


def render_prior_images(prior: PriorMesh, cam: CameraView) -> PriorImageSet:
    """Render the conditioning triplet from the prior shell.

    The camera must be inside (or on) the hull; depth is normalized by the
    99th-percentile depth in frame, which keeps the layout edges invariant
    to uniform scaling of the scene.
    """
    pos = cam.position
    if not point_in_hull(prior.hull_polygon, (pos[0], pos[2]), tol=1e-9):
        raise StageError("prior", "camera outside the prior hull")
    if not (0.0 <= pos[1] <= prior.height_m):
        raise StageError("prior", "camera outside the prior height range")

    rv = render_view(prior.mesh, cam)
    metric = rv.depth
    valid = depth_valid_mask(metric)
    if valid.any():
        p99 = np.percentile(metric[valid], DEPTH_PERCENTILE)
        rel = np.clip(metric / p99, 0.0, 1.0)
    else:
        rel = np.zeros_like(metric)
    rel = np.where(valid, rel, 1.0)

    edges = layout_edge_image(rel)

    palette = ade20k.palette().astype(np.float64) / 255.0
    role_of_face = np.concatenate([prior.face_roles, [0]])  # -1 -> last
    semantic = palette[role_of_face[rv.face_index]]
    semantic[rv.missing] = 0.0

    return PriorImageSet(depth=rel, layout_edges=edges, semantic=semantic,
                         metric_depth=metric)
