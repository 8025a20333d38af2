"""Deterministic software rasterizer for mesh views.

Produces the color / depth / missing-mask triplet that drives every
inpainting iteration, plus a per-pixel face index used for flat-shaded
renders. Perspective-correct barycentric interpolation, z-buffered,
near-plane clipped, no antialiasing (masks and depth must stay exact).

Triangles entirely in front of the near plane take a fast path: vertices
are projected once, faces are bucketed into fixed horizontal screen bands,
and bands rasterize in parallel. Every pixel row belongs to exactly one
band and faces are processed in index order within a band, so the output
is bitwise deterministic regardless of thread count.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from numba import njit, prange

from .core import MISSING_DEPTH, CameraView, TriangleMesh

_ZNEAR = 0.05
_BANDS = 16


@dataclass(frozen=True)
class RenderedView:
    """color (H,W,3) in [0,1]; depth (H,W) meters with NaN where missing;
    missing (H,W) bool; face_index (H,W) int32 with -1 where missing."""

    color: np.ndarray
    depth: np.ndarray
    missing: np.ndarray
    face_index: np.ndarray


@njit(cache=True, inline="always")
def _raster_screen_tri(fid, u0, v0, d0, r0c, g0c, b0c, u1, v1, d1, r1c, g1c, b1c,
                       u2, v2, d2, r2c, g2c, b2c, width, row_lo, row_hi,
                       depth_buf, color_buf, face_buf):
    """Rasterize a projected triangle over rows [row_lo, row_hi]."""
    umin = min(u0, min(u1, u2))
    umax = max(u0, max(u1, u2))
    vmin = min(v0, min(v1, v2))
    vmax = max(v0, max(v1, v2))
    c0 = max(0, int(np.ceil(umin - 0.5)))
    c1 = min(width - 1, int(np.floor(umax - 0.5)))
    r0 = max(row_lo, int(np.ceil(vmin - 0.5)))
    r1 = min(row_hi, int(np.floor(vmax - 0.5)))
    if c1 < c0 or r1 < r0:
        return
    area = (u1 - u0) * (v2 - v0) - (u2 - u0) * (v1 - v0)
    if -1e-12 < area < 1e-12:
        return
    inv_area = 1.0 / area
    id0 = 1.0 / d0
    id1 = 1.0 / d1
    id2 = 1.0 / d2
    for r in range(r0, r1 + 1):
        py = r + 0.5
        for c in range(c0, c1 + 1):
            px = c + 0.5
            w0 = (u1 - px) * (v2 - py) - (u2 - px) * (v1 - py)
            w1 = (u2 - px) * (v0 - py) - (u0 - px) * (v2 - py)
            w2 = (u0 - px) * (v1 - py) - (u1 - px) * (v0 - py)
            if area > 0.0:
                if w0 < 0.0 or w1 < 0.0 or w2 < 0.0:
                    continue
            else:
                if w0 > 0.0 or w1 > 0.0 or w2 > 0.0:
                    continue
            ba = w0 * inv_area
            bb = w1 * inv_area
            bc = w2 * inv_area
            inv_d = ba * id0 + bb * id1 + bc * id2
            if inv_d <= 0.0:
                continue
            d = 1.0 / inv_d
            if d < depth_buf[r, c]:
                depth_buf[r, c] = d
                color_buf[r, c, 0] = (ba * r0c * id0 + bb * r1c * id1 + bc * r2c * id2) * d
                color_buf[r, c, 1] = (ba * g0c * id0 + bb * g1c * id1 + bc * g2c * id2) * d
                color_buf[r, c, 2] = (ba * b0c * id0 + bb * b1c * id1 + bc * b2c * id2) * d
                face_buf[r, c] = fid


@njit(cache=True)
def _bucket_faces(faces, u, v, front, height, width, n_bands):
    """Classify faces (skip / fast / near-plane-crossing) and build per-band
    lists of fast faces, band-major, in face-index order."""
    m = faces.shape[0]
    state = np.zeros(m, dtype=np.uint8)  # 0 skip, 1 fast, 2 crossing
    b_lo = np.zeros(m, dtype=np.int32)
    b_hi = np.zeros(m, dtype=np.int32)
    counts = np.zeros(n_bands, dtype=np.int64)
    n_crossing = 0
    for f in range(m):
        i0 = faces[f, 0]
        i1 = faces[f, 1]
        i2 = faces[f, 2]
        nf = 0
        if front[i0]:
            nf += 1
        if front[i1]:
            nf += 1
        if front[i2]:
            nf += 1
        if nf == 0:
            continue
        if nf < 3:
            state[f] = 2
            n_crossing += 1
            continue
        u0 = u[i0]
        u1 = u[i1]
        u2 = u[i2]
        v0 = v[i0]
        v1 = v[i1]
        v2 = v[i2]
        umin = min(u0, min(u1, u2))
        umax = max(u0, max(u1, u2))
        vmin = min(v0, min(v1, v2))
        vmax = max(v0, max(v1, v2))
        rmin = int(np.ceil(vmin - 0.5))
        rmax = int(np.floor(vmax - 0.5))
        if rmin < 0:
            rmin = 0
        if rmax > height - 1:
            rmax = height - 1
        if rmax < rmin:
            continue
        if np.floor(umax - 0.5) < 0 or np.ceil(umin - 0.5) > width - 1:
            continue
        lo = rmin * n_bands // height
        hi = rmax * n_bands // height
        state[f] = 1
        b_lo[f] = lo
        b_hi[f] = hi
        for band in range(lo, hi + 1):
            counts[band] += 1
    starts = np.zeros(n_bands + 1, dtype=np.int64)
    for band in range(n_bands):
        starts[band + 1] = starts[band] + counts[band]
    entries = np.empty(starts[n_bands], dtype=np.int64)
    cursor = starts[:-1].copy()
    for f in range(m):
        if state[f] == 1:
            for band in range(b_lo[f], b_hi[f] + 1):
                entries[cursor[band]] = f
                cursor[band] += 1
    crossing = np.empty(n_crossing, dtype=np.int64)
    k = 0
    for f in range(m):
        if state[f] == 2:
            crossing[k] = f
            k += 1
    return entries, starts, crossing


@njit(cache=True, parallel=True)
def _raster_bands(entries, band_starts, faces, u, v, d, colors,
                  width, height, depth_buf, color_buf, face_buf):
    n_bands = band_starts.shape[0] - 1
    for band in prange(n_bands):
        row_lo = band * height // n_bands
        row_hi = (band + 1) * height // n_bands - 1
        for k in range(band_starts[band], band_starts[band + 1]):
            f = entries[k]
            i0 = faces[f, 0]
            i1 = faces[f, 1]
            i2 = faces[f, 2]
            _raster_screen_tri(
                f,
                u[i0], v[i0], d[i0], colors[i0, 0], colors[i0, 1], colors[i0, 2],
                u[i1], v[i1], d[i1], colors[i1, 0], colors[i1, 1], colors[i1, 2],
                u[i2], v[i2], d[i2], colors[i2, 0], colors[i2, 1], colors[i2, 2],
                width, row_lo, row_hi,
                depth_buf, color_buf, face_buf,
            )


@njit(cache=True)
def _clip_near(px, py, pz, cr, cg, cb, znear, out):
    """Clip a camera-space triangle against z <= -znear (Sutherland-Hodgman).

    out is a (4,6) scratch array of (x,y,z,r,g,b); returns the vertex count.
    """
    n = 0
    for i in range(3):
        j = (i + 1) % 3
        zi = pz[i]
        zj = pz[j]
        in_i = zi <= -znear
        in_j = zj <= -znear
        if in_i:
            out[n, 0] = px[i]
            out[n, 1] = py[i]
            out[n, 2] = zi
            out[n, 3] = cr[i]
            out[n, 4] = cg[i]
            out[n, 5] = cb[i]
            n += 1
        if in_i != in_j:
            t = (-znear - zi) / (zj - zi)
            out[n, 0] = px[i] + t * (px[j] - px[i])
            out[n, 1] = py[i] + t * (py[j] - py[i])
            out[n, 2] = -znear
            out[n, 3] = cr[i] + t * (cr[j] - cr[i])
            out[n, 4] = cg[i] + t * (cg[j] - cg[i])
            out[n, 5] = cb[i] + t * (cb[j] - cb[i])
            n += 1
    return n


@njit(cache=True)
def _raster_crossing(verts, faces, crossing, colors, width, height,
                     fx, fy, cx, cy, depth_buf, color_buf, face_buf):
    """Slow path for triangles straddling the near plane."""
    clip = np.empty((4, 6), dtype=np.float64)
    tpx = np.empty(3, dtype=np.float64)
    tpy = np.empty(3, dtype=np.float64)
    tpz = np.empty(3, dtype=np.float64)
    tcr = np.empty(3, dtype=np.float64)
    tcg = np.empty(3, dtype=np.float64)
    tcb = np.empty(3, dtype=np.float64)
    for ci in range(crossing.shape[0]):
        f = crossing[ci]
        for k in range(3):
            vi = faces[f, k]
            tpx[k] = verts[vi, 0]
            tpy[k] = verts[vi, 1]
            tpz[k] = verts[vi, 2]
            tcr[k] = colors[vi, 0]
            tcg[k] = colors[vi, 1]
            tcb[k] = colors[vi, 2]
        nclip = _clip_near(tpx, tpy, tpz, tcr, tcg, tcb, _ZNEAR, clip)
        if nclip < 3:
            continue
        for s in range(1, nclip - 1):
            _raster_screen_tri(
                f,
                cx + fx * clip[0, 0] / -clip[0, 2],
                cy - fy * clip[0, 1] / -clip[0, 2],
                -clip[0, 2], clip[0, 3], clip[0, 4], clip[0, 5],
                cx + fx * clip[s, 0] / -clip[s, 2],
                cy - fy * clip[s, 1] / -clip[s, 2],
                -clip[s, 2], clip[s, 3], clip[s, 4], clip[s, 5],
                cx + fx * clip[s + 1, 0] / -clip[s + 1, 2],
                cy - fy * clip[s + 1, 1] / -clip[s + 1, 2],
                -clip[s + 1, 2], clip[s + 1, 3], clip[s + 1, 4], clip[s + 1, 5],
                width, 0, height - 1,
                depth_buf, color_buf, face_buf,
            )


def render_view(mesh: TriangleMesh, cam: CameraView) -> RenderedView:
    """Z-buffered perspective render of the mesh from cam.

    Pixels covered by no triangle are flagged missing with NaN depth.
    Deterministic: identical inputs give bitwise-identical outputs.
    """
    h, w = cam.height_px, cam.width_px
    fx, fy, cx, cy = cam.intrinsics()
    depth_buf = np.full((h, w), np.inf)
    color_buf = np.zeros((h, w, 3))
    face_buf = np.full((h, w), -1, dtype=np.int32)

    if mesh.n_faces > 0:
        world_to_cam = cam.pose.inverse()
        verts_cam = np.ascontiguousarray(
            mesh.vertices @ world_to_cam.rotation.T + world_to_cam.translation
        )
        z = verts_cam[:, 2]
        front = z <= -_ZNEAR
        d = -z
        with np.errstate(divide="ignore", invalid="ignore"):
            u = cx + fx * verts_cam[:, 0] / d
            v = cy - fy * verts_cam[:, 1] / d

        entries, band_starts, crossing = _bucket_faces(
            mesh.faces, u, v, front, h, w, _BANDS
        )
        if entries.size:
            _raster_bands(
                entries, band_starts, mesh.faces, u, v, d, mesh.vertex_colors,
                w, h, depth_buf, color_buf, face_buf,
            )
        if crossing.size:
            _raster_crossing(
                verts_cam, mesh.faces, crossing, mesh.vertex_colors,
                w, h, fx, fy, cx, cy, depth_buf, color_buf, face_buf,
            )

    missing = ~np.isfinite(depth_buf)
    depth = depth_buf.copy()
    depth[missing] = MISSING_DEPTH
    return RenderedView(color=color_buf, depth=depth, missing=missing,
                        face_index=face_buf)


def save_depth_raw(path, depth: np.ndarray) -> None:
    """Write depth as little-endian float32 after an 8-byte (width,height) header."""
    h, w = depth.shape
    with open(path, "wb") as f:
        f.write(struct.pack("<ii", w, h))
        f.write(depth.astype("<f4").tobytes())


def load_depth_raw(path) -> np.ndarray:
    with open(path, "rb") as f:
        w, h = struct.unpack("<ii", f.read(8))
        data = np.frombuffer(f.read(), dtype="<f4")
    return data.reshape(h, w).astype(np.float64)
