from __future__ import annotations

import numpy as np

from roomblend.core import CameraView, RigidTransform, TriangleMesh, camera_at
from roomblend.render import load_depth_raw, render_view, save_depth_raw


def quad_mesh(z: float, half: float = 1.0, color=(0.2, 0.5, 0.8)):
    """Two triangles spanning x,y in [-half, half] at camera-space depth z."""
    verts = np.array([
        [-half, -half, -z], [half, -half, -z], [half, half, -z], [-half, half, -z],
    ])
    verts[:, 2] = -z
    faces = np.array([[0, 1, 2], [0, 2, 3]])
    colors = np.tile(color, (4, 1))
    return TriangleMesh(verts, faces, colors)


def test_empty_mesh_all_missing():
    cam = CameraView(RigidTransform.identity(), width_px=32, height_px=32)
    rv = render_view(TriangleMesh.empty(), cam)
    assert rv.missing.all()
    assert np.all(~np.isfinite(rv.depth))
    assert (rv.face_index == -1).all()


def test_quad_depth_exact():
    cam = CameraView(RigidTransform.identity(), width_px=64, height_px=64)
    rv = render_view(quad_mesh(2.0), cam)
    covered = ~rv.missing
    assert covered.sum() > 100
    assert np.abs(rv.depth[covered] - 2.0).max() <= 1e-6
    # color interpolation of a constant-color quad is that color
    assert np.abs(rv.color[covered] - [0.2, 0.5, 0.8]).max() <= 1e-9


def test_quad_covers_expected_extent():
    # a quad of half-width 1 at 2 m under 55 deg vertical FOV spans
    # 2*atan(1/2)=53.13 deg < fov: fully inside the frame
    cam = CameraView(RigidTransform.identity(), width_px=128, height_px=128)
    rv = render_view(quad_mesh(2.0), cam)
    fy = 64.0 / np.tan(np.deg2rad(27.5))
    expected_half_px = fy * (1.0 / 2.0)
    rows = np.nonzero((~rv.missing).any(axis=1))[0]
    got_half_px = (rows.max() - rows.min() + 1) / 2.0
    assert abs(got_half_px - expected_half_px) <= 1.5


def test_nearer_quad_wins_everywhere():
    cam = CameraView(RigidTransform.identity(), width_px=48, height_px=48)
    near = quad_mesh(1.5, half=0.6, color=(1.0, 0.0, 0.0))
    far = quad_mesh(3.0, half=2.0, color=(0.0, 1.0, 0.0))
    both = TriangleMesh(
        np.concatenate([far.vertices, near.vertices]),
        np.concatenate([far.faces, near.faces + 4]),
        np.concatenate([far.vertex_colors, near.vertex_colors]),
    )
    rv = render_view(both, cam)
    near_alone = render_view(near, cam)
    covered_near = ~near_alone.missing
    # every pixel covered by the near quad shows the near quad
    assert np.allclose(rv.depth[covered_near], 1.5, atol=1e-6)
    assert np.allclose(rv.color[covered_near], [1.0, 0.0, 0.0], atol=1e-9)
    far_only = ~rv.missing & ~covered_near
    assert np.allclose(rv.depth[far_only], 3.0, atol=1e-6)


def test_render_deterministic(room_submesh):
    cam = room_submesh.capture_camera
    a = render_view(room_submesh.mesh, cam)
    b = render_view(room_submesh.mesh, cam)
    assert np.array_equal(a.depth, b.depth, equal_nan=True)
    assert np.array_equal(a.color, b.color)
    assert np.array_equal(a.face_index, b.face_index)


def test_roundtrip_color_matches_input(backends, room_view, room_submesh):
    color, depth, _, cam = room_view
    rv = render_view(room_submesh.mesh, cam)
    covered = ~rv.missing
    err = np.abs(rv.color - color).max(axis=-1)
    assert err[covered].max() <= 1.0 / 255.0
    rel = np.abs(rv.depth[covered] - depth[covered]) / depth[covered]
    assert np.median(rel) < 0.01


def test_wide_frame_keeps_vertical_fov():
    # a quad spanning exactly the vertical frustum at 2 m must span the full
    # height in both square and wide frames
    half = 2.0 * np.tan(np.deg2rad(27.5))
    for w in (128, 320):
        cam = CameraView(RigidTransform.identity(), width_px=w, height_px=128)
        rv = render_view(quad_mesh(2.0, half=half * 1.01), cam)
        rows = (~rv.missing).any(axis=1)
        assert rows.all()


def test_depth_raw_roundtrip(tmp_path):
    depth = np.array([[1.0, 2.5], [np.nan, 0.25]])
    p = tmp_path / "d.raw"
    save_depth_raw(p, depth)
    back = load_depth_raw(p)
    assert back.shape == depth.shape
    assert np.allclose(back[np.isfinite(depth)], depth[np.isfinite(depth)], atol=1e-6)
    assert not np.isfinite(back[1, 0])
