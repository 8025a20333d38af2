from __future__ import annotations

import itertools

import numpy as np
import pytest

from roomblend import ade20k
from roomblend.core import CameraView, RigidTransform, TriangleMesh, camera_at, rotation_about_x
from roomblend.floor_align import (
    FLOOR_GEN_MAX_ATTEMPTS,
    FloorPlane,
    align_submesh_to_floor,
    extract_floor_vertices,
    find_floor,
    fit_floor_plane,
    floor_generation_camera,
    floor_vertex_indices,
    generate_floor,
)
from roomblend.lift3d import Submesh

from conftest import random_rotation


def submesh_from_points(points, labels):
    points = np.asarray(points, dtype=np.float64)
    mesh = TriangleMesh(
        points,
        np.array([[0, 1, 2]]),
        np.zeros((points.shape[0], 3)),
        np.asarray(labels, dtype=np.int32),
    )
    return Submesh(mesh=mesh, capture_camera=CameraView(RigidTransform.identity()))


def grid_points(nx=40, nz=40, y=0.0, extent=2.0, seed=0):
    rng = np.random.default_rng(seed)
    xs = np.linspace(-extent / 2, extent / 2, nx)
    zs = np.linspace(0.5, 0.5 + extent, nz)
    xx, zz = np.meshgrid(xs, zs)
    pts = np.stack([xx.ravel(), np.full(xx.size, y), zz.ravel()], axis=1)
    return pts + rng.normal(0, 1e-4, size=pts.shape)


def test_extract_uniform_floor_returns_all():
    pts = grid_points(y=0.4)
    sub = submesh_from_points(pts, np.full(pts.shape[0], ade20k.FLOOR))
    got = extract_floor_vertices(sub)
    assert got.shape[0] == pts.shape[0]


def test_extract_drops_mislabeled_cluster():
    floor = grid_points(y=0.0)
    stray = grid_points(nx=5, nz=5, y=1.0, seed=1)
    pts = np.concatenate([floor, stray])
    sub = submesh_from_points(pts, np.full(pts.shape[0], ade20k.FLOOR))
    got = extract_floor_vertices(sub)
    # the y=1.0 cluster sits more than 0.3 m from the median: excluded
    assert got.shape[0] == floor.shape[0]
    assert np.abs(got[:, 1]).max() < 0.3


def test_extract_wall_only_scene_is_empty():
    pts = grid_points()
    sub = submesh_from_points(pts, np.full(pts.shape[0], ade20k.WALL))
    assert extract_floor_vertices(sub).shape[0] == 0


def test_extract_includes_rug():
    pts = grid_points()
    labels = np.full(pts.shape[0], ade20k.RUG)
    sub = submesh_from_points(pts, labels)
    assert extract_floor_vertices(sub).shape[0] == pts.shape[0]


def test_fit_rejects_50_degree_tilt():
    pts = grid_points() @ rotation_about_x(50.0).T
    assert fit_floor_plane(pts, 0) is None


def test_fit_rejects_small_patch():
    pts = grid_points(extent=0.3)
    assert fit_floor_plane(pts, 0) is None


def test_fit_rejects_fewer_than_three_points():
    assert fit_floor_plane(np.zeros((2, 3)), 0) is None


def test_fit_recovers_plane_under_outliers():
    rng = np.random.default_rng(5)
    pts = grid_points(y=0.5, extent=2.0)
    n_out = int(0.2 * pts.shape[0])
    outliers = rng.uniform(-3, 3, size=(n_out, 3))
    cloud = np.concatenate([pts, outliers])
    plane = fit_floor_plane(cloud, 7)
    assert plane is not None
    angle = np.degrees(np.arccos(np.clip(plane.normal[1], -1, 1)))
    assert angle < 0.5
    assert plane.offset == pytest.approx(0.5, abs=0.005)


def test_fit_deterministic_for_seed():
    rng = np.random.default_rng(6)
    cloud = np.concatenate([grid_points(y=0.2), rng.uniform(-2, 2, size=(200, 3))])
    a = fit_floor_plane(cloud, 123)
    b = fit_floor_plane(cloud, 123)
    assert np.array_equal(a.normal, b.normal)
    assert a.offset == b.offset
    assert np.array_equal(a.inlier_indices, b.inlier_indices)


def test_gating_is_exact_small_instance():
    """No returned plane may violate a heuristic; when no admissible
    3-subset exists (checked exhaustively), fit returns None."""
    rng = np.random.default_rng(42)
    cos45 = np.cos(np.deg2rad(45.0))
    for trial in range(60):
        pts = rng.uniform(-1.5, 1.5, size=(rng.integers(3, 13), 3))
        # independent oracle: enumerate every 3-subset
        any_admissible = False
        for i, j, k in itertools.combinations(range(pts.shape[0]), 3):
            raw = np.cross(pts[j] - pts[i], pts[k] - pts[i])
            norm = np.linalg.norm(raw)
            if norm < 1e-12:
                continue
            # sampling draws unordered triples, so both orientations occur
            for n in (raw / norm, -raw / norm):
                if n[1] <= 0 or n[1] < cos45:
                    continue
                off = n @ pts[i]
                inl = np.abs(pts @ n - off) <= 0.02
                sel = pts[inl]
                if sel.size == 0:
                    continue
                if (sel[:, 0].max() - sel[:, 0].min() >= 0.5
                        and sel[:, 2].max() - sel[:, 2].min() >= 0.5):
                    any_admissible = True
                    break
            if any_admissible:
                break
        plane = fit_floor_plane(pts, trial)
        if plane is not None:
            angle = np.degrees(np.arccos(np.clip(plane.normal[1], -1, 1)))
            assert plane.normal[1] > 0
            assert angle <= 45.0 + 1e-9
            assert plane.inlier_extent_xz[0] >= 0.5
            assert plane.inlier_extent_xz[1] >= 0.5
        if not any_admissible:
            assert plane is None


def test_align_already_aligned_is_identity():
    pts = grid_points(y=0.0)
    # shift so min z is exactly 0
    pts[:, 2] -= pts[:, 2].min()
    labels = np.full(pts.shape[0], ade20k.FLOOR)
    sub = submesh_from_points(pts, labels)
    plane = FloorPlane(
        np.array([0.0, 1.0, 0.0]), 0.0, np.arange(pts.shape[0]),
        (2.0, 2.0), np.array([0.0, 0.0, 1.0]),
    )
    aligned, t = align_submesh_to_floor(sub, plane)
    assert np.allclose(t.rotation, np.eye(3), atol=1e-12)
    assert np.allclose(t.translation, 0.0, atol=1e-9)


def test_align_pure_translation():
    pts = grid_points(y=0.5)
    sub = submesh_from_points(pts, np.full(pts.shape[0], ade20k.FLOOR))
    plane = fit_floor_plane(pts, 3)
    aligned, t = align_submesh_to_floor(sub, plane)
    # grid noise is 1e-4, so the fitted normal is within ~1e-5 of +Y
    assert np.allclose(t.rotation, np.eye(3), atol=1e-4)
    assert t.translation[0] == pytest.approx(0.0, abs=1e-9)
    assert t.translation[1] == pytest.approx(-0.5, abs=1e-3)
    assert aligned.mesh.vertices[:, 2].min() == pytest.approx(0.0, abs=1e-12)


def test_align_tilted_room():
    rng = np.random.default_rng(8)
    floor = grid_points(nx=60, nz=60, y=0.0)
    wall = np.stack([
        rng.uniform(-1, 1, 400), rng.uniform(0, 2, 400), np.full(400, 2.5),
    ], axis=1)
    pts = np.concatenate([floor, wall])
    labels = np.concatenate([
        np.full(floor.shape[0], ade20k.FLOOR), np.full(wall.shape[0], ade20k.WALL),
    ])
    tilt = rotation_about_x(30.0)
    sub = submesh_from_points(pts @ tilt.T, labels)
    plane = find_floor(sub, 9)
    assert plane is not None
    aligned, _ = align_submesh_to_floor(sub, plane)
    floor_after = extract_floor_vertices(aligned)
    assert (np.abs(floor_after[:, 1]) <= 0.01).mean() >= 0.99
    # re-fit on the aligned submesh: normal within 1 degree of +Y, offset small
    plane2 = find_floor(aligned, 10)
    assert plane2 is not None
    assert np.degrees(np.arccos(np.clip(plane2.normal[1], -1, 1))) <= 1.0
    assert abs(plane2.offset) <= 0.02


def test_floor_generation_camera_steps():
    base = CameraView(RigidTransform.identity())
    for k in range(5):
        cam = floor_generation_camera(base, k)
        pitch = -5.0 + k * (-25.0 / 4.0)
        back = 1.0 + k * (0.5 / 4.0)
        up = 0.3 + k * (0.7 / 4.0)
        assert np.allclose(cam.position, [0.0, up, back], atol=1e-12)
        f = cam.forward
        got_pitch = np.degrees(np.arcsin(f[1]))
        assert got_pitch == pytest.approx(pitch, abs=1e-9)
    # the sweep repeats after five steps
    assert np.allclose(
        floor_generation_camera(base, 5).position,
        floor_generation_camera(base, 0).position,
    )


class FloorPaintingBackends:
    """Scripted backends: the inpainter paints a floor plane below the scene."""

    class _Inpaint:
        identity = "test-inpaint/floor-painter"

        def inpaint(self, color, mask, prompt, conditioning=None, weights=None,
                    seed=0, negative_prompt=""):
            out = color.copy()
            out[mask] = ade20k.color_of(ade20k.FLOOR)
            return out

    class _Depth:
        identity = "test-depth/floor-plane"

        def predict(self, color, known_depth=None, known_mask=None, cam=None):
            h, w = color.shape[:2]
            out = np.full((h, w), 2.0)
            if cam is not None:
                from roomblend.backends.synthetic import _pixel_rays

                rays = _pixel_rays(cam)
                # ray-cast the y = 0 plane where it is in front of the camera
                denom = rays[..., 1]
                with np.errstate(divide="ignore", invalid="ignore"):
                    t = (0.0 - cam.position[1]) / denom
                good = np.isfinite(t) & (t > 0.05) & (t < 30.0)
                out[good] = t[good]
            if known_mask is not None:
                out[known_mask] = known_depth[known_mask]
            return out

    class _Seg:
        identity = "test-seg/floor-painter"

        def segment(self, color):
            from roomblend.backends.scenes import classify_colors

            return classify_colors(color)

    class _Vlm:
        identity = "test-vlm"

        def caption(self, color):
            return "bare wall"

    class _Llm:
        identity = "test-llm"

        def complete(self, system, user, function_name=None):
            return "office space with wooden floor"

    def __init__(self):
        self.inpaint = self._Inpaint()
        self.depth = self._Depth()
        self.seg = self._Seg()
        self.vlm = self._Vlm()
        self.llm = self._Llm()


def wall_only_submesh():
    """A wall plane 2 m ahead, 1.6 m wide band above the camera horizon."""
    rng = np.random.default_rng(11)
    n = 4000
    pts = np.stack([
        rng.uniform(-1.2, 1.2, n), rng.uniform(-0.2, 1.4, n), np.full(n, -2.0),
    ], axis=1)
    tris = np.arange(3 * (n // 3)).reshape(-1, 3)
    mesh = TriangleMesh(pts, tris[: n // 3 - 1], np.full((n, 3), 0.4),
                        np.full(n, 0, dtype=np.int32))
    return Submesh(mesh=mesh, capture_camera=CameraView(RigidTransform.identity()),
                   source_caption="bare wall")


def test_generate_floor_succeeds_with_floor_painter():
    sub = wall_only_submesh()
    assert extract_floor_vertices(sub).shape[0] == 0
    out = generate_floor(sub, FloorPaintingBackends(), rng_seed=3)
    assert out.floor_found
    assert out.aligned
    floor_pts = extract_floor_vertices(out)
    assert floor_pts.shape[0] > 100
    assert (np.abs(floor_pts[:, 1]) <= 0.02).mean() >= 0.99


def test_generate_floor_gives_up_after_ten_attempts():
    backends = FloorPaintingBackends()

    calls = {"n": 0}

    class WallPainter:
        identity = "test-inpaint/wall-painter"

        def inpaint(self, color, mask, prompt, conditioning=None, weights=None,
                    seed=0, negative_prompt=""):
            calls["n"] += 1
            out = color.copy()
            out[mask] = ade20k.color_of(ade20k.WALL)
            return out

    backends.inpaint = WallPainter()

    class WallDepth:
        identity = "test-depth/wall"

        def predict(self, color, known_depth=None, known_mask=None, cam=None):
            out = np.full(color.shape[:2], 3.0)
            if known_mask is not None:
                out[known_mask] = known_depth[known_mask]
            return out

    backends.depth = WallDepth()
    sub = wall_only_submesh()
    out = generate_floor(sub, backends, rng_seed=3)
    assert not out.aligned
    assert not out.floor_found
    # one inpaint per attempt while the view still has holes
    assert 5 <= calls["n"] <= FLOOR_GEN_MAX_ATTEMPTS
