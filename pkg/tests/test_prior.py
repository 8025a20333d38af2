from __future__ import annotations

import numpy as np
import pytest

from roomblend import ade20k
from roomblend.core import CameraView, RigidTransform, StageError, TriangleMesh, camera_at
from roomblend.layout import PlacedLayout, Placement, layout_submeshes
from roomblend.lift3d import Submesh
from roomblend.prior import (
    build_geometric_prior,
    hull_signed_margin,
    point_in_hull,
    render_prior_images,
)


def footprint_submesh(points_xz, height=2.0, front=(0.0, 0.0, 1.0)):
    """Submesh whose vertices trace the given XZ footprint at two heights."""
    pts = np.asarray(points_xz, dtype=np.float64)
    bottom = np.column_stack([pts[:, 0], np.zeros(len(pts)), pts[:, 1]])
    top = np.column_stack([pts[:, 0], np.full(len(pts), height), pts[:, 1]])
    verts = np.concatenate([bottom, top])
    mesh = TriangleMesh(verts, np.array([[0, 1, 2]]), np.zeros((len(verts), 3)),
                        np.zeros(len(verts), dtype=np.int32))
    return Submesh(mesh=mesh, capture_camera=CameraView(RigidTransform.identity()),
                   aligned=True, front_direction=np.asarray(front, dtype=np.float64))


def hand_layout(subs_with_offsets, diameter=4.0):
    """PlacedLayout with explicit translations, bypassing the circle rules."""
    placements = []
    for i, (sub, offset) in enumerate(subs_with_offsets):
        t = RigidTransform(np.eye(3), np.asarray(offset, dtype=np.float64))
        verts = t.apply(sub.mesh.vertices)
        c = verts.mean(axis=0)
        placements.append(Placement(
            submesh_id=i, transform=t, yaw_deg=float(i),
            front_center=np.array([c[0], 0.0, c[2]]),
            footprint_centroid=np.array([c[0], 0.0, c[2]]),
            height_m=float(verts[:, 1].max()), aligned=True,
        ))
    return PlacedLayout(placements, diameter, [])


def extreme_points(points_2d, n_dirs=3600):
    """Hull vertices by exhaustive direction sweep: a point is a hull vertex
    iff it is the unique maximizer along some direction."""
    pts = np.asarray(points_2d)
    out = set()
    for a in np.linspace(0.0, 2 * np.pi, n_dirs, endpoint=False):
        d = np.array([np.cos(a), np.sin(a)])
        proj = pts @ d
        best = proj.max()
        winners = np.nonzero(proj >= best - 1e-12)[0]
        if winners.size == 1:
            out.add(int(winners[0]))
    return pts[sorted(out)]


def straight_wall_points(n=40):
    """A straight wall segment with a small apron toward the camera."""
    xs = np.linspace(-1.2, 1.2, n)
    wall = np.stack([xs, np.full(n, 1.0)], axis=1)
    apron = np.stack([xs, np.full(n, 0.6)], axis=1)
    return np.concatenate([wall, apron])


def cornered_points(n=40):
    """Two short walls meeting at a deep corner pointing away from the camera."""
    t = np.linspace(0.0, 1.0, n)
    left = np.stack([-0.8 + 0.8 * t, 0.2 + 1.3 * t], axis=1)
    right = np.stack([0.8 * t, 1.5 - 1.3 * t], axis=1)
    return np.concatenate([left, right])


SQUARE = [(-0.5, -0.5), (0.5, -0.5), (0.5, 0.5), (-0.5, 0.5)]


def test_single_square_box():
    sub = footprint_submesh(SQUARE, height=2.0)
    layout = hand_layout([(sub, (0.0, 0.0, 0.0))])
    prior = build_geometric_prior(layout, [sub])
    assert prior.hull_polygon.shape[0] == 4
    assert prior.height_m == 2.5
    # the shell is a box: 4 walls x 2 + 2 floor + 2 ceiling triangles
    assert prior.mesh.n_faces == 8 + 2 + 2


def test_height_rule():
    tall = footprint_submesh(SQUARE, height=3.0)
    layout = hand_layout([(tall, (0.0, 0.0, 0.0))])
    assert build_geometric_prior(layout, [tall]).height_m == 3.0
    short = footprint_submesh(SQUARE, height=2.0)
    layout = hand_layout([(short, (0.0, 0.0, 0.0))])
    assert build_geometric_prior(layout, [short]).height_m == 2.5


def test_two_unit_squares_hull_matches_oracle():
    a = footprint_submesh(SQUARE)
    b = footprint_submesh(SQUARE)
    layout = hand_layout([(a, (-2.0, 0.0, 0.0)), (b, (2.0, 0.0, 0.0))])
    prior = build_geometric_prior(layout, [a, b])
    # a 4-gon spanning both squares
    assert prior.hull_polygon.shape[0] == 4
    placed = np.concatenate([
        layout.placements[0].transform.apply(a.mesh.vertices),
        layout.placements[1].transform.apply(b.mesh.vertices),
    ])
    expected = extreme_points(placed[:, [0, 2]])
    got_set = {tuple(np.round(p, 6)) for p in prior.hull_polygon}
    exp_set = {tuple(np.round(p, 6)) for p in expected}
    assert got_set == exp_set
    assert got_set == {(-2.5, -0.5), (-2.5, 0.5), (2.5, -0.5), (2.5, 0.5)}


def test_hull_contains_all_placed_vertices(aligned_submesh):
    subs = [aligned_submesh] * 3
    layout = layout_submeshes(subs, 6.0)
    prior = build_geometric_prior(layout, subs)
    for p in layout.placements:
        placed = p.transform.apply(subs[p.submesh_id].mesh.vertices)
        for q in placed[:: max(1, placed.shape[0] // 500)]:
            assert point_in_hull(prior.hull_polygon, (q[0], q[2]), tol=1e-6)


def test_straight_walls_make_octagon_and_corners_make_square():
    straight = [footprint_submesh(straight_wall_points())] * 4
    layout = layout_submeshes(straight, 4.0)
    prior = build_geometric_prior(layout, straight)
    assert prior.hull_polygon.shape[0] == 8

    corners = [footprint_submesh(cornered_points())] * 4
    layout = layout_submeshes(corners, 4.0)
    prior = build_geometric_prior(layout, corners)
    assert prior.hull_polygon.shape[0] == 4


def test_degenerate_footprint_rejected():
    line = [(x, 0.0) for x in np.linspace(-1, 1, 10)]
    sub = footprint_submesh(line)
    layout = hand_layout([(sub, (0.0, 0.0, 0.0))])
    with pytest.raises(StageError):
        build_geometric_prior(layout, [sub])


@pytest.fixture(scope="module")
def box_prior():
    """An axis-aligned 4 x 2.5 x 4 room shell centered on the origin."""
    square = [(-2.0, -2.0), (2.0, -2.0), (2.0, 2.0), (-2.0, 2.0)]
    sub = footprint_submesh(square, height=2.5)
    layout = hand_layout([(sub, (0.0, 0.0, 0.0))])
    prior = build_geometric_prior(layout, [sub])
    assert prior.hull_polygon.shape[0] == 4
    return prior


def project_segment_pixels(cam, a, b, n=600):
    """Pixel coordinates of a 3D segment, clipped to the frame."""
    fx, fy, cx, cy = cam.intrinsics()
    w2c = cam.pose.inverse()
    pts = np.linspace(0, 1, n)[:, None] * (np.asarray(b, dtype=float) - np.asarray(a, dtype=float)) + np.asarray(a, dtype=float)
    local = pts @ w2c.rotation.T + w2c.translation
    keep = local[:, 2] < -0.05
    local = local[keep]
    u = cx + fx * local[:, 0] / -local[:, 2]
    v = cy - fy * local[:, 1] / -local[:, 2]
    inside = (u >= 1) & (u < cam.width_px - 1) & (v >= 1) & (v < cam.height_px - 1)
    return np.stack([v[inside], u[inside]], axis=1)


def box_junction_segments(height):
    segs = []
    corners = [(-2, -2), (-2, 2), (2, 2), (2, -2)]
    for i in range(4):
        x0, z0 = corners[i]
        x1, z1 = corners[(i + 1) % 4]
        segs.append(((x0, 0, z0), (x1, 0, z1)))            # wall-floor
        segs.append(((x0, height, z0), (x1, height, z1)))  # wall-ceiling
        segs.append(((x0, 0, z0), (x0, height, z0)))       # wall-wall
    return segs


@pytest.mark.parametrize("pitch", [-25.0, 25.0])
def test_box_room_junction_edges(box_prior, pitch):
    cam = camera_at((0.0, 1.25, 0.0), yaw_deg=0.0, pitch_deg=pitch)
    images = render_prior_images(box_prior, cam)
    edges = images.layout_edges
    assert edges.any()
    analytic = np.concatenate([
        project_segment_pixels(cam, a, b)
        for a, b in box_junction_segments(box_prior.height_m)
    ])
    assert analytic.shape[0] > 0
    edge_px = np.argwhere(edges)
    d1 = np.sqrt(((edge_px[:, None, :] - analytic[None, :, :]) ** 2).sum(-1)).min(1)
    assert d1.max() <= 2.0
    d2 = np.sqrt(((analytic[:, None, :] - edge_px[None, :, :]) ** 2).sum(-1)).min(1)
    assert (d2 <= 2.0).mean() >= 0.90


def test_frontal_wall_is_constant_with_no_edges(box_prior):
    # camera level in the middle: the frontal wall fills the frame
    cam = camera_at((0.0, 1.25, 0.0), yaw_deg=0.0)
    images = render_prior_images(box_prior, cam)
    assert np.ptp(images.depth) < 1e-12
    assert not images.layout_edges.any()
    assert np.allclose(images.metric_depth, 2.0, atol=1e-9)


def test_semantic_colors_are_exact_palette(box_prior):
    cam = camera_at((0.0, 1.25, 0.0), yaw_deg=30.0, pitch_deg=-20.0)
    images = render_prior_images(box_prior, cam)
    palette = ade20k.palette()
    uniq = np.unique(images.semantic.reshape(-1, 3), axis=0)
    roles = (ade20k.WALL, ade20k.FLOOR, ade20k.CEILING)
    assert uniq.shape[0] >= 2
    for row in uniq:
        assert any(np.array_equal(row, palette[i] / 255.0) for i in roles)


def test_camera_outside_hull_rejected(box_prior):
    with pytest.raises(StageError):
        render_prior_images(box_prior, camera_at((10.0, 1.0, 0.0)))
    with pytest.raises(StageError):
        render_prior_images(box_prior, camera_at((0.0, 50.0, 0.0)))


def test_layout_edges_scale_invariant():
    results = []
    for scale in (1.0, 3.0):
        square = [(-2.0 * scale, -2.0 * scale), (2.0 * scale, -2.0 * scale),
                  (2.0 * scale, 2.0 * scale), (-2.0 * scale, 2.0 * scale)]
        sub = footprint_submesh(square, height=2.5 * scale)
        layout = hand_layout([(sub, (0.0, 0.0, 0.0))])
        prior = build_geometric_prior(layout, [sub])
        cam = camera_at((0.0, 1.25 * scale, 0.0), yaw_deg=0.0, pitch_deg=-25.0)
        results.append(render_prior_images(prior, cam).layout_edges)
    assert np.array_equal(results[0], results[1])


def test_hull_margin_helper(box_prior):
    assert hull_signed_margin(box_prior.hull_polygon, (0.0, 0.0)) == pytest.approx(2.0)
    assert hull_signed_margin(box_prior.hull_polygon, (3.0, 0.0)) < 0
