from __future__ import annotations

import numpy as np
import pytest

from roomblend.backends import make_synthetic_backends
from roomblend.backends.scenes import BoxRoom
from roomblend.core import camera_at
from roomblend.floor_align import align_submesh_to_floor, find_floor
from roomblend.ingest import PreparedImage
from roomblend.lift3d import estimate_and_backproject


@pytest.fixture(scope="session")
def backends():
    return make_synthetic_backends()


@pytest.fixture(scope="session")
def room_view():
    """A box-room view that sees plenty of floor: (color, depth, labels, cam)."""
    scene = BoxRoom((7.0, 2.5, 7.0))
    cam = camera_at((0.0, 1.5, 0.0), yaw_deg=0.0, pitch_deg=-15.0)
    color, depth, labels = scene.render(cam)
    return color, depth, labels, cam


@pytest.fixture(scope="session")
def room_submesh(backends, room_view):
    """The room_view lifted to a submesh (unaligned)."""
    color, _, _, cam = room_view
    img = PreparedImage(color, source_id="room", caption="indoor space with floor")
    return estimate_and_backproject(img, cam, backends.depth, backends.seg)


@pytest.fixture(scope="session")
def aligned_submesh(room_submesh):
    plane = find_floor(room_submesh, rng_seed=11)
    assert plane is not None
    sub, _ = align_submesh_to_floor(room_submesh, plane)
    return sub


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform-ish random rotation via QR of a Gaussian matrix."""
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q *= np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q
