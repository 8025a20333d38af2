from __future__ import annotations

import numpy as np
import pytest

from roomblend import ade20k
from roomblend.backends.scenes import BoxRoom, Slab
from roomblend.core import StageError, camera_at
from roomblend.ingest import PreparedImage, preprocess_input, remove_people


def gradient_image(h, w):
    rng = np.random.default_rng(h * 1000 + w)
    return rng.random(size=(h, w, 3))


def test_square_input_resizes_to_512():
    out = preprocess_input(gradient_image(1024, 1024))
    assert out.color.shape == (512, 512, 3)


def test_landscape_center_crop_offsets():
    img = gradient_image(1080, 1920)
    out = preprocess_input(img)
    # crop offsets (420, 0): compare against a hand-cropped reference
    ref = preprocess_input(img[:, 420:420 + 1080])
    assert np.allclose(out.color, ref.color, atol=1e-12)


def test_512_input_is_identity():
    img = gradient_image(512, 512)
    out = preprocess_input(img)
    assert np.array_equal(out.color, img)


def test_too_small_rejected():
    with pytest.raises(StageError):
        preprocess_input(gradient_image(63, 100))


def test_preprocess_idempotent():
    img = gradient_image(777, 1234)
    once = preprocess_input(img)
    twice = preprocess_input(once.color)
    assert np.array_equal(once.color, twice.color)


def test_prepared_image_must_be_512():
    with pytest.raises(ValueError):
        PreparedImage(np.zeros((256, 256, 3)))


@pytest.fixture(scope="module")
def person_scene():
    scene = BoxRoom((7.0, 2.5, 7.0), slabs=(
        Slab(0.30, 0.72, 0.44, 0.58, ade20k.PERSON, 1.6),
    ))
    cam = camera_at((0.0, 1.5, 0.0), pitch_deg=-15.0)
    color, depth, labels = scene.render(cam)
    return color, labels


def test_no_person_is_noop(backends, room_view):
    color, _, _, _ = room_view
    img = PreparedImage(color)
    out = remove_people(img, backends.seg, backends.inpaint, backends.vlm)
    assert out is img


def test_person_region_replaced_rest_identical(backends, person_scene):
    color, labels = person_scene
    img = PreparedImage(color)
    out = remove_people(img, backends.seg, backends.inpaint, backends.vlm)
    person = labels == ade20k.PERSON
    from scipy import ndimage

    dilated = ndimage.binary_dilation(person, iterations=8)
    # outside the dilated mask: bitwise identical
    assert np.array_equal(out.color[~dilated], color[~dilated])
    # inside the original person region: changed
    changed = np.abs(out.color - color).max(axis=-1) > 1e-9
    assert changed[person].mean() > 0.99
    # no person chroma survives
    assert not (backends.seg.segment(out.color) == ade20k.PERSON).any()


def test_full_person_mask_rejected(backends):
    person_color = ade20k.color_of(ade20k.PERSON) * 0.8
    color = np.tile(person_color, (512, 512, 1))
    with pytest.raises(StageError):
        remove_people(PreparedImage(color), backends.seg, backends.inpaint, backends.vlm)
