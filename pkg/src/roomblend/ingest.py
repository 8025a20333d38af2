"""Input normalization: square-crop/resize to 512x512 and scrub people.

People are removed before lifting so nobody gets frozen into the shared
environment; the scrub replaces the (dilated) person region with content
inpainted under a caption-derived prompt.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import cv2
import numpy as np
from scipy import ndimage

from . import ade20k
from .core import StageError

TARGET_SIZE = 512
MIN_INPUT_SIZE = 64
PERSON_DILATE_PX = 8

# words stripped from captions when building the person-removal prompt
_PERSON_TERMS = {
    "person", "persons", "people", "man", "men", "woman", "women",
    "boy", "boys", "girl", "girls", "child", "children", "human",
}


@dataclass(frozen=True)
class PreparedImage:
    """A 512x512 color image ready for the pipeline."""

    color: np.ndarray
    source_id: str = ""
    caption: Optional[str] = None

    def __post_init__(self):
        h, w = self.color.shape[:2]
        if h != TARGET_SIZE or w != TARGET_SIZE:
            raise ValueError(f"PreparedImage must be {TARGET_SIZE}x{TARGET_SIZE}, got {w}x{h}")


def preprocess_input(raw: np.ndarray, source_id: str = "") -> PreparedImage:
    """Center-crop to square (shorter side) and resample to 512x512.

    Idempotent: running it on its own output changes nothing.
    """
    h, w = raw.shape[:2]
    if h < MIN_INPUT_SIZE or w < MIN_INPUT_SIZE:
        raise StageError("ingest", f"input {w}x{h} smaller than {MIN_INPUT_SIZE} px per side")
    side = min(h, w)
    y0 = (h - side) // 2
    x0 = (w - side) // 2
    cropped = raw[y0:y0 + side, x0:x0 + side]
    if side != TARGET_SIZE:
        cropped = cv2.resize(cropped, (TARGET_SIZE, TARGET_SIZE), interpolation=cv2.INTER_AREA)
        cropped = np.clip(cropped, 0.0, 1.0)
    return PreparedImage(color=np.ascontiguousarray(cropped), source_id=source_id)


def _strip_person_terms(caption: str) -> str:
    kept = [w for w in caption.split() if w.strip(".,!?").lower() not in _PERSON_TERMS]
    return " ".join(kept)


def remove_people(img: PreparedImage, seg, inpaint, vlm) -> PreparedImage:
    """Replace person pixels (mask dilated by 8 px) with inpainted content.

    No person detected -> the image passes through untouched. A mask
    covering the whole frame is rejected: there is nothing left to keep.
    """
    labels = seg.segment(img.color)
    person = labels == ade20k.PERSON
    if not person.any():
        return img
    mask = ndimage.binary_dilation(person, iterations=PERSON_DILATE_PX)
    if mask.all():
        raise StageError("ingest", "person mask covers the entire image")
    caption = vlm.caption(img.color)
    prompt = _strip_person_terms(caption) or "empty room"
    filled = inpaint.inpaint(img.color, mask, prompt)
    # unmasked pixels must survive verbatim no matter what the backend did
    out = img.color.copy()
    out[mask] = filled[mask]
    return PreparedImage(color=out, source_id=img.source_id, caption=img.caption)
