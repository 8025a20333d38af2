"""Deterministic synthetic backends.

Every backend is a pure function of its inputs and seed, so full pipeline
runs replay bitwise. Depth is read back from the synthetic world's
brightness shading and snapped onto RANSAC-fitted planes per semantic
class, which removes per-pixel quantization noise; the inpainter paints
masked pixels from the depth conditioning channel through the same fixed
shading function, so structural-copy tests have closed-form expectations.
"""

from __future__ import annotations

import json
import re

import cv2
import numpy as np
from scipy import ndimage

from .. import ade20k
from ..core import CameraView, RigidTransform
from . import scenes

_PLANAR_CLASSES = (ade20k.WALL, ade20k.FLOOR, ade20k.CEILING)
_CONST_CLASSES = (ade20k.PERSON, scenes.SOFA, scenes.CHAIR)
_RANSAC_SUBSAMPLE = 20000
_RANSAC_ITERS = 100
_MAX_PLANES_PER_CLASS = 4


def _pixel_rays(cam: CameraView) -> np.ndarray:
    """World-space ray directions parameterized by planar depth."""
    w, h = cam.width_px, cam.height_px
    fx, fy, cx, cy = cam.intrinsics()
    uu, vv = np.meshgrid(np.arange(w) + 0.5, np.arange(h) + 0.5)
    local = np.stack([(uu - cx) / fx, (cy - vv) / fy, -np.ones_like(uu)], axis=-1)
    return local @ cam.pose.rotation.T


def _fit_plane(points: np.ndarray) -> tuple[np.ndarray, float]:
    centroid = points.mean(axis=0)
    cov = np.cov((points - centroid).T)
    _, vecs = np.linalg.eigh(cov)
    n = vecs[:, 0]
    n = n / np.linalg.norm(n)
    return n, float(n @ centroid)


def _sequential_ransac_planes(points: np.ndarray, tol: float, rng: np.random.Generator):
    """Extract up to a few dominant planes from a noisy point set."""
    if points.shape[0] > _RANSAC_SUBSAMPLE:
        points = points[rng.choice(points.shape[0], _RANSAC_SUBSAMPLE, replace=False)]
    remaining = points
    planes = []
    for _ in range(_MAX_PLANES_PER_CLASS):
        n_pts = remaining.shape[0]
        if n_pts < 100:
            break
        best_count = 0
        best_inliers = None
        for _ in range(_RANSAC_ITERS):
            i = rng.choice(n_pts, 3, replace=False)
            p0, p1, p2 = remaining[i]
            normal = np.cross(p1 - p0, p2 - p0)
            norm = np.linalg.norm(normal)
            if norm < 1e-12:
                continue
            normal /= norm
            dist = np.abs(remaining @ normal - normal @ p0)
            inliers = dist <= tol
            count = int(inliers.sum())
            if count > best_count:
                best_count = count
                best_inliers = inliers
        if best_count < 50:
            break
        n, off = _fit_plane(remaining[best_inliers])
        dist = np.abs(remaining @ n - off)
        inliers = dist <= tol
        if inliers.sum() >= 50:
            n, off = _fit_plane(remaining[inliers])
            planes.append((n, off))
            remaining = remaining[dist > tol]
        else:
            break
    return planes


class SyntheticSegmentation:
    identity = "synthetic-seg/chroma-v1"

    def segment(self, color: np.ndarray) -> np.ndarray:
        return scenes.classify_colors(color)


class SyntheticDepth:
    """Depth from shading, snapped to per-class RANSAC planes.

    Known pixels pass through verbatim; planes for a class are fitted from
    known depth when enough of it exists, otherwise from the shading
    decode, so stage-two completion stays consistent with the mesh.
    """

    identity = "synthetic-depth/plane-fit-v1"

    def predict(self, color, known_depth=None, known_mask=None, cam=None) -> np.ndarray:
        h, w = color.shape[:2]
        if known_mask is None:
            known_mask = np.zeros((h, w), dtype=bool)
            known_depth = np.full((h, w), np.nan)
        known_mask = known_mask & np.isfinite(known_depth)
        unknown = ~known_mask
        if not unknown.any():
            return known_depth.copy()
        if cam is None:
            cam = CameraView(RigidTransform.identity(), width_px=w, height_px=h)

        labels = scenes.classify_colors(color)
        factor = color.mean(axis=-1) / scenes.mean_base_brightness(labels)
        raw = scenes.depth_from_factor(factor)
        out = np.where(known_mask, known_depth, raw)

        rays = _pixel_rays(cam)
        origin = cam.position
        rng = np.random.default_rng(0)

        for cls in _PLANAR_CLASSES:
            cls_mask = labels == cls
            cls_unknown = cls_mask & unknown
            if not cls_unknown.any():
                continue
            cls_known = cls_mask & known_mask
            if cls_known.sum() >= 200:
                pts = origin + known_depth[cls_known, None] * rays[cls_known]
                tol = 0.01
            elif cls_mask.sum() >= 100:
                pts = origin + raw[cls_mask, None] * rays[cls_mask]
                tol = 0.30
            else:
                continue
            planes = _sequential_ransac_planes(pts, tol, rng)
            if not planes:
                continue
            rr = rays[cls_unknown]
            dec = raw[cls_unknown]
            best = dec.copy()
            best_err = np.full(dec.shape, np.inf)
            for n, off in planes:
                denom = rr @ n
                with np.errstate(divide="ignore", invalid="ignore"):
                    t = (off - origin @ n) / denom
                # grazing rays blow up; cap well beyond the shading horizon
                valid = (np.abs(denom) > 1e-9) & (t > 0.05) & (t < 3 * scenes.SHADE_FAR_M)
                err = np.where(valid, np.abs(t - dec), np.inf)
                better = err < best_err
                best[better] = t[better]
                best_err[better] = err[better]
            out[cls_unknown] = best

        for cls in _CONST_CLASSES:
            cls_mask = labels == cls
            if not (cls_mask & unknown).any():
                continue
            comps, n_comps = ndimage.label(cls_mask)
            for ci in range(1, n_comps + 1):
                comp = comps == ci
                comp_unknown = comp & unknown
                if not comp_unknown.any():
                    continue
                comp_known = comp & known_mask
                if comp_known.any():
                    value = known_depth[comp_known].mean()
                else:
                    value = raw[comp].mean()
                out[comp_unknown] = value

        out[unknown] = np.clip(out[unknown], 0.05, None)
        out[known_mask] = known_depth[known_mask]
        return out


class SyntheticInpaint:
    """Fills masked pixels from the conditioning channels.

    With depth + semantic conditioning, masked color is the semantic color
    shaded by relative depth (the pipeline always renders all channels; the
    per-channel weights only shape requests to model-backed servers). A
    fully masked frame with no conditioning yields a canonical box-room
    image so pure generation produces liftable content; partial masks with
    no conditioning get a neighborhood-mean diffusion fill.
    """

    identity = "synthetic-inpaint/shade-v1"
    _DIFFUSION_ITERS = 200

    def inpaint(self, color, mask, prompt, conditioning=None, weights=None,
                seed=0, negative_prompt="") -> np.ndarray:
        out = color.copy()
        if not mask.any():
            return out
        cond = conditioning or {}
        if cond.get("depth") is not None and cond.get("semantic") is not None:
            rel = cond["depth"]
            sem = cond["semantic"]
            out[mask] = sem[mask] * (1.0 - rel[mask] / 2.0)[:, None]
            return out
        if mask.all():
            h, w = color.shape[:2]
            from ..core import camera_at

            cam = camera_at((0.0, 1.5, 0.0), width_px=w, height_px=h)
            generated, _, _ = scenes.BoxRoom().render(cam)
            return generated
        fill = out.copy()
        fill[mask] = out[~mask].mean(axis=0)
        for _ in range(self._DIFFUSION_ITERS):
            blurred = cv2.blur(fill, (3, 3))
            fill[mask] = blurred[mask]
        out[mask] = fill[mask]
        return out


class SyntheticCaption:
    identity = "synthetic-vlm/class-census-v1"

    def caption(self, color: np.ndarray) -> str:
        labels = scenes.classify_colors(color)
        vals, counts = np.unique(labels, return_counts=True)
        order = np.argsort(-counts)
        total = labels.size
        names = []
        for i in order:
            if counts[i] / total < 0.01:
                continue
            names.append(ade20k.name_of(int(vals[i])).split(",")[0])
        return "indoor space with " + ", ".join(names[:4] or ["bare surfaces"])


class SyntheticLlm:
    """Scripted interior architect honoring the set_description convention."""

    identity = "synthetic-llm/scripted-v1"

    _STYLES = (
        "shared space with calm neutral walls, tidy open floor, soft even light",
        "common space with pale walls, smooth floor, quiet simple furnishings",
        "open space with plain bright walls, clean floor, gentle daylight",
    )

    def complete(self, system: str, user: str, function_name: str | None = None):
        if function_name == "set_description":
            m = re.search(
                r"What do you expect for the following Y rotation values: (\[[^\]]*\])", user
            )
            rotations = json.loads(m.group(1)) if m else []
            return {
                "descriptions": [
                    {
                        "rotation": r,
                        "description": self._STYLES[int(round(float(r))) % len(self._STYLES)],
                    }
                    for r in rotations
                ]
            }
        return "indoor space with plain wooden floor"
