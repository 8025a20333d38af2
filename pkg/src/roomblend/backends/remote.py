"""HTTP client for a remote inpainting server (webui-style JSON API).

Images travel as base64 PNG; conditioning channels as an ordered array of
{image, model_name, weight}. Unmasked pixels are restored verbatim from the
input after decoding, because diffusion servers re-encode whole frames and
perturb pixels the fusion bookkeeping relies on.
"""

from __future__ import annotations

import base64
import io
import time
from dataclasses import dataclass, field

import numpy as np
import requests
from PIL import Image

from ..core import BackendError

CONDITIONING_ORDER = ("layout", "depth", "semantic")
DEFAULT_MODEL_NAMES = {
    "layout": "controlnet-layout",
    "depth": "control_v11f1p_sd15_depth",
    "semantic": "control_v11p_sd15_seg",
}


class RemoteInpaintError(BackendError):
    def __init__(self, message: str, attempts: int):
        super().__init__("backends", f"{message} (after {attempts} attempts)")
        self.attempts = attempts


def _to_png_b64(img: np.ndarray) -> str:
    if img.dtype == bool:
        arr = np.where(img, 255, 0).astype(np.uint8)
        pil = Image.fromarray(arr, mode="L")
    elif img.ndim == 2:
        arr = np.clip(np.round(img * 255.0), 0, 255).astype(np.uint8)
        pil = Image.fromarray(arr, mode="L")
    else:
        arr = np.clip(np.round(img * 255.0), 0, 255).astype(np.uint8)
        pil = Image.fromarray(arr, mode="RGB")
    buf = io.BytesIO()
    pil.save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def _from_png_b64(data: str) -> np.ndarray:
    raw = base64.b64decode(data.split(",", 1)[-1])
    pil = Image.open(io.BytesIO(raw)).convert("RGB")
    return np.asarray(pil, dtype=np.float64) / 255.0


@dataclass
class RemoteInpaint:
    """InpaintBackend speaking JSON-over-HTTP to a configured endpoint."""

    endpoint: str
    model_names: dict = field(default_factory=lambda: dict(DEFAULT_MODEL_NAMES))
    sampler: str = "DPM++ 2M Karras"
    steps: int = 30
    timeout_s: float = 120.0
    retries: int = 3
    backoff_base_s: float = 2.0
    session: requests.Session | None = None

    @property
    def identity(self) -> str:
        return f"remote-inpaint@{self.endpoint}"

    def inpaint(self, color, mask, prompt, conditioning=None, weights=None,
                seed=0, negative_prompt="") -> np.ndarray:
        h, w = color.shape[:2]
        units = []
        if conditioning:
            weight_of = dict(zip(CONDITIONING_ORDER, weights or (1.0, 1.0, 1.0)))
            for name in CONDITIONING_ORDER:
                img = conditioning.get(name)
                if img is None:
                    continue
                units.append({
                    "image": _to_png_b64(img),
                    "model_name": self.model_names.get(name, name),
                    "weight": float(weight_of.get(name, 1.0)),
                })
        payload = {
            "prompt": prompt,
            "negative_prompt": negative_prompt,
            "seed": int(seed),
            "width": w,
            "height": h,
            "steps": self.steps,
            "sampler_name": self.sampler,
            "init_images": [_to_png_b64(color)],
            "mask": _to_png_b64(mask),
            "denoising_strength": 1.0,
            "controlnet_units": units,
        }
        reply = self._post_with_retries(payload)
        try:
            out = _from_png_b64(reply["images"][0])
        except (KeyError, IndexError, TypeError, ValueError) as e:
            raise RemoteInpaintError(f"undecodable inpaint reply: {e}", 1) from e
        if out.shape[:2] != (h, w):
            raise RemoteInpaintError(
                f"reply size {out.shape[1]}x{out.shape[0]} != request {w}x{h}", 1
            )
        # servers drift on unmasked pixels; restore them from the input
        out[~mask] = color[~mask]
        return out

    def _post_with_retries(self, payload: dict) -> dict:
        """One attempt plus `retries` retries, backing off 2, 4, 8, ... seconds."""
        http = self.session or requests
        last = None
        for attempt in range(self.retries + 1):
            if attempt > 0:
                time.sleep(self.backoff_base_s * 2 ** (attempt - 1))
            try:
                resp = http.post(self.endpoint, json=payload, timeout=self.timeout_s)
                resp.raise_for_status()
                return resp.json()
            except (requests.RequestException, ValueError) as e:
                last = e
        raise RemoteInpaintError(f"inpaint request failed: {last}", self.retries)
