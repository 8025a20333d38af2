"""Model-backend contracts, the deterministic synthetic suite, and the
remote inpainting client.

Five contracts drive the pipeline: depth (prediction and completion),
inpainting, semantic segmentation, captioning, and the LLM. Backends are
duck-typed against the protocols below; each carries a stable `identity`
string recorded in run manifests.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Protocol, runtime_checkable

import numpy as np

from .scenes import synthetic_scene_oracle
from .synthetic import (
    SyntheticCaption,
    SyntheticDepth,
    SyntheticInpaint,
    SyntheticLlm,
    SyntheticSegmentation,
)
from .remote import RemoteInpaint, RemoteInpaintError


@runtime_checkable
class DepthBackend(Protocol):
    identity: str

    def predict(self, color: np.ndarray, known_depth=None, known_mask=None,
                cam=None) -> np.ndarray:
        """Positive finite depth everywhere; known pixels returned unchanged.

        `cam` is an optional geometry hint that model-backed implementations
        may ignore.
        """
        ...


@runtime_checkable
class InpaintBackend(Protocol):
    identity: str

    def inpaint(self, color: np.ndarray, mask: np.ndarray, prompt: str,
                conditioning=None, weights=None, seed: int = 0,
                negative_prompt: str = "") -> np.ndarray:
        """Fill masked pixels; unmasked pixels come back unchanged.
        Deterministic for a fixed seed."""
        ...


@runtime_checkable
class SegmentationBackend(Protocol):
    identity: str

    def segment(self, color: np.ndarray) -> np.ndarray:
        """ADE20K label id per pixel."""
        ...


@runtime_checkable
class CaptionBackend(Protocol):
    identity: str

    def caption(self, color: np.ndarray) -> str:
        ...


@runtime_checkable
class LlmBackend(Protocol):
    identity: str

    def complete(self, system: str, user: str,
                 function_name: Optional[str] = None):
        """Plain text, or the function-call arguments dict when
        function_name is given."""
        ...


@dataclass(frozen=True)
class BackendSet:
    depth: DepthBackend
    inpaint: InpaintBackend
    seg: SegmentationBackend
    vlm: CaptionBackend
    llm: LlmBackend

    def identities(self) -> dict[str, str]:
        return {
            "depth": self.depth.identity,
            "inpaint": self.inpaint.identity,
            "seg": self.seg.identity,
            "vlm": self.vlm.identity,
            "llm": self.llm.identity,
        }


def make_synthetic_backends() -> BackendSet:
    return BackendSet(
        depth=SyntheticDepth(),
        inpaint=SyntheticInpaint(),
        seg=SyntheticSegmentation(),
        vlm=SyntheticCaption(),
        llm=SyntheticLlm(),
    )


__all__ = [
    "BackendSet",
    "CaptionBackend",
    "DepthBackend",
    "InpaintBackend",
    "LlmBackend",
    "RemoteInpaint",
    "RemoteInpaintError",
    "SegmentationBackend",
    "SyntheticCaption",
    "SyntheticDepth",
    "SyntheticInpaint",
    "SyntheticLlm",
    "SyntheticSegmentation",
    "make_synthetic_backends",
    "synthetic_scene_oracle",
]
