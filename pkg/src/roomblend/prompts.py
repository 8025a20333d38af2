"""Caption and per-region prompt inference.

Descriptions for the blended regions come from an LLM playing interior
architect: it receives the known captions keyed by camera Y rotation plus
the rotations still lacking one, and must answer through a
"set_description" function call. Replies are validated (at most 20 words,
"<room-type> space with ..." prefix) and retried with feedback before
giving up.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Sequence

from .core import BackendError, CameraView, StageError, circular_diff_deg
from .ingest import PreparedImage

MAX_DESCRIPTION_WORDS = 20
DESCRIPTION_PATTERN = re.compile(r"^\S.*\bspace with\b")
RETRIES = 3
SET_DESCRIPTION = "set_description"

USER_TEMPLATE = (
    "The size of the room is {space_size_str} (WxHxL) meters and the camera is "
    "positioned in the middle. These are the Y rotation values and descriptions "
    "of the images that were already taken: {y_rotations_and_descriptions}. "
    "What do you expect for the following Y rotation values: "
    "{y_rotations_without_descriptions}? "
    'Consider the theme of "{theme}" when coming up with the descriptions'
)

DEFAULT_FLOOR_MATERIALS = (
    "floor", "carpet", "rug", "wood", "wooden", "tile", "tiled", "concrete",
    "marble", "laminate", "parquet", "stone", "linoleum", "vinyl",
)

FLOOR_PROMPT_SYSTEM = (
    "You describe only the floor of an indoor space. Given a caption of the "
    "space, reply with a single short description of a plausible floor for "
    "it, naming the floor material. Reply with the description only."
)


@lru_cache(maxsize=1)
def region_prompt_system() -> str:
    """The interior-architect system prompt, sent unmodified."""
    path = resources.files("roomblend.data").joinpath("region_prompt_system.txt")
    return path.read_text().strip()


@dataclass(frozen=True)
class RegionPrompt:
    yaw_deg: float
    description: str

    def __post_init__(self):
        problem = description_problem(self.description)
        if problem:
            raise ValueError(problem)


def description_problem(description: str) -> str | None:
    """Why a description violates the protocol, or None when it is fine."""
    if not description or not description.strip():
        return "description is empty"
    if len(description.split()) > MAX_DESCRIPTION_WORDS:
        return f"description exceeds {MAX_DESCRIPTION_WORDS} words"
    if not DESCRIPTION_PATTERN.search(description):
        return "description must start with '<room-type> space with'"
    return None


def caption_image(img: PreparedImage, vlm) -> str:
    text = vlm.caption(img.color)
    if text is None or not text.strip():
        raise BackendError("prompts", "caption backend returned empty text")
    return " ".join(text.split())


def _format_size(room_size_m) -> str:
    return "x".join(f"{v:g}" for v in (round(float(x), 2) for x in room_size_m))


def build_region_prompt_request(
    known: Sequence[tuple[float, str]],
    unknown_yaws: Sequence[float],
    room_size_m,
    theme: str = "",
) -> str:
    known_payload = [
        {"rotation": float(y), "description": d} for y, d in known
    ]
    return USER_TEMPLATE.format(
        space_size_str=_format_size(room_size_m),
        y_rotations_and_descriptions=json.dumps(known_payload),
        y_rotations_without_descriptions=json.dumps([float(y) for y in unknown_yaws]),
        theme=theme,
    )


def infer_region_prompts(
    known: Sequence[tuple[float, str]],
    unknown_yaws: Sequence[float],
    room_size_m,
    llm,
    theme: str = "",
) -> list[RegionPrompt]:
    """One validated RegionPrompt per unknown yaw, via the set_description call.

    Malformed or missing descriptions are retried up to 3 times with the
    validation failures appended; persisting offenders raise an error that
    lists their yaws.
    """
    if not unknown_yaws:
        raise StageError("prompts", "no unknown yaws to describe")
    unknown = [float(y) % 360.0 for y in unknown_yaws]
    if sorted(set(unknown)) != sorted(unknown):
        raise StageError("prompts", "unknown yaws must be distinct")

    user = build_region_prompt_request(known, unknown, room_size_m, theme)
    feedback = ""
    last_problems: dict[float, str] = {}
    for _ in range(RETRIES):
        reply = llm.complete(region_prompt_system(), user + feedback,
                             function_name=SET_DESCRIPTION)
        entries = reply.get("descriptions", []) if isinstance(reply, dict) else []
        by_yaw = {}
        for e in entries:
            try:
                by_yaw[float(e["rotation"]) % 360.0] = str(e["description"])
            except (KeyError, TypeError, ValueError):
                continue
        last_problems = {}
        for y in unknown:
            if y not in by_yaw:
                last_problems[y] = "missing description"
                continue
            problem = description_problem(by_yaw[y])
            if problem:
                last_problems[y] = problem
        if not last_problems:
            return [RegionPrompt(y, by_yaw[y]) for y in unknown]
        feedback = " The previous reply was invalid: " + "; ".join(
            f"rotation {y}: {p}" for y, p in sorted(last_problems.items())
        )
    raise BackendError(
        "prompts",
        "no valid description after retries for yaws "
        + ", ".join(f"{y:g}" for y in sorted(last_problems)),
    )


def select_prompt_for_view(cam: CameraView, prompts: Sequence[RegionPrompt]) -> str:
    """Description whose yaw is circularly nearest the camera's yaw.

    Ties break toward the smaller yaw.
    """
    if not prompts:
        raise StageError("prompts", "no region prompts available")
    cam_yaw = cam.yaw_deg
    best = min(
        prompts,
        key=lambda p: (circular_diff_deg(cam_yaw, p.yaw_deg % 360.0), p.yaw_deg % 360.0),
    )
    return best.description


def infer_floor_prompt(
    caption: str,
    llm,
    materials: Sequence[str] = DEFAULT_FLOOR_MATERIALS,
) -> str:
    """Floor description for floor synthesis, validated against a material allowlist."""
    if not caption or not caption.strip():
        raise StageError("prompts", "floor prompt needs a nonempty caption")
    user = f"The space is described as: {caption}"
    feedback = ""
    for _ in range(RETRIES):
        reply = llm.complete(FLOOR_PROMPT_SYSTEM, user + feedback)
        text = " ".join(str(reply).split()) if reply else ""
        words = {w.strip(".,!?").lower() for w in text.split()}
        if text and words & set(materials):
            return text
        feedback = " Your previous reply did not name a floor material; do so."
    raise BackendError("prompts", "floor prompt missing a floor material after retries")
