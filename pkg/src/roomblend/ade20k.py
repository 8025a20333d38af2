"""ADE20K label taxonomy: ids, names, and the published color palette.

Label ids are 0-based over the standard 150-class list (wall=0, floor=3,
ceiling=5, person=12, rug=28). The palette ships as a data file and is
bit-exact against the published colors.
"""

from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources

import numpy as np

WALL = 0
FLOOR = 3
CEILING = 5
PERSON = 12
RUG = 28

# label ids treated as walkable floor during alignment; configurable
# through PipelineConfig.floor_label_ids
DEFAULT_FLOOR_LABELS = (FLOOR, RUG)


@lru_cache(maxsize=1)
def _table() -> list[dict]:
    with resources.files("roomblend.data").joinpath("ade20k_palette.json").open() as f:
        return json.load(f)


@lru_cache(maxsize=1)
def palette() -> np.ndarray:
    """(150,3) uint8 RGB palette indexed by label id."""
    table = _table()
    out = np.zeros((len(table), 3), dtype=np.uint8)
    for row in table:
        out[row["id"]] = row["color"]
    return out


def color_of(label_id: int) -> np.ndarray:
    """RGB color in [0,1] floats for a label id."""
    return palette()[label_id].astype(np.float64) / 255.0


def name_of(label_id: int) -> str:
    return _table()[label_id]["name"]
