"""Dual-shot anchor grids.

Six pyramid levels with strides 4..128, one anchor per feature-map cell.
Second-shot anchor scales run 16..512 doubling per level; first-shot scales
are exactly half. Aspect ratio is 1.5:1 (h:w) since faces are taller than
wide. Anchors are laid out in row-major cell order and are not clipped to
the image.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .geometry import Box

__all__ = [
    "AnchorGrid",
    "LevelSpec",
    "STRIDES",
    "SECOND_SHOT_SCALES",
    "anchor_shape",
    "build_grid",
    "default_level_specs",
    "make_level_specs",
    "total_anchor_count",
]

STRIDES = (4, 8, 16, 32, 64, 128)
SECOND_SHOT_SCALES = (16, 32, 64, 128, 256, 512)
RATIO = 1.5  # h:w


@dataclass(frozen=True)
class LevelSpec:
    index: int          # 1..6
    stride: int         # px
    map_h: int          # cells
    map_w: int          # cells
    scale_second_shot: float  # px
    scale_first_shot: float   # px
    ratio: float = RATIO      # h:w

    def __post_init__(self):
        if not 1 <= self.index <= 6:
            raise ValueError(f"level index must be 1..6, got {self.index}")
        if self.scale_first_shot != self.scale_second_shot / 2:
            raise ValueError(
                "first-shot scale must be half the second-shot scale, got "
                f"{self.scale_first_shot} vs {self.scale_second_shot}"
            )
        if self.map_h <= 0 or self.map_w <= 0:
            raise ValueError(f"map size must be positive, got {self.map_h}x{self.map_w}")

    def count(self) -> int:
        return self.map_h * self.map_w

    def scale(self, shot: str) -> float:
        if shot == "first":
            return self.scale_first_shot
        if shot == "second":
            return self.scale_second_shot
        raise ValueError(f"shot must be 'first' or 'second', got {shot!r}")


@dataclass(frozen=True)
class AnchorGrid:
    level: LevelSpec
    shot: str  # first | second
    boxes: tuple[Box, ...]  # row-major cell order, len == map_h * map_w


def make_level_specs(input_size: int) -> list[LevelSpec]:
    """Level specs for an arbitrary input size; map sizes by ceil division."""
    if input_size <= 0:
        raise ValueError(f"input_size must be positive, got {input_size}")
    specs = []
    for i, (stride, s2) in enumerate(zip(STRIDES, SECOND_SHOT_SCALES), start=1):
        side = -(-input_size // stride)
        specs.append(
            LevelSpec(
                index=i,
                stride=stride,
                map_h=side,
                map_w=side,
                scale_second_shot=float(s2),
                scale_first_shot=s2 / 2.0,
            )
        )
    return specs


def default_level_specs(input_size: int) -> list[LevelSpec]:
    """Standard 6-level design; input must be divisible by the largest stride."""
    if input_size % STRIDES[-1] != 0:
        raise ValueError(
            f"input_size must be divisible by {STRIDES[-1]}, got {input_size}"
        )
    return make_level_specs(input_size)


def anchor_shape(scale: float, ratio: float = RATIO, area_preserving: bool = False) -> tuple[float, float]:
    """(w, h) for an anchor of the given scale.

    Default: scale is the width, h = ratio * w. The area-preserving
    alternative (w = s/sqrt(ratio), h = s*sqrt(ratio)) keeps s = sqrt(w*h).
    """
    if area_preserving:
        r = math.sqrt(ratio)
        return scale / r, scale * r
    return scale, scale * ratio


def build_grid(spec: LevelSpec, shot: str, area_preserving: bool = False) -> AnchorGrid:
    """One anchor per cell, centered at ((j+0.5)*stride, (i+0.5)*stride)."""
    scale = spec.scale(shot)
    w, h = anchor_shape(scale, spec.ratio, area_preserving)
    stride = spec.stride
    boxes = []
    for i in range(spec.map_h):
        cy = (i + 0.5) * stride
        for j in range(spec.map_w):
            cx = (j + 0.5) * stride
            boxes.append(Box(cx - w / 2.0, cy - h / 2.0, w, h))
    return AnchorGrid(level=spec, shot=shot, boxes=tuple(boxes))


def total_anchor_count(specs: list[LevelSpec]) -> int:
    """Anchors per shot across all levels."""
    return sum(s.count() for s in specs)
