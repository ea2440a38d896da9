"""Box arithmetic: IoU, anchor-relative box regression, NMS, output rounding.

Boxes are axis-aligned rectangles in image pixel coordinates, stored as
(x, y, w, h) with (x, y) the top-left corner. Regression deltas follow the
Faster-R-CNN center/log-size parameterization; an optional variance pair
rescales them to the SSD convention for cross-checking.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = [
    "Box",
    "BoxDelta",
    "Detection",
    "decode",
    "encode",
    "iou",
    "nms",
    "round_detection",
]

# exp() clamp bound for decode; e^30 * any sane anchor size is already
# far outside pixel range, so clamping only flags garbage predictions.
_LOG_SIZE_LIMIT = 30.0


@dataclass(frozen=True)
class Box:
    """Axis-aligned rectangle, top-left corner plus positive size, in pixels."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x, self.y, self.w, self.h)):
            raise ValueError(f"box coordinates must be finite, got {self}")
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"box size must be positive, got w={self.w} h={self.h}")

    @property
    def cx(self) -> float:
        return self.x + self.w / 2.0

    @property
    def cy(self) -> float:
        return self.y + self.h / 2.0

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def scale(self) -> float:
        """Geometric-mean side length sqrt(w*h)."""
        return math.sqrt(self.w * self.h)


@dataclass(frozen=True)
class BoxDelta:
    """Regression target relative to an anchor: center offsets and log size ratios."""

    tx: float
    ty: float
    tw: float
    th: float


@dataclass(frozen=True)
class Detection:
    box: Box
    score: float

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"detection score must lie in [0, 1], got {self.score}")


def iou(a: Box, b: Box) -> float:
    """Intersection over union of two boxes; 0 when disjoint."""
    ix = min(a.x2, b.x2) - max(a.x, b.x)
    iy = min(a.y2, b.y2) - max(a.y, b.y)
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


def encode(gt: Box, anchor: Box, variances: tuple[float, float] | None = None) -> BoxDelta:
    """Parameterize gt relative to anchor: tx=(gcx-acx)/aw, tw=ln(gw/aw), etc.

    With `variances` (e.g. (0.1, 0.2)) the deltas are additionally divided by
    the respective variance, matching SSD-convention codebases.
    """
    tx = (gt.cx - anchor.cx) / anchor.w
    ty = (gt.cy - anchor.cy) / anchor.h
    tw = math.log(gt.w / anchor.w)
    th = math.log(gt.h / anchor.h)
    if variances is not None:
        v_xy, v_wh = variances
        tx, ty = tx / v_xy, ty / v_xy
        tw, th = tw / v_wh, th / v_wh
    return BoxDelta(tx, ty, tw, th)


def decode(
    delta: BoxDelta,
    anchor: Box,
    variances: tuple[float, float] | None = None,
    with_flag: bool = False,
) -> Box | tuple[Box, bool]:
    """Exact inverse of encode. With with_flag=True also returns whether the
    log-size terms were clamped to avoid exp overflow."""
    tx, ty, tw, th = delta.tx, delta.ty, delta.tw, delta.th
    if variances is not None:
        v_xy, v_wh = variances
        tx, ty = tx * v_xy, ty * v_xy
        tw, th = tw * v_wh, th * v_wh
    clamped = abs(tw) > _LOG_SIZE_LIMIT or abs(th) > _LOG_SIZE_LIMIT
    tw = max(-_LOG_SIZE_LIMIT, min(_LOG_SIZE_LIMIT, tw))
    th = max(-_LOG_SIZE_LIMIT, min(_LOG_SIZE_LIMIT, th))
    w = anchor.w * math.exp(tw)
    h = anchor.h * math.exp(th)
    cx = anchor.cx + tx * anchor.w
    cy = anchor.cy + ty * anchor.h
    box = Box(cx - w / 2.0, cy - h / 2.0, w, h)
    return (box, clamped) if with_flag else box


def nms(dets: list[Detection], overlap: float) -> list[Detection]:
    """Greedy non-maximum suppression.

    Candidates are visited by descending score (ties broken by lower original
    index); a candidate is suppressed iff its IoU with an already-kept
    detection is strictly greater than `overlap`, so IoU exactly at the
    threshold survives.
    """
    if not 0.0 < overlap < 1.0:
        raise ValueError(f"overlap must lie in (0, 1), got {overlap}")
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, i))
    kept: list[Detection] = []
    for i in order:
        cand = dets[i]
        if all(iou(cand.box, k.box) <= overlap for k in kept):
            kept.append(cand)
    return kept


def round_detection(box: Box) -> Box:
    """Round an output box to integer pixels: floor the top-left corner and
    ceil the width and height, each independently.

    This expands position and size component-wise (x'<=x, w'>=w, ...). It
    does not always contain the input box: when frac(x) exceeds ceil(w)-w
    the right edge moves left by less than one pixel. That is the documented
    trade-off of rounding w rather than the far corner.
    """
    return Box(
        float(math.floor(box.x)),
        float(math.floor(box.y)),
        float(math.ceil(box.w)),
        float(math.ceil(box.h)),
    )
