"""Anchor-to-face assignment and matching statistics.

Each anchor is assigned to its highest-IoU face when that IoU clears the
threshold (inclusive comparison, which favors recall), otherwise it is
negative. An optional force-best pass additionally gives every face its
single best anchor regardless of threshold, which is the classic guarantee
used during training; it is left off when collecting matching statistics so
the numbers reflect pure threshold matching.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .anchors import AnchorGrid
from .geometry import Box

__all__ = [
    "NEGATIVE",
    "MatchResult",
    "MatchedStats",
    "ScaleHistogram",
    "boxes_array",
    "iou_matrix",
    "match",
    "matched_count_stats",
    "scale_histogram",
]

NEGATIVE = -1

# matched-count histogram columns 0..20; counts >= 20 land in the last bin
COUNT_HIST_BINS = 21

# log2 bin edges for matched-count statistics (8..512 -> 6 bins)
STATS_BIN_EDGES = (8.0, 16.0, 32.0, 64.0, 128.0, 256.0, 512.0)

# scale histogram centers: the anchor scale set, geometric bin boundaries
SCALE_HIST_CENTERS = (16.0, 32.0, 64.0, 128.0, 256.0, 512.0)


def boxes_array(boxes: Sequence[Box]) -> np.ndarray:
    """(N, 4) float array of x, y, w, h."""
    out = np.empty((len(boxes), 4))
    for i, b in enumerate(boxes):
        out[i] = (b.x, b.y, b.w, b.h)
    return out


def iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise IoU of (N, 4) vs (M, 4) xywh arrays -> (N, M)."""
    ax2 = a[:, 0] + a[:, 2]
    ay2 = a[:, 1] + a[:, 3]
    bx2 = b[:, 0] + b[:, 2]
    by2 = b[:, 1] + b[:, 3]
    ix = np.minimum(ax2[:, None], bx2[None, :]) - np.maximum(a[:, 0, None], b[None, :, 0])
    iy = np.minimum(ay2[:, None], by2[None, :]) - np.maximum(a[:, 1, None], b[None, :, 1])
    inter = np.clip(ix, 0.0, None) * np.clip(iy, 0.0, None)
    inter[(ix <= 0) | (iy <= 0)] = 0.0
    areas_a = a[:, 2] * a[:, 3]
    areas_b = b[:, 2] * b[:, 3]
    return inter / (areas_a[:, None] + areas_b[None, :] - inter)


@dataclass(frozen=True)
class MatchResult:
    anchor_labels: np.ndarray     # (A,) int64, NEGATIVE or face index
    per_face_counts: np.ndarray   # (G,) int64
    per_face_scales: np.ndarray   # (G,) float, sqrt(w*h)

    def n_positive(self) -> int:
        return int((self.anchor_labels != NEGATIVE).sum())


def match(
    anchors: Sequence[Box] | np.ndarray,
    faces: Sequence[Box],
    threshold: float,
    force_best: bool = False,
) -> MatchResult:
    """Assign each anchor to its highest-IoU face iff IoU >= threshold.

    With force_best, every face then claims its single best anchor (ties by
    lower anchor index) regardless of threshold; faces are processed in
    index order, so on a collision the later face keeps the anchor.
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    a = anchors if isinstance(anchors, np.ndarray) else boxes_array(anchors)
    if a.shape[0] == 0:
        raise ValueError("match needs at least one anchor")
    n_anchors = a.shape[0]
    scales = np.array([f.scale for f in faces])
    if len(faces) == 0:
        return MatchResult(
            np.full(n_anchors, NEGATIVE, dtype=np.int64),
            np.zeros(0, dtype=np.int64),
            scales,
        )

    m = iou_matrix(a, boxes_array(faces))          # (A, G)
    best_face = m.argmax(axis=1)                   # ties -> lower face index
    best_iou = m[np.arange(n_anchors), best_face]
    labels = np.where(best_iou >= threshold, best_face, NEGATIVE).astype(np.int64)

    if force_best:
        for g in range(len(faces)):
            labels[int(m[:, g].argmax())] = g      # ties -> lower anchor index

    counts = np.bincount(labels[labels != NEGATIVE], minlength=len(faces)).astype(np.int64)
    return MatchResult(labels, counts, scales)


@dataclass(frozen=True)
class MatchedStats:
    bin_edges: tuple[float, ...]       # log2 edges 8..512
    face_counts: np.ndarray            # (bins,) faces per scale bin
    mean_matched: np.ndarray           # (bins,) mean matched anchors, nan when empty
    count_hist: np.ndarray             # (bins, COUNT_HIST_BINS) matched-count histogram
    mean_matched_overall: float | None  # None when the dataset has no faces


def _bin_index(scales: np.ndarray, edges: Sequence[float]) -> np.ndarray:
    idx = np.digitize(scales, edges[1:-1], right=False)
    return np.clip(idx, 0, len(edges) - 2)


def matched_count_stats(
    dataset: Sequence[Sequence[Box]],
    grids: Sequence[AnchorGrid],
    threshold: float,
) -> MatchedStats:
    """Per-face matched-anchor counts over a dataset, aggregated by face
    scale into log2 bins, plus the overall mean. force_best is off here so
    the numbers reflect pure threshold matching.
    """
    if len(dataset) == 0:
        raise ValueError("matched_count_stats needs a non-empty dataset")
    anchor_arr = np.concatenate([boxes_array(g.boxes) for g in grids])
    n_bins = len(STATS_BIN_EDGES) - 1
    face_counts = np.zeros(n_bins, dtype=np.int64)
    matched_sums = np.zeros(n_bins)
    hist = np.zeros((n_bins, COUNT_HIST_BINS), dtype=np.int64)
    total_matched = 0
    total_faces = 0

    for faces in dataset:
        if len(faces) == 0:
            continue
        res = match(anchor_arr, list(faces), threshold, force_best=False)
        bins = _bin_index(res.per_face_scales, STATS_BIN_EDGES)
        for b, c in zip(bins, res.per_face_counts):
            face_counts[b] += 1
            matched_sums[b] += int(c)
            hist[b, min(int(c), COUNT_HIST_BINS - 1)] += 1
        total_matched += int(res.per_face_counts.sum())
        total_faces += len(faces)

    with np.errstate(invalid="ignore"):
        mean_matched = np.where(face_counts > 0, matched_sums / np.maximum(face_counts, 1), np.nan)
    overall = (total_matched / total_faces) if total_faces else None
    return MatchedStats(STATS_BIN_EDGES, face_counts, mean_matched, hist, overall)


@dataclass(frozen=True)
class ScaleHistogram:
    centers: tuple[float, ...]
    counts: np.ndarray


def scale_histogram(dataset: Sequence[Sequence[Box]]) -> ScaleHistogram:
    """Face-scale histogram with bins centered on the anchor scale set.

    Bin k covers [c_k/sqrt(2), c_k*sqrt(2)); out-of-range scales clip into
    the end bins so every face is counted.
    """
    centers = np.array(SCALE_HIST_CENTERS)
    counts = np.zeros(len(centers), dtype=np.int64)
    boundaries = np.sqrt(centers[:-1] * centers[1:])   # geometric midpoints
    for faces in dataset:
        for f in faces:
            idx = int(np.digitize(f.scale, boundaries))
            counts[idx] += 1
    return ScaleHistogram(tuple(centers.tolist()), counts)
