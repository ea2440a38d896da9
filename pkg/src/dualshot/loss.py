"""Progressive anchor loss.

Each shot carries a multi-task loss: two-class softmax cross-entropy over
positive anchors plus hard-mined negatives (ratio 3:1 by default),
normalized by N_conf, and smooth-L1 between predicted deltas and encoded
ground truth over positive anchors, normalized by N_loc and weighted by
beta. The first shot matches its half-size anchors, the second its full
anchors; the combined loss is first + lambda * second.

Default normalization keeps the two terms separate (conf + beta * loc).
The alternative grouping that wraps both terms in 1/N_conf is available
behind `literal_grouping` for comparison.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .anchors import AnchorGrid
from .geometry import Box, encode
from .matching import NEGATIVE, MatchResult
from .tensor import Tensor, add, scale, smooth_l1, softmax_cross_entropy, weighted_sum

__all__ = [
    "LossReport",
    "ShotPredictions",
    "mine_negatives",
    "pal_total",
    "shot_loss",
]

FACE = 1
BACKGROUND = 0


@dataclass
class ShotPredictions:
    cls_logits: Tensor   # (1, 2, A, 1)
    loc_deltas: Tensor   # (1, 4, A, 1)
    shot: str            # first | second

    def __post_init__(self):
        b, c, n, w = self.cls_logits.shape
        if (b, c, w) != (1, 2, 1):
            raise ValueError(f"cls_logits must be (1, 2, A, 1), got {self.cls_logits.shape}")
        if self.loc_deltas.shape != (1, 4, n, 1):
            raise ValueError(
                f"loc_deltas must be (1, 4, {n}, 1), got {self.loc_deltas.shape}"
            )

    @property
    def n_anchors(self) -> int:
        return self.cls_logits.shape[2]


@dataclass
class LossReport:
    conf: float
    loc: float           # normalized by N_loc, before the beta weight
    total_shot: float
    n_pos: int
    n_conf: int
    pal_total: float | None = None
    node: Tensor | None = field(default=None, repr=False)  # graph scalar for backward
    selected_negatives: np.ndarray | None = field(default=None, repr=False)


def mine_negatives(cls_losses: np.ndarray, labels: np.ndarray, ratio: float) -> np.ndarray:
    """Indices of the hardest negatives: descending CE, ties by lower index.

    Quota is floor(ratio * n_pos), capped at the negative count; with no
    positives the top floor(ratio) (at least 1) negatives are kept so the
    loss never degenerates to zero signal.
    """
    if ratio <= 0:
        raise ValueError(f"ratio must be positive, got {ratio}")
    neg_idx = np.flatnonzero(labels == NEGATIVE)
    n_pos = int((labels != NEGATIVE).sum())
    quota = int(ratio * n_pos) if n_pos > 0 else max(1, int(ratio))
    quota = min(quota, neg_idx.size)
    if quota == 0:
        return np.zeros(0, dtype=np.int64)
    order = np.lexsort((neg_idx, -cls_losses[neg_idx]))
    return neg_idx[order[:quota]]


def _per_anchor_ce(logits: Tensor, labels01: np.ndarray) -> np.ndarray:
    """Plain-number CE per anchor, used only to rank negatives for mining."""
    z = logits.data[0, :, :, 0]                      # (2, A)
    m = z.max(axis=0)
    lse = m + np.log(np.exp(z - m).sum(axis=0))
    return lse - z[labels01, np.arange(z.shape[1])]


def shot_loss(
    preds: ShotPredictions,
    match: MatchResult,
    anchors: AnchorGrid | Sequence[Box],
    faces: Sequence[Box],
    beta: float = 1.0,
    neg_pos_ratio: float = 3.0,
    literal_grouping: bool = False,
    selected_negatives: np.ndarray | None = None,
) -> LossReport:
    """One shot's multi-task loss; returns values plus the graph scalar.

    `selected_negatives` overrides mining with a frozen index set (used by
    monotonicity tests); gradients never flow through the selection either
    way.
    """
    boxes = anchors.boxes if isinstance(anchors, AnchorGrid) else anchors
    n = len(boxes)
    if n == 0:
        raise ValueError("shot_loss needs at least one anchor")
    if preds.n_anchors != n or match.anchor_labels.shape[0] != n:
        raise ValueError(
            f"length mismatch: {preds.n_anchors} predictions, {n} anchors, "
            f"{match.anchor_labels.shape[0]} labels"
        )
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")

    labels = match.anchor_labels
    pos_idx = np.flatnonzero(labels != NEGATIVE)
    n_pos = pos_idx.size
    labels01 = np.where(labels != NEGATIVE, FACE, BACKGROUND).astype(np.int64)

    if selected_negatives is None:
        ce_all = _per_anchor_ce(preds.cls_logits, labels01)
        neg_sel = mine_negatives(ce_all, labels, neg_pos_ratio)
    else:
        neg_sel = np.asarray(selected_negatives, dtype=np.int64)
        if neg_sel.size and labels[neg_sel].max() != NEGATIVE:
            raise ValueError("selected_negatives must index negative anchors")
    n_conf = n_pos + neg_sel.size

    # conf: weighted CE over the frozen selection
    ce_node = softmax_cross_entropy(preds.cls_logits, labels01)
    w_conf = np.zeros((1, 1, n, 1))
    w_conf[0, 0, pos_idx, 0] = 1.0
    w_conf[0, 0, neg_sel, 0] = 1.0
    conf_sum = weighted_sum(ce_node, w_conf)

    # loc: weighted smooth-L1 over positives against encoded targets
    targets = np.zeros((n, 4))
    for i in pos_idx:
        d = encode(faces[labels[i]], boxes[i])
        targets[i] = (d.tx, d.ty, d.tw, d.th)
    l1_node = smooth_l1(preds.loc_deltas, targets)
    w_loc = np.zeros((1, 1, n, 1))
    if n_pos:
        w_loc[0, 0, pos_idx, 0] = 1.0 / n_pos
    loc_node = weighted_sum(l1_node, w_loc)

    if literal_grouping:
        # 1/N_conf wraps both terms: (sum CE + beta/N_loc * sum L1) / N_conf
        inner = add(conf_sum, scale(loc_node, beta))
        total_node = scale(inner, 1.0 / max(n_conf, 1))
    else:
        conf_node = scale(conf_sum, 1.0 / max(n_conf, 1))
        total_node = add(conf_node, scale(loc_node, beta))

    conf_val = conf_sum.item() / max(n_conf, 1)
    loc_val = loc_node.item()
    return LossReport(
        conf=conf_val,
        loc=loc_val,
        total_shot=total_node.item(),
        n_pos=int(n_pos),
        n_conf=int(n_conf),
        node=total_node,
        selected_negatives=neg_sel,
    )


def pal_total(first: LossReport, second: LossReport, lam: float = 1.0) -> float:
    """Combined progressive loss: first shot + lambda * second shot."""
    for rep, name in ((first, "first"), (second, "second")):
        if not np.isfinite(rep.total_shot):
            raise ValueError(f"{name} shot loss is not finite: {rep.total_shot}")
    return first.total_shot + lam * second.total_shot
