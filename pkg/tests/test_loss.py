import math

import numpy as np
import pytest

from dualshot.anchors import build_grid, default_level_specs
from dualshot.geometry import Box, encode
from dualshot.loss import LossReport, ShotPredictions, mine_negatives, pal_total, shot_loss
from dualshot.matching import NEGATIVE, match
from dualshot.tensor import Tensor, finite_diff_check


def far_anchors(n=4, w=10.0, h=15.0):
    """n mutually disjoint anchors on a wide diagonal."""
    return [Box(i * 100.0, i * 100.0, w, h) for i in range(n)]


def preds_from(logits, deltas=None):
    z = np.asarray(logits, dtype=np.float64)        # (n, 2)
    n = z.shape[0]
    cls = Tensor(z.T[None, :, :, None])
    if deltas is None:
        deltas = np.zeros((n, 4))
    loc = Tensor(np.asarray(deltas, dtype=np.float64).T[None, :, :, None])
    return ShotPredictions(cls, loc, "second")


def ce(z, label):
    return math.log(math.exp(z[0]) + math.exp(z[1])) - z[label]


class TestMineNegatives:
    def test_quota_is_ratio_times_positives(self):
        labels = np.array([0, 1, NEGATIVE, NEGATIVE, NEGATIVE, NEGATIVE,
                           NEGATIVE, NEGATIVE, NEGATIVE])
        losses = np.arange(9.0)
        sel = mine_negatives(losses, labels, 3.0)
        assert sel.size == 6
        assert sorted(sel.tolist()) == [3, 4, 5, 6, 7, 8]  # 6 hardest of the 7

    def test_hardest_first(self):
        labels = np.array([0, NEGATIVE, NEGATIVE, NEGATIVE])
        losses = np.array([9.0, 0.1, 5.0, 2.0])
        sel = mine_negatives(losses, labels, 2.0)
        assert sel.tolist() == [2, 3]

    def test_fewer_than_quota_keeps_all(self):
        labels = np.array([0, 0, NEGATIVE, NEGATIVE])
        sel = mine_negatives(np.ones(4), labels, 3.0)
        assert sorted(sel.tolist()) == [2, 3]

    def test_zero_positives_keeps_floor_ratio(self):
        labels = np.full(10, NEGATIVE)
        losses = np.arange(10.0)
        sel = mine_negatives(losses, labels, 3.0)
        assert sel.tolist() == [9, 8, 7]

    def test_zero_positives_floor_is_at_least_one(self):
        labels = np.full(5, NEGATIVE)
        sel = mine_negatives(np.ones(5), labels, 0.5)
        assert sel.size == 1

    def test_ties_break_by_lower_index(self):
        labels = np.full(4, NEGATIVE)
        sel = mine_negatives(np.array([1.0, 1.0, 1.0, 1.0]), labels, 2.0)
        assert sel.tolist() == [0, 1]

    def test_bad_ratio_rejected(self):
        with pytest.raises(ValueError):
            mine_negatives(np.ones(2), np.full(2, NEGATIVE), 0.0)


class TestShotLoss:
    def test_saturated_background_goes_to_zero(self):
        anchors = far_anchors(3)
        m = match(anchors, [], 0.4)
        preds = preds_from([[40.0, -40.0]] * 3)
        rep = shot_loss(preds, m, anchors, [])
        assert rep.n_pos == 0
        assert rep.loc == 0.0
        assert rep.total_shot < 1e-8

    def test_perfect_delta_gives_zero_loc(self):
        anchors = far_anchors(4)
        face = anchors[0]
        m = match(anchors, [face], 0.4)
        d = encode(face, anchors[0])
        assert (d.tx, d.ty, d.tw, d.th) == (0.0, 0.0, 0.0, 0.0)
        rep = shot_loss(preds_from([[0.0, 0.0]] * 4), m, anchors, [face])
        assert rep.loc == 0.0
        assert rep.n_pos == 1

    def test_hand_four_anchor_case(self):
        anchors = far_anchors(4)
        face = anchors[0]                       # IoU 1 with anchor 0, 0 elsewhere
        m = match(anchors, [face], 0.4)
        assert m.anchor_labels.tolist() == [0, NEGATIVE, NEGATIVE, NEGATIVE]
        logits = [[0.3, -0.2], [1.0, 0.5], [-0.4, 0.8], [2.0, -1.0]]
        rep = shot_loss(preds_from(logits), m, anchors, [face], neg_pos_ratio=3.0)
        # 1 positive (label face=1) + all 3 negatives (label background=0)
        hand = (ce(logits[0], 1) + ce(logits[1], 0)
                + ce(logits[2], 0) + ce(logits[3], 0))
        assert rep.n_conf == 4
        assert rep.conf == pytest.approx(hand / 4.0, rel=1e-12)

    def test_loc_normalized_by_positives(self):
        anchors = far_anchors(4)
        faces = [anchors[0], anchors[1]]
        m = match(anchors, faces, 0.4)
        deltas = np.zeros((4, 4))
        deltas[0] = [0.5, 0.0, 0.0, 0.0]        # smooth-L1 0.125
        deltas[1] = [2.0, 0.0, 0.0, 0.0]        # smooth-L1 1.5
        rep = shot_loss(preds_from([[0.0, 0.0]] * 4, deltas), m, anchors, faces)
        assert rep.n_pos == 2
        assert rep.loc == pytest.approx((0.125 + 1.5) / 2.0)

    def test_total_is_conf_plus_beta_loc(self):
        anchors = far_anchors(4)
        face = anchors[0]
        m = match(anchors, [face], 0.4)
        deltas = np.zeros((4, 4))
        deltas[0] = [2.0, 0.0, 0.0, 0.0]
        rep = shot_loss(preds_from([[0.5, -0.5]] * 4, deltas), m, anchors, [face], beta=2.0)
        assert rep.total_shot == pytest.approx(rep.conf + 2.0 * rep.loc, rel=1e-12)

    def test_literal_grouping_wraps_both_terms(self):
        anchors = far_anchors(4)
        face = anchors[0]
        m = match(anchors, [face], 0.4)
        deltas = np.zeros((4, 4))
        deltas[0] = [2.0, 0.0, 0.0, 0.0]
        logits = [[0.5, -0.5]] * 4
        plain = shot_loss(preds_from(logits, deltas), m, anchors, [face], beta=2.0)
        lit = shot_loss(preds_from(logits, deltas), m, anchors, [face], beta=2.0,
                        literal_grouping=True)
        assert lit.total_shot == pytest.approx(
            (plain.conf * plain.n_conf + 2.0 * plain.loc) / plain.n_conf, rel=1e-12)
        assert lit.total_shot != pytest.approx(plain.total_shot)

    def test_frozen_selection_validated(self):
        anchors = far_anchors(3)
        face = anchors[0]
        m = match(anchors, [face], 0.4)
        with pytest.raises(ValueError):
            shot_loss(preds_from([[0.0, 0.0]] * 3), m, anchors, [face],
                      selected_negatives=np.array([0]))  # anchor 0 is positive

    def test_length_mismatch_rejected(self):
        anchors = far_anchors(3)
        m = match(anchors, [], 0.4)
        with pytest.raises(ValueError):
            shot_loss(preds_from([[0.0, 0.0]] * 4), m, anchors, [])

    def test_zero_anchors_rejected(self):
        anchors = far_anchors(1)
        m = match(anchors, [], 0.4)
        with pytest.raises(ValueError):
            shot_loss(preds_from([[0.0, 0.0]]), m, [], [])

    def test_bad_beta_rejected(self):
        anchors = far_anchors(1)
        m = match(anchors, [], 0.4)
        with pytest.raises(ValueError):
            shot_loss(preds_from([[0.0, 0.0]]), m, anchors, [], beta=0.0)


class TestGradients:
    def setup_case(self, seed=0):
        rng = np.random.default_rng(seed)
        spec = default_level_specs(640)[1]
        spec = type(spec)(index=spec.index, stride=spec.stride, map_h=4, map_w=4,
                          scale_second_shot=spec.scale_second_shot,
                          scale_first_shot=spec.scale_first_shot)
        grid = build_grid(spec, "second")
        faces = [Box(6.0, 2.0, 26.0, 40.0), Box(2.0, 3.0, 30.0, 44.0)]
        m = match(list(grid.boxes), faces, 0.4, force_best=True)
        logits = Tensor(rng.normal(0.0, 1.0, (1, 2, 16, 1)))
        deltas = Tensor(rng.normal(0.0, 0.5, (1, 4, 16, 1)))
        probe = shot_loss(ShotPredictions(logits, deltas, "second"), m, grid, faces)
        return grid, faces, m, logits, deltas, probe.selected_negatives

    def test_logits_and_deltas_match_finite_differences(self):
        grid, faces, m, logits, deltas, frozen = self.setup_case()

        def fn_logits(t):
            return shot_loss(ShotPredictions(t, deltas, "second"), m, grid, faces,
                             selected_negatives=frozen).node

        def fn_deltas(t):
            return shot_loss(ShotPredictions(logits, t, "second"), m, grid, faces,
                             selected_negatives=frozen).node

        rep = finite_diff_check(fn_logits, logits, 1e-4, np.random.default_rng(0))
        assert rep.passed, str(rep)
        rep = finite_diff_check(fn_deltas, deltas, 1e-4, np.random.default_rng(0))
        assert rep.passed, str(rep)

    def test_background_confidence_monotonicity(self):
        # stronger background logits on frozen negatives never increase conf
        grid, faces, m, logits, deltas, frozen = self.setup_case(seed=3)
        neg = np.asarray(frozen)
        last = math.inf
        for bump in (0.0, 0.5, 1.0, 2.0, 4.0):
            z = logits.data.copy()
            z[0, 0, neg, 0] += bump        # background channel up
            z[0, 1, neg, 0] -= bump        # face channel down
            rep = shot_loss(ShotPredictions(Tensor(z), deltas, "second"), m, grid,
                            faces, selected_negatives=frozen)
            assert rep.conf <= last + 1e-12
            last = rep.conf

    def test_loc_ignores_negatives(self):
        grid, faces, m, logits, deltas, frozen = self.setup_case(seed=5)
        neg_mask = m.anchor_labels == NEGATIVE
        d2 = deltas.data.copy()
        d2[0, :, neg_mask, 0] = 99.0
        a = shot_loss(ShotPredictions(logits, deltas, "second"), m, grid, faces,
                      selected_negatives=frozen)
        b = shot_loss(ShotPredictions(logits, Tensor(d2), "second"), m, grid, faces,
                      selected_negatives=frozen)
        assert a.loc == b.loc
        assert a.total_shot == pytest.approx(b.total_shot, rel=1e-15)


class TestScaleEquivariance:
    def test_halved_geometry_gives_identical_loss(self):
        # the first shot trains on half-scale anchors; shrinking anchors and
        # faces together changes nothing because IoU and encode are ratios
        rng = np.random.default_rng(17)
        spec = default_level_specs(640)[2]
        anchors = list(build_grid(spec, "second").boxes)[:64]
        faces = []
        for _ in range(3):
            w = float(rng.uniform(40.0, 90.0))
            faces.append(Box(float(rng.uniform(0, 200)), float(rng.uniform(0, 200)),
                             w, 1.5 * w))
        half_anchors = [Box(b.x / 2, b.y / 2, b.w / 2, b.h / 2) for b in anchors]
        half_faces = [Box(b.x / 2, b.y / 2, b.w / 2, b.h / 2) for b in faces]

        logits = Tensor(rng.normal(0.0, 1.0, (1, 2, 64, 1)))
        deltas = Tensor(rng.normal(0.0, 0.5, (1, 4, 64, 1)))

        m_full = match(anchors, faces, 0.4, force_best=True)
        m_half = match(half_anchors, half_faces, 0.4, force_best=True)
        assert m_full.anchor_labels.tolist() == m_half.anchor_labels.tolist()

        a = shot_loss(ShotPredictions(logits, deltas, "second"), m_full, anchors, faces)
        b = shot_loss(ShotPredictions(logits, deltas, "first"), m_half, half_anchors, half_faces)
        assert abs(a.total_shot - b.total_shot) < 1e-12
        assert abs(a.conf - b.conf) < 1e-12
        assert abs(a.loc - b.loc) < 1e-12


class TestPalTotal:
    def rep(self, total):
        return LossReport(conf=total, loc=0.0, total_shot=total, n_pos=1, n_conf=4)

    def test_unit_lambda_sums(self):
        assert pal_total(self.rep(0.5), self.rep(0.5), lam=1.0) == 1.0

    def test_zero_lambda_first_only(self):
        assert pal_total(self.rep(0.7), self.rep(123.0), lam=0.0) == 0.7

    def test_unit_lambda_equals_sum(self):
        rng = np.random.default_rng(19)
        for _ in range(100):
            a, b = float(rng.uniform(0, 5)), float(rng.uniform(0, 5))
            assert abs(pal_total(self.rep(a), self.rep(b), 1.0) - (a + b)) < 1e-12

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError):
            pal_total(self.rep(math.nan), self.rep(0.5), 1.0)
