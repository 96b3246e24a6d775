import math

import numpy as np
import pytest

from scopedepth import (
    ABLATION_ROWS,
    AblationToggles,
    DepthMap,
    MultiScaleConfig,
    SilogConfig,
    ValidMask,
    build_gt_pyramid,
    edge_loss,
    metric_log_l1,
    multiscale_silog,
    plain_l1,
    silog,
    temporal_reg,
    total_objective,
    video_normalize,
)
from scopedepth.losses import resolve_ablation_row
from conftest import central_diff, rand_depth, rand_mask, rel_grad_err

GRAD_TOL = 1e-4
N_INSTANCES = 50


class TestSilog:
    def test_zero_at_perfect_fit(self, rng):
        gt = rand_depth(rng)
        value, grad = silog(gt, gt, np.ones_like(gt, bool))
        assert value <= 1e-5  # sqrt of the guarded radicand
        assert np.all(grad == 0)

    def test_constant_scale_closed_form(self, rng):
        gt = rand_depth(rng)
        mask = np.ones_like(gt, bool)
        for c in np.geomspace(0.1, 10, 7):
            value, _ = silog(c * gt, gt, mask)
            # abs floor admits sqrt(sqrt_guard) = 1e-6 at the c = 1 grid point
            assert value == pytest.approx(abs(math.log(c)) * math.sqrt(0.5), rel=1e-9, abs=2e-6)

    def test_two_pixel_instance(self):
        gt = np.array([[1.0, math.e**2]])
        pred = np.array([[1.0, 1.0]])
        value, _ = silog(pred, gt, np.ones((1, 2), bool))
        assert value == pytest.approx(math.sqrt(1.5), abs=1e-12)

    def test_gradients_match_finite_differences(self, rng):
        cfg = SilogConfig()
        mask = None
        for _ in range(N_INSTANCES):
            gt = rand_depth(rng)
            pred = rand_depth(rng)
            mask = rand_mask(rng)
            _, grad = silog(pred, gt, mask, cfg)
            fd = central_diff(lambda p: silog(p, gt, mask, cfg, want_grad=False)[0], pred)
            assert rel_grad_err(grad, fd) <= GRAD_TOL

    def test_variance_focus_config(self):
        with pytest.raises(ValueError):
            SilogConfig(variance_focus=0.0)
        with pytest.raises(ValueError):
            SilogConfig(sqrt_guard=-1.0)


class TestPlainL1:
    def test_examples(self):
        one = np.ones((1, 1), bool)
        assert plain_l1(np.array([[5.0]]), np.array([[2.0]]), one)[0] == 3.0
        value, _ = plain_l1(np.array([[2.0, 1.0]]), np.array([[1.0, 3.0]]), np.ones((1, 2), bool))
        assert value == pytest.approx(1.5)

    def test_gradients(self, rng):
        for _ in range(N_INSTANCES):
            gt, pred, mask = rand_depth(rng), rand_depth(rng), rand_mask(rng)
            _, grad = plain_l1(pred, gt, mask)
            fd = central_diff(lambda p: plain_l1(p, gt, mask, want_grad=False)[0], pred)
            assert rel_grad_err(grad, fd) <= GRAD_TOL


class TestMetricLogL1:
    def test_constant_factor_e(self, rng):
        gt = rand_depth(rng)
        value, _ = metric_log_l1(math.e * gt, gt, np.ones_like(gt, bool))
        assert value == pytest.approx(1.0, abs=1e-12)

    def test_joint_scale_invariance(self, rng):
        gt, pred, mask = rand_depth(rng), rand_depth(rng), rand_mask(rng)
        base, _ = metric_log_l1(pred, gt, mask)
        for alpha in (0.2, 3.0, 41.5):
            scaled, _ = metric_log_l1(alpha * pred, alpha * gt, mask)
            assert scaled == pytest.approx(base, rel=1e-10)

    def test_near_vs_far_weighting(self):
        # With a fixed 10% relative error, the linear-domain l1 contribution
        # grows with depth while the log-domain one stays constant.
        mask = np.ones((1, 1), bool)
        for g in (1.0, 100.0):
            gt = np.array([[g]])
            lin, _ = plain_l1(1.1 * gt, gt, mask)
            logd, _ = metric_log_l1(1.1 * gt, gt, mask)
            assert lin == pytest.approx(0.1 * g, rel=1e-12)
            assert logd == pytest.approx(math.log(1.1), rel=1e-12)

    def test_gradients(self, rng):
        for _ in range(N_INSTANCES):
            gt, pred, mask = rand_depth(rng), rand_depth(rng), rand_mask(rng)
            _, grad = metric_log_l1(pred, gt, mask)
            fd = central_diff(lambda p: metric_log_l1(p, gt, mask, want_grad=False)[0], pred)
            assert rel_grad_err(grad, fd) <= GRAD_TOL


class TestEdgeLoss:
    def test_global_scale_invariance(self, rng):
        gt = rand_depth(rng)
        mask = np.ones_like(gt, bool)
        for c in (0.5, 2.0, 10.0):
            value, _ = edge_loss(c * gt, gt, mask)
            assert abs(value) <= 1e-12

    def test_two_by_two_instance(self):
        gt = np.array([[1.0, 2.0], [1.0, 2.0]])
        pred = np.array([[1.0, 4.0], [1.0, 4.0]])
        value, _ = edge_loss(pred, gt, np.ones((2, 2), bool))
        assert value == pytest.approx(math.log(2) / 2, abs=1e-12)

    def test_invalid_neighbor_drops_term(self):
        gt = np.array([[1.0, 2.0], [1.0, 2.0]])
        pred = np.array([[1.0, 4.0], [1.0, 4.0]])
        mask = np.array([[True, False], [True, True]])
        # only the bottom horizontal pair remains; N = 3 valid pixels
        value, _ = edge_loss(pred, gt, mask)
        assert value == pytest.approx(math.log(2) / 3, abs=1e-12)

    def test_gradients(self, rng):
        for _ in range(N_INSTANCES):
            gt, pred, mask = rand_depth(rng), rand_depth(rng), rand_mask(rng)
            _, grad = edge_loss(pred, gt, mask)
            fd = central_diff(lambda p: edge_loss(p, gt, mask, want_grad=False)[0], pred)
            assert rel_grad_err(grad, fd) <= GRAD_TOL


def _pyramid_pair(rng, size=8):
    gt = DepthMap(rand_depth(rng, (size, size)))
    mask = ValidMask(rand_mask(rng, (size, size)))
    pyr = build_gt_pyramid(gt, mask)
    preds = [rand_depth(rng, pyr.depth(l).shape) for l in range(1, 5)]
    return preds, pyr


class TestMultiscaleSilog:
    def test_perfect_predictions(self, rng):
        gt = DepthMap(rand_depth(rng))
        pyr = build_gt_pyramid(gt, ValidMask(np.ones(gt.shape, bool)))
        preds = [pyr.depth(l).values for l in range(1, 5)]
        value, per_level, _ = multiscale_silog(preds, pyr)
        assert value <= 4e-5
        assert all(v <= 1e-5 for v in per_level)

    def test_constant_scale_all_levels(self, rng):
        gt = DepthMap(rand_depth(rng))
        pyr = build_gt_pyramid(gt, ValidMask(np.ones(gt.shape, bool)))
        preds = [2.0 * pyr.depth(l).values for l in range(1, 5)]
        value, _, _ = multiscale_silog(preds, pyr)
        assert value == pytest.approx(4 * math.log(2) * math.sqrt(0.5), rel=1e-9)

    def test_weight_masking(self, rng):
        preds, pyr = _pyramid_pair(rng)
        cfg = MultiScaleConfig(level_weights=(1.0, 0.0, 0.0, 0.0))
        value, per_level, grads = multiscale_silog(preds, pyr, cfg)
        single, single_grad = silog(preds[0], pyr.depth(1).values, pyr.mask(1).flags)
        assert value == pytest.approx(single, rel=1e-12)
        assert np.allclose(grads[0], single_grad)
        assert all(np.all(g == 0) for g in grads[1:])


class TestVideoNormalize:
    def test_two_frame_instance(self):
        normalized, norm = video_normalize(
            [np.array([[1.0]]), np.array([[3.0]])], [np.ones((1, 1), bool)] * 2
        )
        assert norm.median == 2.0 and norm.mad == 1.0
        assert normalized[0][0, 0] == -1.0 and normalized[1][0, 0] == 1.0

    def test_affine_equivariance(self, rng):
        preds = [rand_depth(rng) for _ in range(3)]
        masks = [rand_mask(rng) for _ in range(3)]
        base, _ = video_normalize(preds, masks)
        normalized_a, _ = video_normalize(preds, masks)
        normalized_b, _ = video_normalize([2.5 * p + 7.0 for p in preds], masks)
        for a, b in zip(normalized_a, normalized_b):
            assert np.allclose(a, b, atol=1e-10)

    def test_constant_video_rejected(self):
        with pytest.raises(ValueError, match="constant"):
            video_normalize([np.full((2, 2), 5.0)] * 2, [np.ones((2, 2), bool)] * 2)


class TestTemporalReg:
    def test_identical_frames(self, rng):
        frame = rand_depth(rng)
        value, _ = temporal_reg([frame, frame.copy()], [np.ones_like(frame, bool)] * 2)
        assert value == 0.0

    def test_two_frame_instance(self):
        normalized = [np.array([[-1.0]]), np.array([[1.0]])]
        value, grads = temporal_reg(normalized, [np.ones((1, 1), bool)] * 2)
        assert value == pytest.approx(2.0, abs=1e-15)
        assert grads[0][0, 0] == -1.0 and grads[1][0, 0] == 1.0

    def test_needs_two_frames(self, rng):
        with pytest.raises(ValueError):
            temporal_reg([rand_depth(rng)], [np.ones((8, 8), bool)])

    def test_gradients(self, rng):
        for _ in range(20):
            frames = [rng.standard_normal((6, 6)) for _ in range(3)]
            masks = [rand_mask(rng, (6, 6)) for _ in range(3)]
            _, grads = temporal_reg(frames, masks)
            for t in range(3):
                def value_at(x, t=t):
                    moved = list(frames)
                    moved[t] = x
                    return temporal_reg(moved, masks, want_grad=False)[0]
                fd = central_diff(value_at, frames[t])
                assert rel_grad_err(grads[t], fd) <= GRAD_TOL

    def test_affine_invariance_through_normalization(self, rng):
        preds = [rand_depth(rng) for _ in range(4)]
        masks = [rand_mask(rng) for _ in range(4)]
        normalized, _ = video_normalize(preds, masks)
        base, _ = temporal_reg(normalized, masks, want_grad=False)
        for _ in range(20):
            alpha = float(rng.uniform(0.05, 20.0))
            beta = float(rng.uniform(-50.0, 50.0))
            moved = [alpha * p + beta for p in preds]
            if (np.concatenate([m[msk] for m, msk in zip(moved, masks)]) <= 0).any():
                moved = [m - min(0.0, min(mm[msk].min() for mm, msk in zip(moved, masks))) + 1.0 for m in moved]
            normalized2, _ = video_normalize(moved, masks)
            value, _ = temporal_reg(normalized2, masks, want_grad=False)
            assert abs(value - base) <= 1e-7


class TestAblationToggles:
    def test_exactly_one_base_term(self):
        with pytest.raises(ValueError):
            AblationToggles(silog=True, plain_l1=True)
        with pytest.raises(ValueError):
            AblationToggles(silog=False, plain_l1=False)

    def test_flag_roundtrip(self):
        for name, toggles in ABLATION_ROWS.items():
            again = AblationToggles.from_flags(toggles.to_flags())
            assert again == toggles, name

    def test_row_lookup(self):
        assert resolve_ablation_row("FlashDepth").plain_l1
        assert resolve_ablation_row("+ Temporal reg.") == ABLATION_ROWS["+ Temporal reg."]
        assert resolve_ablation_row("+ temporal reg") == ABLATION_ROWS["+ Temporal reg."]
        with pytest.raises(ValueError):
            resolve_ablation_row("nonsense")

    def test_table_rows_are_incremental(self):
        names = list(ABLATION_ROWS)
        sizes = [len(ABLATION_ROWS[n].to_flags()) for n in names[1:]]
        assert sizes == list(range(1, 8))  # each row adds one component
        assert len(ABLATION_ROWS["+ Temporal reg."].to_flags()) == 7

    def test_unknown_flag_rejected(self):
        with pytest.raises(ValueError):
            AblationToggles.from_flags(["silog", "bogus"])


def _window(rng, T=3, size=8):
    gts, preds = [], []
    for _ in range(T):
        gt = DepthMap(rand_depth(rng, (size, size)))
        mask = ValidMask(rand_mask(rng, (size, size)))
        gts.append(build_gt_pyramid(gt, mask))
        preds.append([rand_depth(rng, gts[-1].depth(l).shape) for l in range(1, 5)])
    return preds, gts


class TestTotalObjective:
    def test_zero_for_perfect_fit(self, rng):
        gt = DepthMap(rand_depth(rng))
        pyr = build_gt_pyramid(gt, ValidMask(np.ones(gt.shape, bool)))
        preds = [[pyr.depth(l).values for l in range(1, 5)]]
        toggles = AblationToggles(metric_loss=True, edge_loss=True)
        breakdown, _ = total_objective(preds, [pyr], toggles)
        assert breakdown.total <= 1e-4

    def test_temporal_weight(self, rng):
        # Two identical-pyramid frames built so that only the temporal term
        # is nonzero: perfect per-frame fits with a cross-frame wobble.
        size = 4
        gt = DepthMap(rand_depth(rng, (size, size)))
        pyr = build_gt_pyramid(gt, ValidMask(np.ones((size, size), bool)))
        perfect = [pyr.depth(l).values for l in range(1, 5)]
        toggles = AblationToggles(temporal_reg=True)
        breakdown, _ = total_objective([perfect, perfect], [pyr, pyr], toggles)
        assert breakdown.total == pytest.approx(
            breakdown.ms + breakdown.metric + breakdown.edge + 0.01 * breakdown.temporal
        )

    def test_manufactured_temporal_value(self):
        # one valid pixel per frame, values {1, 3}: normalized {-1, +1},
        # temporal term 2.0 weighted by 0.01
        gt = DepthMap(np.full((1, 1), 2.0))
        pyr = build_gt_pyramid(gt, ValidMask(np.ones((1, 1), bool)))
        preds_a = [np.full(pyr.depth(l).shape, 1.0) for l in range(1, 5)]
        preds_b = [np.full(pyr.depth(l).shape, 3.0) for l in range(1, 5)]
        toggles = AblationToggles(temporal_reg=True)
        breakdown, _ = total_objective([preds_a, preds_b], [pyr, pyr], toggles)
        assert breakdown.temporal == pytest.approx(2.0, abs=1e-12)
        assert breakdown.total == pytest.approx(
            breakdown.ms + 0.01 * 2.0, abs=1e-12
        )

    def test_single_frame_temporal_flagged(self, rng):
        preds, gts = _window(rng, T=1)
        toggles = AblationToggles(temporal_reg=True)
        breakdown, _ = total_objective(preds, gts, toggles)
        assert breakdown.temporal == 0.0
        assert breakdown.temporal_skipped

    def test_disabled_toggles_contribute_zero(self, rng):
        preds, gts = _window(rng)
        base = AblationToggles()
        breakdown, _ = total_objective(preds, gts, base)
        assert breakdown.metric == 0.0 and breakdown.edge == 0.0 and breakdown.temporal == 0.0
        assert breakdown.total == pytest.approx(breakdown.ms)

    def test_edge_row_excludes_multiscale_and_temporal(self, rng):
        preds, gts = _window(rng)
        toggles = ABLATION_ROWS["+ Edge loss"]
        assert not toggles.multi_scale and not toggles.temporal_reg
        breakdown, _ = total_objective(preds, gts, toggles)
        # base term is single-level silog: coarser slots stay empty
        assert breakdown.per_level_silog[1:] == (0.0, 0.0, 0.0)
        assert breakdown.temporal == 0.0

    def test_flashdepth_row_is_plain_l1(self, rng):
        preds, gts = _window(rng)
        breakdown, _ = total_objective(preds, gts, ABLATION_ROWS["FlashDepth"])
        expected = np.mean(
            [plain_l1(p[0], g.depth(1).values, g.mask(1).flags)[0] for p, g in zip(preds, gts)]
        )
        assert breakdown.ms == pytest.approx(float(expected), rel=1e-12)

    def test_gradients_full_configuration(self, rng):
        toggles = AblationToggles(
            metric_loss=True, edge_loss=True, multi_scale=True, temporal_reg=True
        )
        for _ in range(8):
            preds, gts = _window(rng, T=3, size=8)
            _, norm = video_normalize([p[0] for p in preds], [g.mask(1).flags for g in gts])
            _, grads = total_objective(preds, gts, toggles, frozen_norm=norm)
            for t in range(3):
                for l in range(4):
                    def value_at(x, t=t, l=l):
                        moved = [list(p) for p in preds]
                        moved[t][l] = x
                        bd, _ = total_objective(
                            moved, gts, toggles, frozen_norm=norm, want_grad=False
                        )
                        return bd.total
                    fd = central_diff(value_at, preds[t][l])
                    assert rel_grad_err(grads[t][l], fd) <= GRAD_TOL
