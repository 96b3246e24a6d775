import math

import numpy as np
import pytest

from scopedepth import (
    BoundaryF1Config,
    MetricRecord,
    aggregate_report,
    boundary_f1,
    frame_scale,
    frame_variance,
    pixel_metrics,
)
from conftest import rand_depth, rand_mask


def brute_force_boundary_f1(pred, gt, mask, cfg: BoundaryF1Config) -> float:
    """Independent oracle: explicit enumeration of all 4-connected pairs."""
    h, w = gt.shape
    pairs = []
    for r in range(h):
        for c in range(w):
            if c + 1 < w and mask[r, c] and mask[r, c + 1]:
                pairs.append(((r, c), (r, c + 1)))
            if r + 1 < h and mask[r, c] and mask[r + 1, c]:
                pairs.append(((r, c), (r + 1, c)))
    assert pairs
    thresholds = [
        cfg.t_min + (cfg.t_max - cfg.t_min) * k / (cfg.num_thresholds - 1)
        if cfg.num_thresholds > 1
        else cfg.t_min
        for k in range(cfg.num_thresholds)
    ]
    total, wsum = 0.0, 0.0
    for t in thresholds:
        tp = fp = fn = n_gt = n_pred = 0
        for (i, j) in pairs:
            rg = max(gt[i] / gt[j], gt[j] / gt[i])
            rp = max(pred[i] / pred[j], pred[j] / pred[i])
            b_gt, b_pred = rg > t, rp > t
            n_gt += b_gt
            n_pred += b_pred
            tp += b_gt and b_pred
        if n_gt == 0 and n_pred == 0:
            f1 = 1.0
        elif n_gt == 0 or n_pred == 0 or tp == 0:
            f1 = 0.0
        else:
            p, r = tp / n_pred, tp / n_gt
            f1 = 2 * p * r / (p + r)
        total += t * f1
        wsum += t
    return total / wsum


class TestPixelMetrics:
    def test_identity(self, rng):
        gt = rand_depth(rng)
        rec = pixel_metrics(gt, gt, np.ones_like(gt, bool))
        assert rec.absrel == rec.sqrel == rec.rmse == rec.rmse_log == rec.l1 == 0.0
        assert rec.delta1 == 1.0

    def test_three_pixel_instance(self):
        gt = np.array([[1.0, 2.0, 4.0]])
        pred = 1.1 * gt
        rec = pixel_metrics(pred, gt, np.ones((1, 3), bool))
        assert rec.absrel == pytest.approx(0.1, abs=1e-12)
        assert rec.sqrel == pytest.approx(0.07 / 3, abs=1e-12)
        assert rec.rmse == pytest.approx(0.1 * math.sqrt(7), abs=1e-12)
        assert rec.rmse_log == pytest.approx(math.log(1.1), abs=1e-12)
        assert rec.l1 == pytest.approx(0.7 / 3, abs=1e-12)
        assert rec.delta1 == 1.0

    def test_delta1_strict_at_factor(self):
        gt = np.array([[1.0, 2.0, 4.0]])
        rec = pixel_metrics(1.25 * gt, gt, np.ones((1, 3), bool))
        assert rec.delta1 == 0.0

    @pytest.mark.parametrize("c", np.geomspace(0.3, 3.0, 9).tolist())
    def test_constant_scale_closed_forms(self, c, rng):
        gt = rand_depth(rng, (6, 6))
        mask = np.ones((6, 6), bool)
        rec = pixel_metrics(c * gt, gt, mask)
        assert rec.absrel == pytest.approx(abs(c - 1), rel=1e-12)
        assert rec.rmse_log == pytest.approx(abs(math.log(c)), rel=1e-9)
        assert rec.delta1 == (1.0 if max(c, 1 / c) < 1.25 else 0.0)

    def test_delta1_symmetric_under_swap(self, rng):
        gt = rand_depth(rng)
        pred = rand_depth(rng)
        mask = rand_mask(rng)
        a = pixel_metrics(pred, gt, mask).delta1
        b = pixel_metrics(gt, pred, mask).delta1
        assert a == b

    def test_only_valid_pixels_counted(self, rng):
        gt = rand_depth(rng, (4, 4))
        pred = gt.copy()
        pred[0, 0] = 1e6  # invalid pixel, must not contribute
        mask = np.ones((4, 4), bool)
        mask[0, 0] = False
        rec = pixel_metrics(pred, gt, mask)
        assert rec.l1 == 0.0
        assert rec.valid_pixel_count == 15

    def test_empty_mask_rejected(self, rng):
        gt = rand_depth(rng)
        with pytest.raises(ValueError, match="valid pixel"):
            pixel_metrics(gt, gt, np.zeros_like(gt, bool))

    def test_nonpositive_prediction_rejected(self, rng):
        gt = rand_depth(rng)
        pred = gt.copy()
        pred[0, 0] = 0.0
        with pytest.raises(ValueError, match="positive"):
            pixel_metrics(pred, gt, np.ones_like(gt, bool))


class TestBoundaryF1:
    def test_single_boundary_matched(self):
        gt = np.array([[1.0, 1.0, 1.30]])
        score, breakdown = boundary_f1(gt, gt, np.ones((1, 3), bool))
        assert score == 1.0
        assert all(item["f1"] == 1.0 for item in breakdown)

    def test_shifted_boundary_scores_zero(self):
        gt = np.array([[1.0, 1.0, 1.30]])
        pred = np.array([[1.0, 1.30, 1.30]])
        score, _ = boundary_f1(pred, gt, np.ones((1, 3), bool))
        assert score == 0.0

    def test_both_constant_scores_one(self):
        const = np.full((3, 3), 2.0)
        score, breakdown = boundary_f1(const, const, np.ones((3, 3), bool))
        assert score == 1.0
        assert all(item["gt_pairs"] == 0 and item["pred_pairs"] == 0 for item in breakdown)

    def test_one_sided_boundaries_score_zero(self):
        gt = np.full((1, 3), 2.0)
        pred = np.array([[1.0, 2.0, 2.0]])
        score, _ = boundary_f1(pred, gt, np.ones((1, 3), bool))
        assert score == 0.0

    def test_perfect_match_exactly_one(self, rng):
        gt = rand_depth(rng, (16, 16), lo=1.0, hi=50.0)
        score, _ = boundary_f1(gt, gt, np.ones((16, 16), bool))
        assert score == 1.0

    def test_matches_brute_force_oracle(self, rng):
        cfg = BoundaryF1Config()
        for _ in range(200):
            gt = rand_depth(rng, (16, 16), lo=1.0, hi=20.0)
            pred = gt * rng.uniform(0.9, 1.1, size=gt.shape)
            mask = rand_mask(rng, (16, 16), p_valid=0.9)
            fast, _ = boundary_f1(pred, gt, mask, cfg)
            slow = brute_force_boundary_f1(pred, gt, mask, cfg)
            assert abs(fast - slow) <= 1e-12

    def test_pairs_touching_invalid_pixels_excluded(self):
        gt = np.array([[1.0, 1.3, 1.0]])
        mask = np.array([[True, False, True]])
        # both pairs touch the invalid middle pixel: no valid pair remains
        with pytest.raises(ValueError, match="pair"):
            boundary_f1(gt, gt, mask)

    def test_threshold_grid_includes_endpoints(self):
        cfg = BoundaryF1Config(t_min=1.05, t_max=1.15, num_thresholds=10)
        assert cfg.thresholds[0] == pytest.approx(1.05)
        assert cfg.thresholds[-1] == pytest.approx(1.15)
        assert cfg.weights.sum() == pytest.approx(1.0)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            BoundaryF1Config(t_min=1.0)
        with pytest.raises(ValueError):
            BoundaryF1Config(t_min=1.2, t_max=1.1)
        with pytest.raises(ValueError):
            BoundaryF1Config(num_thresholds=0)


class TestFrameScale:
    def test_exact_double(self):
        s = frame_scale(np.array([[1.0, 2.0]]), np.array([[2.0, 4.0]]), np.ones((1, 2), bool), epsilon=0.0)
        assert s == pytest.approx(2.0, abs=1e-15)

    def test_identity(self, rng):
        gt = rand_depth(rng)
        s = frame_scale(gt, gt, np.ones_like(gt, bool), epsilon=0.0)
        assert s == pytest.approx(1.0, rel=1e-12)

    def test_with_epsilon(self):
        s = frame_scale(np.array([[1.0]]), np.array([[3.0]]), np.ones((1, 1), bool), epsilon=1.0)
        assert s == pytest.approx(1.5, abs=1e-15)

    def test_normal_equation(self, rng):
        for _ in range(20):
            pred = rand_depth(rng)
            gt = rand_depth(rng)
            mask = rand_mask(rng)
            s = frame_scale(pred, gt, mask, epsilon=0.0)
            residual = np.sum(pred[mask] * (s * pred[mask] - gt[mask]))
            assert abs(residual) <= 1e-9 * np.sum(pred[mask] * gt[mask])


class TestFrameVariance:
    def test_constant_scales(self):
        assert frame_variance([2.0, 2.0, 2.0]).sigma == 0.0

    def test_two_point(self):
        assert frame_variance([1.0, 3.0]).sigma == pytest.approx(1.0, abs=1e-15)

    def test_single_element(self):
        assert frame_variance([5.0]).sigma == 0.0

    def test_population_convention(self):
        # population std of {1, 2, 3}: sqrt(2/3), not sqrt(1) from the sample form
        assert frame_variance([1.0, 2.0, 3.0]).sigma == pytest.approx(math.sqrt(2 / 3))

    def test_scale_equivariance(self, rng):
        gt = [rand_depth(rng) for _ in range(4)]
        pred = [rand_depth(rng) for _ in range(4)]
        mask = np.ones_like(gt[0], bool)
        alpha = 3.7
        s1 = [frame_scale(p, g, mask, epsilon=0.0) for p, g in zip(pred, gt)]
        s2 = [frame_scale(alpha * p, g, mask, epsilon=0.0) for p, g in zip(pred, gt)]
        assert frame_variance(s2).sigma == pytest.approx(frame_variance(s1).sigma / alpha, rel=1e-9)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            frame_variance([])


def _rec(absrel, n=1):
    return MetricRecord(
        absrel=absrel, sqrel=0.0, rmse=0.0, rmse_log=0.0, l1=0.0, delta1=1.0,
        valid_pixel_count=n, boundary_f1=0.5,
    )


class TestAggregateReport:
    def test_single_video_single_frame(self):
        report = aggregate_report({"v": [_rec(0.25)]})
        assert report.cross_video_mean.absrel == 0.25
        assert report.pooled_mean.absrel == 0.25

    def test_cross_video_mean(self):
        report = aggregate_report({"a": [_rec(0.1)], "b": [_rec(0.3)]})
        assert report.cross_video_mean.absrel == pytest.approx(0.2)

    def test_pooled_vs_per_video(self):
        report = aggregate_report({"a": [_rec(0.1)], "b": [_rec(0.3)] * 3})
        assert report.cross_video_mean.absrel == pytest.approx(0.2)
        assert report.pooled_mean.absrel == pytest.approx(0.25)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            aggregate_report({})
        with pytest.raises(ValueError):
            aggregate_report({"a": []})

    def test_markdown_contains_columns(self):
        report = aggregate_report({"a": [_rec(0.1)]})
        md = report.to_markdown()
        assert "| Video | d1 | AbsRel | SqRel | RMSE | RMSE log | L1 | F1 |" in md
        assert "sigma" in md
