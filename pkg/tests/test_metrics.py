"""Tests for PSNR, SSIM, palette quantization, segmentation scores, the
fusion-weight histogram, and report serialization.

Every metric is checked against a slow loop-based reference (see oracles.py)
on random inputs, plus closed-form constants and hand-enumerated small cases.
"""

import csv
import json
import math

import numpy as np
import pytest
from oracles import (
    psnr_reference,
    quantize_reference,
    segmentation_reference,
    ssim_reference,
)

from cyclestack import metrics, toydata
from cyclestack.engine import Tensor
from cyclestack.errors import DataError, ShapeError
from cyclestack.metrics import (
    fusion_weight_histogram,
    psnr,
    quantize_to_labels,
    segmentation_scores,
    ssim,
    write_histogram_csv,
    write_report,
)


def rand_image(rng, h=16, w=16) -> Tensor:
    return Tensor(rng.uniform(-1.0, 1.0, size=(1, 3, h, w)).astype(np.float32))


def const_image(value, h=16, w=16) -> Tensor:
    return Tensor(np.full((1, 3, h, w), value, dtype=np.float32))


class TestPsnr:
    def test_identical_images_hit_the_cap(self):
        a = rand_image(np.random.default_rng(0))
        assert psnr(a, a) == 99.0

    def test_mse_hundredth_gives_20db(self):
        # [-1,1] values -1 and -0.8 map to 0 and 0.1, so MSE = 0.01; the
        # tolerance absorbs float32 quantization of the -0.8 input
        assert psnr(const_image(-1.0), const_image(-0.8)) == pytest.approx(
            20.0, abs=1e-5
        )

    def test_full_range_error_gives_0db(self):
        assert psnr(const_image(-1.0), const_image(1.0)) == pytest.approx(
            0.0, abs=1e-12
        )

    def test_matches_direct_formula_on_random_inputs(self):
        rng = np.random.default_rng(1)
        for _ in range(30):
            a, b = rand_image(rng, 8, 8), rand_image(rng, 8, 8)
            assert abs(psnr(a, b) - psnr_reference(a, b)) <= 1e-6

    def test_monotone_decreasing_in_mse(self):
        rng = np.random.default_rng(2)
        a = rand_image(rng)
        noise = rng.normal(0, 1, size=a.shape).astype(np.float32)
        vals = [
            psnr(a, Tensor(np.clip(a.data + s * noise, -1, 1)))
            for s in (0.01, 0.05, 0.1, 0.3)
        ]
        assert all(x > y for x, y in zip(vals, vals[1:]))

    def test_invariant_under_shared_pixel_shuffle(self):
        rng = np.random.default_rng(3)
        a, b = rand_image(rng), rand_image(rng)
        perm = rng.permutation(16 * 16)

        def shuffle(t):
            flat = t.data.reshape(1, 3, -1)[:, :, perm]
            return Tensor(flat.reshape(1, 3, 16, 16).copy())

        assert psnr(shuffle(a), shuffle(b)) == psnr(a, b)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            psnr(const_image(0, 8, 8), const_image(0, 8, 9))

    def test_pure_function(self):
        rng = np.random.default_rng(4)
        a, b = rand_image(rng), rand_image(rng)
        assert psnr(a, b) == psnr(a, b)


class TestSsim:
    def test_identical_images_give_exactly_one(self):
        a = rand_image(np.random.default_rng(0))
        assert ssim(a, a) == 1.0

    def test_constant_images_closed_form(self):
        # mu_a=0, mu_b=1, all variances zero: C1*C2 / ((1+C1)*C2) = C1/(1+C1)
        c1 = 0.01**2
        val = ssim(const_image(-1.0), const_image(1.0))
        assert val == pytest.approx(c1 / (1.0 + c1), abs=1e-12)
        assert val == pytest.approx(9.999e-5, abs=1e-8)

    def test_symmetric(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            a, b = rand_image(rng), rand_image(rng)
            assert ssim(a, b) == ssim(b, a)

    def test_matches_per_window_reference(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            a, b = rand_image(rng, 14, 13), rand_image(rng, 14, 13)
            assert abs(ssim(a, b) - ssim_reference(a, b)) <= 1e-6

    def test_invariant_under_shared_flips(self):
        # flips and transpose permute pixels while mapping the window set
        # onto itself, so the mean over windows is preserved
        rng = np.random.default_rng(3)
        a, b = rand_image(rng), rand_image(rng)
        ref = ssim(a, b)
        for op in (
            lambda d: d[:, :, ::-1, :],
            lambda d: d[:, :, :, ::-1],
            lambda d: d.transpose(0, 1, 3, 2),
        ):
            val = ssim(Tensor(np.ascontiguousarray(op(a.data))),
                       Tensor(np.ascontiguousarray(op(b.data))))
            assert val == pytest.approx(ref, abs=1e-12)

    def test_too_small_image_rejected(self):
        with pytest.raises(ShapeError, match="11"):
            ssim(const_image(0, 10, 16), const_image(0, 10, 16))

    def test_needs_three_channel_batch_of_one(self):
        bad = Tensor(np.zeros((2, 3, 16, 16), dtype=np.float32))
        with pytest.raises(ShapeError):
            ssim(bad, bad)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            ssim(const_image(0, 16, 16), const_image(0, 16, 17))


class TestQuantize:
    def test_palette_exact_image_round_trips(self):
        spec = toydata.generate_scene(0, 5)
        img = toydata.render_label_map(spec, 16)
        grid = quantize_to_labels(img, toydata.label_palette_unit())
        assert np.array_equal(grid, toydata.render_label_grid(spec, 16))

    def test_tie_goes_to_lowest_class(self):
        palette = np.array([[-1.0, -1.0, -1.0], [1.0, 1.0, 1.0]], dtype=np.float64)
        assert np.all(quantize_to_labels(const_image(0.0, 4, 4), palette) == 0)
        mid = toydata.label_palette_unit()
        midpoint = ((mid[0] + mid[1]) / 2.0)[:, None, None]
        img = Tensor(np.broadcast_to(midpoint, (1, 3, 4, 4)).astype(np.float32))
        assert np.all(quantize_to_labels(img, mid) == 0)

    def test_matches_per_pixel_brute_force(self):
        rng = np.random.default_rng(0)
        palette = toydata.label_palette_unit()
        for _ in range(20):
            img = rand_image(rng, 8, 8)
            assert np.array_equal(
                quantize_to_labels(img, palette), quantize_reference(img, palette)
            )

    def test_brute_force_with_random_palettes(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            k = int(rng.integers(1, 6))
            palette = rng.uniform(-1, 1, size=(k, 3))
            img = rand_image(rng, 6, 6)
            assert np.array_equal(
                quantize_to_labels(img, palette), quantize_reference(img, palette)
            )

    def test_bad_palette_rejected(self):
        with pytest.raises(DataError):
            quantize_to_labels(const_image(0, 4, 4), np.zeros((0, 3)))
        with pytest.raises(DataError):
            quantize_to_labels(const_image(0, 4, 4), np.zeros((3, 4)))

    def test_bad_image_shape(self):
        with pytest.raises(ShapeError):
            quantize_to_labels(
                Tensor(np.zeros((1, 4, 4, 4), dtype=np.float32)),
                toydata.label_palette_unit(),
            )


class TestSegmentationScores:
    def test_perfect_prediction(self):
        gt = np.array([[0, 1], [2, 1]])
        scores = segmentation_scores(gt, gt, 3)
        assert scores == {"pixel_acc": 1.0, "class_acc": 1.0, "iou": 1.0}

    def test_two_by_two_enumeration(self):
        gt = np.array([[0, 0], [1, 1]])
        pred = np.array([[0, 1], [1, 1]])
        scores = segmentation_scores(pred, gt, 2)
        assert scores["pixel_acc"] == pytest.approx(0.75, abs=1e-12)
        assert scores["class_acc"] == pytest.approx(0.75, abs=1e-12)
        assert scores["iou"] == pytest.approx((0.5 + 2.0 / 3.0) / 2.0, abs=1e-12)

    def test_classes_absent_from_gt_are_skipped(self):
        gt = np.zeros((2, 2), dtype=np.int64)
        pred = np.array([[0, 0], [1, 1]])
        scores = segmentation_scores(pred, gt, 3)
        assert scores["pixel_acc"] == pytest.approx(0.5)
        assert scores["class_acc"] == pytest.approx(0.5)  # only class 0 counted
        assert scores["iou"] == pytest.approx(0.5)

    def test_matches_confusion_matrix_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            k = int(rng.integers(2, 5))
            gt = rng.integers(0, k, size=(8, 8))
            pred = rng.integers(0, k, size=(8, 8))
            fast = segmentation_scores(pred, gt, k)
            slow = segmentation_reference(pred, gt, k)
            for key in ("pixel_acc", "class_acc", "iou"):
                assert fast[key] == pytest.approx(slow[key], abs=1e-9)

    def test_label_out_of_range(self):
        gt = np.zeros((2, 2), dtype=np.int64)
        with pytest.raises(DataError, match="labels"):
            segmentation_scores(np.full((2, 2), 3), gt, 3)
        with pytest.raises(DataError, match="labels"):
            segmentation_scores(gt, np.full((2, 2), -1), 3)

    def test_grid_shape_mismatch(self):
        with pytest.raises(ShapeError):
            segmentation_scores(np.zeros((2, 2)), np.zeros((2, 3)), 2)


class TestFusionHistogram:
    def test_all_half_lands_in_bin_five(self):
        hist = fusion_weight_histogram([const_image(0.5, 4, 4)], bins=10)
        assert hist["mass"][5] == 1.0
        assert sum(hist["mass"]) == pytest.approx(1.0, abs=1e-9)
        assert hist["mean"] == pytest.approx(0.5, abs=1e-7)
        assert hist["count"] == 3 * 4 * 4

    def test_bin_edges_tile_unit_interval(self):
        hist = fusion_weight_histogram([const_image(0.25, 2, 2)], bins=4)
        assert hist["bin_lo"][0] == 0.0
        assert hist["bin_hi"][-1] == 1.0
        assert hist["bin_lo"][1:] == hist["bin_hi"][:-1]

    def test_uniform_samples_are_flat_within_3_sigma(self):
        rng = np.random.default_rng(0)
        n = 20000
        vals = rng.uniform(1e-4, 1.0 - 1e-4, size=n).astype(np.float32)
        maps = [Tensor(vals.reshape(1, 1, 200, 100))]
        hist = fusion_weight_histogram(maps, bins=10)
        p = 0.1
        sigma = math.sqrt(p * (1 - p) / n)
        for mass in hist["mass"]:
            assert abs(mass - p) <= 3 * sigma

    def test_multiple_maps_are_pooled(self):
        hist = fusion_weight_histogram(
            [const_image(0.15, 2, 2), const_image(0.85, 2, 2)], bins=10
        )
        assert hist["mass"][1] == 0.5 and hist["mass"][8] == 0.5
        assert hist["mean"] == pytest.approx(0.5, abs=1e-7)

    def test_values_outside_open_interval_rejected(self):
        for bad in (0.0, 1.0, -0.1, 1.5):
            with pytest.raises(DataError, match="strictly"):
                fusion_weight_histogram([const_image(bad, 2, 2)])

    def test_degenerate_arguments_rejected(self):
        with pytest.raises(DataError):
            fusion_weight_histogram([const_image(0.5, 2, 2)], bins=1)
        with pytest.raises(DataError):
            fusion_weight_histogram([])


class TestReports:
    def test_csv_layout_and_json_aggregate(self, tmp_path):
        rows = [
            {"image_id": 60, "psnr": 20.0, "ssim": 0.5,
             "pixel_acc": 0.8, "class_acc": 0.7, "iou": 0.6},
            {"image_id": 61, "psnr": 30.0, "ssim": 0.7,
             "pixel_acc": 0.6, "class_acc": 0.5, "iou": 0.4},
        ]
        csv_path = tmp_path / "report.csv"
        json_path = tmp_path / "summary.json"
        summary = write_report(rows, csv_path, json_path)

        with open(csv_path, newline="") as f:
            got = list(csv.reader(f))
        assert got[0] == ["image_id", "psnr", "ssim", "pixel_acc", "class_acc", "iou"]
        assert len(got) == 3 and got[1][0] == "60"

        loaded = json.loads(json_path.read_text())
        assert loaded == summary
        assert summary["count"] == 2
        assert summary["psnr"] == pytest.approx(25.0, abs=1e-9)
        assert summary["iou"] == pytest.approx(0.5, abs=1e-9)

    def test_missing_metrics_stay_empty(self, tmp_path):
        rows = [{"image_id": 0, "psnr": 10.0}]
        summary = write_report(rows, tmp_path / "r.csv", tmp_path / "s.json")
        with open(tmp_path / "r.csv", newline="") as f:
            got = list(csv.reader(f))
        assert got[1] == ["0", "10.0", "", "", "", ""]
        assert summary["psnr"] == 10.0
        assert summary["ssim"] is None

    def test_aggregate_is_mean_of_rows(self, tmp_path):
        rng = np.random.default_rng(0)
        rows = [
            {"image_id": i, "psnr": float(rng.uniform(10, 40))} for i in range(7)
        ]
        summary = write_report(rows, tmp_path / "r.csv", tmp_path / "s.json")
        expect = sum(r["psnr"] for r in rows) / 7
        assert summary["psnr"] == pytest.approx(expect, abs=1e-9)

    def test_histogram_csv_layout(self, tmp_path):
        hist = fusion_weight_histogram([const_image(0.5, 2, 2)], bins=4)
        path = tmp_path / "hist.csv"
        write_histogram_csv(hist, path)
        with open(path, newline="") as f:
            got = list(csv.reader(f))
        assert got[0] == ["bin_lo", "bin_hi", "mass"]
        assert len(got) == 5
        assert got[3] == ["0.500000", "0.750000", "1.000000000"]
        assert sum(float(r[2]) for r in got[1:]) == pytest.approx(1.0, abs=1e-9)
