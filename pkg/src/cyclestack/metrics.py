"""Image quality and segmentation metrics plus report serialization.

All metrics are pure functions of their inputs. Image tensors arrive in
[-1, 1] and are mapped to [0, 1] internally, so PSNR/SSIM use peak value 1.
"""

from __future__ import annotations

import csv
import json
import math
import os
from typing import Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .engine import Tensor
from .errors import DataError, ShapeError

PSNR_CAP_DB = 99.0

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03

_LUMA = np.array([0.299, 0.587, 0.114])


def _to_unit01(t: Tensor) -> np.ndarray:
    return (t.data.astype(np.float64) + 1.0) / 2.0


def psnr(a: Tensor, b: Tensor) -> float:
    """10*log10(1/MSE) on [0,1]-mapped images, capped at 99 dB."""
    if a.shape != b.shape:
        raise ShapeError(f"psnr: shape mismatch {a.shape} vs {b.shape}")
    mse = float(np.mean((_to_unit01(a) - _to_unit01(b)) ** 2))
    if mse < 1e-10:
        return PSNR_CAP_DB
    return min(10.0 * math.log10(1.0 / mse), PSNR_CAP_DB)


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    half = (size - 1) / 2.0
    x = np.arange(size) - half
    w = np.exp(-(x**2) / (2.0 * sigma**2))
    w2 = np.outer(w, w)
    return w2 / w2.sum()


def _gray(t: Tensor) -> np.ndarray:
    """(1, 3, H, W) tensor -> (H, W) float64 luma in [0, 1]."""
    if t.shape[0] != 1 or t.shape[1] != 3:
        raise ShapeError(f"ssim expects (1, 3, H, W) images, got {t.shape}")
    img = _to_unit01(t)[0]
    return np.tensordot(_LUMA, img, axes=(0, 0))


def ssim(a: Tensor, b: Tensor) -> float:
    """Mean local SSIM over valid 11x11 Gaussian windows on luma images."""
    if a.shape != b.shape:
        raise ShapeError(f"ssim: shape mismatch {a.shape} vs {b.shape}")
    ga, gb = _gray(a), _gray(b)
    h, w = ga.shape
    if h < SSIM_WINDOW or w < SSIM_WINDOW:
        raise ShapeError(f"ssim needs >= {SSIM_WINDOW} px per side, got {h}x{w}")
    win = _gaussian_window(SSIM_WINDOW, SSIM_SIGMA)

    def wmean(img: np.ndarray) -> np.ndarray:
        v = sliding_window_view(img, (SSIM_WINDOW, SSIM_WINDOW))
        return np.einsum("ijkl,kl->ij", v, win)

    mu_a = wmean(ga)
    mu_b = wmean(gb)
    var_a = wmean(ga * ga) - mu_a * mu_a
    var_b = wmean(gb * gb) - mu_b * mu_b
    cov = wmean(ga * gb) - mu_a * mu_b
    c1 = (SSIM_K1 * 1.0) ** 2
    c2 = (SSIM_K2 * 1.0) ** 2
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def quantize_to_labels(img: Tensor, palette: np.ndarray) -> np.ndarray:
    """Assign each pixel the nearest palette color (Euclidean RGB distance);
    exact ties go to the lowest class index. Palette rows are in [-1, 1]."""
    if palette.ndim != 2 or palette.shape[1] != 3 or palette.shape[0] < 1:
        raise DataError(f"palette must be (K, 3) with K >= 1, got {palette.shape}")
    if img.shape[0] != 1 or img.shape[1] != 3:
        raise ShapeError(f"quantize expects (1, 3, H, W), got {img.shape}")
    pix = img.data[0].astype(np.float64).transpose(1, 2, 0)  # (H, W, 3)
    d2 = ((pix[:, :, None, :] - palette[None, None, :, :].astype(np.float64)) ** 2).sum(
        axis=3
    )
    return np.argmin(d2, axis=2)  # argmin takes the first minimum: lowest class


def segmentation_scores(
    pred: np.ndarray, gt: np.ndarray, n_classes: int
) -> dict[str, float]:
    """pixel_acc, mean per-class recall, mean IoU; classes absent from the
    ground truth are skipped (not counted as zero)."""
    if pred.shape != gt.shape:
        raise ShapeError(f"segmentation: grid mismatch {pred.shape} vs {gt.shape}")
    for name, grid in (("pred", pred), ("gt", gt)):
        if grid.size and (grid.min() < 0 or grid.max() >= n_classes):
            raise DataError(f"segmentation: {name} labels outside [0, {n_classes})")
    cm = np.bincount(
        (gt.astype(np.int64) * n_classes + pred.astype(np.int64)).reshape(-1),
        minlength=n_classes * n_classes,
    ).reshape(n_classes, n_classes)
    total = cm.sum()
    correct = np.trace(cm)
    gt_count = cm.sum(axis=1)
    pred_count = cm.sum(axis=0)
    present = gt_count > 0
    diag = np.diag(cm)
    recall = diag[present] / gt_count[present]
    union = gt_count[present] + pred_count[present] - diag[present]
    iou = diag[present] / union
    return {
        "pixel_acc": float(correct / total),
        "class_acc": float(recall.mean()),
        "iou": float(iou.mean()),
    }


def fusion_weight_histogram(
    alpha_maps: Sequence[Tensor], bins: int = 10
) -> dict[str, object]:
    """Normalized histogram of fusion weights over [0, 1] plus their mean.

    Bins are right-open except the last. Weights must lie strictly in (0, 1);
    anything else indicates a broken fusion block.
    """
    if bins < 2:
        raise DataError("histogram needs bins >= 2")
    if not alpha_maps:
        raise DataError("histogram needs at least one alpha map")
    vals = np.concatenate([a.data.reshape(-1).astype(np.float64) for a in alpha_maps])
    if vals.min() <= 0.0 or vals.max() >= 1.0:
        raise DataError("fusion weights must lie strictly in (0, 1)")
    counts, edges = np.histogram(vals, bins=bins, range=(0.0, 1.0))
    return {
        "bin_lo": edges[:-1].tolist(),
        "bin_hi": edges[1:].tolist(),
        "mass": (counts / counts.sum()).tolist(),
        "mean": float(vals.mean()),
        "count": int(vals.size),
    }


# -- report files -----------------------------------------------------------

REPORT_FIELDS = ("image_id", "psnr", "ssim", "pixel_acc", "class_acc", "iou")


def write_report(rows: list[dict], csv_path, json_path) -> dict:
    """Per-image CSV plus a JSON summary whose aggregates are the arithmetic
    means of the CSV rows (missing metrics stay empty/None)."""
    with open(csv_path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=REPORT_FIELDS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row.get(k, "") for k in REPORT_FIELDS})
    summary: dict[str, object] = {"count": len(rows)}
    for key in REPORT_FIELDS[1:]:
        vals = [row[key] for row in rows if key in row]
        summary[key] = (sum(vals) / len(vals)) if vals else None
    with open(json_path, "w") as f:
        json.dump(summary, f, indent=1, sort_keys=True)
        f.write("\n")
    return summary


def write_histogram_csv(hist: dict, path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["bin_lo", "bin_hi", "mass"])
        for lo, hi, mass in zip(hist["bin_lo"], hist["bin_hi"], hist["mass"]):
            writer.writerow([f"{lo:.6f}", f"{hi:.6f}", f"{mass:.9f}"])
