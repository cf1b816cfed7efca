"""
Evaluation metrics and report files
===================================

PSNR and SSIM judge photo-domain reconstructions; label-domain outputs are
snapped to the nearest palette color and scored as a segmentation (pixel
accuracy, per-class accuracy, mean IoU). The fusion weight histogram
summarizes where a trained alpha map spends its mass.
"""

import os
import tempfile

import numpy as np

from cyclestack.engine.tensor import Tensor
from cyclestack.metrics import (
    fusion_weight_histogram,
    psnr,
    quantize_to_labels,
    segmentation_scores,
    ssim,
    write_histogram_csv,
    write_report,
)
from cyclestack.toydata import label_palette_unit

rng = np.random.default_rng(3)


def img(arr):
    return Tensor(arr.astype(np.float32))


# PSNR is computed on [0,1]-mapped pixels and capped at 99 dB for identical
# inputs. A small perturbation lands where you expect.
clean = rng.uniform(-1, 1, size=(1, 3, 32, 32))
noisy = np.clip(clean + rng.normal(0, 0.02, size=clean.shape), -1, 1)
print("psnr(clean, clean):", psnr(img(clean), img(clean)))
print("psnr(clean, noisy): %.2f dB" % psnr(img(clean), img(noisy)))
print("ssim(clean, noisy): %.4f" % ssim(img(clean), img(noisy)))

# Label-domain outputs are continuous images; quantize_to_labels assigns
# each pixel the nearest palette entry so they can be scored as classes.
palette = label_palette_unit()
grid = rng.integers(0, 4, size=(32, 32))
perfect = palette[grid].transpose(2, 0, 1)[None] * 2 - 1
pred = quantize_to_labels(img(perfect), palette)
print("quantization recovers grid:", bool((pred == grid).all()))

# Corrupt a band of pixels and watch the three scores split: pixel accuracy
# only counts pixels, per-class accuracy averages recall over classes, and
# mean IoU also punishes false positives.
wrong = grid.copy()
wrong[:8] = (wrong[:8] + 1) % 4
scores = segmentation_scores(wrong, grid, n_classes=4)
print("pixel acc: %.4f  class acc: %.4f  mean IoU: %.4f" % (
    scores["pixel_acc"], scores["class_acc"], scores["iou"]))

# Alpha maps live strictly in (0,1); the histogram buckets them into fixed
# bins over [0,1] so runs can be compared without shipping the maps.
alpha = Tensor((rng.beta(2, 5, size=(1, 1, 32, 32)) * 0.98 + 0.01).astype(np.float32))
hist = fusion_weight_histogram([alpha], bins=10)
print("alpha mean %.4f, mass below 0.3: %.3f" % (
    hist["mean"], sum(hist["mass"][:3])))

# write_report emits an aligned per-image CSV plus a JSON summary of means.
out = tempfile.mkdtemp(prefix="metricsdemo_")
rows = [
    {"image_id": 200, "psnr": 21.3, "ssim": 0.71, "iou": 0.81},
    {"image_id": 201, "psnr": 19.8, "ssim": 0.65, "iou": 0.77},
]
summary = write_report(rows, os.path.join(out, "report.csv"),
                       os.path.join(out, "report.json"))
write_histogram_csv(hist, os.path.join(out, "alpha_hist.csv"))
print("summary psnr: %.2f  files: %s" % (summary["psnr"], sorted(os.listdir(out))))
