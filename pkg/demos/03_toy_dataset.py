"""
Rendering the two-domain toy dataset
====================================

Domain X is flat-colored label maps (background, circle, square, triangle
classes); domain Y is a "photo" rendering of the same scene geometry with
shading, lighting gradients, and noise. Training splits are unpaired by
construction (disjoint scene ids); the eval split is aligned so metrics can
compare a translation against its true counterpart.
"""

import os
import tempfile

from cyclestack import ppm
from cyclestack.toydata import ToyDataset, build_dataset

root = os.path.join(tempfile.mkdtemp(prefix="toydemo_"), "data")

# Render a small dataset tree. Every image is written as a binary PPM named
# by scene id and resolution; the manifest records the split layout.
manifest = build_dataset(
    root,
    seed=0,
    n_train_per_domain=8,
    n_eval=4,
    resolutions=(16, 32),
)
print("dataset at", root)
print("resolutions:", manifest["resolutions"])
print("id ranges  :", manifest["id_ranges"])

ds = ToyDataset(root)

# Training images come back as (1, 3, H, W) tensors in [-1, 1].
labels = ds.train_images("X", 32)
photos = ds.train_images("Y", 32)
print("train X:", len(labels), "images, shape", labels[0].shape)
print("train Y:", len(photos), "images, range [%.2f, %.2f]" % (
    photos[0].data.min(), photos[0].data.max()))

# Eval pairs share scene geometry across domains, which is what makes
# translation quality measurable.
sid, x_label, y_photo = ds.eval_pairs(32)[0]
print("eval scene", sid, ": label", x_label.shape, " photo", y_photo.shape)

# The ground-truth class grid for an eval scene backs the segmentation
# scores; it is rendered straight from the scene spec, not from pixels.
grid = ds.eval_label_grid(sid, 32)
print("label grid classes present:", sorted(set(grid.ravel().tolist())))

# Round-trip one image through the PPM codec to show the on-disk format.
out = os.path.join(root, "roundtrip.ppm")
ppm.write_image(y_photo, out)
again = ppm.read_image(out)
print("ppm round-trip max pixel delta:", float(abs(again.data - y_photo.data).max()))
