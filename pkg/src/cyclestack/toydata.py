"""Procedural two-domain toy dataset: label maps (X) and rendered photos (Y).

Scenes are 1-4 circles/rectangles on a background. Domain X renders a scene as
an exact 3-color label map; domain Y renders the same scene as a "photo" with
per-class base colors, a vertical illumination gradient, Gaussian texture
noise, and a 3x3 box blur. Training sets use disjoint scene ids (strictly
unpaired); a held-out aligned set exists for evaluation only.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import ppm
from .engine import Tensor
from .errors import DataError

_f32 = np.float32

FORMAT_VERSION = 1

# label palette, one exact RGB color per class (background, circle, rectangle)
LABEL_PALETTE = np.array([[32, 32, 96], [224, 64, 64], [64, 224, 64]], dtype=np.uint8)
# photo base colors, deliberately off-palette
PHOTO_PALETTE = np.array([[96, 96, 160], [192, 128, 64], [96, 160, 96]], dtype=np.uint8)

N_CLASSES = 3

DEFAULT_NOISE_SIGMA = 0.05
DEFAULT_GRADIENT_AMP = 0.15


def label_palette_unit() -> np.ndarray:
    """Label palette as float32 rows in [-1, 1]."""
    return ppm.bytes_to_unit(LABEL_PALETTE)


@dataclass(frozen=True)
class Shape:
    kind: str  # "circle" | "rectangle"
    cx: float
    cy: float
    half_w: float
    half_h: float
    class_id: int


@dataclass(frozen=True)
class SceneSpec:
    scene_id: int
    shapes: tuple[Shape, ...]


def _rng(*entropy: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(list(entropy))))


def generate_scene(seed: int, scene_id: int) -> SceneSpec:
    """1-4 shapes, fully inside the unit canvas; circles are class 1,
    rectangles class 2."""
    rng = _rng(seed, scene_id)
    n_shapes = int(rng.integers(1, 5))
    shapes = []
    margin = 0.02
    for _ in range(n_shapes):
        if rng.random() < 0.5:
            r = float(rng.uniform(0.08, 0.22))
            cx = float(rng.uniform(r + margin, 1.0 - r - margin))
            cy = float(rng.uniform(r + margin, 1.0 - r - margin))
            shapes.append(Shape("circle", cx, cy, r, r, 1))
        else:
            hw = float(rng.uniform(0.07, 0.24))
            hh = float(rng.uniform(0.07, 0.24))
            cx = float(rng.uniform(hw + margin, 1.0 - hw - margin))
            cy = float(rng.uniform(hh + margin, 1.0 - hh - margin))
            shapes.append(Shape("rectangle", cx, cy, hw, hh, 2))
    return SceneSpec(scene_id, tuple(shapes))


def render_label_grid(spec: SceneSpec, resolution: int) -> np.ndarray:
    """Integer class grid (resolution, resolution); later shapes occlude."""
    if resolution < 1:
        raise DataError("resolution must be >= 1")
    centers = (np.arange(resolution) + 0.5) / resolution
    xx = centers[None, :]
    yy = centers[:, None]
    grid = np.zeros((resolution, resolution), dtype=np.int64)
    for s in spec.shapes:
        if s.kind == "circle":
            mask = (xx - s.cx) ** 2 + (yy - s.cy) ** 2 <= s.half_w**2
        else:
            mask = (np.abs(xx - s.cx) <= s.half_w) & (np.abs(yy - s.cy) <= s.half_h)
        grid[mask] = s.class_id
    return grid


def render_label_map(spec: SceneSpec, resolution: int) -> Tensor:
    """Domain-X sample: palette-exact label rendering, (1, 3, R, R) in [-1, 1]."""
    grid = render_label_grid(spec, resolution)
    img = label_palette_unit()[grid]  # (R, R, 3)
    return Tensor(np.ascontiguousarray(img.transpose(2, 0, 1)[None]))


def _box_blur3(img: np.ndarray) -> np.ndarray:
    """3x3 box blur with edge-replicated borders; img is (H, W, C)."""
    p = np.pad(img, ((1, 1), (1, 1), (0, 0)), mode="edge")
    out = np.zeros_like(img, dtype=np.float64)
    for dy in range(3):
        for dx in range(3):
            out += p[dy : dy + img.shape[0], dx : dx + img.shape[1]]
    return out / 9.0


def render_photo(
    spec: SceneSpec,
    resolution: int,
    noise_seed: Sequence[int] | int,
    noise_sigma: float = DEFAULT_NOISE_SIGMA,
    gradient_amp: float = DEFAULT_GRADIENT_AMP,
) -> Tensor:
    """Domain-Y sample: base colors + vertical illumination gradient +
    Gaussian noise + 3x3 box blur, (1, 3, R, R) in [-1, 1]."""
    grid = render_label_grid(spec, resolution)
    img = PHOTO_PALETTE.astype(np.float64)[grid] / 255.0  # (R, R, 3) in [0, 1]
    rows = (np.arange(resolution) + 0.5) / resolution
    illum = 1.0 + gradient_amp * (2.0 * rows - 1.0)
    img *= illum[:, None, None]
    if noise_sigma > 0:
        entropy = [noise_seed] if isinstance(noise_seed, int) else list(noise_seed)
        rng = _rng(*entropy)
        img += rng.normal(0.0, noise_sigma, size=img.shape)
    img = np.clip(_box_blur3(img), 0.0, 1.0)
    chw = (img * 2.0 - 1.0).astype(_f32).transpose(2, 0, 1)[None]
    return Tensor(np.ascontiguousarray(chw))


# -- dataset on disk ------------------------------------------------------------


def _sample_path(domain: str, split: str, scene_id: int, resolution: int) -> str:
    return f"{domain}/{split}/{scene_id:06d}_{resolution}.ppm"


def build_dataset(
    out_dir,
    seed: int = 0,
    n_train_per_domain: int = 100,
    n_eval: int = 30,
    resolutions: Sequence[int] = (16, 32, 64),
    noise_sigma: float = DEFAULT_NOISE_SIGMA,
    gradient_amp: float = DEFAULT_GRADIENT_AMP,
    force: bool = False,
) -> dict:
    """Render the full dataset tree and write its manifest; returns the manifest.

    Scene ids: [0, n) label-domain training, [n, 2n) photo-domain training
    (disjoint, so training is strictly unpaired), [2n, 2n + n_eval) aligned
    evaluation pairs rendered in both domains.
    """
    if n_train_per_domain < 1 or n_eval < 1:
        raise DataError("dataset counts must be >= 1")
    if not resolutions:
        raise DataError("need at least one resolution")
    out_dir = os.fspath(out_dir)
    manifest_path = os.path.join(out_dir, "manifest.json")
    if os.path.exists(manifest_path) and not force:
        raise FileExistsError(
            f"dataset already exists at {out_dir}; use force to overwrite"
        )

    n = n_train_per_domain
    ranges = {
        "train_X": [0, n],
        "train_Y": [n, 2 * n],
        "eval": [2 * n, 2 * n + n_eval],
    }
    files: dict[str, dict[str, list[str]]] = {
        k: {str(r): [] for r in resolutions}
        for k in ("train_X", "train_Y", "eval_X", "eval_Y")
    }

    def render_to(split_key: str, domain: str, split: str, scene_id: int, res: int):
        spec = generate_scene(seed, scene_id)
        if domain == "X":
            t = render_label_map(spec, res)
        else:
            t = render_photo(
                spec, res, [seed, scene_id, res, 1], noise_sigma, gradient_amp
            )
        rel = _sample_path(domain, split, scene_id, res)
        path = os.path.join(out_dir, rel)
        os.makedirs(os.path.dirname(path), exist_ok=True)
        ppm.write_image(t, path)
        files[split_key][str(res)].append(rel)

    for res in resolutions:
        for sid in range(*ranges["train_X"]):
            render_to("train_X", "X", "train", sid, res)
        for sid in range(*ranges["train_Y"]):
            render_to("train_Y", "Y", "train", sid, res)
        for sid in range(*ranges["eval"]):
            render_to("eval_X", "X", "eval", sid, res)
            render_to("eval_Y", "Y", "eval", sid, res)

    manifest = {
        "format_version": FORMAT_VERSION,
        "seed": seed,
        "palette": LABEL_PALETTE.tolist(),
        "photo_palette": PHOTO_PALETTE.tolist(),
        "noise_sigma": noise_sigma,
        "gradient_amp": gradient_amp,
        "resolutions": list(resolutions),
        "id_ranges": ranges,
        "files": files,
    }
    os.makedirs(out_dir, exist_ok=True)
    with open(manifest_path, "w") as f:
        json.dump(manifest, f, indent=1, sort_keys=True)
        f.write("\n")
    return manifest


class ToyDataset:
    """Loader over a rendered dataset directory."""

    def __init__(self, root):
        self.root = os.fspath(root)
        manifest_path = os.path.join(self.root, "manifest.json")
        try:
            with open(manifest_path) as f:
                self.manifest = json.load(f)
        except FileNotFoundError:
            raise DataError(f"no dataset manifest at {manifest_path}") from None
        except json.JSONDecodeError as e:
            raise DataError(f"corrupt dataset manifest: {e}") from None
        if self.manifest.get("format_version") != FORMAT_VERSION:
            raise DataError("unsupported dataset format_version")
        self.resolutions = list(self.manifest["resolutions"])
        self.seed = self.manifest["seed"]

    def _load_split(self, split_key: str, resolution: int) -> list[Tensor]:
        try:
            rels = self.manifest["files"][split_key][str(resolution)]
        except KeyError:
            raise DataError(
                f"dataset has no {split_key} images at resolution {resolution}"
            ) from None
        return [ppm.read_image(os.path.join(self.root, rel)) for rel in rels]

    def train_images(self, domain: str, resolution: int) -> list[Tensor]:
        if domain not in ("X", "Y"):
            raise DataError(f"domain must be X or Y, got {domain!r}")
        return self._load_split(f"train_{domain}", resolution)

    def eval_pairs(self, resolution: int) -> list[tuple[int, Tensor, Tensor]]:
        """(scene_id, label image, photo image) triples, aligned by scene."""
        xs = self._load_split("eval_X", resolution)
        ys = self._load_split("eval_Y", resolution)
        lo, hi = self.manifest["id_ranges"]["eval"]
        ids = list(range(lo, hi))
        return list(zip(ids, xs, ys))

    def eval_label_grid(self, scene_id: int, resolution: int) -> np.ndarray:
        """Ground-truth class grid for an eval scene (for segmentation scores)."""
        return render_label_grid(generate_scene(self.seed, scene_id), resolution)
