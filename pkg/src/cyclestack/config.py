"""Run configuration: one JSON document drives every command.

Schema (all fields optional, defaults shown by ``default_config``):

  seed       int, master RNG seed for data, weights, and training.
  dataset    {n_train_per_domain, n_eval, resolutions, noise_sigma,
              gradient_amp}
  pipeline   list of per-stage dicts {resolution, base_filters, n_res_blocks,
              disc_filters, disc_layers, fusion_hidden, fusion_variant,
              skip, fusion}; resolutions must double stage to stage.
  train      {epochs, decay_start_epoch, lr0, iterations_per_epoch,
              stage_schedule, generator_loss_form, checkpoint_every,
              lambda_cycle, lambda_gp}
  eval       {bins, n_classes, ablation_seeds, ablation_variants,
              fusion_grid}
  paths      {data_dir, run_dir}

Unknown keys anywhere are rejected so typos fail loudly instead of silently
falling back to defaults.
"""

from __future__ import annotations

import copy
import json
import os

from .errors import ConfigError
from .scan.losses import LossWeights
from .scan.pipeline import StageSpec
from .scan.training import TrainConfig

ABLATION_VARIANTS = ("full", "w/o Skip", "w/o Fusion", "w/o Skip+Fusion")

_STAGE_DEFAULTS = {
    "base_filters": 16,
    "n_res_blocks": 3,
    "disc_filters": 16,
    "disc_layers": 3,
    "fusion_hidden": 8,
    "fusion_variant": "lpw",
    "skip": True,
    "fusion": True,
}

_DEFAULT = {
    "seed": 0,
    "dataset": {
        "n_train_per_domain": 100,
        "n_eval": 30,
        "resolutions": [16, 32, 64],
        "noise_sigma": 0.05,
        "gradient_amp": 0.15,
    },
    "pipeline": [
        {"resolution": 16, **_STAGE_DEFAULTS},
        {"resolution": 32, **_STAGE_DEFAULTS},
    ],
    "train": {
        "epochs": 10,
        "decay_start_epoch": 5,
        "lr0": 2e-4,
        "iterations_per_epoch": 100,
        "stage_schedule": "sequential_frozen",
        "generator_loss_form": "non_saturating",
        "checkpoint_every": 1,
        "lambda_cycle": 10.0,
        "lambda_gp": 10.0,
    },
    "eval": {
        "bins": 10,
        "n_classes": 3,
        "ablation_seeds": [0, 1, 2],
        "ablation_variants": list(ABLATION_VARIANTS),
        "fusion_grid": ["lpw", "uw", "luw", "rf"],
    },
    "paths": {
        "data_dir": "data/toy",
        "run_dir": "runs/default",
    },
}

# experiment analogs: 2-stage 16->32 comparison grid, 3-stage 16->32->64 ladder
PRESETS = {
    "table1-desk": {
        "pipeline": [
            {"resolution": 16, **_STAGE_DEFAULTS},
            {"resolution": 32, **_STAGE_DEFAULTS},
        ],
    },
    "highres-desk": {
        "pipeline": [
            {"resolution": 16, **_STAGE_DEFAULTS},
            {"resolution": 32, **_STAGE_DEFAULTS},
            {"resolution": 64, **_STAGE_DEFAULTS},
        ],
    },
}


def default_config() -> dict:
    return copy.deepcopy(_DEFAULT)


def _merge_section(name: str, base: dict, override) -> dict:
    if not isinstance(override, dict):
        raise ConfigError(f"config section {name!r} must be an object")
    unknown = set(override) - set(base)
    if unknown:
        raise ConfigError(f"unknown keys in {name!r}: {sorted(unknown)}")
    merged = dict(base)
    merged.update(override)
    return merged


def merge_config(base: dict, override: dict) -> dict:
    """Layer ``override`` on top of ``base``, rejecting unknown keys."""
    unknown = set(override) - set(base)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    out = copy.deepcopy(base)
    for key, value in override.items():
        if key == "pipeline":
            out[key] = copy.deepcopy(value)
        elif isinstance(base[key], dict):
            out[key] = _merge_section(key, base[key], value)
        else:
            out[key] = value
    return out


def validate_config(cfg: dict) -> dict:
    """Full validation; returns ``cfg`` with per-stage defaults filled in."""
    cfg = merge_config(default_config(), cfg)  # normalizes + rejects unknowns
    if not isinstance(cfg["seed"], int):
        raise ConfigError("seed must be an integer")

    ds = cfg["dataset"]
    if ds["n_train_per_domain"] < 1 or ds["n_eval"] < 1:
        raise ConfigError("dataset counts must be >= 1")
    if not ds["resolutions"]:
        raise ConfigError("dataset needs at least one resolution")

    if not isinstance(cfg["pipeline"], list) or not cfg["pipeline"]:
        raise ConfigError("pipeline must be a non-empty list of stages")
    filled = []
    for i, entry in enumerate(cfg["pipeline"]):
        if not isinstance(entry, dict) or "resolution" not in entry:
            raise ConfigError(f"pipeline stage {i + 1} needs a resolution")
        stage = _merge_section(f"pipeline[{i}]", {"resolution": None, **_STAGE_DEFAULTS}, entry)
        StageSpec.from_dict(stage)  # validates field values
        filled.append(stage)
    for prev, cur in zip(filled, filled[1:]):
        if cur["resolution"] != 2 * prev["resolution"]:
            raise ConfigError(
                "stage resolutions must double: "
                f"{prev['resolution']} -> {cur['resolution']}"
            )
    cfg["pipeline"] = filled
    for stage in filled:
        if stage["resolution"] not in ds["resolutions"]:
            raise ConfigError(
                f"dataset resolutions {ds['resolutions']} do not cover "
                f"stage resolution {stage['resolution']}"
            )

    build_train_config(cfg)  # runs TrainConfig/LossWeights validation

    ev = cfg["eval"]
    if ev["bins"] < 2:
        raise ConfigError("eval.bins must be >= 2")
    if ev["n_classes"] < 2:
        raise ConfigError("eval.n_classes must be >= 2")
    if not ev["ablation_seeds"] or not all(
        isinstance(s, int) for s in ev["ablation_seeds"]
    ):
        raise ConfigError("eval.ablation_seeds must be a non-empty list of ints")
    for v in ev["ablation_variants"]:
        if v not in ABLATION_VARIANTS:
            raise ConfigError(
                f"unknown ablation variant {v!r}, expected one of "
                f"{ABLATION_VARIANTS}"
            )
    for v in ev["fusion_grid"]:
        if v not in ("lpw", "uw", "luw", "rf"):
            raise ConfigError(f"unknown fusion variant {v!r}")
    return cfg


def apply_preset(cfg: dict, name: str) -> dict:
    if name not in PRESETS:
        raise ConfigError(
            f"unknown preset {name!r}, available: {sorted(PRESETS)}"
        )
    return merge_config(cfg, copy.deepcopy(PRESETS[name]))


def load_config(path=None, preset=None, seed=None) -> dict:
    """Defaults, then config file, then preset pipeline, then seed override."""
    cfg = default_config()
    if path is not None:
        try:
            with open(path) as f:
                raw = json.load(f)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file {path} is not valid JSON: {e}") from None
        if not isinstance(raw, dict):
            raise ConfigError("config root must be a JSON object")
        cfg = merge_config(cfg, raw)
    if preset is not None:
        cfg = apply_preset(cfg, preset)
    if seed is not None:
        cfg["seed"] = seed
    return validate_config(cfg)


def build_stage_specs(cfg: dict) -> list[StageSpec]:
    return [StageSpec.from_dict(d) for d in cfg["pipeline"]]


def build_train_config(cfg: dict, schedule=None) -> tuple[TrainConfig, LossWeights]:
    t = dict(cfg["train"])
    weights = LossWeights(
        lambda_cycle=t.pop("lambda_cycle"), lambda_gp=t.pop("lambda_gp")
    ).validate()
    if schedule is not None:
        t["stage_schedule"] = schedule
    train_cfg = TrainConfig(seed=cfg["seed"], **t).validate()
    return train_cfg, weights


def effective_config_text(cfg: dict) -> str:
    return json.dumps(cfg, indent=1, sort_keys=True) + "\n"


def write_effective_config(cfg: dict, out_dir) -> str:
    """Snapshot the fully-defaulted config next to a command's outputs so the
    run can be reproduced bit-exactly from it."""
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "effective_config.json")
    with open(path, "w") as f:
        f.write(effective_config_text(cfg))
    return path
