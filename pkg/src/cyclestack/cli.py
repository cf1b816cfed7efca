"""Command line entry point: dataset generation, training, translation,
evaluation, ablation sweeps, and fusion-weight histograms.

Exit codes: 0 success, 1 runtime/I-O failure, 2 configuration or usage error.
``SCAN_NUM_THREADS`` (default 1) pins the BLAS thread pools; it must be set
before numpy loads, which is why this module touches the environment first.
"""

from __future__ import annotations

import os


def _pin_threads() -> None:
    n = os.environ.get("SCAN_NUM_THREADS", "1")
    if not n.isdigit() or int(n) < 1:
        n = "1"  # main() reports the bad value as a usage error
    for var in (
        "OMP_NUM_THREADS",
        "OPENBLAS_NUM_THREADS",
        "MKL_NUM_THREADS",
        "VECLIB_MAXIMUM_THREADS",
        "NUMEXPR_NUM_THREADS",
    ):
        os.environ.setdefault(var, n)


_pin_threads()

import argparse
import csv
import shutil
import statistics
import sys
from dataclasses import replace

from . import ppm, toydata
from .config import (
    build_stage_specs,
    build_train_config,
    load_config,
    write_effective_config,
)
from .engine import paused
from .errors import ConfigError, CycleStackError, DataError
from .metrics import (
    fusion_weight_histogram,
    psnr,
    quantize_to_labels,
    segmentation_scores,
    ssim,
    write_histogram_csv,
    write_report,
)
from .scan.checkpoint import load_checkpoint
from .scan.pipeline import Pipeline, StageSpec, translate
from .scan.training import train_stage


def _check_thread_env() -> None:
    n = os.environ.get("SCAN_NUM_THREADS", "1")
    if not n.isdigit() or int(n) < 1:
        raise ConfigError(f"SCAN_NUM_THREADS must be a positive integer, got {n!r}")


def _load(args, allow_preset: bool = True) -> dict:
    return load_config(
        args.config,
        getattr(args, "preset", None) if allow_preset else None,
        args.seed,
    )


# -- gen-data ----------------------------------------------------------------


def cmd_gen_data(args) -> int:
    cfg = _load(args)
    out_dir = args.out_dir or cfg["paths"]["data_dir"]
    ds = cfg["dataset"]
    manifest = toydata.build_dataset(
        out_dir,
        seed=cfg["seed"],
        n_train_per_domain=ds["n_train_per_domain"],
        n_eval=ds["n_eval"],
        resolutions=ds["resolutions"],
        noise_sigma=ds["noise_sigma"],
        gradient_amp=ds["gradient_amp"],
        force=args.force,
    )
    write_effective_config(cfg, out_dir)
    n = ds["n_train_per_domain"]
    print(
        f"dataset at {out_dir}: {2 * n} training images ({n} labels + {n} photos, "
        f"unpaired), {ds['n_eval']} aligned eval pairs, "
        f"resolutions {manifest['resolutions']}"
    )
    return 0


# -- train --------------------------------------------------------------------


def _stage_dir(run_dir: str, k: int) -> str:
    return os.path.join(run_dir, f"stage{k}")


def _has_checkpoint(path: str) -> bool:
    return os.path.exists(os.path.join(path, "manifest.json"))


def cmd_train(args) -> int:
    cfg = _load(args)
    run_dir = args.run_dir or cfg["paths"]["run_dir"]
    specs = build_stage_specs(cfg)
    k = args.stage if args.stage is not None else len(specs)
    if not 1 <= k <= len(specs):
        raise ConfigError(f"--stage must be in [1, {len(specs)}], got {k}")
    train_cfg, weights = build_train_config(cfg, schedule=args.schedule)

    stage_dir = _stage_dir(run_dir, k)
    if _has_checkpoint(os.path.join(stage_dir, "final")):
        if not args.force:
            raise FileExistsError(
                f"stage {k} already trained at {stage_dir}; use --force to retrain"
            )
        shutil.rmtree(stage_dir)

    sequential = train_cfg.stage_schedule in ("sequential_frozen", "fine_tune_previous")
    if k > 1 and sequential:
        prev = os.path.join(_stage_dir(run_dir, k - 1), "final")
        if not _has_checkpoint(prev):
            raise ConfigError(
                f"training stage {k} under {train_cfg.stage_schedule!r} needs the "
                f"stage {k - 1} checkpoint at {prev}; run train --stage {k - 1} first"
            )
        pipeline, _ = load_checkpoint(prev)
        if [s.to_dict() for s in pipeline.specs()] != cfg["pipeline"]:
            raise ConfigError(
                "pipeline in config does not match the stage checkpoint; "
                "retrain from stage 1 or fix the config"
            )
    else:
        pipeline = Pipeline(specs, seed=cfg["seed"])

    dataset = toydata.ToyDataset(cfg["paths"]["data_dir"])
    trace = train_stage(pipeline, k, dataset, train_cfg, weights, out_dir=stage_dir)
    write_effective_config(cfg, run_dir)
    line = (
        f"stage {k} trained for {len(trace)} iterations "
        f"(schedule {train_cfg.stage_schedule})"
    )
    if trace:
        last = trace[-1]
        line += (
            f"; final loss_G {last['loss_G']:.4f}, loss_D {last['loss_D']:.4f}, "
            f"cycle {last['cycle_term']:.4f}"
        )
    print(line + f"; checkpoints in {stage_dir}")
    return 0


# -- translate ------------------------------------------------------------------


def _list_ppm(in_dir: str) -> list[str]:
    if not os.path.isdir(in_dir):
        raise ConfigError(f"input directory not found: {in_dir}")
    names = sorted(n for n in os.listdir(in_dir) if n.endswith(".ppm"))
    if not names:
        raise ConfigError(f"no .ppm inputs in {in_dir}")
    return names


def cmd_translate(args) -> int:
    pipeline, _ = load_checkpoint(args.checkpoint)
    direction = "G" if args.direction == "X2Y" else "F"
    expected = pipeline.top_resolution
    names = _list_ppm(args.input_dir)
    os.makedirs(args.out_dir, exist_ok=True)
    written = 0
    for name in names:
        img = ppm.read_image(os.path.join(args.input_dir, name))
        if img.shape[2] != expected or img.shape[3] != expected:
            raise ConfigError(
                f"{name} is {img.shape[2]}x{img.shape[3]} but the pipeline "
                f"expects {expected}x{expected} inputs"
            )
        with paused():
            out, extras = translate(pipeline, img, direction, collect=True)
        stem = name[: -len(".ppm")]
        ppm.write_image(out, os.path.join(args.out_dir, f"{stem}_{args.direction}.ppm"))
        written += 1
        if not args.dump_intermediates:
            continue
        for j, inter in enumerate(extras["intermediates"][:-1], start=1):
            ppm.write_image(
                inter,
                os.path.join(args.out_dir, f"{stem}_{args.direction}_stage{j}.ppm"),
            )
            written += 1
        for j, alpha in enumerate(extras["alphas"], start=2):
            if alpha is None:
                continue
            ppm.write_gray_image(
                alpha.data[0, 0],
                os.path.join(args.out_dir, f"{stem}_{args.direction}_alpha{j}.ppm"),
            )
            written += 1
    print(
        f"translated {len(names)} images ({args.direction}) -> {args.out_dir} "
        f"({written} files)"
    )
    return 0


# -- eval -----------------------------------------------------------------------


def _eval_rows(pipeline, dataset, direction: str, n_classes: int) -> list[dict]:
    res = pipeline.top_resolution
    try:
        pairs = dataset.eval_pairs(res)
    except DataError as e:
        raise ConfigError(str(e)) from None
    if not pairs:
        raise ConfigError(f"dataset has no eval pairs at resolution {res}")
    rows = []
    for sid, x, y in pairs:
        src, target = (x, y) if direction == "X2Y" else (y, x)
        with paused():
            out = translate(pipeline, src, "G" if direction == "X2Y" else "F")
        row = {"image_id": sid, "psnr": psnr(out, target), "ssim": ssim(out, target)}
        if direction == "Y2X":
            pred = quantize_to_labels(out, toydata.label_palette_unit())
            gt = dataset.eval_label_grid(sid, res)
            row.update(segmentation_scores(pred, gt, n_classes))
        rows.append(row)
    return rows


def cmd_eval(args) -> int:
    cfg = _load(args, allow_preset=False)
    pipeline, _ = load_checkpoint(args.checkpoint)
    dataset = toydata.ToyDataset(args.data_dir)
    rows = _eval_rows(pipeline, dataset, args.direction, cfg["eval"]["n_classes"])
    os.makedirs(args.out_dir, exist_ok=True)
    summary = write_report(
        rows,
        os.path.join(args.out_dir, f"report_{args.direction}.csv"),
        os.path.join(args.out_dir, f"summary_{args.direction}.json"),
    )
    write_effective_config(cfg, args.out_dir)
    line = f"evaluated {summary['count']} pairs ({args.direction}): "
    line += f"psnr {summary['psnr']:.3f} dB, ssim {summary['ssim']:.4f}"
    if args.direction == "Y2X":
        line += (
            f", pixel_acc {summary['pixel_acc']:.4f}, "
            f"class_acc {summary['class_acc']:.4f}, iou {summary['iou']:.4f}"
        )
    print(line)
    return 0


# -- ablate ---------------------------------------------------------------------

_ABLATION_FLAGS = {
    "full": {"skip": True, "fusion": True},
    "w/o Skip": {"skip": False, "fusion": True},
    "w/o Fusion": {"skip": True, "fusion": False},
    "w/o Skip+Fusion": {"skip": False, "fusion": False},
}

_ABLATION_FIELDS = (
    "variant", "seed", "psnr", "ssim", "pixel_acc", "class_acc", "iou", "mean_alpha",
)


def _variant_slug(name: str) -> str:
    return (
        name.replace("w/o ", "no-")
        .replace("+", "-")
        .replace(" ", "-")
        .lower()
    )


def _train_and_score(cfg, specs, seed, dataset, out_dir) -> dict:
    """Train a fresh pipeline per the configured schedule, then score Y->X."""
    train_cfg, weights = build_train_config(cfg)
    train_cfg = replace(train_cfg, seed=seed)
    pipeline = Pipeline(specs, seed=seed)
    if train_cfg.stage_schedule == "from_scratch_joint":
        stages = [pipeline.n_stages]  # one run trains every stage jointly
    else:
        stages = range(1, pipeline.n_stages + 1)
    for k in stages:
        train_stage(
            pipeline, k, dataset, train_cfg, weights, out_dir=_stage_dir(out_dir, k)
        )
    rows = _eval_rows(pipeline, dataset, "Y2X", cfg["eval"]["n_classes"])
    score = {key: float(sum(r[key] for r in rows) / len(rows))
             for key in ("psnr", "ssim", "pixel_acc", "class_acc", "iou")}

    alphas = []
    res = pipeline.top_resolution
    with paused():
        for _, _, y in dataset.eval_pairs(res):
            _, extras = translate(pipeline, y, "F", collect=True)
            alphas += [a for a in extras["alphas"] if a is not None]
    if alphas:
        total = sum(float(a.data.sum()) for a in alphas)
        count = sum(a.numel for a in alphas)
        score["mean_alpha"] = total / count
    return score


def _median_row(variant: str, rows: list[dict]) -> dict:
    out = {"variant": variant, "seed": "median"}
    for key in _ABLATION_FIELDS[2:]:
        vals = [r[key] for r in rows if key in r]
        if vals:
            out[key] = statistics.median(vals)
    return out


def cmd_ablate(args) -> int:
    cfg = _load(args)
    data_dir = args.data_dir or cfg["paths"]["data_dir"]
    out_dir = args.out_dir or os.path.join(cfg["paths"]["run_dir"], "ablation")
    dataset = toydata.ToyDataset(data_dir)
    base = [s.to_dict() for s in build_stage_specs(cfg)]
    seeds = cfg["eval"]["ablation_seeds"]

    grid: list[tuple[str, list[dict]]] = []
    for name in cfg["eval"]["ablation_variants"]:
        flags = _ABLATION_FLAGS[name]
        grid.append((name, [{**d, **flags} for d in base]))
    for fv in cfg["eval"]["fusion_grid"]:
        grid.append(
            (f"fusion-{fv}", [{**d, "fusion_variant": fv} for d in base])
        )
    if not grid:
        raise ConfigError("nothing to ablate: both variant lists are empty")

    rows = []
    for name, stage_dicts in grid:
        specs = [StageSpec.from_dict(d) for d in stage_dicts]
        per_variant = []
        for seed in seeds:
            run_dir = os.path.join(out_dir, _variant_slug(name), f"seed{seed}")
            score = _train_and_score(cfg, specs, seed, dataset, run_dir)
            per_variant.append({"variant": name, "seed": seed, **score})
        rows += sorted(per_variant, key=lambda r: r["seed"])
        rows.append(_median_row(name, per_variant))
    rows.sort(key=lambda r: r["variant"])

    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, "ablation.csv")
    with open(csv_path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=_ABLATION_FIELDS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row.get(k, "") for k in _ABLATION_FIELDS})
    write_effective_config(cfg, out_dir)
    medians = [r for r in rows if r["seed"] == "median"]
    for r in medians:
        print(
            f"{r['variant']}: median iou {r['iou']:.4f}, "
            f"pixel_acc {r['pixel_acc']:.4f}, psnr {r['psnr']:.3f}"
        )
    print(f"ablation table -> {csv_path}")
    return 0


# -- fusion-hist ------------------------------------------------------------------


def cmd_fusion_hist(args) -> int:
    cfg = _load(args, allow_preset=False)
    dataset = toydata.ToyDataset(args.data_dir)
    try:
        epochs = [int(tok) for tok in args.epochs.split(",") if tok]
    except ValueError:
        raise ConfigError(f"--epochs must be a comma list of ints, got {args.epochs!r}")
    if not epochs:
        raise ConfigError("--epochs lists no epochs")
    os.makedirs(args.out_dir, exist_ok=True)
    means = []
    for e in epochs:
        ck = os.path.join(args.run_dir, f"epoch_{e:03d}")
        if not _has_checkpoint(ck):
            raise ConfigError(f"no checkpoint for epoch {e} at {ck}")
        pipeline, _ = load_checkpoint(ck)
        res = pipeline.top_resolution
        alphas = []
        with paused():
            for _, x, _ in dataset.eval_pairs(res):
                _, extras = translate(pipeline, x, "G", collect=True)
                alphas += [a for a in extras["alphas"] if a is not None]
        if not alphas:
            raise ConfigError("pipeline produces no fusion weights (fusion off?)")
        hist = fusion_weight_histogram(alphas, bins=cfg["eval"]["bins"])
        write_histogram_csv(
            hist, os.path.join(args.out_dir, f"hist_epoch_{e:03d}.csv")
        )
        means.append((e, hist["mean"]))
    with open(os.path.join(args.out_dir, "alpha_means.csv"), "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["epoch", "mean_alpha"])
        for e, m in means:
            writer.writerow([e, f"{m:.9f}"])
    for e, m in means:
        print(f"epoch {e}: mean alpha {m:.4f}")
    print(f"histograms -> {args.out_dir}")
    return 0


# -- argument plumbing ------------------------------------------------------------


def _add_common(sub, preset: bool = True):
    sub.add_argument("--config", metavar="PATH", help="JSON run config")
    sub.add_argument("--seed", type=int, help="override the config seed")
    if preset:
        sub.add_argument("--preset", help="named pipeline preset")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="cyclestack",
        description="Stacked cycle-consistent translation on a toy two-domain "
        "dataset: generate data, train stages, translate, evaluate, ablate.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="render the toy dataset")
    _add_common(g)
    g.add_argument("out_dir", nargs="?", help="dataset directory (default from config)")
    g.add_argument("--force", action="store_true", help="overwrite an existing dataset")
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train one pipeline stage")
    _add_common(t)
    t.add_argument("run_dir", nargs="?", help="run directory (default from config)")
    t.add_argument("--stage", type=int, help="stage index (default: top stage)")
    t.add_argument("--schedule", help="override train.stage_schedule")
    t.add_argument("--force", action="store_true", help="retrain an existing stage")
    t.set_defaults(func=cmd_train)

    tr = sub.add_parser("translate", help="run the stack over a directory of images")
    tr.add_argument("checkpoint", help="checkpoint directory")
    tr.add_argument("input_dir", help="directory of .ppm inputs")
    tr.add_argument("out_dir", help="output directory")
    tr.add_argument("--direction", choices=("X2Y", "Y2X"), default="X2Y")
    tr.add_argument(
        "--dump-intermediates",
        action="store_true",
        help="also write per-stage outputs and alpha maps",
    )
    tr.set_defaults(func=cmd_translate)

    e = sub.add_parser("eval", help="score translations against aligned eval pairs")
    _add_common(e, preset=False)
    e.add_argument("checkpoint", help="checkpoint directory")
    e.add_argument("data_dir", help="dataset directory")
    e.add_argument("out_dir", help="report directory")
    e.add_argument("--direction", choices=("X2Y", "Y2X"), default="X2Y")
    e.set_defaults(func=cmd_eval)

    a = sub.add_parser("ablate", help="train and score the architecture variant grid")
    _add_common(a)
    a.add_argument("data_dir", nargs="?", help="dataset directory (default from config)")
    a.add_argument("out_dir", nargs="?", help="output directory (default from config)")
    a.set_defaults(func=cmd_ablate)

    f = sub.add_parser(
        "fusion-hist", help="fusion-weight histograms from per-epoch checkpoints"
    )
    _add_common(f, preset=False)
    f.add_argument("run_dir", help="stage directory holding epoch_* checkpoints")
    f.add_argument("data_dir", help="dataset directory")
    f.add_argument("out_dir", help="output directory")
    f.add_argument("--epochs", required=True, help="comma list, e.g. 1,5,10")
    f.set_defaults(func=cmd_fusion_hist)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _check_thread_env()
        return args.func(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except CycleStackError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
