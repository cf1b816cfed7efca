"""The training loop: alternating discriminator/generator steps, batch size 1.

Freezing works through ``requires_grad``: the engine only tapes an op when
some input participates in autodiff, so a frozen stage fed raw data runs
untaped for free, while a frozen stage inside a cycle reconstruction still
lets gradients flow through to its (taped) input without computing weight
gradients.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import numpy as np

from ..engine import Adam, Tape, ops, paused
from ..errors import ConfigError, NumericError, TrainingError
from .checkpoint import save_checkpoint
from .losses import (
    GENERATOR_LOSS_FORMS,
    LossWeights,
    adversarial_loss_D,
    adversarial_loss_G,
)
from .pipeline import Pipeline, refine_forward, stage_inputs

STAGE_SCHEDULES = ("sequential_frozen", "fine_tune_previous", "from_scratch_joint")

TRACE_FIELDS = ("iter", "loss_G", "loss_D", "cycle_term", "adv_term", "gp_term")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    decay_start_epoch: int = 5
    lr0: float = 2e-4
    seed: int = 0
    iterations_per_epoch: int = 100
    stage_schedule: str = "sequential_frozen"
    generator_loss_form: str = "non_saturating"
    checkpoint_every: int = 1

    def validate(self) -> "TrainConfig":
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if not 0 < self.decay_start_epoch <= self.epochs:
            raise ConfigError("need 0 < decay_start_epoch <= epochs")
        if self.lr0 < 0:
            raise ConfigError("lr0 must be >= 0")
        if self.iterations_per_epoch < 0:
            raise ConfigError("iterations_per_epoch must be >= 0")
        if self.stage_schedule not in STAGE_SCHEDULES:
            raise ConfigError(
                f"stage_schedule must be one of {STAGE_SCHEDULES}, "
                f"got {self.stage_schedule!r}"
            )
        if self.generator_loss_form not in GENERATOR_LOSS_FORMS:
            raise ConfigError(
                f"generator_loss_form must be one of {GENERATOR_LOSS_FORMS}"
            )
        if self.checkpoint_every < 1:
            raise ConfigError("checkpoint_every must be >= 1")
        return self


def lr_schedule(epoch: int, cfg: TrainConfig) -> float:
    """Constant lr0 until decay_start_epoch, then linear to zero at `epochs`."""
    if not 0 <= epoch <= cfg.epochs:
        raise ConfigError(f"epoch {epoch} outside [0, {cfg.epochs}]")
    if epoch <= cfg.decay_start_epoch:
        return cfg.lr0
    return cfg.lr0 * (cfg.epochs - epoch) / (cfg.epochs - cfg.decay_start_epoch)


def _compose_chain(pipeline: Pipeline, inputs, direction: str, upto: int):
    """Per-stage outputs [y_1 .. y_upto] of one chained pass (plus alphas)."""
    y = pipeline.stage(1).translation_net(direction)(inputs[0])
    outs = [y]
    alphas = [None]
    for j in range(2, upto + 1):
        _, a, y = refine_forward(pipeline.stage(j), inputs[j - 1], y, direction)
        outs.append(y)
        alphas.append(a)
    return outs, alphas


def _compose_from(pipeline: Pipeline, image, direction: str, upto: int):
    """Full composition applied to a (possibly taped) image tensor."""
    outs, _ = _compose_chain(pipeline, stage_inputs(image, upto), direction, upto)
    return outs[-1]


def _acc(total, term):
    return term if total is None else ops.add(total, term)


def train_stage(
    pipeline: Pipeline,
    k: int,
    dataset,
    cfg: TrainConfig,
    weights: LossWeights = LossWeights(),
    out_dir=None,
) -> list[dict]:
    """Train stage k (and, under joint schedules, the stages below it).

    ``dataset`` needs ``train_images(domain, resolution) -> list[Tensor]``.
    Returns the per-iteration loss trace; optionally writes per-epoch
    checkpoints, a final checkpoint, and the trace CSV under ``out_dir``.
    """
    cfg.validate()
    weights.validate()
    pipeline.stage(k)  # raises on bad k
    if cfg.stage_schedule == "sequential_frozen":
        active = [k]
    else:
        active = list(range(1, k + 1))

    prior_flags = {}
    for stage in pipeline.stages:
        for name, t in stage.named_parameters(f"stage{stage.index}."):
            prior_flags[name] = t.requires_grad
            t.requires_grad = stage.index in active

    gen_params = []
    disc_params = []
    disc_modules = []
    for j in active:
        st = pipeline.stage(j)
        gen_params += [(f"stage{j}.{n}", t) for n, t in st.generator_parameters()]
        disc_params += [(f"stage{j}.{n}", t) for n, t in st.discriminator_parameters()]
        disc_modules += [st.D_X, st.D_Y]

    adam_G = Adam(gen_params, lr=cfg.lr0)
    adam_D = Adam(disc_params, lr=cfg.lr0)

    res_k = pipeline.stage(k).spec.resolution
    train_x = dataset.train_images("X", res_k)
    train_y = dataset.train_images("Y", res_k)
    if not train_x or not train_y:
        raise TrainingError("empty training set")
    rng = np.random.Generator(
        np.random.PCG64(np.random.SeedSequence([cfg.seed, k, 101]))
    )

    trace: list[dict] = []
    csv_file = None
    csv_writer = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        csv_file = open(os.path.join(out_dir, "loss_trace.csv"), "w", newline="")
        csv_writer = csv.writer(csv_file)
        csv_writer.writerow(TRACE_FIELDS)

    lam = weights.lambda_cycle
    form = cfg.generator_loss_form
    it_global = 0
    try:
        for epoch in range(cfg.epochs):
            lr = lr_schedule(epoch, cfg)
            for j in active:
                st = pipeline.stage(j)
                if j >= 2 and st.spec.fusion and st.spec.fusion_variant == "uw":
                    st.uw_w = epoch / cfg.epochs
            for _ in range(cfg.iterations_per_epoch):
                x_full = train_x[int(rng.integers(len(train_x)))]
                y_full = train_y[int(rng.integers(len(train_y)))]
                try:
                    row = _train_iteration(
                        pipeline, k, active, x_full, y_full,
                        adam_G, adam_D, disc_modules, lr, lam, form, weights,
                    )
                except NumericError as e:
                    raise TrainingError(
                        f"training diverged at stage {k}, iteration {it_global}: {e}"
                    ) from e
                it_global += 1
                row["iter"] = it_global
                trace.append(row)
                if csv_writer is not None:
                    csv_writer.writerow([row[f] for f in TRACE_FIELDS])
            if csv_file is not None:
                csv_file.flush()
            if out_dir is not None and (
                (epoch + 1) % cfg.checkpoint_every == 0 or epoch + 1 == cfg.epochs
            ):
                save_checkpoint(
                    pipeline,
                    os.path.join(out_dir, f"epoch_{epoch + 1:03d}"),
                    epoch=epoch + 1,
                    iteration=it_global,
                    rng_state=rng.bit_generator.state,
                )
        for j in active:
            st = pipeline.stage(j)
            if j >= 2 and st.spec.fusion and st.spec.fusion_variant == "uw":
                st.uw_w = 1.0
        if out_dir is not None:
            save_checkpoint(
                pipeline,
                os.path.join(out_dir, "final"),
                epoch=cfg.epochs,
                iteration=it_global,
                rng_state=rng.bit_generator.state,
            )
    finally:
        if csv_file is not None:
            csv_file.close()
        for stage in pipeline.stages:
            for name, t in stage.named_parameters(f"stage{stage.index}."):
                t.requires_grad = prior_flags[name]
    return trace


def _train_iteration(
    pipeline, k, active, x_full, y_full,
    adam_G, adam_D, disc_modules, lr, lam, form, weights,
):
    x_inputs = stage_inputs(x_full, k)
    y_inputs = stage_inputs(y_full, k)

    # discriminator step: fakes are constants, computed untaped
    with paused():
        fake_y_outs, _ = _compose_chain(pipeline, x_inputs, "G", k)
        fake_x_outs, _ = _compose_chain(pipeline, y_inputs, "F", k)
    loss_d_val = gp_val = 0.0
    with Tape() as tape:
        loss_d = None
        gp_sum = None
        for j in active:
            st = pipeline.stage(j)
            d_y = adversarial_loss_D(
                st.D_Y, y_inputs[j - 1], fake_y_outs[j - 1], weights.lambda_gp
            )
            d_x = adversarial_loss_D(
                st.D_X, x_inputs[j - 1], fake_x_outs[j - 1], weights.lambda_gp
            )
            loss_d = _acc(loss_d, ops.add(d_y["loss"], d_x["loss"]))
            gp_sum = _acc(gp_sum, ops.add(d_y["gp_term"], d_x["gp_term"]))
        tape.backward(loss_d)
        loss_d_val = loss_d.item()
        gp_val = gp_sum.item()
    adam_D.step(lr)
    adam_D.zero_grad()

    # generator step: discriminator weights held fixed
    for m in disc_modules:
        m.set_requires_grad(False)
    try:
        with Tape() as tape:
            fake_y_outs, _ = _compose_chain(pipeline, x_inputs, "G", k)
            fake_x_outs, _ = _compose_chain(pipeline, y_inputs, "F", k)
            loss_g = None
            cycle_sum = None
            adv_sum = None
            for j in active:
                st = pipeline.stage(j)
                adv = ops.add(
                    adversarial_loss_G(st.D_Y, fake_y_outs[j - 1], form),
                    adversarial_loss_G(st.D_X, fake_x_outs[j - 1], form),
                )
                recon_x = _compose_from(pipeline, fake_y_outs[j - 1], "F", j)
                recon_y = _compose_from(pipeline, fake_x_outs[j - 1], "G", j)
                cyc = ops.add(
                    ops.l1_mean(x_inputs[j - 1], recon_x),
                    ops.l1_mean(y_inputs[j - 1], recon_y),
                )
                loss_g = _acc(loss_g, ops.add(adv, ops.smul(cyc, lam)))
                cycle_sum = _acc(cycle_sum, cyc)
                adv_sum = _acc(adv_sum, adv)
            tape.backward(loss_g)
            loss_g_val = loss_g.item()
            cycle_val = cycle_sum.item()
            adv_val = adv_sum.item()
        adam_G.step(lr)
        adam_G.zero_grad()
    finally:
        for m in disc_modules:
            m.set_requires_grad(True)

    return {
        "loss_G": loss_g_val,
        "loss_D": loss_d_val,
        "cycle_term": cycle_val,
        "adv_term": adv_val,
        "gp_term": gp_val,
    }
