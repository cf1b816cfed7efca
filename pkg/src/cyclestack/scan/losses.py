"""Adversarial, cycle, and combined stage objectives.

Discriminators emit raw score maps; the sigmoid lives here and is clamped to
[1e-7, 1 - 1e-7] before any log. The discriminator loss carries a gradient
penalty evaluated at the real samples: lambda_gp * (||d mean-score / d x|| - 1)^2,
which needs the engine's second-order (create_graph) backward.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

from ..engine import Tensor, current_tape, ops
from ..errors import ConfigError, ShapeError, TapeError

PROB_EPS = 1e-7
NORM_EPS = 1e-12

GENERATOR_LOSS_FORMS = ("non_saturating", "literal_minimax")

Net = Callable[[Tensor], Tensor]


@dataclass(frozen=True)
class LossWeights:
    lambda_cycle: float = 10.0
    lambda_gp: float = 10.0

    def validate(self) -> "LossWeights":
        if self.lambda_cycle < 0 or self.lambda_gp < 0:
            raise ConfigError("loss weights must be non-negative")
        return self


def _probs(scores: Tensor) -> Tensor:
    return ops.clamp(ops.sigmoid(scores), PROB_EPS, 1.0 - PROB_EPS)


def adversarial_loss_D(
    D: Net, real: Tensor, fake: Tensor, lambda_gp: float
) -> dict[str, Tensor]:
    """Discriminator loss: -[mean log s(D(real)) + mean log(1 - s(D(fake)))]
    plus the gradient penalty at the real batch. Needs an active tape."""
    if real.shape != fake.shape:
        raise ShapeError(f"adv_D: real {real.shape} vs fake {fake.shape}")
    tape = current_tape()
    if tape is None:
        raise TapeError("adversarial_loss_D needs an active tape (gradient penalty)")
    xr = real.copy(requires_grad=True)
    scores_real = D(xr)
    p_real = _probs(scores_real)
    p_fake = _probs(D(fake.detach()))
    log_term = ops.neg(
        ops.add(
            ops.mean_all(ops.log(p_real)),
            ops.mean_all(ops.log(ops.sadd(ops.neg(p_fake), 1.0))),
        )
    )
    (gx,) = tape.gradients(ops.mean_all(scores_real), [xr], create_graph=True)
    sumsq = ops.reduce_sum(ops.mul(gx, gx), (1, 2, 3))
    norm = ops.pow_const(ops.sadd(sumsq, NORM_EPS), 0.5)
    excess = ops.sadd(norm, -1.0)
    gp_term = ops.smul(ops.mean_all(ops.mul(excess, excess)), lambda_gp)
    return {
        "loss": ops.add(log_term, gp_term),
        "log_term": log_term,
        "gp_term": gp_term,
    }


def adversarial_loss_G(D: Net, fake: Tensor, form: str = "non_saturating") -> Tensor:
    """Generator-side adversarial term. The non-saturating form minimizes
    -mean log s(D(fake)); the literal minimax form minimizes
    mean log(1 - s(D(fake)))."""
    p = _probs(D(fake))
    if form == "non_saturating":
        return ops.neg(ops.mean_all(ops.log(p)))
    if form == "literal_minimax":
        return ops.mean_all(ops.log(ops.sadd(ops.neg(p), 1.0)))
    raise ConfigError(f"unknown generator loss form {form!r}")


def cycle_loss(G_fwd: Net, F_bwd: Net, x: Tensor) -> Tensor:
    """Mean absolute reconstruction error through the round trip F(G(x))."""
    return ops.l1_mean(x, F_bwd(G_fwd(x)))


def _check_resolution(batch: Tensor, expected: Optional[int], what: str) -> None:
    if expected is not None and (batch.shape[2] != expected or batch.shape[3] != expected):
        raise ShapeError(
            f"{what}: batch is {batch.shape[2]}x{batch.shape[3]}, "
            f"stage expects {expected}x{expected}"
        )


def stage1_objective(
    batch_x: Tensor,
    batch_y: Tensor,
    nets,
    weights: LossWeights,
    form: str = "non_saturating",
    expected_resolution: Optional[int] = None,
) -> dict[str, Tensor]:
    """Both sides of the first-stage minimax objective in one pass.

    ``nets`` provides G (X to Y), F (Y to X), D_X, D_Y. Generator loss is the
    two adversarial terms plus lambda times both cycle reconstructions;
    discriminator loss sums the two per-domain discriminator losses.
    """
    _check_resolution(batch_x, expected_resolution, "stage1 x-batch")
    _check_resolution(batch_y, expected_resolution, "stage1 y-batch")
    fake_y = nets.G(batch_x)
    fake_x = nets.F(batch_y)
    cycle_term = ops.add(
        ops.l1_mean(batch_x, nets.F(fake_y)), ops.l1_mean(batch_y, nets.G(fake_x))
    )
    adv_term = ops.add(
        adversarial_loss_G(nets.D_Y, fake_y, form),
        adversarial_loss_G(nets.D_X, fake_x, form),
    )
    loss_G = ops.add(adv_term, ops.smul(cycle_term, weights.lambda_cycle))
    d_y = adversarial_loss_D(nets.D_Y, batch_y, fake_y, weights.lambda_gp)
    d_x = adversarial_loss_D(nets.D_X, batch_x, fake_x, weights.lambda_gp)
    return {
        "loss_G": loss_G,
        "loss_D": ops.add(d_y["loss"], d_x["loss"]),
        "cycle_term": cycle_term,
        "adv_term": adv_term,
        "gp_term": ops.add(d_y["gp_term"], d_x["gp_term"]),
    }
