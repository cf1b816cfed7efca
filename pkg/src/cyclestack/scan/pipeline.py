"""The stacked pipeline: stages, refinement forward passes, full translation.

A pipeline holds N stages whose resolutions double. Stage 1 translates at the
coarsest resolution; each later stage upsamples the previous output, refines
it with its own translation net (optionally seeing the full-resolution input
via channel concat), and merges the two candidates with its fusion variant.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from ..engine import Tensor, ops
from ..errors import ConfigError, ShapeError
from ..networks import (
    DiscriminatorConfig,
    FusionBlock,
    FusionBlockConfig,
    Module,
    ParameterStore,
    PatchDiscriminator,
    TranslationNet,
    TranslationNetConfig,
    fuse_with_alpha,
)

FUSION_VARIANTS = ("lpw", "uw", "luw", "rf")


@dataclass(frozen=True)
class StageSpec:
    resolution: int
    base_filters: int = 16
    n_res_blocks: int = 3
    disc_filters: int = 16
    disc_layers: int = 3
    fusion_hidden: int = 8
    fusion_variant: str = "lpw"
    skip: bool = True
    fusion: bool = True

    def validate(self) -> "StageSpec":
        if self.resolution < 8:
            raise ConfigError(f"stage resolution must be >= 8, got {self.resolution}")
        if self.fusion_variant not in FUSION_VARIANTS:
            raise ConfigError(
                f"fusion_variant must be one of {FUSION_VARIANTS}, "
                f"got {self.fusion_variant!r}"
            )
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(d: dict) -> "StageSpec":
        known = set(StageSpec.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown stage fields: {sorted(unknown)}")
        if "resolution" not in d:
            raise ConfigError("stage spec needs a resolution")
        return StageSpec(**d).validate()


class Stage(Module):
    """One resolution level: translation nets both ways, two discriminators,
    and (from stage 2 on) the fusion machinery for each direction."""

    def __init__(self, index: int, spec: StageSpec, rng: np.random.Generator):
        super().__init__()
        if index < 1:
            raise ConfigError("stage indices start at 1")
        spec.validate()
        self.index = index
        self.spec = spec
        in_c = 3 if index == 1 or not spec.skip else 6
        tcfg = TranslationNetConfig(
            base_filters=spec.base_filters,
            n_res_blocks=spec.n_res_blocks,
            in_channels=in_c,
        )
        dcfg = DiscriminatorConfig(
            base_filters=spec.disc_filters, n_layers=spec.disc_layers
        )
        self.G = TranslationNet(tcfg, rng)
        self.F = TranslationNet(tcfg, rng)
        self.D_X = PatchDiscriminator(dcfg, rng)
        self.D_Y = PatchDiscriminator(dcfg, rng)
        self.uw_w = 0.0
        if index >= 2 and spec.fusion:
            if spec.fusion_variant == "lpw":
                fcfg = FusionBlockConfig(hidden_filters=spec.fusion_hidden)
                self.fuse_G = FusionBlock(fcfg, rng)
                self.fuse_F = FusionBlock(fcfg, rng)
            elif spec.fusion_variant == "luw":
                self.theta_G = Tensor.scalar(0.0, requires_grad=True)
                self.theta_F = Tensor.scalar(0.0, requires_grad=True)

    def translation_net(self, direction: str) -> TranslationNet:
        return self.G if direction == "G" else self.F

    def discriminator(self, direction: str) -> PatchDiscriminator:
        # the discriminator judging this direction's OUTPUT domain
        return self.D_Y if direction == "G" else self.D_X

    def generator_modules(self) -> list[tuple[str, Module]]:
        mods = [("G", self.G), ("F", self.F)]
        if hasattr(self, "fuse_G"):
            mods.append(("fuse_G", self.fuse_G))
            mods.append(("fuse_F", self.fuse_F))
        return mods

    def generator_parameters(self) -> list[tuple[str, Tensor]]:
        out = []
        for name, m in self.generator_modules():
            out.extend(m.named_parameters(name + "."))
        if hasattr(self, "theta_G"):
            out.append(("theta_G", self.theta_G))
            out.append(("theta_F", self.theta_F))
        out.sort(key=lambda kv: kv[0])
        return out

    def discriminator_parameters(self) -> list[tuple[str, Tensor]]:
        out = self.D_X.named_parameters("D_X.") + self.D_Y.named_parameters("D_Y.")
        out.sort(key=lambda kv: kv[0])
        return out


def _direction_check(direction: str) -> None:
    if direction not in ("G", "F"):
        raise ConfigError(f"direction must be 'G' (X to Y) or 'F' (Y to X)")


def refine_forward(
    stage: Stage, x_full: Tensor, y_prev: Tensor, direction: str = "G"
) -> tuple[Tensor, Optional[Tensor], Tensor]:
    """One refinement step: upsample the previous output, translate, fuse.

    Returns (y_hat2, alpha, fused_output); alpha is None for variants without
    a per-pixel weight map (rf, fusion off).
    """
    _direction_check(direction)
    if stage.index < 2:
        raise ConfigError("refine_forward applies to stages >= 2")
    if (
        x_full.shape[2] != 2 * y_prev.shape[2]
        or x_full.shape[3] != 2 * y_prev.shape[3]
    ):
        raise ShapeError(
            f"refinement input {x_full.shape} must be exactly 2x the previous "
            f"output {y_prev.shape}"
        )
    spec = stage.spec
    u = ops.nearest_up_2x(y_prev)
    t_in = ops.concat_channels(u, x_full) if spec.skip else u
    y2 = stage.translation_net(direction)(t_in)
    if not spec.fusion:
        return y2, None, y2
    if spec.fusion_variant == "lpw":
        block = stage.fuse_G if direction == "G" else stage.fuse_F
        alpha, fused = block(x_full, u, y2)
        return y2, alpha, fused
    if spec.fusion_variant == "uw":
        w = float(stage.uw_w)
        fused = ops.add(ops.smul(u, 1.0 - w), ops.smul(y2, w))
        alpha = Tensor.full((u.shape[0], 1, u.shape[2], u.shape[3]), w)
        return y2, alpha, fused
    if spec.fusion_variant == "luw":
        theta = stage.theta_G if direction == "G" else stage.theta_F
        w = ops.sigmoid(theta)
        alpha = ops.broadcast_to(w, (u.shape[0], 1, u.shape[2], u.shape[3]))
        return y2, alpha, fuse_with_alpha(u, y2, alpha)
    # rf: residual sum, clamped back to the valid image range
    return y2, None, ops.clamp(ops.add(u, y2), -1.0, 1.0)


class Pipeline(Module):
    """Stages with doubling resolutions plus the seed that built them."""

    def __init__(self, specs: list[StageSpec], seed: int):
        super().__init__()
        if not specs:
            raise ConfigError("pipeline needs at least one stage")
        for i, spec in enumerate(specs[1:], start=2):
            if spec.resolution != 2 * specs[i - 2].resolution:
                raise ConfigError(
                    f"stage {i} resolution {spec.resolution} must double stage "
                    f"{i - 1} ({specs[i - 2].resolution})"
                )
        self.seed = int(seed)
        self.stages: list[Stage] = []
        for i, spec in enumerate(specs, start=1):
            rng = np.random.Generator(
                np.random.PCG64(np.random.SeedSequence([self.seed, i]))
            )
            stage = Stage(i, spec, rng)
            setattr(self, f"stage{i}", stage)
            self.stages.append(stage)

    @property
    def n_stages(self) -> int:
        return len(self.stages)

    @property
    def top_resolution(self) -> int:
        return self.stages[-1].spec.resolution

    def stage(self, k: int) -> Stage:
        if not 1 <= k <= len(self.stages):
            raise ConfigError(f"no stage {k} in a {len(self.stages)}-stage pipeline")
        return self.stages[k - 1]

    def specs(self) -> list[StageSpec]:
        return [s.spec for s in self.stages]

    def parameter_store(self, only_stages: Optional[list[int]] = None) -> ParameterStore:
        store = ParameterStore()
        for stage in self.stages:
            if only_stages is not None and stage.index not in only_stages:
                continue
            store.add_module(f"stage{stage.index}", stage)
        return store

    def stage_digest(self, stages: Optional[list[int]] = None) -> str:
        return self.parameter_store(only_stages=stages).digest()


def stage_inputs(image: Tensor, n_stages: int) -> list[Tensor]:
    """The input image repeatedly area-downsampled; entry j-1 feeds stage j."""
    down = [image]
    for _ in range(n_stages - 1):
        down.append(ops.area_down_2x(down[-1]))
    return list(reversed(down))


def translate(
    pipeline: Pipeline,
    image: Tensor,
    direction: str = "G",
    collect: bool = False,
    upto: Optional[int] = None,
):
    """Run the full stack: coarse translation at stage 1, then refinements.

    With ``collect`` returns (output, {"intermediates": [per-stage outputs],
    "alphas": [alpha maps or None for stages >= 2]}).
    """
    _direction_check(direction)
    k = pipeline.n_stages if upto is None else upto
    expected = pipeline.stage(k).spec.resolution
    if image.shape[2] != expected or image.shape[3] != expected:
        raise ShapeError(
            f"translate: input is {image.shape[2]}x{image.shape[3]}, "
            f"pipeline expects {expected}x{expected}"
        )
    inputs = stage_inputs(image, k)
    y = pipeline.stage(1).translation_net(direction)(inputs[0])
    intermediates = [y]
    alphas: list[Optional[Tensor]] = []
    for j in range(2, k + 1):
        _, alpha, y = refine_forward(pipeline.stage(j), inputs[j - 1], y, direction)
        intermediates.append(y)
        alphas.append(alpha)
    if collect:
        return y, {"intermediates": intermediates, "alphas": alphas}
    return y
