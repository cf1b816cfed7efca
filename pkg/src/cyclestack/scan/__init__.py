"""Stacked translation pipeline: stages, losses, training, checkpoints."""

from .checkpoint import load_checkpoint, load_manifest, save_checkpoint
from .losses import (
    GENERATOR_LOSS_FORMS,
    LossWeights,
    adversarial_loss_D,
    adversarial_loss_G,
    cycle_loss,
    stage1_objective,
)
from .pipeline import (
    FUSION_VARIANTS,
    Pipeline,
    Stage,
    StageSpec,
    refine_forward,
    stage_inputs,
    translate,
)
from .training import (
    STAGE_SCHEDULES,
    TrainConfig,
    lr_schedule,
    train_stage,
)

__all__ = [
    "FUSION_VARIANTS",
    "GENERATOR_LOSS_FORMS",
    "LossWeights",
    "Pipeline",
    "STAGE_SCHEDULES",
    "Stage",
    "StageSpec",
    "TrainConfig",
    "adversarial_loss_D",
    "adversarial_loss_G",
    "cycle_loss",
    "load_checkpoint",
    "load_manifest",
    "lr_schedule",
    "refine_forward",
    "save_checkpoint",
    "stage1_objective",
    "stage_inputs",
    "train_stage",
    "translate",
]
