"""Detector configuration: class profiles, network shapes, training presets."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from ..engine.layers import SASpec
from ..weak_labels import BinEncoderConfig, PseudoLabelConfig


@dataclass(frozen=True)
class ClassProfile:
    name: str
    proposal_radius: float          # cylinder radius, also the CA-NMS distance
    gt_match_distance: float        # proposal-to-GT center distance for training
    mean_size: tuple[float, float, float]  # (h, w, l) anchor for size regression
    pseudo_shape: str               # gaussian | pillar
    search_x: tuple[float, float] | None = None
    search_z: tuple[float, float] | None = None

    def pseudo_config(self) -> PseudoLabelConfig:
        return PseudoLabelConfig(shape=self.pseudo_shape)


CAR_PROFILE = ClassProfile(
    name="Car", proposal_radius=4.0, gt_match_distance=1.4,
    mean_size=(1.53, 1.63, 3.88), pseudo_shape="gaussian")

PEDESTRIAN_PROFILE = ClassProfile(
    name="Pedestrian", proposal_radius=1.0, gt_match_distance=0.5,
    mean_size=(1.76, 0.66, 0.84), pseudo_shape="pillar",
    search_x=(-20.0, 20.0), search_z=(0.0, 48.0))

PROFILES = {"car": CAR_PROFILE, "pedestrian": PEDESTRIAN_PROFILE}


@dataclass(frozen=True)
class Stage1Config:
    num_points: int = 16384
    sa_specs: tuple[SASpec, ...] = (
        SASpec(4096, (0.1, 0.5), (16, 32), (32, 32)),
        SASpec(1024, (0.5, 1.0), (16, 32), (64, 64)),
        SASpec(256, (1.0, 2.0), (16, 32), (128, 128)),
        SASpec(64, (2.0, 4.0), (16, 32), (256, 256)),
    )
    fp_widths: tuple[int, ...] = (256, 256, 128, 128)
    head_hidden: int = 128
    bin_cfg: BinEncoderConfig = field(default_factory=BinEncoderConfig)

    @property
    def center_out(self) -> int:
        return 4 * self.bin_cfg.num_bins  # 2 axes x (bin logits + residuals)


@dataclass(frozen=True)
class Stage2Config:
    num_points: int = 512
    in_features: int = 5  # canonical x, y, z, intensity, foreground score
    sa_specs: tuple[SASpec, ...] = (
        SASpec(256, (0.4,), (16,), (64,)),
        SASpec(128, (0.8,), (16,), (128,)),
        SASpec(32, (1.6,), (16,), (256,)),
        SASpec(1, (9.0,), (32,), (512,)),
    )
    head_hidden: int = 128
    theta_bins: int = 12
    context_margin: float = 0.3  # extra crop radius around a cuboid


@dataclass(frozen=True)
class LossConfig:
    focal_alpha: float = 0.25
    focal_gamma: float = 2.0
    smooth_l1_transition: float = 1.0
    theta_bins: int = 12
    center_loss_weight: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.focal_alpha < 1.0:
            raise ValueError("focal_alpha must be in (0, 1)")
        if self.focal_gamma < 0:
            raise ValueError("focal_gamma must be >= 0")


@dataclass(frozen=True)
class TrainConfig:
    stage1_iterations: int = 8000
    stage1_batch: int = 25
    stage2_iterations: int = 50000
    stage2_batch: int = 800
    lr: float = 0.002
    weight_decay: float = 0.0001
    seed: int = 0
    log_every: int = 100
    augment: bool = True


def _scale_spec(spec: SASpec, width_div: int, point_div: int) -> SASpec:
    return SASpec(
        max(spec.group_size // point_div, 1),
        spec.radii,
        spec.caps,
        tuple(max(w // width_div, 8) for w in spec.mlp_widths),
    )


def desk_stage1_config() -> Stage1Config:
    base = Stage1Config()
    return Stage1Config(
        num_points=base.num_points // 8,
        sa_specs=tuple(_scale_spec(s, 4, 8) for s in base.sa_specs),
        fp_widths=tuple(max(w // 4, 8) for w in base.fp_widths),
        head_hidden=base.head_hidden // 4,
    )


def desk_stage2_config() -> Stage2Config:
    base = Stage2Config()
    return Stage2Config(
        num_points=base.num_points // 8,
        sa_specs=tuple(_scale_spec(s, 4, 8) for s in base.sa_specs),
        head_hidden=base.head_hidden // 4,
    )


def desk_train_config(seed: int = 0) -> TrainConfig:
    # Iterations / 20 per the desk scaling; batches are shrunk further so the
    # pure-numpy engine stays inside the desk time budget.
    return TrainConfig(
        stage1_iterations=400, stage1_batch=4,
        stage2_iterations=3600, stage2_batch=32,
        seed=seed,
    )


PRESETS = {
    "full": (Stage1Config(), Stage2Config(), TrainConfig()),
    "desk": (desk_stage1_config(), desk_stage2_config(), desk_train_config()),
}


def preset(name: str, seed: int = 0) -> tuple[Stage1Config, Stage2Config, TrainConfig]:
    try:
        s1, s2, tr = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return s1, s2, replace(tr, seed=seed)
