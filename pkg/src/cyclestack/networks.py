"""Network builders: translation nets, adaptive fusion blocks, patch discriminators.

All weights come from a caller-supplied seeded generator, drawn in a fixed
order, so identical seeds give bit-identical parameters.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Iterator, Optional, Union

import numpy as np

from .engine import Tensor, ops
from .errors import ConfigError, ShapeError

_f32 = np.float32

RngLike = Union[int, np.random.Generator]

WEIGHT_SIGMA = 0.02


def _as_rng(rng_seed: RngLike) -> np.random.Generator:
    if isinstance(rng_seed, np.random.Generator):
        return rng_seed
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(rng_seed)))


# -- configs -------------------------------------------------------------------


@dataclass(frozen=True)
class TranslationNetConfig:
    base_filters: int = 16
    n_res_blocks: int = 3
    in_channels: int = 3
    out_channels: int = 3

    def validate(self) -> "TranslationNetConfig":
        if self.base_filters < 1:
            raise ConfigError("translation net: base_filters must be >= 1")
        if self.n_res_blocks < 0:
            raise ConfigError("translation net: n_res_blocks must be >= 0")
        if self.in_channels not in (3, 6):
            raise ConfigError("translation net: in_channels must be 3 or 6")
        if self.out_channels != 3:
            raise ConfigError("translation net: out_channels must be 3")
        return self


@dataclass(frozen=True)
class FusionBlockConfig:
    hidden_filters: int = 8
    in_channels: int = 9

    def validate(self) -> "FusionBlockConfig":
        if self.hidden_filters < 1:
            raise ConfigError("fusion block: hidden_filters must be >= 1")
        if self.in_channels != 9:
            raise ConfigError("fusion block: in_channels must be 9 (x + y1 + y2)")
        return self


@dataclass(frozen=True)
class DiscriminatorConfig:
    base_filters: int = 16
    n_layers: int = 3

    def validate(self) -> "DiscriminatorConfig":
        if self.base_filters < 1:
            raise ConfigError("discriminator: base_filters must be >= 1")
        if self.n_layers < 1:
            raise ConfigError("discriminator: n_layers must be >= 1")
        return self


# -- module tree -----------------------------------------------------------


class Module:
    """Minimal parameter-tree node: tensors and child modules by attribute."""

    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_mods", {})

    def __setattr__(self, name, value):
        if isinstance(value, Tensor):
            self._params[name] = value
        elif isinstance(value, Module):
            self._mods[name] = value
        object.__setattr__(self, name, value)

    def named_parameters(self, prefix: str = "") -> list[tuple[str, Tensor]]:
        """All (hierarchical name, tensor) pairs, lexicographically sorted."""
        out: list[tuple[str, Tensor]] = []
        for k, t in self._params.items():
            out.append((prefix + k, t))
        for k, m in self._mods.items():
            out.extend(m.named_parameters(prefix + k + "."))
        out.sort(key=lambda kv: kv[0])
        return out

    def parameters(self) -> list[Tensor]:
        return [t for _, t in self.named_parameters()]

    def set_requires_grad(self, flag: bool) -> None:
        for _, t in self.named_parameters():
            t.requires_grad = flag

    def forward(self, *args):
        raise NotImplementedError

    def __call__(self, *args):
        return self.forward(*args)


class Sequential(Module):
    def __init__(self, *mods: Module):
        super().__init__()
        self._seq = list(mods)
        for i, m in enumerate(mods):
            setattr(self, f"m{i:02d}", m)

    def forward(self, x: Tensor) -> Tensor:
        for m in self._seq:
            x = m(x)
        return x


def icnr_weights(
    rng: np.random.Generator, out_c: int, in_c: int, k: int, r: int, sigma: float
) -> np.ndarray:
    """Sub-pixel conv init: r^2-channel groups share one kernel, so the
    shuffled output starts 2x2-block-constant (no checkerboard)."""
    if out_c % (r * r):
        raise ConfigError(f"ICNR needs out channels divisible by r^2, got {out_c}")
    base = rng.normal(0.0, sigma, size=(out_c // (r * r), in_c, k, k))
    return np.repeat(base, r * r, axis=0).astype(_f32)


class Conv2d(Module):
    def __init__(
        self,
        in_c: int,
        out_c: int,
        k: int,
        stride: int,
        pad: int,
        rng: np.random.Generator,
        icnr_r: Optional[int] = None,
        bias_init: float = 0.0,
    ):
        super().__init__()
        self.stride = stride
        self.pad = pad
        if icnr_r is None:
            w = rng.normal(0.0, WEIGHT_SIGMA, size=(out_c, in_c, k, k)).astype(_f32)
        else:
            w = icnr_weights(rng, out_c, in_c, k, icnr_r, WEIGHT_SIGMA)
        self.weight = Tensor(w, requires_grad=True)
        self.bias = Tensor.full((1, out_c, 1, 1), bias_init, requires_grad=True)

    def forward(self, x: Tensor) -> Tensor:
        return ops.conv2d(x, self.weight, self.bias, stride=self.stride, pad=self.pad)


class InstanceNorm2d(Module):
    def __init__(self, channels: int, eps: float = 1e-5):
        super().__init__()
        self.eps = eps
        self.gamma = Tensor.full((1, channels, 1, 1), 1.0, requires_grad=True)
        self.beta = Tensor.zeros((1, channels, 1, 1), requires_grad=True)

    def forward(self, x: Tensor) -> Tensor:
        return ops.instance_norm(x, self.gamma, self.beta, eps=self.eps)


class ReLU(Module):
    def forward(self, x: Tensor) -> Tensor:
        return ops.relu(x)


class LeakyReLU(Module):
    def __init__(self, slope: float = 0.2):
        super().__init__()
        self.slope = slope

    def forward(self, x: Tensor) -> Tensor:
        return ops.leaky_relu(x, self.slope)


class Tanh(Module):
    def forward(self, x: Tensor) -> Tensor:
        return ops.tanh(x)


class Sigmoid(Module):
    def forward(self, x: Tensor) -> Tensor:
        return ops.sigmoid(x)


class PixelShuffle(Module):
    def __init__(self, r: int):
        super().__init__()
        self.r = r

    def forward(self, x: Tensor) -> Tensor:
        return ops.pixel_shuffle(x, self.r)


class ResidualBlock(Module):
    """conv-IN-ReLU-conv-IN with an additive skip, constant channel count."""

    def __init__(self, channels: int, rng: np.random.Generator):
        super().__init__()
        self.conv1 = Conv2d(channels, channels, 3, 1, 1, rng)
        self.norm1 = InstanceNorm2d(channels)
        self.conv2 = Conv2d(channels, channels, 3, 1, 1, rng)
        self.norm2 = InstanceNorm2d(channels)

    def forward(self, x: Tensor) -> Tensor:
        y = ops.relu(self.norm1(self.conv1(x)))
        y = self.norm2(self.conv2(y))
        return ops.add(x, y)


# -- the three network families ---------------------------------------------


class TranslationNet(Module):
    """Encoder / residual trunk / sub-pixel decoder, tanh output in (-1, 1)."""

    def __init__(self, cfg: TranslationNetConfig, rng: np.random.Generator):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        f = cfg.base_filters
        self.head = Sequential(
            Conv2d(cfg.in_channels, f, 7, 1, 3, rng), InstanceNorm2d(f), ReLU()
        )
        self.down1 = Sequential(
            Conv2d(f, 2 * f, 3, 2, 1, rng), InstanceNorm2d(2 * f), ReLU()
        )
        self.down2 = Sequential(
            Conv2d(2 * f, 4 * f, 3, 2, 1, rng), InstanceNorm2d(4 * f), ReLU()
        )
        self.trunk = Sequential(
            *[ResidualBlock(4 * f, rng) for _ in range(cfg.n_res_blocks)]
        )
        self.up1 = Sequential(
            Conv2d(4 * f, 2 * f * 4, 3, 1, 1, rng, icnr_r=2),
            PixelShuffle(2),
            InstanceNorm2d(2 * f),
            ReLU(),
        )
        self.up2 = Sequential(
            Conv2d(2 * f, f * 4, 3, 1, 1, rng, icnr_r=2),
            PixelShuffle(2),
            InstanceNorm2d(f),
            ReLU(),
        )
        self.tail = Sequential(Conv2d(f, cfg.out_channels, 7, 1, 3, rng), Tanh())

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[1] != self.cfg.in_channels:
            raise ShapeError(
                f"translation net expects {self.cfg.in_channels} channels, "
                f"got {x.shape[1]}"
            )
        y = self.head(x)
        y = self.down1(y)
        y = self.down2(y)
        y = self.trunk(y)
        y = self.up1(y)
        y = self.up2(y)
        return self.tail(y)


FUSION_BIAS_INIT = -2.0  # alpha starts near 0.12: lean on the coarse stage first


class FusionBlock(Module):
    """Predicts a per-pixel blend weight alpha from (x, y1, y2); combines
    fused = y1*(1-alpha) + y2*alpha with alpha broadcast over color channels."""

    def __init__(self, cfg: FusionBlockConfig, rng: np.random.Generator):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        h = cfg.hidden_filters
        self.net = Sequential(
            Conv2d(cfg.in_channels, h, 3, 1, 1, rng),
            InstanceNorm2d(h),
            ReLU(),
            Conv2d(h, h, 3, 1, 1, rng),
            InstanceNorm2d(h),
            ReLU(),
            Conv2d(h, 1, 3, 1, 1, rng, bias_init=FUSION_BIAS_INIT),
            Sigmoid(),
        )

    def forward(self, x: Tensor, y1: Tensor, y2: Tensor) -> tuple[Tensor, Tensor]:
        if not (x.shape == y1.shape == y2.shape):
            raise ShapeError(
                f"fusion inputs must share shape, got {x.shape}, {y1.shape}, {y2.shape}"
            )
        if x.shape[1] * 3 != self.cfg.in_channels:
            raise ShapeError(f"fusion expects 3-channel images, got {x.shape[1]}")
        alpha = self.net(ops.concat_channels(x, y1, y2))
        return alpha, fuse_with_alpha(y1, y2, alpha)


def fuse_with_alpha(y1: Tensor, y2: Tensor, alpha: Tensor) -> Tensor:
    """y1*(1-alpha) + y2*alpha; alpha is (N,1,H,W) broadcast over channels."""
    if y1.shape != y2.shape:
        raise ShapeError(f"fuse: shape mismatch {y1.shape} vs {y2.shape}")
    if alpha.shape != (y1.shape[0], 1, y1.shape[2], y1.shape[3]):
        raise ShapeError(f"fuse: alpha shape {alpha.shape} does not match {y1.shape}")
    ab = ops.broadcast_to(alpha, y1.shape)
    return ops.add(ops.mul(y1, ops.sadd(ops.neg(ab), 1.0)), ops.mul(y2, ab))


def forward_fusion(
    x: Tensor, y1: Tensor, y2: Tensor, block: FusionBlock
) -> tuple[Tensor, Tensor]:
    return block(x, y1, y2)


class PatchDiscriminator(Module):
    """Stack of stride-2 4x4 convs emitting a raw patch score map (no sigmoid)."""

    def __init__(self, cfg: DiscriminatorConfig, rng: np.random.Generator, in_channels: int = 3):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        layers: list[Module] = []
        c_in = in_channels
        for i in range(cfg.n_layers):
            c_out = cfg.base_filters * (2**i)
            layers.append(Conv2d(c_in, c_out, 4, 2, 1, rng))
            if i > 0:
                layers.append(InstanceNorm2d(c_out))
            layers.append(LeakyReLU(0.2))
            c_in = c_out
        layers.append(Conv2d(c_in, 1, 4, 1, 1, rng))
        self.net = Sequential(*layers)

    def forward(self, x: Tensor) -> Tensor:
        return self.net(x)

    def score_map_side(self, input_side: int) -> int:
        """Expected score-map side length for a square input."""
        side = input_side
        for _ in range(self.cfg.n_layers):
            side = (side + 2 - 4) // 2 + 1
            if side < 1:
                raise ShapeError(f"input side {input_side} below receptive footprint")
        side = (side + 2 - 4) // 1 + 1
        if side < 1:
            raise ShapeError(f"input side {input_side} below receptive footprint")
        return side


# -- builders (seed or generator in, network out) -------------------------------


def build_translation_net(cfg: TranslationNetConfig, rng_seed: RngLike) -> TranslationNet:
    return TranslationNet(cfg, _as_rng(rng_seed))


def build_fusion_block(cfg: FusionBlockConfig, rng_seed: RngLike) -> FusionBlock:
    return FusionBlock(cfg, _as_rng(rng_seed))


def build_patch_discriminator(
    cfg: DiscriminatorConfig, rng_seed: RngLike, in_channels: int = 3
) -> PatchDiscriminator:
    return PatchDiscriminator(cfg, _as_rng(rng_seed), in_channels)


# -- parameter store ---------------------------------------------------------


class ParameterStore:
    """Flat ordered map of hierarchical parameter names to tensors."""

    def __init__(self):
        self._items: dict[str, Tensor] = {}

    def add(self, name: str, tensor: Tensor) -> None:
        if name in self._items:
            raise ConfigError(f"duplicate parameter name {name!r}")
        self._items[name] = tensor

    def add_module(self, prefix: str, module: Module) -> None:
        for name, t in module.named_parameters(prefix + "." if prefix else ""):
            self.add(name, t)

    def names(self) -> list[str]:
        return sorted(self._items)

    def items(self) -> Iterator[tuple[str, Tensor]]:
        for name in self.names():
            yield name, self._items[name]

    def get(self, name: str) -> Tensor:
        return self._items[name]

    def __len__(self) -> int:
        return len(self._items)

    def __contains__(self, name: str) -> bool:
        return name in self._items

    def digest(self) -> str:
        """SHA-256 over names, shapes, and little-endian float32 bytes."""
        h = hashlib.sha256()
        for name, t in self.items():
            h.update(name.encode())
            h.update(repr(t.shape).encode())
            h.update(t.data.astype("<f4", copy=False).tobytes())
        return h.hexdigest()


def count_parameters(store: ParameterStore) -> int:
    return sum(t.numel for _, t in store.items())
