"""
Translation networks, discriminators, and fusion
================================================

The building blocks: an encoder/residual/decoder translation net, a patch
discriminator that scores overlapping receptive fields, and a fusion block
that blends a coarse upsampled image with a refined one through a learned
per-pixel weight.
"""

import numpy as np

from cyclestack.engine.tensor import Tensor
from cyclestack.networks import (
    Conv2d,
    DiscriminatorConfig,
    FusionBlock,
    FusionBlockConfig,
    PatchDiscriminator,
    PixelShuffle,
    TranslationNet,
    TranslationNetConfig,
)

rng = np.random.default_rng(7)

# A translation net maps 3-channel images to 3-channel images at the same
# resolution: strided conv downsampling, a residual trunk, and pixel-shuffle
# upsampling back. in_channels is 6 when a skip connection concatenates the
# raw input alongside the upsampled coarse output.
net = TranslationNet(TranslationNetConfig(base_filters=16, n_res_blocks=2), rng)
n_params = sum(int(np.prod(p.shape)) for _, p in net.named_parameters())
print("translation net parameters:", n_params)

x = Tensor(rng.uniform(-1, 1, size=(2, 3, 32, 32)).astype(np.float32))
y = net.forward(x)
print("output shape:", y.shape, " range: [%.3f, %.3f]" % (y.data.min(), y.data.max()))

# The discriminator never sees the whole image at once: its output is a
# grid of raw logits, one per overlapping patch, so realism is judged
# locally rather than globally.
disc = PatchDiscriminator(DiscriminatorConfig(base_filters=16, n_layers=3), rng)
logits = disc.forward(y)
print("patch logits shape:", logits.shape)

# The fusion block sees the raw input plus both candidate translations
# (9 channels) and emits a weight map alpha in (0, 1):
# fused = y1*(1-alpha) + y2*alpha.
fusion = FusionBlock(FusionBlockConfig(hidden_filters=8), rng)
y1 = Tensor(rng.uniform(-1, 1, size=(2, 3, 32, 32)).astype(np.float32))
alpha, fused = fusion.forward(x, y1, y)
print("alpha shape:", alpha.shape, " mean alpha: %.4f" % alpha.data.mean())

# Pixel-shuffle upsampling is prone to checkerboard artifacts when the r*r
# sub-kernels start out independent. ICNR initialization copies one kernel
# across each group of r*r output channels, so right after init the shuffled
# output is constant on every 2x2 block, exactly like nearest-neighbour
# upsampling.
conv = Conv2d(4, 16, 3, stride=1, pad=1, rng=rng, icnr_r=2)
up = PixelShuffle(2).forward(
    conv.forward(Tensor(rng.normal(size=(1, 4, 5, 5)).astype(np.float32)))
)
blocks = up.data.reshape(1, 4, 5, 2, 5, 2)
print("ICNR 2x2 blocks constant:", bool(np.all(blocks == blocks[:, :, :, :1, :, :1])))
