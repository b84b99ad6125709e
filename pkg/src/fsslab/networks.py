"""Neural components of the two-stage pipeline.

Stage 1: per-region encoder/bottleneck/decoder generators (3 blocks per side,
4 for the "rest" generator) with small patch discriminators. Stage 2: a
coarse-to-fine generator (global sub-network on the half-resolution input,
local sub-network on full resolution, fused at the local latent) judged by
multi-scale discriminators, optionally conditioned on an expanded style map.

All generators emit tanh outputs; images are handled in [-1, 1] internally.
"""

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import DataError, UsageError

NUM_STYLES = 3


def _check_divisible(x, factor):
    h, w = x.shape[-2], x.shape[-1]
    if h % factor or w % factor:
        raise DataError(
            f"spatial dims {h}x{w} must be divisible by {factor}")


def conv_block(in_ch, out_ch):
    return nn.Sequential(
        nn.Conv2d(in_ch, out_ch, kernel_size=3, stride=2, padding=1),
        nn.BatchNorm2d(out_ch),
        nn.ReLU(inplace=True),
    )


def deconv_block(in_ch, out_ch):
    return nn.Sequential(
        nn.ConvTranspose2d(in_ch, out_ch, kernel_size=3, stride=2,
                           padding=1, output_padding=1),
        nn.BatchNorm2d(out_ch),
        nn.ReLU(inplace=True),
    )


class BottleneckBlock(nn.Module):
    """Channel squeeze/expand residual unit (1x1 -> 3x3 -> 1x1)."""

    def __init__(self, channels, squeeze=4):
        super().__init__()
        mid = max(channels // squeeze, 8)
        self.body = nn.Sequential(
            nn.Conv2d(channels, mid, 1),
            nn.BatchNorm2d(mid),
            nn.ReLU(inplace=True),
            nn.Conv2d(mid, mid, 3, padding=1),
            nn.BatchNorm2d(mid),
            nn.ReLU(inplace=True),
            nn.Conv2d(mid, channels, 1),
            nn.BatchNorm2d(channels),
        )

    def forward(self, x):
        return F.relu(x + self.body(x))


class ComponentGenerator(nn.Module):
    """Encoder-decoder for one facial-component patch.

    depth encoder/decoder blocks (3 for eye/nose/mouth patches, 4 for the
    rest region), nine bottleneck residual blocks in between. Spatial size
    is preserved; input dims must divide by 2**depth.
    """

    def __init__(self, in_ch, out_ch, base=64, depth=3, n_bottleneck=9):
        super().__init__()
        self.depth = depth
        self.stride_factor = 2 ** depth

        enc = []
        ch = in_ch
        widths = [base * 2 ** i for i in range(depth)]
        for w in widths:
            enc.append(conv_block(ch, w))
            ch = w
        self.encoder = nn.Sequential(*enc)

        self.bottleneck = nn.Sequential(
            *[BottleneckBlock(ch) for _ in range(n_bottleneck)])

        dec = []
        for w in reversed(widths[:-1]):
            dec.append(deconv_block(ch, w))
            ch = w
        dec.append(deconv_block(ch, base))
        self.decoder = nn.Sequential(*dec)
        self.head = nn.Conv2d(base, out_ch, 3, padding=1)

    def forward(self, x):
        _check_divisible(x, self.stride_factor)
        z = self.encoder(x)
        z = self.bottleneck(z)
        z = self.decoder(z)
        return torch.tanh(self.head(z))

    def encode(self, x):
        """Innermost latent (for shape introspection)."""
        _check_divisible(x, self.stride_factor)
        return self.encoder(x)


def make_rest_generator(in_ch, out_ch, base=64):
    return ComponentGenerator(in_ch, out_ch, base=base, depth=4)


class PatchDiscriminator(nn.Module):
    """3 stride-2 conv layers, global average pooling, 1x1 conv, sigmoid.

    forward() returns (probability, taps) where taps are the three
    intermediate feature maps used by the feature-matching loss.
    """

    def __init__(self, in_ch, base=64):
        super().__init__()
        widths = [base, base * 2, base * 4]
        layers = []
        ch = in_ch
        for w in widths:
            layers.append(nn.Sequential(
                nn.Conv2d(ch, w, 3, stride=2, padding=1),
                nn.LeakyReLU(0.2, inplace=True),
            ))
            ch = w
        self.layers = nn.ModuleList(layers)
        self.head = nn.Conv2d(ch, 1, 1)

    def forward(self, condition, candidate):
        if condition.shape[-2:] != candidate.shape[-2:]:
            raise DataError(
                f"condition {tuple(condition.shape[-2:])} and candidate "
                f"{tuple(candidate.shape[-2:])} dims differ")
        x = torch.cat([condition, candidate], dim=1)
        taps = []
        for layer in self.layers:
            x = layer(x)
            taps.append(x)
        pooled = F.adaptive_avg_pool2d(x, 1)
        prob = torch.sigmoid(self.head(pooled)).flatten(1).squeeze(1)
        return prob, taps


class MultiScaleDiscriminator(nn.Module):
    """K patch discriminators, scale k evaluated at resolution / 2**k."""

    def __init__(self, in_ch, base=64, num_scales=2):
        super().__init__()
        if num_scales < 1:
            raise UsageError("num_scales must be >= 1")
        self.num_scales = num_scales
        self.scales = nn.ModuleList(
            [PatchDiscriminator(in_ch, base=base) for _ in range(num_scales)])

    def forward(self, condition, candidate):
        if condition.shape[-2:] != candidate.shape[-2:]:
            raise DataError("condition and candidate dims differ")
        outputs = []
        cond, cand = condition, candidate
        for k, disc in enumerate(self.scales):
            if k > 0:
                cond = downsample_half(cond)
                cand = downsample_half(cand)
            outputs.append(disc(cond, cand))
        return outputs


def expand_style(c, dims):
    """Spatially expand a style label to a one-hot 3 x H x W feature map."""
    if c not in (1, 2, 3):
        raise UsageError(f"style label must be 1, 2 or 3, got {c!r}")
    h, w = dims
    out = torch.zeros(NUM_STYLES, h, w)
    out[c - 1] = 1.0
    return out


def downsample_half(x):
    """Halve spatial dims (floor) with average-pooling semantics."""
    if x.shape[-2] < 2 or x.shape[-1] < 2:
        raise DataError("image too small to downsample")
    return F.avg_pool2d(x, kernel_size=2, stride=2)


class CoarseToFineGenerator(nn.Module):
    """Stage-2 refinement generator.

    The global sub-network consumes the half-resolution stitched input and
    yields a feature map at 1/4 of the full resolution; the local
    sub-network's encoder latent lives at the same scale. The style map (one
    channel per style, expanded to latent dims) is concatenated with the
    global features, projected 1x1, and added element-wise to the local
    latent before the local decoder produces the full-resolution output.
    """

    def __init__(self, in_ch, out_ch, base=64, use_style=True):
        super().__init__()
        self.use_style = use_style
        b = base

        # global branch: half-res input -> features at full-res / 4
        self.g1_enc = nn.Sequential(
            nn.Conv2d(in_ch, b, 7, padding=3),
            nn.BatchNorm2d(b),
            nn.ReLU(inplace=True),
            conv_block(b, 2 * b),
            conv_block(2 * b, 4 * b),
        )
        self.g1_blocks = nn.Sequential(*[BottleneckBlock(4 * b) for _ in range(4)])
        self.g1_dec = deconv_block(4 * b, 2 * b)

        # local branch encoder: full-res input -> latent at full-res / 4
        self.g2_enc = nn.Sequential(
            nn.Conv2d(in_ch, b, 7, padding=3),
            nn.BatchNorm2d(b),
            nn.ReLU(inplace=True),
            conv_block(b, 2 * b),
            conv_block(2 * b, 2 * b),
        )

        fuse_in = 2 * b + (NUM_STYLES if use_style else 0)
        self.fuse = nn.Conv2d(fuse_in, 2 * b, 1)

        self.g2_blocks = nn.Sequential(*[BottleneckBlock(2 * b) for _ in range(3)])
        self.g2_dec = nn.Sequential(
            deconv_block(2 * b, b),
            deconv_block(b, b),
        )
        self.head = nn.Conv2d(b, out_ch, 7, padding=3)

    def forward(self, intact, style_label=None):
        if self.use_style and style_label is None:
            raise UsageError("style label required for a style-conditioned "
                             "generator")
        if not self.use_style and style_label is not None:
            raise UsageError("style label supplied but this generator has no "
                             "style conditioning")
        _check_divisible(intact, 8)

        half = downsample_half(intact)
        g = self.g1_dec(self.g1_blocks(self.g1_enc(half)))
        latent = self.g2_enc(intact)

        if self.use_style:
            style_map = expand_style(style_label, g.shape[-2:])
            style_map = style_map.to(dtype=g.dtype, device=g.device)
            style_map = style_map.unsqueeze(0).expand(g.shape[0], -1, -1, -1)
            g = torch.cat([g, style_map], dim=1)
        fused = self.fuse(g) + latent

        z = self.g2_blocks(fused)
        z = self.g2_dec(z)
        return torch.tanh(self.head(z))


class StyleClassifier(nn.Module):
    """Small CNN predicting the 3-way sketch style distribution."""

    def __init__(self, in_ch=1, base=32):
        super().__init__()
        self.features = nn.Sequential(
            nn.Conv2d(in_ch, base, 3, stride=2, padding=1),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(base, 2 * base, 3, stride=2, padding=1),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(2 * base, 4 * base, 3, stride=2, padding=1),
            nn.LeakyReLU(0.2, inplace=True),
        )
        self.fc = nn.Linear(4 * base, NUM_STYLES)

    def logits(self, image):
        z = self.features(image)
        z = F.adaptive_avg_pool2d(z, 1).flatten(1)
        return self.fc(z)

    def forward(self, image):
        return F.softmax(self.logits(image), dim=-1)
