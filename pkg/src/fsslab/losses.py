"""Loss suite: adversarial, feature-matching, perceptual, pixel, style terms.

Conventions shared by everything here:
  * probabilities are clamped away from {0, 1} by EPS before any log;
  * per-layer feature norms are element-wise means, so values are
    resolution-invariant;
  * taps of real inputs are constants with respect to generator updates
    (they are detached inside feature_matching_loss).
"""

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import DataError, UsageError

EPS = 1e-7


@dataclass(frozen=True)
class LossWeights:
    lambda_fm: float
    lambda_1: float
    lambda_per: float
    lambda_sty: float = 0.0

    def __post_init__(self):
        for name in ("lambda_fm", "lambda_1", "lambda_per", "lambda_sty"):
            if getattr(self, name) < 0:
                raise UsageError(f"{name} must be non-negative")


class PerceptualExtractor(nn.Module):
    """Fixed convolutional feature extractor with five stage-end taps.

    VGG16-style conv layout. Weights are frozen at construction and never
    updated; by default they are a deterministic random draw (seeded), which
    keeps the loss well-defined and reproducible in environments without
    downloadable pre-trained weights. Use from_torchvision() to wrap real
    VGG16 features when they are available locally.
    """

    STAGE_CONVS = (2, 2, 3, 3, 3)

    def __init__(self, widths=(64, 128, 256, 512, 512), in_ch=3, seed=0):
        super().__init__()
        gen = torch.Generator().manual_seed(seed)
        stages = []
        ch = in_ch
        for width, n_convs in zip(widths, self.STAGE_CONVS):
            layers = []
            for _ in range(n_convs):
                conv = nn.Conv2d(ch, width, 3, padding=1)
                with torch.no_grad():
                    fan_in = ch * 9
                    conv.weight.copy_(torch.randn(
                        conv.weight.shape, generator=gen) * (2.0 / fan_in) ** 0.5)
                    conv.bias.zero_()
                layers += [conv, nn.ReLU(inplace=True)]
                ch = width
            stages.append(nn.Sequential(*layers))
        self.stages = nn.ModuleList(stages)
        self.requires_grad_(False)
        self.eval()

    def train(self, mode=True):  # extractor stays frozen in eval mode
        return super().train(False)

    def forward(self, x):
        if x.shape[-3] != self.stages[0][0].in_channels:
            raise DataError(
                f"extractor expects {self.stages[0][0].in_channels}-channel "
                f"input, got {x.shape[-3]}")
        taps = []
        for i, stage in enumerate(self.stages):
            x = stage(x)
            taps.append(x)
            if i < len(self.stages) - 1:
                x = F.avg_pool2d(x, 2, ceil_mode=True)
        return taps

    @classmethod
    def from_torchvision(cls):
        """Wrap torchvision's pre-trained VGG16 features (local weights only)."""
        from torchvision.models import VGG16_Weights, vgg16

        model = cls()
        src = vgg16(weights=VGG16_Weights.IMAGENET1K_V1).features
        src_convs = [m for m in src if isinstance(m, nn.Conv2d)]
        dst_convs = [m for stage in model.stages for m in stage
                     if isinstance(m, nn.Conv2d)]
        with torch.no_grad():
            for dst, s in zip(dst_convs, src_convs):
                dst.weight.copy_(s.weight)
                dst.bias.copy_(s.bias)
        model.requires_grad_(False)
        return model


def _clamp_prob(p):
    if not torch.is_tensor(p):
        p = torch.as_tensor(p, dtype=torch.float64)
    return p.clamp(EPS, 1.0 - EPS)


def adversarial_loss(d_real, d_fake):
    """Binary-cross-entropy adversarial pair.

    Returns (loss_for_D, loss_for_G): D maximizes log d_real + log(1 - d_fake),
    G uses the non-saturating -log d_fake.
    """
    d_real = _clamp_prob(d_real)
    d_fake = _clamp_prob(d_fake)
    loss_d = -(torch.log(d_real) + torch.log(1.0 - d_fake)).mean()
    loss_g = -torch.log(d_fake).mean()
    return loss_d, loss_g


def feature_matching_loss(taps_real, taps_fake):
    """Sum over layers of the element-wise mean L1 gap between tap pairs.

    Real-side taps are detached: they act as constant targets.
    """
    if len(taps_real) != len(taps_fake):
        raise DataError(
            f"tap list lengths differ: {len(taps_real)} vs {len(taps_fake)}")
    total = 0.0
    for i, (tr, tf) in enumerate(zip(taps_real, taps_fake)):
        if tr.shape != tf.shape:
            raise DataError(
                f"tap {i} shapes differ: {tuple(tr.shape)} vs {tuple(tf.shape)}")
        total = total + (tr.detach() - tf).abs().mean()
    return total


def perceptual_loss(extractor, y, g):
    """Sum of per-layer mean L1 gaps between frozen extractor activations."""
    if y.shape != g.shape:
        raise DataError(f"image shapes differ: {tuple(y.shape)} vs "
                        f"{tuple(g.shape)}")
    taps_y = extractor(y)
    taps_g = extractor(g)
    total = 0.0
    for ty, tg in zip(taps_y, taps_g):
        total = total + (ty.detach() - tg).abs().mean()
    return total


def pixelwise_l1(y, g):
    """Mean absolute difference over every element (pixels and channels)."""
    if y.shape != g.shape:
        raise DataError(f"image shapes differ: {tuple(y.shape)} vs "
                        f"{tuple(g.shape)}")
    return (y - g).abs().mean()


def style_classification_loss(probs, c):
    """Cross-entropy of the predicted style distribution against label c."""
    if c not in (1, 2, 3):
        raise UsageError(f"style label must be 1, 2 or 3, got {c!r}")
    if not torch.is_tensor(probs):
        probs = torch.as_tensor(probs, dtype=torch.float64)
    p = probs[..., c - 1].clamp_min(EPS)
    return -torch.log(p).mean()


def generator_total_loss(components, weights):
    """Weighted sum of the generator terms.

    components maps {"adv", "fm", "l1", "per", "sty"} to scalars; "fm" may be
    a list of per-discriminator values and is then averaged over the scales.
    Missing "sty" (or weight 0) drops the style term.
    """
    fm = components["fm"]
    if isinstance(fm, (list, tuple)):
        fm = sum(fm) / len(fm)
    total = components["adv"] + weights.lambda_fm * fm \
        + weights.lambda_1 * components["l1"] \
        + weights.lambda_per * components["per"]
    if weights.lambda_sty > 0:
        total = total + weights.lambda_sty * components["sty"]
    return total


def discriminator_total_loss(per_scale_adv):
    """Sum of the discriminator adversarial terms over the K scales."""
    if len(per_scale_adv) < 1:
        raise UsageError("need at least one discriminator scale")
    total = per_scale_adv[0]
    for v in per_scale_adv[1:]:
        total = total + v
    return total
