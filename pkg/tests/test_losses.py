import math

import numpy as np
import pytest
import torch

from fsslab import losses
from fsslab.errors import DataError, UsageError
from fsslab.losses import LossWeights


def finite_diff(fn, x, eps=1e-6, coords=None):
    """Central finite differences of a scalar fn at tensor x."""
    flat = x.reshape(-1)
    if coords is None:
        coords = range(flat.numel())
    grad = {}
    for i in coords:
        orig = flat[i].item()
        flat[i] = orig + eps
        hi = fn(x).item()
        flat[i] = orig - eps
        lo = fn(x).item()
        flat[i] = orig
        grad[i] = (hi - lo) / (2 * eps)
    return grad


def check_grad(fn, x, rel_err=1e-4, n_coords=20, seed=0):
    x = x.clone().requires_grad_(True)
    loss = fn(x)
    loss.backward()
    analytic = x.grad.reshape(-1)
    rng = np.random.default_rng(seed)
    coords = rng.choice(x.numel(), size=min(n_coords, x.numel()),
                        replace=False)
    numeric = finite_diff(fn, x.detach().clone(), coords=coords)
    for i, num in numeric.items():
        ana = analytic[i].item()
        denom = max(abs(num), abs(ana), 1e-8)
        assert abs(num - ana) / denom <= rel_err, \
            f"coord {i}: numeric {num} vs analytic {ana}"


def test_loss_weights_validation():
    with pytest.raises(UsageError):
        LossWeights(-1.0, 0.0, 0.0, 0.0)


def test_adversarial_perfect_discriminator():
    eps = 1e-7
    loss_d, _ = losses.adversarial_loss(torch.tensor(1.0 - eps),
                                        torch.tensor(eps))
    assert abs(loss_d.item()) < 1e-5


def test_adversarial_closed_form_half():
    loss_d, loss_g = losses.adversarial_loss(0.5, 0.5)
    assert abs(loss_d.item() - 2 * math.log(2)) < 1e-9
    assert abs(loss_g.item() - math.log(2)) < 1e-9


def test_adversarial_finite_at_extremes():
    loss_d, loss_g = losses.adversarial_loss(torch.tensor(0.0),
                                             torch.tensor(1.0))
    assert math.isfinite(loss_d.item()) and math.isfinite(loss_g.item())


def test_adversarial_gradient_for_g():
    def g_part(d_fake):
        return losses.adversarial_loss(torch.tensor(0.7), d_fake)[1]
    check_grad(g_part, torch.tensor([0.37], dtype=torch.float64),
               rel_err=1e-4)


def test_feature_matching_zero_on_identical():
    taps = [torch.randn(1, 4, 8, 8) for _ in range(3)]
    assert float(losses.feature_matching_loss(taps, taps)) <= 1e-9


def test_feature_matching_constant_offset():
    a = [torch.zeros(1, 2, 4, 4)]
    b = [torch.full((1, 2, 4, 4), 2.0)]
    assert abs(float(losses.feature_matching_loss(a, b)) - 2.0) < 1e-12


def test_feature_matching_matches_brute_force():
    rng = np.random.default_rng(0)
    real = [torch.tensor(rng.normal(size=(1, 3, 6, 6))),
            torch.tensor(rng.normal(size=(1, 6, 3, 3)))]
    fake = [torch.tensor(rng.normal(size=(1, 3, 6, 6))),
            torch.tensor(rng.normal(size=(1, 6, 3, 3)))]
    got = float(losses.feature_matching_loss(real, fake))

    # direct elementwise-sum oracle
    expected = 0.0
    for tr, tf in zip(real, fake):
        diff = 0.0
        n = 0
        for a, b in zip(tr.reshape(-1).tolist(), tf.reshape(-1).tolist()):
            diff += abs(a - b)
            n += 1
        expected += diff / n
    assert abs(got - expected) < 1e-6


def test_feature_matching_shape_mismatch():
    with pytest.raises(DataError):
        losses.feature_matching_loss([torch.zeros(1, 2, 4, 4)],
                                     [torch.zeros(1, 2, 8, 8)])


@pytest.fixture(scope="module")
def extractor():
    return losses.PerceptualExtractor(widths=(8, 8, 16, 16, 16)).double()


def test_perceptual_zero_on_identical(extractor):
    x = torch.rand(1, 3, 32, 32, dtype=torch.float64)
    assert float(losses.perceptual_loss(extractor, x, x)) <= 1e-9


def test_perceptual_symmetric(extractor):
    a = torch.rand(1, 3, 32, 32, dtype=torch.float64)
    b = torch.rand(1, 3, 32, 32, dtype=torch.float64)
    lab = float(losses.perceptual_loss(extractor, a, b))
    lba = float(losses.perceptual_loss(extractor, b, a))
    assert abs(lab - lba) < 1e-9


def test_perceptual_gradient(extractor):
    y = torch.rand(1, 3, 32, 32, dtype=torch.float64)

    def fn(g):
        return losses.perceptual_loss(extractor, y, g)
    check_grad(fn, torch.rand(1, 3, 32, 32, dtype=torch.float64),
               rel_err=1e-3, n_coords=10)


def test_perceptual_frozen(extractor):
    assert all(not p.requires_grad for p in extractor.parameters())
    extractor.train()  # must stay in eval mode
    assert not extractor.training


def test_pixelwise_l1():
    x = torch.rand(1, 3, 8, 8)
    assert float(losses.pixelwise_l1(x, x)) == 0.0
    ones = torch.ones(1, 1, 4, 4)
    zeros = torch.zeros(1, 1, 4, 4)
    assert abs(float(losses.pixelwise_l1(ones, zeros)) - 1.0) < 1e-12


def test_pixelwise_l1_brute_force():
    rng = np.random.default_rng(1)
    y = torch.tensor(rng.normal(size=(1, 3, 8, 8)))
    g = torch.tensor(rng.normal(size=(1, 3, 8, 8)))
    got = float(losses.pixelwise_l1(y, g))
    vals = [abs(a - b) for a, b in zip(y.reshape(-1).tolist(),
                                       g.reshape(-1).tolist())]
    assert abs(got - sum(vals) / len(vals)) < 1e-7


def test_pixelwise_dims_mismatch():
    with pytest.raises(DataError):
        losses.pixelwise_l1(torch.zeros(1, 1, 4, 4), torch.zeros(1, 1, 8, 8))


def test_style_loss_uniform():
    probs = torch.full((3,), 1 / 3, dtype=torch.float64)
    for c in (1, 2, 3):
        got = float(losses.style_classification_loss(probs, c))
        assert abs(got - math.log(3)) < 1e-9


def test_style_loss_perfect_prediction():
    probs = torch.tensor([0.0, 1.0, 0.0], dtype=torch.float64)
    assert float(losses.style_classification_loss(probs, 2)) < 1e-6


def test_style_loss_bad_label():
    with pytest.raises(UsageError):
        losses.style_classification_loss(torch.full((3,), 1 / 3), 4)


def test_style_loss_gradient_is_softmax_minus_onehot():
    logits = torch.tensor([0.3, -1.2, 0.9], dtype=torch.float64,
                          requires_grad=True)
    c = 3
    probs = torch.softmax(logits, dim=-1)
    loss = losses.style_classification_loss(probs, c)
    loss.backward()
    onehot = torch.zeros(3, dtype=torch.float64)
    onehot[c - 1] = 1.0
    expected = torch.softmax(logits.detach(), dim=-1) - onehot
    assert torch.allclose(logits.grad, expected, atol=1e-6)


def test_generator_total_linear_combination():
    w = LossWeights(100.0, 100.0, 50.0, 100.0)
    comps = {"adv": 1.0, "fm": 1.0, "l1": 1.0, "per": 1.0, "sty": 1.0}
    assert losses.generator_total_loss(comps, w) == 351.0

    w0 = LossWeights(0.0, 0.0, 0.0, 0.0)
    assert losses.generator_total_loss(comps, w0) == 1.0


def test_generator_total_fm_averaged_over_scales():
    w = LossWeights(10.0, 0.0, 0.0, 0.0)
    comps = {"adv": 0.0, "fm": [1.0, 3.0], "l1": 0.0, "per": 0.0}
    assert losses.generator_total_loss(comps, w) == 20.0


def test_generator_total_sty_dropped_at_zero_weight():
    w = LossWeights(0.0, 0.0, 0.0, 0.0)
    comps = {"adv": 2.0, "fm": 0.0, "l1": 0.0, "per": 0.0, "sty": 1e9}
    assert losses.generator_total_loss(comps, w) == 2.0


def test_generator_total_linear_in_each_component():
    w = LossWeights(3.0, 5.0, 7.0, 11.0)
    base = {"adv": 1.0, "fm": 1.0, "l1": 1.0, "per": 1.0, "sty": 1.0}
    f0 = losses.generator_total_loss(base, w)
    for key, lam in (("fm", 3.0), ("l1", 5.0), ("per", 7.0), ("sty", 11.0),
                     ("adv", 1.0)):
        bumped = dict(base)
        bumped[key] = 2.0
        f1 = losses.generator_total_loss(bumped, w)
        assert abs((f1 - f0) - lam) < 1e-12


def test_discriminator_total():
    v = torch.tensor(0.7)
    assert float(losses.discriminator_total_loss([v])) == pytest.approx(0.7)
    assert float(losses.discriminator_total_loss([v, v])) == pytest.approx(1.4)
    with pytest.raises(UsageError):
        losses.discriminator_total_loss([])


def test_discriminator_total_gradient():
    def fn(d_vals):
        terms = [losses.adversarial_loss(d_vals[k], d_vals[k + 2])[0]
                 for k in range(2)]
        return losses.discriminator_total_loss(terms)
    check_grad(fn, torch.tensor([0.6, 0.4, 0.3, 0.7], dtype=torch.float64),
               rel_err=1e-4)
