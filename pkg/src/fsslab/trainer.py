"""Two-stage training orchestration, checkpointing, and inference.

One train step alternates: stage-1 discriminators and generators on the five
per-region patches, then the stage-2 discriminators and refinement generator
on the full image. The stitched stage-1 output enters stage 2 detached, so
the stages optimize separately; after the configured freeze epoch the
stage-1 weights stop changing entirely.
"""

import csv
import hashlib
import json
import math
import random
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from .errors import DataError, DetectionError, RuntimeFailure, UsageError
from .fs2k import load_pair, sketch_to_rgb
from .losses import (
    LossWeights,
    PerceptualExtractor,
    adversarial_loss,
    discriminator_total_loss,
    feature_matching_loss,
    generator_total_loss,
    perceptual_loss,
    pixelwise_l1,
    style_classification_loss,
)
from .networks import (
    ComponentGenerator,
    CoarseToFineGenerator,
    MultiScaleDiscriminator,
    PatchDiscriminator,
    StyleClassifier,
    make_rest_generator,
)
from .regions import (
    RegionConfig,
    _window_slices,
    detect_regions,
    regions_from_fixture,
)

TASKS = ("i2s", "s2i")
PART_GENS = ("leye", "reye", "nose", "mouth", "rest")

# mid-gray mask value (uint8 128) mapped into the [-1, 1] tensor domain
MASK_TENSOR_VALUE = 128 / 127.5 - 1.0

CHECKPOINT_FORMAT_VERSION = 1

LOSS_COLUMNS = ("step", "epoch", "stage1_d", "stage1_g", "stage2_d",
                "stage2_g", "stage2_adv", "stage2_fm", "stage2_l1",
                "stage2_per", "stage2_sty")


@dataclass(frozen=True)
class AblationFlags:
    use_multi_patch: bool = True
    use_style_vector: bool = True


@dataclass
class TrainConfig:
    task: str
    stage1_weights: LossWeights
    stage2_weights: LossWeights
    lr_generator: float
    lr_discriminator: float
    epochs: int
    freeze_stage1_after: int | None = None
    batch_size: int = 1
    seed: int = 0
    resolution: int = 512
    base_channels: int = 64
    checkpoint_every: int = 10
    ablation: AblationFlags = field(default_factory=AblationFlags)

    def __post_init__(self):
        if self.task not in TASKS:
            raise UsageError(f"task must be one of {TASKS}, got {self.task!r}")
        if self.freeze_stage1_after is not None and \
                self.freeze_stage1_after >= self.epochs and self.epochs > 0:
            raise UsageError("freeze_stage1_after must be < epochs")
        if self.resolution % 16:
            raise UsageError("resolution must be divisible by 16")
        # photos carry no artist style; conditioning only applies to i2s
        if self.task == "s2i" and self.ablation.use_style_vector:
            self.ablation = AblationFlags(
                use_multi_patch=self.ablation.use_multi_patch,
                use_style_vector=False)

    @property
    def style_conditioned(self):
        return self.task == "i2s" and self.ablation.use_style_vector


def default_config(task, **overrides):
    """Published training schedules for each task."""
    if task == "i2s":
        cfg = TrainConfig(
            task="i2s",
            stage1_weights=LossWeights(25.0, 25.0, 12.5, 0.0),
            stage2_weights=LossWeights(100.0, 100.0, 50.0, 100.0),
            lr_generator=2e-4,
            lr_discriminator=1e-5,
            epochs=50,
            freeze_stage1_after=None,
        )
    elif task == "s2i":
        cfg = TrainConfig(
            task="s2i",
            stage1_weights=LossWeights(50.0, 50.0, 0.2, 0.0),
            stage2_weights=LossWeights(100.0, 100.0, 0.2, 0.0),
            lr_generator=2e-4,
            lr_discriminator=2e-4,
            epochs=400,
            freeze_stage1_after=250,
        )
    else:
        raise UsageError(f"task must be one of {TASKS}, got {task!r}")
    for key, value in overrides.items():
        if not hasattr(cfg, key):
            raise UsageError(f"unknown config field {key!r}")
        setattr(cfg, key, value)
    cfg.__post_init__()
    return cfg


def config_to_dict(config):
    d = asdict(config)
    d["format_version"] = 1
    return d


def config_from_dict(d):
    d = dict(d)
    d.pop("format_version", None)
    d["stage1_weights"] = LossWeights(**d["stage1_weights"])
    d["stage2_weights"] = LossWeights(**d["stage2_weights"])
    d["ablation"] = AblationFlags(**d["ablation"])
    return TrainConfig(**d)


def save_config(config, path):
    Path(path).write_text(json.dumps(config_to_dict(config), indent=1))


def load_config(path):
    return config_from_dict(json.loads(Path(path).read_text()))


def config_hash(config):
    blob = json.dumps(config_to_dict(config), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


# ---------------------------------------------------------------------------
# Tensor helpers

def img_to_tensor(arr):
    """uint8 HxW[xC] image -> float32 (1, C, H, W) in [-1, 1]."""
    arr = np.asarray(arr, dtype=np.float32)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    t = torch.from_numpy(arr).permute(2, 0, 1).unsqueeze(0)
    return t / 127.5 - 1.0


def tensor_to_img(t):
    """(1, C, H, W) tensor in [-1, 1] -> uint8 HxW[xC] image."""
    t = t.detach().clamp(-1.0, 1.0).squeeze(0)
    arr = ((t + 1.0) * 127.5).round().to(torch.uint8).permute(1, 2, 0).numpy()
    if arr.shape[2] == 1:
        arr = arr[:, :, 0]
    return arr


def split_tensor_parts(x, regions, rcfg):
    """Tensor analogue of regions.split_parts for a (1, C, H, W) image."""
    dims = (x.shape[-2], x.shape[-1])
    parts = {}
    rest = x.clone()
    for name in ("leye", "reye", "nose", "mouth"):
        ys, xs = _window_slices(regions.box(name), rcfg.size(name), dims)
        parts[name] = x[:, :, ys, xs].clone()
        rest[:, :, ys, xs] = MASK_TENSOR_VALUE
    parts["rest"] = rest
    return parts


def stitch_tensor_parts(parts, regions, rcfg):
    dims = (parts["rest"].shape[-2], parts["rest"].shape[-1])
    out = parts["rest"].clone()
    for name in rcfg.paste_order:
        if name == "rest":
            continue
        ys, xs = _window_slices(regions.box(name), rcfg.size(name), dims)
        out[:, :, ys, xs] = parts[name]
    return out


def style_index(pair):
    return int(pair.style[-1])


def default_regions_provider(config):
    """Heuristic landmark provider applied to the task's input image."""
    def provider(pair):
        image = pair.photo if config.task == "i2s" else pair.sketch
        try:
            return detect_regions(image, provider="external_detector")
        except DetectionError as exc:
            raise DataError(f"pair {pair.pair_id!r}: {exc}") from exc
    return provider


def fixture_regions_provider(fixture, config):
    def provider(pair):
        image = pair.photo if config.task == "i2s" else pair.sketch
        try:
            return regions_from_fixture(fixture, pair.pair_id, image.shape[:2])
        except DataError as exc:
            raise DataError(f"pair {pair.pair_id!r}: {exc}") from exc
    return provider


# ---------------------------------------------------------------------------
# Training state

class TrainState:
    def __init__(self, config, device="cpu"):
        self.config = config
        self.device = torch.device(device)
        self.epoch = 0
        self.step = 0
        self.region_config = RegionConfig.scaled(config.resolution)

        torch.manual_seed(config.seed)

        in_ch = 3 if config.task == "i2s" else 1
        out_ch = 1 if config.task == "i2s" else 3
        self.in_ch, self.out_ch = in_ch, out_ch
        base = config.base_channels

        self.networks = {}
        if config.ablation.use_multi_patch:
            for name in ("leye", "reye", "nose", "mouth"):
                self.networks[f"g1_{name}"] = ComponentGenerator(
                    in_ch, out_ch, base=base)
            self.networks["g1_rest"] = make_rest_generator(
                in_ch, out_ch, base=base)
            for name in PART_GENS:
                self.networks[f"d1_{name}"] = PatchDiscriminator(
                    in_ch + out_ch, base=base)
            stage2_in = out_ch
        else:
            stage2_in = in_ch
        self.stage2_in = stage2_in

        self.networks["g2"] = CoarseToFineGenerator(
            stage2_in, out_ch, base=base,
            use_style=config.style_conditioned)
        self.networks["d2"] = MultiScaleDiscriminator(
            stage2_in + out_ch, base=base, num_scales=2)
        if config.style_conditioned:
            self.networks["style_clf"] = StyleClassifier(in_ch=out_ch)

        for net in self.networks.values():
            net.to(self.device)

        self.perceptual = PerceptualExtractor().to(self.device)

        self.optimizers = {}
        if config.ablation.use_multi_patch:
            g1_params = [p for n in PART_GENS
                         for p in self.networks[f"g1_{n}"].parameters()]
            d1_params = [p for n in PART_GENS
                         for p in self.networks[f"d1_{n}"].parameters()]
            self.optimizers["g1"] = torch.optim.Adam(
                g1_params, lr=config.lr_generator)
            self.optimizers["d1"] = torch.optim.Adam(
                d1_params, lr=config.lr_discriminator)
        self.optimizers["g2"] = torch.optim.Adam(
            self.networks["g2"].parameters(), lr=config.lr_generator)
        self.optimizers["d2"] = torch.optim.Adam(
            self.networks["d2"].parameters(), lr=config.lr_discriminator)
        if config.style_conditioned:
            self.optimizers["style_clf"] = torch.optim.Adam(
                self.networks["style_clf"].parameters(),
                lr=config.lr_discriminator)

        self._stage1_frozen = False

    @property
    def stage1_frozen(self):
        return self._stage1_frozen

    def set_epoch(self, epoch):
        self.epoch = epoch
        freeze = self.config.freeze_stage1_after
        should_freeze = freeze is not None and epoch > freeze
        if should_freeze and not self._stage1_frozen:
            self._freeze_stage1()
        self._stage1_frozen = should_freeze

    def _freeze_stage1(self):
        for name, net in self.networks.items():
            if name.startswith(("g1_", "d1_")):
                net.requires_grad_(False)
                net.eval()  # also stops batch-norm running-stat updates

    def stage1_parameter_hash(self):
        """Byte-level hash of all stage-1 parameters (freeze verification)."""
        digest = hashlib.sha256()
        for name in sorted(self.networks):
            if name.startswith(("g1_", "d1_")):
                for pname, p in sorted(
                        self.networks[name].state_dict().items()):
                    digest.update(pname.encode())
                    digest.update(p.detach().cpu().numpy().tobytes())
        return digest.hexdigest()


def build_state(config, device="cpu"):
    return TrainState(config, device=device)


# ---------------------------------------------------------------------------
# Train step

def _to_3ch(t):
    return t if t.shape[1] == 3 else t.repeat(1, 3, 1, 1)


def _pair_tensors(state, pair):
    if state.config.task == "i2s":
        x, y = pair.photo, pair.sketch
    else:
        x, y = pair.sketch, pair.photo
    return (img_to_tensor(x).to(state.device),
            img_to_tensor(y).to(state.device))


def _stage1_forward(state, x, regions, train):
    """Run the five part generators; optionally update them and their Ds."""
    cfg = state.config
    rcfg = state.region_config
    x_parts = split_tensor_parts(x, regions, rcfg)

    d_total = 0.0
    g_total = 0.0
    fakes = {}

    grad_enabled = train and not state.stage1_frozen
    with torch.set_grad_enabled(grad_enabled):
        for name in PART_GENS:
            fakes[name] = state.networks[f"g1_{name}"](x_parts[name])

    if grad_enabled:
        y = state._y_current
        y_parts = split_tensor_parts(y, regions, rcfg)

        # discriminator update first
        d_losses = []
        for name in PART_GENS:
            disc = state.networks[f"d1_{name}"]
            p_real, _ = disc(x_parts[name], y_parts[name])
            p_fake, _ = disc(x_parts[name], fakes[name].detach())
            d_losses.append(adversarial_loss(p_real, p_fake)[0])
        d_loss = sum(d_losses)
        state.optimizers["d1"].zero_grad()
        d_loss.backward()
        state.optimizers["d1"].step()

        # generator update against the updated discriminators
        g_losses = []
        for name in PART_GENS:
            disc = state.networks[f"d1_{name}"]
            x_p, y_p, fake = x_parts[name], y_parts[name], fakes[name]
            with torch.no_grad():
                p_real, taps_real = disc(x_p, y_p)
            p_fake, taps_fake = disc(x_p, fake)
            _, loss_g_adv = adversarial_loss(p_real, p_fake)
            fm = feature_matching_loss(taps_real, taps_fake)
            l1 = pixelwise_l1(y_p, fake)
            per = perceptual_loss(state.perceptual, _to_3ch(y_p),
                                  _to_3ch(fake))
            g_losses.append(generator_total_loss(
                {"adv": loss_g_adv, "fm": fm, "l1": l1, "per": per},
                cfg.stage1_weights))
        g_loss = sum(g_losses)
        state.optimizers["g1"].zero_grad()
        g_loss.backward()
        state.optimizers["g1"].step()

        d_total = float(d_loss.detach())
        g_total = float(g_loss.detach())

    intact = stitch_tensor_parts(
        {n: f.detach() for n, f in fakes.items()}, regions, rcfg)
    return intact, d_total, g_total


def train_step(state, batch, regions_provider=None):
    """One alternating update over a batch of pairs; returns a loss record."""
    cfg = state.config
    regions_provider = regions_provider or default_regions_provider(cfg)
    record = {k: 0.0 for k in LOSS_COLUMNS}

    for pair in batch:
        x, y = _pair_tensors(state, pair)
        state._y_current = y
        c = style_index(pair)

        if cfg.ablation.use_multi_patch:
            regions = regions_provider(pair)
            intact, d1, g1 = _stage1_forward(state, x, regions, train=True)
            record["stage1_d"] += d1
            record["stage1_g"] += g1
        else:
            intact = x  # baseline ablation: raw input feeds stage 2

        intact = intact.detach()
        style_label = c if cfg.style_conditioned else None

        # discriminator side
        fake = state.networks["g2"](intact, style_label)
        outs_real = state.networks["d2"](intact, y)
        outs_fake = state.networks["d2"](intact, fake.detach())
        d_terms = [adversarial_loss(pr, pf)[0]
                   for (pr, _), (pf, _) in zip(outs_real, outs_fake)]
        d2_loss = discriminator_total_loss(d_terms)
        state.optimizers["d2"].zero_grad()
        d2_loss.backward()
        state.optimizers["d2"].step()

        if cfg.style_conditioned:
            clf = state.networks["style_clf"]
            sty_d = style_classification_loss(clf(y), c)
            state.optimizers["style_clf"].zero_grad()
            sty_d.backward()
            state.optimizers["style_clf"].step()

        # generator side
        with torch.no_grad():
            outs_real = state.networks["d2"](intact, y)
        outs_fake = state.networks["d2"](intact, fake)
        adv_terms = []
        fm_terms = []
        for (p_real, taps_real), (p_fake, taps_fake) in zip(outs_real,
                                                            outs_fake):
            adv_terms.append(adversarial_loss(p_real, p_fake)[1])
            fm_terms.append(feature_matching_loss(taps_real, taps_fake))
        adv = sum(adv_terms)
        l1 = pixelwise_l1(y, fake)
        per = perceptual_loss(state.perceptual, _to_3ch(y), _to_3ch(fake))
        if cfg.style_conditioned:
            sty = style_classification_loss(
                state.networks["style_clf"](fake), c)
        else:
            sty = torch.zeros(())

        g2_loss = generator_total_loss(
            {"adv": adv, "fm": fm_terms, "l1": l1, "per": per, "sty": sty},
            cfg.stage2_weights)
        state.optimizers["g2"].zero_grad()
        g2_loss.backward()
        state.optimizers["g2"].step()

        record["stage2_d"] += float(d2_loss.detach())
        record["stage2_g"] += float(g2_loss.detach())
        record["stage2_adv"] += float(adv.detach())
        record["stage2_fm"] += float(sum(fm_terms).detach()) / len(fm_terms)
        record["stage2_l1"] += float(l1.detach())
        record["stage2_per"] += float(per.detach())
        record["stage2_sty"] += float(sty.detach())

    n = len(batch)
    for key in record:
        record[key] /= n
    state.step += 1
    record["step"] = state.step
    record["epoch"] = state.epoch

    if not all(math.isfinite(v) for v in record.values()):
        raise RuntimeFailure(f"non-finite loss at step {state.step}: {record}")
    return record


# ---------------------------------------------------------------------------
# Checkpointing

def save_checkpoint(state, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "config": config_to_dict(state.config),
        "config_hash": config_hash(state.config),
        "epoch": state.epoch,
        "step": state.step,
        "networks": {n: net.state_dict()
                     for n, net in state.networks.items()},
        "optimizers": {n: opt.state_dict()
                       for n, opt in state.optimizers.items()},
    }
    torch.save(payload, path)
    return path


def load_checkpoint(path, device="cpu"):
    path = Path(path)
    if not path.exists():
        raise DataError(f"checkpoint {path} not found")
    try:
        payload = torch.load(path, map_location=device, weights_only=False)
    except Exception as exc:
        raise DataError(f"cannot load checkpoint {path}: {exc}") from exc
    if payload.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise DataError(f"unsupported checkpoint version in {path}")
    config = config_from_dict(payload["config"])
    state = build_state(config, device=device)
    for name, sd in payload["networks"].items():
        state.networks[name].load_state_dict(sd)
    for name, sd in payload["optimizers"].items():
        state.optimizers[name].load_state_dict(sd)
    state.step = payload["step"]
    state.set_epoch(payload["epoch"])
    return state


# ---------------------------------------------------------------------------
# Full runs

def _write_loss_curve(rows, path):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=LOSS_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)


def train_run(manifest, config, checkpoint_dir, regions_provider=None,
              resume_from=None, device="cpu", progress=None):
    """Run the full schedule; returns (final checkpoint path, loss rows).

    Pair order is reshuffled every epoch from (seed, epoch), so a resumed
    run replays the identical stream.
    """
    checkpoint_dir = Path(checkpoint_dir)
    checkpoint_dir.mkdir(parents=True, exist_ok=True)
    curve_path = checkpoint_dir / "loss_curve.csv"

    if resume_from is not None:
        state = load_checkpoint(resume_from, device=device)
        if config_hash(state.config) != config_hash(config):
            raise UsageError("resume checkpoint was produced by a different "
                             "config")
        start_epoch = state.epoch + 1
        rows = []
        if curve_path.exists():
            with open(curve_path) as fh:
                rows = [dict((k, float(v)) for k, v in r.items())
                        for r in csv.DictReader(fh)]
    else:
        state = build_state(config, device=device)
        start_epoch = 1
        rows = []

    regions_provider = regions_provider or default_regions_provider(config)
    entries = manifest.split_entries("train")
    if not entries:
        raise DataError("train split is empty")

    for epoch in range(start_epoch, config.epochs + 1):
        state.set_epoch(epoch)
        order = list(entries)
        random.Random(config.seed * 1000003 + epoch).shuffle(order)
        for i in range(0, len(order), config.batch_size):
            chunk = order[i:i + config.batch_size]
            batch = [load_pair(e, resolution=config.resolution)
                     for e in chunk]
            record = train_step(state, batch,
                                regions_provider=regions_provider)
            rows.append(record)
            if progress is not None:
                progress(record)
        if config.checkpoint_every and epoch % config.checkpoint_every == 0:
            save_checkpoint(state, checkpoint_dir / f"epoch_{epoch:04d}.pt")
            _write_loss_curve(rows, curve_path)

    final_path = save_checkpoint(state, checkpoint_dir / "final.pt")
    _write_loss_curve(rows, curve_path)
    return final_path, rows


def infer(state_or_checkpoint, image, task, style=None, regions_provider=None,
          device="cpu"):
    """Full pipeline on one image: regions -> patches -> stitch -> refine.

    ``image`` is a uint8 array (RGB photo for i2s, grayscale sketch for
    s2i). Output dimensions equal input dimensions.
    """
    if isinstance(state_or_checkpoint, TrainState):
        state = state_or_checkpoint
    else:
        state = load_checkpoint(state_or_checkpoint, device=device)
    cfg = state.config
    if cfg.task != task:
        raise UsageError(f"checkpoint was trained for {cfg.task!r}, "
                         f"requested {task!r}")
    if cfg.style_conditioned and style is None:
        raise UsageError("style label required for a style-conditioned i2s "
                         "checkpoint")
    if not cfg.style_conditioned and style is not None:
        raise UsageError(f"style label not accepted for this checkpoint "
                         f"(task {cfg.task!r})")

    image = np.asarray(image)
    orig_dims = image.shape[:2]
    from .fs2k import _resize_pad
    pad_value = 0 if task == "i2s" else 255
    work = _resize_pad(image.astype(np.uint8), cfg.resolution, pad_value)

    prior_modes = {n: net.training for n, net in state.networks.items()}
    for net in state.networks.values():
        net.eval()
    try:
        with torch.no_grad():
            x = img_to_tensor(work).to(state.device)
            if cfg.ablation.use_multi_patch:
                try:
                    regions = (regions_provider(work) if regions_provider
                               else detect_regions(work))
                except DetectionError as exc:
                    raise DataError(f"face detection failed: {exc}") from exc
                parts = split_tensor_parts(x, regions, state.region_config)
                fakes = {n: state.networks[f"g1_{n}"](parts[n])
                         for n in PART_GENS}
                intact = stitch_tensor_parts(fakes, regions,
                                             state.region_config)
            else:
                intact = x
            out = state.networks["g2"](intact, style)
    finally:
        for name, net in state.networks.items():
            net.train(prior_modes[name])

    arr = tensor_to_img(out.cpu())
    from PIL import Image as PILImage
    img = PILImage.fromarray(arr)
    if (arr.shape[0], arr.shape[1]) != orig_dims:
        img = img.resize((orig_dims[1], orig_dims[0]), PILImage.BILINEAR)
    return np.asarray(img)
