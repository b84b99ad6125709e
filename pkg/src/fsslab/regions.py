"""Five-way face decomposition: detect key regions, split, stitch back.

Crop windows have fixed, configured sizes centered on the detected landmark;
when a window would cross the image border only the center shifts, never the
size, so every per-region generator sees shape-stable input. The "rest" part
is the full image with the four windows masked to mid-gray.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, DetectionError

MASK_VALUE = 128

PART_NAMES = ("leye", "reye", "nose", "mouth", "rest")


@dataclass(frozen=True)
class RegionBox:
    cx: float
    cy: float
    w: int
    h: int


@dataclass(frozen=True)
class FaceRegions:
    leye: RegionBox
    reye: RegionBox
    nose: RegionBox
    mouth: RegionBox
    image_dims: tuple  # (H, W)

    def box(self, name):
        return getattr(self, name)


@dataclass(frozen=True)
class RegionConfig:
    """Per-region window sizes; defaults assume a 512x512 working resolution."""

    leye_size: int = 128
    reye_size: int = 128
    nose_size: int = 160
    mouth_size: int = 192
    # rest first, then patches overwrite the masked windows
    paste_order: tuple = ("rest", "nose", "leye", "reye", "mouth")

    def __post_init__(self):
        sizes = (self.leye_size, self.reye_size, self.nose_size, self.mouth_size)
        if any(s <= 0 for s in sizes):
            raise DataError(f"region window sizes must be positive, got {sizes}")
        if sorted(self.paste_order) != sorted(PART_NAMES) or \
                self.paste_order[0] != "rest":
            raise DataError(
                f"paste_order must permute {PART_NAMES} with 'rest' first")

    def size(self, name):
        return getattr(self, f"{name}_size")

    @classmethod
    def scaled(cls, resolution, base=512, multiple=8):
        """Config with window sizes rescaled from the 512 defaults.

        Sizes snap to a multiple of 8 and stay >= 16 so the component
        generators (3 stride-2 stages) keep a non-degenerate latent.
        """
        def snap(s):
            return max(2 * multiple,
                       multiple * round(s * resolution / base / multiple))
        d = cls()
        return cls(leye_size=snap(d.leye_size), reye_size=snap(d.reye_size),
                   nose_size=snap(d.nose_size), mouth_size=snap(d.mouth_size))


def _clamp_box(cx, cy, w, h, dims):
    """Shift the window center so a w x h window fits inside dims."""
    H, W = dims
    if w > W or h > H:
        raise DataError(f"window {w}x{h} larger than image {W}x{H}")
    half_w, half_h = w / 2, h / 2
    cx = min(max(cx, half_w), W - half_w)
    cy = min(max(cy, half_h), H - half_h)
    return RegionBox(cx=cx, cy=cy, w=w, h=h)


def clamp_regions(regions):
    """Return regions with every box clamped inside image_dims."""
    dims = regions.image_dims
    return FaceRegions(
        leye=_clamp_box(regions.leye.cx, regions.leye.cy,
                        regions.leye.w, regions.leye.h, dims),
        reye=_clamp_box(regions.reye.cx, regions.reye.cy,
                        regions.reye.w, regions.reye.h, dims),
        nose=_clamp_box(regions.nose.cx, regions.nose.cy,
                        regions.nose.w, regions.nose.h, dims),
        mouth=_clamp_box(regions.mouth.cx, regions.mouth.cy,
                         regions.mouth.w, regions.mouth.h, dims),
        image_dims=dims,
    )


def _window_slices(box, size, dims):
    """Integer window of exactly size x size around the box center, clamped."""
    if size <= 0:
        raise DataError(f"degenerate window size {size}")
    H, W = dims
    if size > H or size > W:
        raise DataError(f"window size {size} exceeds image {W}x{H}")
    x0 = int(round(box.cx - size / 2))
    y0 = int(round(box.cy - size / 2))
    x0 = min(max(x0, 0), W - size)
    y0 = min(max(y0, 0), H - size)
    return slice(y0, y0 + size), slice(x0, x0 + size)


# ---------------------------------------------------------------------------
# Detection providers

_external_detector = None


def set_external_detector(fn):
    """Register a landmark detector callable: image -> FaceRegions.

    Passing None restores the built-in heuristic locator.
    """
    global _external_detector
    _external_detector = fn


def _heuristic_detect(photo):
    """Fallback locator for aligned portraits: canonical face-layout positions.

    Refuses images without any intensity structure (e.g. blank frames).
    """
    gray = photo.astype(np.float64)
    if gray.ndim == 3:
        gray = gray.mean(axis=2)
    if gray.std() < 1.0:
        raise DetectionError("no face found: image has no intensity structure")
    H, W = gray.shape
    scale = min(H, W)
    eye_wh = (max(2, int(scale * 0.25)), max(2, int(scale * 0.25)))
    nose_wh = (max(2, int(scale * 0.3)), max(2, int(scale * 0.3)))
    mouth_wh = (max(2, int(scale * 0.35)), max(2, int(scale * 0.35)))
    return FaceRegions(
        leye=RegionBox(0.35 * W, 0.40 * H, *eye_wh),
        reye=RegionBox(0.65 * W, 0.40 * H, *eye_wh),
        nose=RegionBox(0.50 * W, 0.55 * H, *nose_wh),
        mouth=RegionBox(0.50 * W, 0.72 * H, *mouth_wh),
        image_dims=(H, W),
    )


def load_region_fixture(path):
    """Read a committed fixture of boxes: {pair_id: {part: {cx,cy,w,h}}}."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"region fixture {path} not found")
    return json.loads(path.read_text())


def regions_from_fixture(fixture, pair_id, image_dims):
    if pair_id not in fixture:
        raise DataError(f"region fixture has no entry for pair {pair_id!r}")
    rec = fixture[pair_id]
    boxes = {}
    for part in ("leye", "reye", "nose", "mouth"):
        b = rec[part]
        boxes[part] = RegionBox(cx=b["cx"], cy=b["cy"], w=b["w"], h=b["h"])
    return clamp_regions(FaceRegions(image_dims=tuple(image_dims), **boxes))


def detect_regions(photo, provider="external_detector", fixture=None,
                   pair_id=None):
    """Locate the four facial key regions of a photo.

    provider "external_detector" dispatches to the registered detector (or
    the built-in heuristic locator); "fixture_file" looks the boxes up in a
    fixture mapping by pair_id. Boxes are always clamped inside the image.
    """
    if photo.size == 0:
        raise DataError("empty photo")
    dims = photo.shape[:2]
    if provider == "fixture_file":
        if fixture is None or pair_id is None:
            raise DataError("fixture provider needs fixture and pair_id")
        return regions_from_fixture(fixture, pair_id, dims)
    if provider == "external_detector":
        detector = _external_detector or _heuristic_detect
        regions = detector(photo)
        return clamp_regions(regions)
    raise DataError(f"unknown region provider {provider!r}")


# ---------------------------------------------------------------------------
# Split / stitch

def split_parts(image, regions, config=None):
    """Split an image into the five parts: four fixed-size crops plus 'rest'.

    rest is the full image with every window filled by MASK_VALUE.
    """
    config = config or RegionConfig()
    dims = image.shape[:2]
    if tuple(regions.image_dims) != tuple(dims):
        raise DataError(
            f"regions were computed for {regions.image_dims}, image is {dims}")

    parts = {}
    rest = image.copy()
    for name in ("leye", "reye", "nose", "mouth"):
        ys, xs = _window_slices(regions.box(name), config.size(name), dims)
        parts[name] = image[ys, xs].copy()
        rest[ys, xs] = MASK_VALUE
    parts["rest"] = rest
    return parts


def stitch_parts(parts, regions, config=None):
    """Paste the five parts back into one image, rest first, fixed order."""
    config = config or RegionConfig()
    dims = regions.image_dims
    rest = parts["rest"]
    if tuple(rest.shape[:2]) != tuple(dims):
        raise DataError(
            f"rest part is {rest.shape[:2]}, regions expect {dims}")

    out = rest.copy()
    for name in config.paste_order:
        if name == "rest":
            continue
        patch = parts[name]
        size = config.size(name)
        if tuple(patch.shape[:2]) != (size, size):
            raise DataError(
                f"part {name!r} is {patch.shape[:2]}, config expects "
                f"{size}x{size}")
        ys, xs = _window_slices(regions.box(name), size, dims)
        out[ys, xs] = patch
    return out
