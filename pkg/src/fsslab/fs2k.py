"""FS2K-style dataset model: manifests, attribute annotations, split statistics.

Directory layout expected under a dataset root:

    root/photo/<image_name>          RGB photos (png/jpg)
    root/sketch/<stem>.<ext>         grayscale sketches, same stem as the photo
    root/anno_train.json             list of annotation records (train split)
    root/anno_test.json              list of annotation records (test split)

An annotation record is a JSON object:

    {
      "image_name": "image0001.png",
      "style": "style1",                 # style1 | style2 | style3
      "gender": "male",                  # male | female
      "smile": true,
      "frontal_face": true,
      "has_hair": true,
      "hair_color": "black",             # brown | black | red | golden;
                                         # present iff has_hair
      "earring": false,
      "skin_patch": [x1, y1, x2, y2],    # pixel rect in the photo, x2/y2 exclusive
      "lip_color": [r, g, b],
      "eye_color": [r, g, b]
    }

Unknown fields are ignored with a warning so that dataset revisions with
extra annotations keep loading.
"""

import json
import logging
import random
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DataError, SchemaError

log = logging.getLogger(__name__)

STYLES = ("style1", "style2", "style3")
GENDERS = ("male", "female")
HAIR_COLORS = ("brown", "black", "red", "golden")
SPLITS = ("train", "test")

IMAGE_EXTS = (".png", ".jpg", ".jpeg")

# Attribute-slice keys, in benchmark-table column order.
SLICE_KEYS = (
    "w/ H", "w/o H",
    "H(b)", "H(bl)", "H(r)", "H(g)",
    "M", "F",
    "w/ E", "w/o E",
    "w/ S", "w/o S",
    "w/ F", "w/o F",
    "S1", "S2", "S3",
)

_HAIR_COLOR_KEY = {"brown": "H(b)", "black": "H(bl)", "red": "H(r)", "golden": "H(g)"}
_STYLE_KEY = {"style1": "S1", "style2": "S2", "style3": "S3"}

_KNOWN_FIELDS = {
    "image_name", "style", "gender", "smile", "frontal_face", "has_hair",
    "hair_color", "earring", "skin_patch", "lip_color", "eye_color",
}


@dataclass(frozen=True)
class Rect:
    """Pixel rectangle with exclusive upper bounds (x1 <= x < x2)."""

    x1: int
    y1: int
    x2: int
    y2: int

    @property
    def width(self):
        return self.x2 - self.x1

    @property
    def height(self):
        return self.y2 - self.y1


@dataclass(frozen=True)
class FaceAttributes:
    gender: str
    smile: bool
    frontal_face: bool
    has_hair: bool
    hair_color: str | None
    earring: bool
    skin_patch: Rect
    lip_color: tuple
    eye_color: tuple

    def slice_keys(self):
        """All attribute-slice keys (minus style) this sample belongs to."""
        keys = []
        keys.append("w/ H" if self.has_hair else "w/o H")
        if self.has_hair:
            keys.append(_HAIR_COLOR_KEY[self.hair_color])
        keys.append("M" if self.gender == "male" else "F")
        keys.append("w/ E" if self.earring else "w/o E")
        keys.append("w/ S" if self.smile else "w/o S")
        keys.append("w/ F" if self.frontal_face else "w/o F")
        return keys


@dataclass(frozen=True)
class ManifestEntry:
    pair_id: str
    photo_path: Path
    sketch_path: Path
    style: str
    split: str
    attributes: FaceAttributes

    def slice_keys(self):
        return self.attributes.slice_keys() + [_STYLE_KEY[self.style]]


@dataclass
class DatasetManifest:
    root: Path
    entries: list

    def __post_init__(self):
        self.by_id = {e.pair_id: e for e in self.entries}

    def split_entries(self, split):
        if split not in SPLITS:
            raise DataError(f"unknown split {split!r}, expected one of {SPLITS}")
        return [e for e in self.entries if e.split == split]


@dataclass
class PhotoSketchPair:
    pair_id: str
    photo: np.ndarray   # H x W x 3, uint8
    sketch: np.ndarray  # H x W, uint8
    style: str
    attributes: FaceAttributes
    split: str


@dataclass
class SplitStats:
    split: str
    total: int
    counts: dict = field(default_factory=dict)


def _require(cond, msg, field_path):
    if not cond:
        raise SchemaError(msg, field_path=field_path)


def _parse_rgb(value, field_path):
    _require(isinstance(value, (list, tuple)) and len(value) == 3,
             f"{field_path}: expected [r, g, b]", field_path)
    rgb = tuple(float(v) for v in value)
    _require(all(0 <= v <= 255 for v in rgb),
             f"{field_path}: components must lie in [0, 255]", field_path)
    return rgb


def _parse_record(record, index, split):
    where = f"{split}[{index}]"
    _require(isinstance(record, dict), f"{where}: record must be an object", where)
    extra = set(record) - _KNOWN_FIELDS
    if extra:
        log.warning("%s: ignoring unknown annotation fields %s", where, sorted(extra))

    def need(name, types):
        _require(name in record, f"{where}.{name}: missing", f"{where}.{name}")
        value = record[name]
        _require(isinstance(value, types), f"{where}.{name}: wrong type",
                 f"{where}.{name}")
        return value

    image_name = need("image_name", str)
    style = need("style", str)
    _require(style in STYLES, f"{where}.style: {style!r} not in {STYLES}",
             f"{where}.style")
    gender = need("gender", str)
    _require(gender in GENDERS, f"{where}.gender: {gender!r} not in {GENDERS}",
             f"{where}.gender")
    smile = need("smile", bool)
    frontal = need("frontal_face", bool)
    has_hair = need("has_hair", bool)
    earring = need("earring", bool)

    hair_color = record.get("hair_color")
    if has_hair:
        _require(hair_color is not None,
                 f"{where}.hair_color: required when has_hair is true",
                 f"{where}.hair_color")
        _require(hair_color in HAIR_COLORS,
                 f"{where}.hair_color: {hair_color!r} not in {HAIR_COLORS}",
                 f"{where}.hair_color")
    else:
        _require(hair_color is None,
                 f"{where}.hair_color: must be absent when has_hair is false",
                 f"{where}.hair_color")

    patch = need("skin_patch", (list, tuple))
    _require(len(patch) == 4, f"{where}.skin_patch: expected [x1, y1, x2, y2]",
             f"{where}.skin_patch")
    rect = Rect(*(int(v) for v in patch))
    _require(rect.x1 < rect.x2 and rect.y1 < rect.y2,
             f"{where}.skin_patch: requires x1 < x2 and y1 < y2",
             f"{where}.skin_patch")
    _require(rect.x1 >= 0 and rect.y1 >= 0,
             f"{where}.skin_patch: negative origin", f"{where}.skin_patch")

    attrs = FaceAttributes(
        gender=gender,
        smile=smile,
        frontal_face=frontal,
        has_hair=has_hair,
        hair_color=hair_color,
        earring=earring,
        skin_patch=rect,
        lip_color=_parse_rgb(need("lip_color", (list, tuple)), f"{where}.lip_color"),
        eye_color=_parse_rgb(need("eye_color", (list, tuple)), f"{where}.eye_color"),
    )
    return image_name, style, attrs


def _find_sketch(root, stem):
    for ext in IMAGE_EXTS:
        candidate = root / "sketch" / (stem + ext)
        if candidate.exists():
            return candidate
    return None


def load_manifest(root, check_skin_patch=True):
    """Load and validate a dataset manifest from ``root``.

    Raises DataError for missing files (naming the pair_id) and SchemaError
    for malformed annotation records (naming the field path).
    """
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"dataset root {root} is not a directory")

    entries = []
    seen = set()
    for split in SPLITS:
        anno_path = root / f"anno_{split}.json"
        if not anno_path.exists():
            raise DataError(f"missing annotation file {anno_path}")
        try:
            records = json.loads(anno_path.read_text())
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{anno_path}: invalid JSON: {exc}") from exc
        _require(isinstance(records, list),
                 f"{anno_path}: top level must be a list", str(anno_path))

        for i, record in enumerate(records):
            image_name, style, attrs = _parse_record(record, i, split)
            pair_id = Path(image_name).stem
            if pair_id in seen:
                raise DataError(f"duplicate pair_id {pair_id!r}")
            seen.add(pair_id)

            photo_path = root / "photo" / image_name
            if not photo_path.exists():
                raise DataError(f"pair {pair_id!r}: missing photo {photo_path}")
            sketch_path = _find_sketch(root, pair_id)
            if sketch_path is None:
                raise DataError(f"pair {pair_id!r}: missing sketch for stem "
                                f"{pair_id!r} under {root / 'sketch'}")

            if check_skin_patch:
                with Image.open(photo_path) as im:
                    w, h = im.size
                rect = attrs.skin_patch
                if rect.x2 > w or rect.y2 > h:
                    raise SchemaError(
                        f"pair {pair_id!r}: skin_patch {rect} exceeds photo "
                        f"bounds {w}x{h}",
                        field_path=f"{split}.skin_patch",
                    )

            entries.append(ManifestEntry(
                pair_id=pair_id,
                photo_path=photo_path,
                sketch_path=sketch_path,
                style=style,
                split=split,
                attributes=attrs,
            ))

    return DatasetManifest(root=root, entries=entries)


def entry_to_record(entry):
    """Inverse of record parsing; yields a JSON-serializable annotation dict."""
    attrs = entry.attributes
    record = {
        "image_name": entry.photo_path.name,
        "style": entry.style,
        "gender": attrs.gender,
        "smile": attrs.smile,
        "frontal_face": attrs.frontal_face,
        "has_hair": attrs.has_hair,
        "earring": attrs.earring,
        "skin_patch": [attrs.skin_patch.x1, attrs.skin_patch.y1,
                       attrs.skin_patch.x2, attrs.skin_patch.y2],
        "lip_color": list(attrs.lip_color),
        "eye_color": list(attrs.eye_color),
    }
    if attrs.has_hair:
        record["hair_color"] = attrs.hair_color
    return record


def serialize_manifest(manifest, out_root=None):
    """Write anno_train.json / anno_test.json for ``manifest``.

    Images are assumed to already be in place. load_manifest after
    serialize_manifest reproduces the manifest (round-trip identity).
    """
    out_root = Path(out_root) if out_root is not None else manifest.root
    for split in SPLITS:
        records = [entry_to_record(e) for e in manifest.split_entries(split)]
        path = out_root / f"anno_{split}.json"
        path.write_text(json.dumps(records, indent=1))
    return out_root


def compute_split_stats(manifest, split):
    """Exact attribute tallies over one split, keyed by the slice keys."""
    entries = manifest.split_entries(split)
    counts = {key: 0 for key in SLICE_KEYS}
    for entry in entries:
        for key in entry.slice_keys():
            counts[key] += 1
    return SplitStats(split=split, total=len(entries), counts=counts)


def _resize_pad(arr, size, pad_value):
    """Aspect-preserving resize of an image array to size x size with padding."""
    img = Image.fromarray(arr)
    w, h = img.size
    scale = size / max(w, h)
    new_w, new_h = max(1, round(w * scale)), max(1, round(h * scale))
    img = img.resize((new_w, new_h), Image.BILINEAR)
    resized = np.asarray(img)
    if arr.ndim == 3:
        out = np.full((size, size, arr.shape[2]), pad_value, dtype=arr.dtype)
    else:
        out = np.full((size, size), pad_value, dtype=arr.dtype)
    y0 = (size - new_h) // 2
    x0 = (size - new_w) // 2
    out[y0:y0 + new_h, x0:x0 + new_w] = resized
    return out


def load_pair(entry, resolution=None):
    """Load one photo/sketch pair from disk.

    With ``resolution`` set, both images are resized (aspect-preserving,
    photos padded black, sketches padded white) to resolution x resolution.
    Without it, the native dimensions must already agree.
    """
    try:
        with Image.open(entry.photo_path) as im:
            photo = np.asarray(im.convert("RGB"))
        with Image.open(entry.sketch_path) as im:
            sketch = np.asarray(im.convert("L"))
    except OSError as exc:
        raise DataError(f"pair {entry.pair_id!r}: unreadable image: {exc}") from exc

    if resolution is not None:
        photo = _resize_pad(photo, resolution, pad_value=0)
        sketch = _resize_pad(sketch, resolution, pad_value=255)
    elif photo.shape[:2] != sketch.shape[:2]:
        raise DataError(
            f"pair {entry.pair_id!r}: photo {photo.shape[:2]} and sketch "
            f"{sketch.shape[:2]} dimensions differ; pass a resolution")

    return PhotoSketchPair(
        pair_id=entry.pair_id,
        photo=photo,
        sketch=sketch,
        style=entry.style,
        attributes=entry.attributes,
        split=entry.split,
    )


def iterate_split(manifest, split, shuffle_seed=None, resolution=None):
    """Yield every PhotoSketchPair of a split exactly once.

    A fixed shuffle_seed gives an identical order across runs; without a
    seed, manifest order is kept. Load errors surface lazily per pair.
    """
    entries = list(manifest.split_entries(split))
    if shuffle_seed is not None:
        random.Random(shuffle_seed).shuffle(entries)
    for entry in entries:
        yield load_pair(entry, resolution=resolution)


def load_skin_patch(pair):
    """Crop the annotated skin-texture rectangle out of the pair's photo."""
    rect = pair.attributes.skin_patch
    if rect.width <= 0 or rect.height <= 0:
        raise DataError(f"pair {pair.pair_id!r}: degenerate skin patch {rect}")
    h, w = pair.photo.shape[:2]
    if rect.x1 < 0 or rect.y1 < 0 or rect.x2 > w or rect.y2 > h:
        raise DataError(
            f"pair {pair.pair_id!r}: skin patch {rect} outside photo {w}x{h}")
    return pair.photo[rect.y1:rect.y2, rect.x1:rect.x2].copy()


def sketch_to_rgb(sketch):
    """Replicate a single-channel sketch to 3 channels (for RGB-only consumers)."""
    if sketch.ndim == 2:
        return np.repeat(sketch[:, :, None], 3, axis=2)
    return sketch
