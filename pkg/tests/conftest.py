import io
import json

import numpy as np
import pytest
from PIL import Image

# Published per-attribute counts for the two splits (the fixture dataset
# below reproduces them cell for cell).
TRAIN_COUNTS = {
    "w/ H": 1010, "w/o H": 48,
    "H(b)": 288, "H(bl)": 423, "H(r)": 60, "H(g)": 239,
    "M": 574, "F": 484,
    "w/ E": 209, "w/o E": 849,
    "w/ S": 645, "w/o S": 413,
    "w/ F": 917, "w/o F": 141,
    "S1": 357, "S2": 351, "S3": 350,
}
TEST_COUNTS = {
    "w/ H": 994, "w/o H": 52,
    "H(b)": 290, "H(bl)": 418, "H(r)": 44, "H(g)": 242,
    "M": 632, "F": 414,
    "w/ E": 187, "w/o E": 859,
    "w/ S": 670, "w/o S": 376,
    "w/ F": 872, "w/o F": 174,
    "S1": 619, "S2": 381, "S3": 46,
}
TRAIN_TOTAL = 1058
TEST_TOTAL = 1046

HAIR_COLOR_ORDER = (("brown", "H(b)"), ("black", "H(bl)"),
                    ("red", "H(r)"), ("golden", "H(g)"))


def face_like_image(size=64, seed=0):
    """Structured grayscale portrait-ish array (keeps detectors happy)."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size].astype(float) / size
    img = 220 - 120 * ((xx - 0.5) ** 2 + (yy - 0.5) ** 2 < 0.12)
    img = img + rng.normal(0, 6, (size, size))
    return np.clip(img, 0, 255).astype(np.uint8)


def photo_bytes(size=64, seed=0):
    gray = face_like_image(size, seed)
    rgb = np.stack([gray, np.roll(gray, 1, 0), np.roll(gray, 1, 1)], axis=2)
    buf = io.BytesIO()
    Image.fromarray(rgb).save(buf, format="PNG")
    return buf.getvalue()


def sketch_bytes(size=64, seed=0):
    gray = 255 - (255 - face_like_image(size, seed)) // 2
    buf = io.BytesIO()
    Image.fromarray(gray).save(buf, format="PNG")
    return buf.getvalue()


def make_record(image_name, style="style1", gender="male", smile=True,
                frontal=True, has_hair=True, hair_color="black",
                earring=False, skin_patch=(2, 2, 10, 10)):
    rec = {
        "image_name": image_name,
        "style": style,
        "gender": gender,
        "smile": smile,
        "frontal_face": frontal,
        "has_hair": has_hair,
        "earring": earring,
        "skin_patch": list(skin_patch),
        "lip_color": [180, 90, 90],
        "eye_color": [60, 40, 30],
    }
    if has_hair:
        rec["hair_color"] = hair_color
    return rec


def build_root(root, n_train=4, n_test=2, size=64):
    """Small valid dataset root with structured images."""
    (root / "photo").mkdir(parents=True)
    (root / "sketch").mkdir()
    counters = {"train": n_train, "test": n_test}
    idx = 0
    for split, n in counters.items():
        records = []
        for i in range(n):
            name = f"img{idx:04d}.png"
            (root / "photo" / name).write_bytes(photo_bytes(size, seed=idx))
            (root / "sketch" / name).write_bytes(sketch_bytes(size, seed=idx))
            records.append(make_record(
                name,
                style=f"style{(idx % 3) + 1}",
                gender="male" if idx % 2 == 0 else "female",
                smile=idx % 2 == 0,
                frontal=idx % 3 != 0,
                has_hair=idx % 5 != 4,
                hair_color=("brown", "black", "red", "golden")[idx % 4],
                earring=idx % 4 == 0,
            ))
            idx += 1
        (root / f"anno_{split}.json").write_text(json.dumps(records))
    return root


def _records_for_counts(counts, total, prefix):
    """Records whose independent attribute tallies match `counts` exactly."""
    records = []
    n_hair = counts["w/ H"]
    hair_colors = []
    for color, key in HAIR_COLOR_ORDER:
        hair_colors += [color] * counts[key]
    assert len(hair_colors) == n_hair

    styles = ["style1"] * counts["S1"] + ["style2"] * counts["S2"] \
        + ["style3"] * counts["S3"]
    assert len(styles) == total

    for i in range(total):
        has_hair = i < n_hair
        records.append(make_record(
            f"{prefix}{i:04d}.png",
            style=styles[i],
            gender="male" if i < counts["M"] else "female",
            smile=i < counts["w/ S"],
            frontal=i < counts["w/ F"],
            has_hair=has_hair,
            hair_color=hair_colors[i] if has_hair else None,
            earring=i < counts["w/ E"],
            skin_patch=(1, 1, 6, 6),
        ))
    return records


@pytest.fixture(scope="session")
def fs2k_stats_root(tmp_path_factory):
    """Full-size fixture dataset reproducing the published split statistics."""
    root = tmp_path_factory.mktemp("fs2k_full")
    (root / "photo").mkdir()
    (root / "sketch").mkdir()
    pb = photo_bytes(16, seed=1)
    sb = sketch_bytes(16, seed=1)
    for split, counts, total, prefix in (
            ("train", TRAIN_COUNTS, TRAIN_TOTAL, "tr"),
            ("test", TEST_COUNTS, TEST_TOTAL, "te")):
        records = _records_for_counts(counts, total, prefix)
        for rec in records:
            (root / "photo" / rec["image_name"]).write_bytes(pb)
            (root / "sketch" / rec["image_name"]).write_bytes(sb)
        (root / f"anno_{split}.json").write_text(json.dumps(records))
    return root


@pytest.fixture()
def small_root(tmp_path):
    return build_root(tmp_path / "data", n_train=4, n_test=2)
