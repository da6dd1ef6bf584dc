"""Procedural catalog of 8 visual classes on a near-uniform background.

Four solid-color classes and two color pairs striped at two scales, so that the
thin/wide stripe classes share a color histogram and differ only in pattern.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from visrec.core.codec.jsonl import write_jsonl
from visrec.core.image.ppm import Image, write_ppm

BACKGROUND = (236, 236, 236)
BACKGROUND_NOISE = 3
COLOR_JITTER = 10


@dataclass(frozen=True)
class SyntheticClass:
    name: str
    colors: tuple[tuple[int, int, int], ...]
    stripe_period: int | None
    vertical: str


CLASSES: tuple[SyntheticClass, ...] = (
    SyntheticClass("solid-red", ((200, 30, 40),), None, "tshirt"),
    SyntheticClass("solid-green", ((40, 150, 60),), None, "tshirt"),
    SyntheticClass("solid-blue", ((30, 60, 190),), None, "tshirt"),
    SyntheticClass("solid-yellow", ((230, 200, 40),), None, "tshirt"),
    SyntheticClass("navy-white-thin", ((20, 30, 90), (245, 245, 250)), 4, "shirt"),
    SyntheticClass("navy-white-wide", ((20, 30, 90), (245, 245, 250)), 12, "shirt"),
    SyntheticClass("red-black-thin", ((190, 20, 30), (15, 15, 15)), 4, "shirt"),
    SyntheticClass("red-black-wide", ((190, 20, 30), (15, 15, 15)), 12, "shirt"),
)


def render(cls: SyntheticClass, rng: np.random.Generator, size: int = 32) -> Image:
    canvas = np.empty((size, size, 3), dtype=np.int16)
    canvas[:] = BACKGROUND
    canvas += rng.integers(-BACKGROUND_NOISE, BACKGROUND_NOISE + 1, size=canvas.shape, dtype=np.int16)

    # the garment is a box covering most of the frame, never touching the border
    box_h = int(rng.integers(size * 5 // 8, size - 3))
    box_w = int(rng.integers(size * 5 // 8, size - 3))
    top = int(rng.integers(1, size - box_h))
    left = int(rng.integers(1, size - box_w))

    jitter = rng.integers(-COLOR_JITTER, COLOR_JITTER + 1, size=(len(cls.colors), 3))
    colors = np.clip(np.array(cls.colors, dtype=np.int16) + jitter, 0, 255)

    rows = np.arange(box_h)
    if cls.stripe_period is None:
        band = np.zeros(box_h, dtype=np.int64)
    else:
        phase = int(rng.integers(0, cls.stripe_period))
        band = ((rows + phase) // (cls.stripe_period // 2)) % 2
    canvas[top : top + box_h, left : left + box_w] = colors[band][:, None, :]

    return Image.from_array(np.clip(canvas, 0, 255).astype(np.uint8))


def generate_catalog(
    out_dir: str | Path,
    per_class: int,
    seed: int,
    size: int = 32,
    category_group: str = "clothing",
) -> list[dict]:
    """Write `per_class` PPMs per class plus `manifest.jsonl`; returns the manifest rows."""
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)

    rows: list[dict] = []
    for class_idx, cls in enumerate(CLASSES):
        for i in range(per_class):
            item_id = f"c{class_idx}-{i:04d}"
            image_path = out / "images" / f"{item_id}.ppm"
            write_ppm(image_path, render(cls, rng, size))
            rows.append(
                {
                    "id": item_id,
                    "image": str(image_path),
                    "category_group": category_group,
                    "vertical": cls.vertical,
                    "gender": "unisex",
                    "label": cls.name,
                }
            )

    write_jsonl(out / "manifest.jsonl", rows)
    return rows
