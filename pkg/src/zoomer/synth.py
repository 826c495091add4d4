"""Synthetic needle benchmark: large textured images hiding one small
letter glyph, with matching detector fixtures and mock ground truth.

Each generated image carries a single block-pattern letter (A-D) at a
seeded random position on low-frequency noise — a desk-scale stand-in
for the real failure mode where downscaling erases small details. The
emitted dataset is line-delimited records ready for the benchmark
runner; fixtures let the deterministic detector find the glyph, and the
mock ground truth tells the offline provider when it is legible.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np
from PIL import Image

logger = logging.getLogger(__name__)

QUESTION = "Which letter is shown?"
LETTERS = ("A", "B", "C", "D")
GLYPH_PHRASE = "letter"
GLYPH_SCORE = 0.95
GLYPH_COLOR = (214, 40, 40)

# 7x5 block bitmaps.
_GLYPHS = {
    "A": [
        "01110",
        "10001",
        "10001",
        "11111",
        "10001",
        "10001",
        "10001",
    ],
    "B": [
        "11110",
        "10001",
        "10001",
        "11110",
        "10001",
        "10001",
        "11110",
    ],
    "C": [
        "01111",
        "10000",
        "10000",
        "10000",
        "10000",
        "10000",
        "01111",
    ],
    "D": [
        "11110",
        "10001",
        "10001",
        "10001",
        "10001",
        "10001",
        "11110",
    ],
}


def _textured_background(rng: np.random.Generator, width: int, height: int) -> np.ndarray:
    """Low-frequency seeded noise, upscaled smoothly to full size."""
    grid = rng.integers(70, 190, size=(12, 16, 3), dtype=np.uint8)
    small = Image.fromarray(grid, mode="RGB")
    return np.asarray(small.resize((width, height), Image.Resampling.BILINEAR)).copy()


def _draw_glyph(canvas: np.ndarray, letter: str, x: int, y: int, size: int):
    """Render ``letter`` as colored blocks inside the size x size cell at (x, y)."""
    rows = _GLYPHS[letter]
    cell_h = size / len(rows)
    cell_w = size / len(rows[0])
    x_off = x + (size - cell_w * len(rows[0])) / 2.0
    for r, row in enumerate(rows):
        for c, bit in enumerate(row):
            if bit != "1":
                continue
            y0 = y + round(r * cell_h)
            y1 = y + round((r + 1) * cell_h)
            x0 = round(x_off + c * cell_w)
            x1 = round(x_off + (c + 1) * cell_w)
            canvas[y0:y1, x0:x1] = GLYPH_COLOR


def synthesize_dataset(
    count: int,
    width: int,
    height: int,
    glyph_px: int,
    out_dir: str | Path,
    seed: int = 0,
    min_legible_px: float = 32.0,
) -> Path:
    """Generate ``count`` needle images plus dataset/fixture files.

    Returns the dataset path. A fixed seed makes the whole tree
    byte-identical across runs.
    """
    if glyph_px >= min(width, height):
        raise ValueError(
            f"glyph ({glyph_px}px) must be smaller than the image ({width}x{height})"
        )
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "fixtures").mkdir(parents=True, exist_ok=True)

    rng = np.random.default_rng(seed)
    dataset_path = out / "dataset.jsonl"
    records = []
    for i in range(count):
        letter = LETTERS[int(rng.integers(0, len(LETTERS)))]
        x = int(rng.integers(0, width - glyph_px))
        y = int(rng.integers(0, height - glyph_px))

        canvas = _textured_background(rng, width, height)
        _draw_glyph(canvas, letter, x, y, glyph_px)

        image_path = out / "images" / f"img_{i:04d}.png"
        Image.fromarray(canvas, mode="RGB").save(image_path, format="PNG", compress_level=1)

        box = [float(x), float(y), float(x + glyph_px), float(y + glyph_px)]
        fixture_path = out / "fixtures" / f"img_{i:04d}.jsonl"
        fixture_path.write_text(
            json.dumps({"phrase": GLYPH_PHRASE, "box": box, "score": GLYPH_SCORE}) + "\n",
            "utf-8",
        )

        # paths are dataset-relative so a fixed seed is byte-identical
        # regardless of where the tree lands
        records.append(
            {
                "image": str(image_path.relative_to(out)),
                "question": QUESTION,
                "options": [{"letter": L, "text": L} for L in LETTERS],
                "answer": letter,
                "fixture": str(fixture_path.relative_to(out)),
                "mock": {"target_box": box, "min_legible_px": min_legible_px},
            }
        )

    dataset_path.write_text(
        "".join(json.dumps(r, sort_keys=True) + "\n" for r in records), "utf-8"
    )
    if count == 0:
        logger.warning("generated an empty dataset at %s", dataset_path)
    return dataset_path
