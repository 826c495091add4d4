"""Fixture replay: deterministic detections from ground-truth annotations.

An annotation intersecting the submitted region is returned clipped, in
the submitted raster's coordinate frame, scored by its visible fraction:
``score = base * visible_area / full_area``. Arithmetic order matters —
clients compare these response bodies byte-for-byte against their own
in-process fixture detectors.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path


@dataclass(frozen=True)
class Annotation:
    phrase: str
    x0: float
    y0: float
    x1: float
    y1: float
    score: float


def load_annotations(path: str | Path) -> tuple[Annotation, ...]:
    """One JSON record per line: {"phrase": str, "box": [x0,y0,x1,y1], "score": num}."""
    annotations = []
    text = Path(path).read_text("utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            x0, y0, x1, y1 = (float(v) for v in rec["box"])
            if x1 <= x0 or y1 <= y0:
                raise ValueError("box must have positive area")
            annotations.append(
                Annotation(
                    phrase=str(rec["phrase"]), x0=x0, y0=y0, x1=x1, y1=y1,
                    score=float(rec["score"]),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"{path}:{lineno}: bad fixture record: {exc}") from exc
    return tuple(annotations)


def replay(
    annotations: tuple[Annotation, ...],
    region: tuple[float, float, float, float],
    raster_w: int,
    raster_h: int,
    phrases: list[str],
    threshold: float,
) -> list[dict]:
    """Detections for the submitted region, in raster coordinates,
    keeping annotation file order."""
    wanted = {p.lower() for p in phrases}
    rx0, ry0, rx1, ry1 = region
    sx = raster_w / (rx1 - rx0)
    sy = raster_h / (ry1 - ry0)
    out: list[dict] = []
    for ann in annotations:
        if ann.phrase.lower() not in wanted:
            continue
        vx0 = max(ann.x0, rx0)
        vy0 = max(ann.y0, ry0)
        vx1 = min(ann.x1, rx1)
        vy1 = min(ann.y1, ry1)
        if vx1 <= vx0 or vy1 <= vy0:
            continue
        visible_area = (vx1 - vx0) * (vy1 - vy0)
        full_area = (ann.x1 - ann.x0) * (ann.y1 - ann.y0)
        score = ann.score * (visible_area / full_area)
        if score < threshold:
            continue
        out.append(
            {
                "phrase": ann.phrase,
                "box": [
                    (vx0 - rx0) * sx,
                    (vy0 - ry0) * sy,
                    (vx1 - rx0) * sx,
                    (vy1 - ry0) * sy,
                ],
                "score": score,
            }
        )
    return out


def encode_response(detections: list[dict]) -> bytes:
    """Canonical /detect response body."""
    return json.dumps({"detections": detections}, separators=(",", ":")).encode("utf-8")
