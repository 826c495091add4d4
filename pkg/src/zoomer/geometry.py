"""Pixel-space rectangles: IoU, NMS filtering, patch/global coordinate
transforms, and exact union coverage.

All functions are pure and operate on immutable values; they are safe
for concurrent use without coordination.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import LocalBoxOutOfPatch

# Origin of a detection: (scale, patch row, patch col) for patch passes,
# or the marker string for whole-image passes.
WHOLE_IMAGE = "whole-image"


@dataclass(frozen=True)
class Box:
    """Axis-aligned rectangle in pixel space, origin top-left.

    Half-open interval [x0, x1) x [y0, y1). Coordinates are reals;
    rasterization happens only at crop time via :meth:`pixel_rect`.
    Image-anchored boxes are non-negative by construction; raw detector
    output may dip below zero until clipped.
    """

    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self):
        for name in ("x0", "y0", "x1", "y1"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise ValueError(f"non-finite box coordinate: {v!r}")
            object.__setattr__(self, name, v)
        if self.x1 <= self.x0 or self.y1 <= self.y0:
            raise ValueError(
                f"box must have strictly positive area: "
                f"({self.x0}, {self.y0}, {self.x1}, {self.y1})"
            )

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return (0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1))

    def translate(self, dx: float, dy: float) -> "Box":
        return Box(self.x0 + dx, self.y0 + dy, self.x1 + dx, self.y1 + dy)

    def pixel_rect(self) -> tuple[int, int, int, int]:
        """Integer-enclosing rectangle (floor/ceil), for deterministic crops."""
        return (
            math.floor(self.x0),
            math.floor(self.y0),
            math.ceil(self.x1),
            math.ceil(self.y1),
        )

    def contains(self, other: "Box") -> bool:
        return (
            self.x0 <= other.x0
            and self.y0 <= other.y0
            and other.x1 <= self.x1
            and other.y1 <= self.y1
        )

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x0, self.y0, self.x1, self.y1)


@dataclass(frozen=True)
class ScoredBox:
    """A detection: rectangle + confidence + the phrase that produced it.

    ``origin`` records provenance: (scale, patch row, patch col) for a
    patch pass, or ``WHOLE_IMAGE`` for a whole-image pass.
    """

    box: Box
    score: float
    phrase: str
    origin: tuple[int, int, int] | str = WHOLE_IMAGE

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score must be in [0, 1], got {self.score}")


@dataclass(frozen=True)
class PatchRect:
    """One cell of an s x s patch grid, in global image coordinates."""

    box: Box
    scale: int
    index: tuple[int, int] = field(default=(0, 0))  # (row, col)

    def __post_init__(self):
        if self.scale < 1:
            raise ValueError(f"scale must be >= 1, got {self.scale}")
        row, col = self.index
        if not (0 <= row < self.scale and 0 <= col < self.scale):
            raise ValueError(f"patch index {self.index} out of range for s={self.scale}")


def iou(a: Box, b: Box) -> float:
    """Intersection over union of two boxes, in [0, 1]. Symmetric; 0 when disjoint."""
    ix0 = max(a.x0, b.x0)
    iy0 = max(a.y0, b.y0)
    ix1 = min(a.x1, b.x1)
    iy1 = min(a.y1, b.y1)
    iw = ix1 - ix0
    ih = iy1 - iy0
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    union = a.area + b.area - inter
    return inter / union


def _rank_key(sb: ScoredBox) -> tuple:
    # Equal scores break ties by larger area first, then lexicographic
    # coordinates, so plans are reproducible.
    b = sb.box
    return (-sb.score, -b.area, b.x0, b.y0, b.x1, b.y1)


def nms_filter(boxes: list[ScoredBox], t_iou: float) -> list[ScoredBox]:
    """Greedy non-maximum suppression in descending score order.

    A box is kept iff its IoU with every previously kept box is strictly
    below ``t_iou``; boundary equality suppresses. Output order is keep
    order (scores non-increasing).
    """
    if not 0.0 <= t_iou <= 1.0:
        raise ValueError(f"t_iou must be in [0, 1], got {t_iou}")
    kept: list[ScoredBox] = []
    for cand in sorted(boxes, key=_rank_key):
        if all(iou(cand.box, k.box) < t_iou for k in kept):
            kept.append(cand)
    return kept


def to_global(local: Box, patch: PatchRect) -> Box:
    """Translate a patch-local box into global image coordinates."""
    if local.x1 > patch.box.width or local.y1 > patch.box.height:
        raise LocalBoxOutOfPatch(
            f"local box {local.as_tuple()} exceeds patch extent "
            f"{patch.box.width:g}x{patch.box.height:g}"
        )
    return local.translate(patch.box.x0, patch.box.y0)


def clip(b: Box, bounds: Box) -> Box | None:
    """Intersection rectangle of ``b`` and ``bounds``, or None when empty."""
    x0 = max(b.x0, bounds.x0)
    y0 = max(b.y0, bounds.y0)
    x1 = min(b.x1, bounds.x1)
    y1 = min(b.y1, bounds.y1)
    if x1 <= x0 or y1 <= y0:
        return None
    return Box(x0, y0, x1, y1)


def union_area(boxes: list[Box]) -> float:
    """Exact area of the union of ``boxes`` (coordinate-compression sweep).

    Overlaps are never double counted; the empty list has area 0.
    """
    if not boxes:
        return 0.0
    xs = sorted({b.x0 for b in boxes} | {b.x1 for b in boxes})
    total = 0.0
    for x_left, x_right in zip(xs, xs[1:]):
        if x_right <= x_left:
            continue
        spans = sorted(
            (b.y0, b.y1) for b in boxes if b.x0 <= x_left and b.x1 >= x_right
        )
        covered = 0.0
        cur_lo = cur_hi = None
        for lo, hi in spans:
            if cur_hi is None:
                cur_lo, cur_hi = lo, hi
            elif lo <= cur_hi:
                cur_hi = max(cur_hi, hi)
            else:
                covered += cur_hi - cur_lo
                cur_lo, cur_hi = lo, hi
        if cur_hi is not None:
            covered += cur_hi - cur_lo
        total += covered * (x_right - x_left)
    return total
