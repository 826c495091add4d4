"""Region composition: spatial-preserving composites, zoomed crops, and
scaled global views.

The spatial composite copies each selected region onto a blank canvas at
its original position, crops the canvas to the regions' bounding hull
(configurable), and resizes with aspect ratio preserved, so the relative
layout of regions survives while everything else is dropped.

All crops rasterize real-valued boxes to their integer-enclosing
rectangle. LANCZOS is the resampling filter for both up- and
down-scaling; golden tests depend on it, so it is a module constant.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from PIL import Image, ImageDraw, ImageOps

from .errors import DegenerateBox, NoRegions
from .geometry import Box, ScoredBox, clip

RESAMPLE = Image.Resampling.LANCZOS

KIND_SPATIAL = "spatial_composite"
KIND_CROP = "zoomed_crop"
KIND_GLOBAL = "global_view"
KIND_RAW = "raw"  # unmodified input wrapped for planning/dispatch


@dataclass(frozen=True)
class ComposeConfig:
    tile_target: int = 512
    fill: tuple[int, int, int] = (255, 255, 255)
    crop_to_hull: bool = True
    margin_fraction: float = 0.0

    def __post_init__(self):
        if self.tile_target <= 0:
            raise ValueError("tile_target must be positive")
        if not 0.0 <= self.margin_fraction < 1.0:
            raise ValueError("margin_fraction must be in [0, 1)")


@dataclass
class ComposedImage:
    """A raster ready for dispatch plus placement provenance.

    ``placements`` maps each source box to its rectangle in the final
    raster; ``shrink_factor`` is the uniform scale applied at the resize
    step (> 1 for upscales).
    """

    pixels: Image.Image
    placements: list[tuple[Box, Box]] = field(default_factory=list)
    shrink_factor: float = 1.0
    kind: str = KIND_GLOBAL

    @property
    def width(self) -> int:
        return self.pixels.size[0]

    @property
    def height(self) -> int:
        return self.pixels.size[1]


def load_image(path: str) -> Image.Image:
    """Open an image, normalize EXIF orientation, convert to RGB."""
    img = Image.open(path)
    img = ImageOps.exif_transpose(img)
    return img.convert("RGB")


def _expand(box: Box, margin_fraction: float) -> Box:
    if margin_fraction <= 0.0:
        return box
    mx = margin_fraction * box.width
    my = margin_fraction * box.height
    return Box(box.x0 - mx, box.y0 - my, box.x1 + mx, box.y1 + my)


def _fit_to_target(w: int, h: int, target: int) -> tuple[int, int, float]:
    """Output dims with the long side exactly ``target``, plus the scale."""
    scale = target / max(w, h)
    return max(1, round(w * scale)), max(1, round(h * scale)), scale


def _order_for_placement(boxes: list[Box] | list[ScoredBox]) -> list[Box]:
    """Highest-confidence regions place first (first writer wins per pixel);
    plain boxes keep their given order."""
    if boxes and isinstance(boxes[0], ScoredBox):
        ranked = sorted(
            boxes,
            key=lambda sb: (-sb.score, -sb.box.area, sb.box.x0, sb.box.y0, sb.box.x1, sb.box.y1),
        )
        return [sb.box for sb in ranked]
    return list(boxes)


def _build_canvas(
    image: Image.Image, boxes: list[Box] | list[ScoredBox], cfg: ComposeConfig
) -> tuple[Image.Image, list[Box], tuple[int, int]]:
    """Blank canvas with regions copied at their original positions,
    cropped to the hull when configured. Returns (canvas, sources in
    placement order, hull origin)."""
    if not boxes:
        raise NoRegions("spatial composition requires at least one region")
    w, h = image.size
    bounds = Box(0.0, 0.0, float(w), float(h))

    rects: list[tuple[int, int, int, int]] = []
    sources: list[Box] = []
    for box in _order_for_placement(boxes):
        inside = clip(box, bounds)
        if inside is None:
            raise ValueError(f"region {box.as_tuple()} lies outside the {w}x{h} image")
        x0, y0, x1, y1 = inside.pixel_rect()
        x0, y0 = max(0, x0), max(0, y0)
        x1, y1 = min(w, x1), min(h, y1)
        rects.append((x0, y0, x1, y1))
        sources.append(box)

    if cfg.crop_to_hull:
        hull = Box(
            float(min(r[0] for r in rects)),
            float(min(r[1] for r in rects)),
            float(max(r[2] for r in rects)),
            float(max(r[3] for r in rects)),
        )
        hull = clip(_expand(hull, cfg.margin_fraction), bounds)
        hx0, hy0, hx1, hy1 = hull.pixel_rect()
    else:
        hx0, hy0, hx1, hy1 = 0, 0, w, h

    # Building the canvas at hull size is byte-equivalent to composing on
    # a full-size blank canvas and cropping afterwards.
    src = np.asarray(image)
    canvas = np.empty((hy1 - hy0, hx1 - hx0, 3), dtype=np.uint8)
    canvas[:, :] = cfg.fill
    for (x0, y0, x1, y1) in rects:
        canvas[y0 - hy0: y1 - hy0, x0 - hx0: x1 - hx0] = src[y0:y1, x0:x1]
    return Image.fromarray(canvas), sources, (hx0, hy0)


def compose_spatial(
    image: Image.Image, boxes: list[Box] | list[ScoredBox], cfg: ComposeConfig | None = None
) -> ComposedImage:
    """Copy each region onto a blank canvas at its original position,
    crop to the regions' hull, and resize to the tile target.

    Before the resize, every pixel inside a placed box equals the source
    byte-for-byte and every pixel outside equals the fill color.
    """
    cfg = cfg or ComposeConfig()
    pre, sources, (hx0, hy0) = _build_canvas(image, boxes, cfg)
    cw, ch = pre.size
    out_w, out_h, scale = _fit_to_target(cw, ch, cfg.tile_target)
    final = pre.resize((out_w, out_h), RESAMPLE)

    fx = out_w / cw
    fy = out_h / ch
    placements = [
        (
            source,
            Box(
                (source.x0 - hx0) * fx,
                (source.y0 - hy0) * fy,
                (source.x1 - hx0) * fx,
                (source.y1 - hy0) * fy,
            ),
        )
        for source in sources
    ]
    return ComposedImage(
        pixels=final, placements=placements, shrink_factor=scale, kind=KIND_SPATIAL
    )


def compose_spatial_preresize(
    image: Image.Image, boxes: list[Box] | list[ScoredBox], cfg: ComposeConfig | None = None
) -> Image.Image:
    """The pre-resize canvas of :func:`compose_spatial`, for fidelity checks."""
    cfg = cfg or ComposeConfig()
    canvas, _, _ = _build_canvas(image, boxes, cfg)
    return canvas


def crop_zoom(image: Image.Image, box: Box, cfg: ComposeConfig | None = None) -> ComposedImage:
    """Crop a region (plus margin) and rescale so its long side hits the
    tile target — enlarging small regions rather than shrinking them."""
    cfg = cfg or ComposeConfig()
    w, h = image.size
    bounds = Box(0.0, 0.0, float(w), float(h))
    target = clip(_expand(box, cfg.margin_fraction), bounds)
    if target is None:
        raise DegenerateBox(f"box {box.as_tuple()} has no pixels inside the image")
    x0, y0, x1, y1 = target.pixel_rect()
    x0, y0 = max(0, x0), max(0, y0)
    x1, y1 = min(w, x1), min(h, y1)
    if x1 <= x0 or y1 <= y0:
        raise DegenerateBox(f"box {box.as_tuple()} rasterizes to zero pixels")

    crop = image.crop((x0, y0, x1, y1))
    cw, ch = crop.size
    out_w, out_h, scale = _fit_to_target(cw, ch, cfg.tile_target)
    if (out_w, out_h) != (cw, ch):
        crop = crop.resize((out_w, out_h), RESAMPLE)
    placement = (
        Box(float(x0), float(y0), float(x1), float(y1)),
        Box(0.0, 0.0, float(out_w), float(out_h)),
    )
    return ComposedImage(
        pixels=crop, placements=[placement], shrink_factor=scale, kind=KIND_CROP
    )


def global_view(image: Image.Image, cfg: ComposeConfig | None = None) -> ComposedImage:
    """Whole image downscaled so the long side fits the tile target;
    images already within the target pass through unchanged."""
    cfg = cfg or ComposeConfig()
    w, h = image.size
    if max(w, h) <= cfg.tile_target:
        out = image.copy()
        scale = 1.0
    else:
        out_w, out_h, scale = _fit_to_target(w, h, cfg.tile_target)
        out = image.resize((out_w, out_h), RESAMPLE)
    placement = (
        Box(0.0, 0.0, float(w), float(h)),
        Box(0.0, 0.0, float(out.size[0]), float(out.size[1])),
    )
    return ComposedImage(
        pixels=out, placements=[placement], shrink_factor=scale, kind=KIND_GLOBAL
    )


def wrap_raw(image: Image.Image) -> ComposedImage:
    """Wrap an unmodified image for planning/dispatch (baseline path)."""
    w, h = image.size
    box = Box(0.0, 0.0, float(w), float(h))
    return ComposedImage(
        pixels=image.copy(), placements=[(box, box)], shrink_factor=1.0, kind=KIND_RAW
    )


OVERLAY_COLOR = (255, 32, 32)


def render_overlay(image: Image.Image, boxes: list[ScoredBox], out_path: str) -> Image.Image:
    """Draw detection outlines and scores onto a copy and save it as PNG.

    Never mutates pipeline data; returns the annotated copy.
    """
    annotated = image.convert("RGB").copy()
    draw = ImageDraw.Draw(annotated)
    for sb in boxes:
        x0, y0, x1, y1 = sb.box.pixel_rect()
        draw.rectangle((x0, y0, x1 - 1, y1 - 1), outline=OVERLAY_COLOR, width=1)
        draw.text((x0 + 2, y0 + 2), f"{sb.phrase} {sb.score:.2f}", fill=OVERLAY_COLOR)
    annotated.save(out_path, format="PNG")
    return annotated
