"""Prompt-aware region emphasis over a pluggable grounded detector.

Three emphasis modes are provided:

* ``multi_scale`` — divide the image into s x s patch grids (s up to
  ``s_max``, plus an optional whole-image pass) and detect each key term
  on every patch; detections are remapped to global coordinates.
* ``multi_resolution`` — detect on whole-image copies resized to a list
  of target long-side resolutions and rescale boxes back.
* ``default`` — a single whole-image pass.

Detectors are bound either over HTTP (POST /detect, see the wire
protocol below) or as a fixture file that deterministically replays
ground-truth annotations: an annotation intersecting the submitted
region comes back clipped, scored ``base_score * visible/full`` area,
so partially visible objects score lower exactly as real detectors do.
"""

from __future__ import annotations

import base64
import io
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import requests
from PIL import Image
from PIL.PngImagePlugin import PngInfo

from .errors import (
    DetectorProtocolError,
    DetectorUnavailable,
    ImageTooSmall,
)
from .geometry import WHOLE_IMAGE, Box, PatchRect, ScoredBox, clip, to_global
from .keyterms import KeyTermSet

# PNG text chunk carrying the source region of a submitted crop, so a
# fixture-mode detector service can replay annotations without any side
# channel. Real detectors ignore it.
REGION_METADATA_KEY = "source-region"

# (phrase, box in the submitted raster's frame, score)
Detection = tuple[str, Box, float]


@dataclass(frozen=True)
class EmphasisConfig:
    mode: str = "multi_scale"  # "default" | "multi_resolution" | "multi_scale"
    s_max: int = 3
    include_whole_image: bool = True
    t_conf: float = 0.8
    # Target long sides for multi_resolution; None means the original size.
    resolutions: tuple[int | None, ...] = (224, 336, 672, None)
    max_concurrent_detections: int = 4

    def __post_init__(self):
        if self.mode not in ("default", "multi_resolution", "multi_scale"):
            raise ValueError(f"unknown emphasis mode: {self.mode!r}")
        if self.s_max < 2:
            raise ValueError(f"s_max must be >= 2, got {self.s_max}")
        if not 0.0 < self.t_conf <= 1.0:
            raise ValueError(f"t_conf must be in (0, 1], got {self.t_conf}")
        sizes = [r for r in self.resolutions if r is not None]
        if any(r <= 0 for r in sizes) or any(a >= b for a, b in zip(sizes, sizes[1:])):
            raise ValueError("resolutions must be positive and strictly increasing")
        if self.max_concurrent_detections < 1:
            raise ValueError("max_concurrent_detections must be >= 1")


@dataclass(frozen=True)
class FixtureAnnotation:
    """Ground-truth detection in original-image global coordinates."""

    phrase: str
    box: Box
    base_score: float


@dataclass(frozen=True)
class DetectorBinding:
    """Where detections come from: an HTTP endpoint or a fixture file."""

    kind: str  # "http" | "fixture"
    endpoint: str | None = None
    fixture_path: str | None = None
    timeout: float = 30.0
    retries: int = 2

    def __post_init__(self):
        if self.kind == "http":
            if not self.endpoint or not self.endpoint.startswith(("http://", "https://")):
                raise ValueError(f"malformed detector endpoint: {self.endpoint!r}")
        elif self.kind == "fixture":
            if not self.fixture_path:
                raise ValueError("fixture binding requires a fixture file path")
            load_fixture_annotations(str(self.fixture_path))  # must exist and parse
        else:
            raise ValueError(f"unknown detector kind: {self.kind!r}")

    @classmethod
    def http(cls, endpoint: str, timeout: float = 30.0, retries: int = 2) -> "DetectorBinding":
        return cls(kind="http", endpoint=endpoint, timeout=timeout, retries=retries)

    @classmethod
    def fixture(cls, path: str | Path) -> "DetectorBinding":
        return cls(kind="fixture", fixture_path=str(path))


@lru_cache(maxsize=64)
def load_fixture_annotations(path: str) -> tuple[FixtureAnnotation, ...]:
    """Parse a fixture file: one JSON record per line with phrase/box/score."""
    annotations = []
    text = Path(path).read_text("utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            box = Box(*map(float, rec["box"]))
            annotations.append(
                FixtureAnnotation(
                    phrase=str(rec["phrase"]), box=box, base_score=float(rec["score"])
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"{path}:{lineno}: bad fixture record: {exc}") from exc
    return tuple(annotations)


def divide_into_patches(width: int, height: int, s: int) -> list[PatchRect]:
    """Divide a width x height image into an s x s grid of PatchRects.

    Column widths are floor(width/s) except the last column, which
    absorbs the remainder (rows likewise), so the grid tiles the image
    exactly: disjoint cells whose union is the full image.
    """
    if s < 1:
        raise ValueError(f"s must be >= 1, got {s}")
    if width < s or height < s:
        raise ImageTooSmall(f"cannot divide {width}x{height} into {s}x{s} patches")
    col_w = width // s
    row_h = height // s
    patches = []
    for row in range(s):
        y0 = row * row_h
        y1 = height if row == s - 1 else (row + 1) * row_h
        for col in range(s):
            x0 = col * col_w
            x1 = width if col == s - 1 else (col + 1) * col_w
            patches.append(
                PatchRect(box=Box(x0, y0, x1, y1), scale=s, index=(row, col))
            )
    return patches


def encode_detections(detections: list[Detection]) -> bytes:
    """Canonical wire encoding of a detection list (the /detect response body)."""
    payload = {
        "detections": [
            {"phrase": p, "box": [b.x0, b.y0, b.x1, b.y1], "score": s}
            for p, b, s in detections
        ]
    }
    return json.dumps(payload, separators=(",", ":")).encode("utf-8")


def fixture_detect(
    annotations: tuple[FixtureAnnotation, ...],
    region: Box,
    raster_size: tuple[float, float],
    phrases: list[str],
    t_conf: float,
) -> list[Detection]:
    """Replay annotations intersecting ``region``, in raster coordinates.

    Score scales with the visible fraction of the annotation; results
    keep fixture file order. This exact arithmetic is the contract the
    fixture-mode detector service must reproduce byte-for-byte.
    """
    wanted = {p.lower() for p in phrases}
    raster_w, raster_h = raster_size
    sx = raster_w / region.width
    sy = raster_h / region.height
    out: list[Detection] = []
    for ann in annotations:
        if ann.phrase.lower() not in wanted:
            continue
        visible = clip(ann.box, region)
        if visible is None:
            continue
        score = ann.base_score * (visible.area / ann.box.area)
        if score < t_conf:
            continue
        out.append(
            (
                ann.phrase,
                Box(
                    (visible.x0 - region.x0) * sx,
                    (visible.y0 - region.y0) * sy,
                    (visible.x1 - region.x0) * sx,
                    (visible.y1 - region.y0) * sy,
                ),
                score,
            )
        )
    return out


def _encode_png_with_region(image: Image.Image, region: Box) -> bytes:
    info = PngInfo()
    info.add_text(
        REGION_METADATA_KEY,
        f"{region.x0!r} {region.y0!r} {region.x1!r} {region.y1!r}",
    )
    buf = io.BytesIO()
    image.save(buf, format="PNG", pnginfo=info)
    return buf.getvalue()


def _http_detect(
    binding: DetectorBinding,
    raster: Image.Image,
    region: Box,
    phrases: list[str],
    t_conf: float,
) -> list[Detection]:
    body = {
        "image": base64.b64encode(_encode_png_with_region(raster, region)).decode("ascii"),
        "phrases": list(phrases),
        "threshold": t_conf,
    }
    last_exc: Exception | None = None
    for attempt in range(binding.retries + 1):
        try:
            resp = requests.post(
                binding.endpoint.rstrip("/") + "/detect",
                json=body,
                timeout=binding.timeout,
            )
            break
        except requests.RequestException as exc:
            last_exc = exc
            if attempt < binding.retries:
                time.sleep(min(0.25 * 2**attempt, 2.0))
    else:
        raise DetectorUnavailable(f"detector at {binding.endpoint}: {last_exc}")

    if resp.status_code != 200:
        raise DetectorProtocolError(
            f"detector returned {resp.status_code}: {resp.text[:200]}"
        )
    try:
        detections = resp.json()["detections"]
        return [
            (str(d["phrase"]), Box(*map(float, d["box"])), float(d["score"]))
            for d in detections
        ]
    except (KeyError, TypeError, ValueError) as exc:
        raise DetectorProtocolError(f"malformed detector response: {exc}") from exc


def detect(
    binding: DetectorBinding,
    image: Image.Image,
    phrases: list[str],
    t_conf: float,
    region: Box | None = None,
    raster_size: tuple[int, int] | None = None,
) -> list[Detection]:
    """Run one detector call and return (phrase, box, score) triples.

    ``region`` selects the part of ``image`` being submitted (default:
    the whole image); ``raster_size`` resizes the submitted crop (default:
    the region's own pixel size). Returned boxes are in the submitted
    raster's coordinate frame, filtered to score >= ``t_conf``.
    """
    if not phrases:
        raise ValueError("phrases must be non-empty")
    w, h = image.size
    if w == 0 or h == 0:
        raise ValueError("image is empty")
    if region is None:
        region = Box(0.0, 0.0, float(w), float(h))

    if binding.kind == "fixture":
        annotations = load_fixture_annotations(str(binding.fixture_path))
        size = raster_size if raster_size is not None else (region.width, region.height)
        return fixture_detect(annotations, region, size, phrases, t_conf)

    # HTTP: crop/resize the actual pixels before submission.
    rx0, ry0, rx1, ry1 = region.pixel_rect()
    raster = image.crop((rx0, ry0, rx1, ry1))
    if raster_size is not None and raster.size != tuple(raster_size):
        raster = raster.resize(raster_size, Image.Resampling.LANCZOS)
    detections = _http_detect(binding, raster, region, phrases, t_conf)
    return [(p, b, s) for p, b, s in detections if s >= t_conf]


def health_check(binding: DetectorBinding) -> dict:
    """GET /health of an HTTP detector; fixture bindings are always healthy."""
    if binding.kind == "fixture":
        return {"status": "ok", "model": "fixture"}
    try:
        resp = requests.get(
            binding.endpoint.rstrip("/") + "/health", timeout=binding.timeout
        )
    except requests.RequestException as exc:
        raise DetectorUnavailable(str(exc)) from exc
    if resp.status_code != 200:
        raise DetectorProtocolError(f"health returned {resp.status_code}")
    return resp.json()


def _image_bounds(image: Image.Image) -> Box:
    return Box(0.0, 0.0, float(image.size[0]), float(image.size[1]))


def _collect(
    tasks: list,
    worker,
    max_workers: int,
) -> list:
    """Run detect tasks, possibly concurrently, preserving task order."""
    if max_workers <= 1 or len(tasks) <= 1:
        return [worker(t) for t in tasks]
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(worker, tasks))


def _merge_patch_results(
    per_patch: list[tuple[PatchRect, list[Detection]]],
    bounds: Box,
    origin_for: dict[int, tuple[int, int, int] | str],
) -> list[ScoredBox]:
    """Remap to global coordinates and order deterministically.

    Caller supplies per-patch results already grouped in (scale, row-major
    patch) order; within a patch, detections sort by descending score
    (stable, so term order breaks ties).
    """
    out: list[ScoredBox] = []
    for patch_idx, (patch, detections) in enumerate(per_patch):
        ordered = sorted(detections, key=lambda d: -d[2])
        for phrase, local, score in ordered:
            global_box = to_global(local, patch)
            clipped = clip(global_box, bounds)
            if clipped is None:
                continue
            out.append(
                ScoredBox(
                    box=clipped,
                    score=score,
                    phrase=phrase,
                    origin=origin_for[patch_idx],
                )
            )
    return out


def multi_scale_detect(
    image: Image.Image,
    terms: KeyTermSet,
    config: EmphasisConfig,
    binding: DetectorBinding,
    scales: list[int] | None = None,
) -> list[ScoredBox]:
    """Detect every key term on every patch of every scale.

    Scales default to {1 if include_whole_image} + {2..s_max}. Output is
    globally remapped, clipped to image bounds, and deterministically
    ordered: ascending scale, row-major patch, descending score. An
    empty result is not an error; planning falls back downstream.
    """
    if not terms.terms:
        raise ValueError("terms must be non-empty")
    w, h = image.size
    if scales is None:
        scales = ([1] if config.include_whole_image else []) + list(
            range(2, config.s_max + 1)
        )

    patches: list[PatchRect] = []
    origin_for: dict[int, tuple[int, int, int] | str] = {}
    for s in scales:
        for patch in divide_into_patches(w, h, s):
            origin_for[len(patches)] = (
                WHOLE_IMAGE if s == 1 else (s, patch.index[0], patch.index[1])
            )
            patches.append(patch)

    # One task per (patch, term): fan out, then merge in task order so
    # completion order never changes the result.
    tasks = [(pi, term) for pi in range(len(patches)) for term in terms.terms]

    def worker(task):
        pi, term = task
        return detect(binding, image, [term], config.t_conf, region=patches[pi].box)

    results = _collect(tasks, worker, config.max_concurrent_detections)

    grouped: list[tuple[PatchRect, list[Detection]]] = [(p, []) for p in patches]
    for (pi, _), dets in zip(tasks, results):
        grouped[pi][1].extend(dets)
    return _merge_patch_results(grouped, _image_bounds(image), origin_for)


def multi_resolution_detect(
    image: Image.Image,
    terms: KeyTermSet,
    config: EmphasisConfig,
    binding: DetectorBinding,
) -> list[ScoredBox]:
    """Detect on whole-image copies resized to each configured long side,
    rescaling boxes back to original coordinates."""
    if not terms.terms:
        raise ValueError("terms must be non-empty")
    w, h = image.size
    bounds = _image_bounds(image)
    long_side = max(w, h)

    raster_sizes: list[tuple[int, int]] = []
    for res in config.resolutions:
        target = long_side if res is None else res
        f = target / long_side
        size = (max(1, round(w * f)), max(1, round(h * f)))
        if size not in raster_sizes:  # "original" may coincide with a listed size
            raster_sizes.append(size)

    tasks = [(rs, term) for rs in raster_sizes for term in terms.terms]

    def worker(task):
        rs, term = task
        return detect(
            binding, image, [term], config.t_conf, region=bounds, raster_size=rs
        )

    results = _collect(tasks, worker, config.max_concurrent_detections)

    out: list[ScoredBox] = []
    for rs in raster_sizes:
        merged: list[Detection] = []
        for (task_rs, _), dets in zip(tasks, results):
            if task_rs != rs:
                continue
            rw, rh = task_rs
            inv_x = w / rw
            inv_y = h / rh
            merged.extend(
                (p, Box(b.x0 * inv_x, b.y0 * inv_y, b.x1 * inv_x, b.y1 * inv_y), s)
                for p, b, s in dets
            )
        for phrase, box, score in sorted(merged, key=lambda d: -d[2]):
            clipped = clip(box, bounds)
            if clipped is not None:
                out.append(
                    ScoredBox(box=clipped, score=score, phrase=phrase, origin=WHOLE_IMAGE)
                )
    return out


def detect_default(
    image: Image.Image,
    terms: KeyTermSet,
    config: EmphasisConfig,
    binding: DetectorBinding,
) -> list[ScoredBox]:
    """Single whole-image pass per term, in global coordinates."""
    return multi_scale_detect(image, terms, config, binding, scales=[1])


def run_emphasis(
    image: Image.Image,
    terms: KeyTermSet,
    config: EmphasisConfig,
    binding: DetectorBinding,
) -> list[ScoredBox]:
    """Dispatch to the configured emphasis mode."""
    if config.mode == "multi_scale":
        return multi_scale_detect(image, terms, config, binding)
    if config.mode == "multi_resolution":
        return multi_resolution_detect(image, terms, config, binding)
    return detect_default(image, terms, config, binding)
