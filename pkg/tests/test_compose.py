import io

import numpy as np
import pytest
from PIL import Image

from zoomer.compose import (
    ComposeConfig,
    OVERLAY_COLOR,
    compose_spatial,
    compose_spatial_preresize,
    crop_zoom,
    global_view,
    render_overlay,
    wrap_raw,
)
from zoomer.errors import DegenerateBox, NoRegions
from zoomer.geometry import Box, ScoredBox


def random_image(rng, w, h):
    data = rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8)
    return Image.fromarray(data, "RGB")


def png_bytes(image):
    buf = io.BytesIO()
    image.save(buf, format="PNG")
    return buf.getvalue()


def non_overlapping_boxes(rng, w, h, n):
    """Random disjoint integer boxes inside a w x h image."""
    boxes = []
    attempts = 0
    while len(boxes) < n and attempts < 200:
        attempts += 1
        x0 = int(rng.integers(0, w - 4))
        y0 = int(rng.integers(0, h - 4))
        x1 = int(rng.integers(x0 + 2, min(w, x0 + w // 2) + 1))
        y1 = int(rng.integers(y0 + 2, min(h, y0 + h // 2) + 1))
        cand = Box(x0, y0, x1, y1)
        if all(
            cand.x1 <= b.x0 or b.x1 <= cand.x0 or cand.y1 <= b.y0 or b.y1 <= cand.y0
            for b in boxes
        ):
            boxes.append(cand)
    return boxes


# ---------------------------------------------------------------------------
# compose_spatial


def test_whole_image_box_is_resized_passthrough():
    rng = np.random.default_rng(0)
    image = random_image(rng, 1024, 1024)
    out = compose_spatial(image, [Box(0, 0, 1024, 1024)])
    assert out.pixels.size == (512, 512)
    assert out.shrink_factor == pytest.approx(0.5)
    assert out.kind == "spatial_composite"


def test_empty_boxes_raise_no_regions():
    image = Image.new("RGB", (100, 100))
    with pytest.raises(NoRegions):
        compose_spatial(image, [])


def test_small_box_in_huge_image_upscales():
    rng = np.random.default_rng(1)
    image = random_image(rng, 4096, 3072)
    box = Box(1000, 1000, 1048, 1048)
    pre = compose_spatial_preresize(image, [box])
    assert pre.size == (48, 48)
    assert np.array_equal(np.asarray(pre), np.asarray(image)[1000:1048, 1000:1048])
    out = compose_spatial(image, [box])
    assert out.pixels.size == (512, 512)
    assert out.shrink_factor == pytest.approx(512 / 48)


def test_preresize_pixel_fidelity():
    rng = np.random.default_rng(2)
    for _ in range(10):
        w = int(rng.integers(40, 200))
        h = int(rng.integers(40, 200))
        image = random_image(rng, w, h)
        boxes = non_overlapping_boxes(rng, w, h, int(rng.integers(1, 5)))
        cfg = ComposeConfig(crop_to_hull=False)
        pre = np.asarray(compose_spatial_preresize(image, boxes, cfg))
        src = np.asarray(image)
        mask = np.zeros((h, w), dtype=bool)
        for b in boxes:
            x0, y0, x1, y1 = b.pixel_rect()
            mask[y0:y1, x0:x1] = True
        assert np.array_equal(pre[mask], src[mask])
        assert (pre[~mask] == np.array(cfg.fill, dtype=np.uint8)).all()


def test_relative_displacement_preserved():
    rng = np.random.default_rng(3)
    image = random_image(rng, 800, 600)
    boxes = [Box(50, 50, 150, 150), Box(500, 300, 700, 500)]
    out = compose_spatial(image, boxes)
    f = out.shrink_factor
    placed = dict((tuple(src.as_tuple()), dst) for src, dst in out.placements)
    a_src, b_src = boxes
    a_dst = placed[a_src.as_tuple()]
    b_dst = placed[b_src.as_tuple()]
    before = (b_src.center[0] - a_src.center[0], b_src.center[1] - a_src.center[1])
    after = (b_dst.center[0] - a_dst.center[0], b_dst.center[1] - a_dst.center[1])
    assert abs(after[0] - before[0] * f) <= 1.0
    assert abs(after[1] - before[1] * f) <= 1.0


def test_aspect_ratio_preserved_within_rounding():
    rng = np.random.default_rng(4)
    image = random_image(rng, 999, 333)
    out = compose_spatial(image, [Box(0, 0, 999, 333)])
    w, h = out.pixels.size
    assert w == 512
    assert abs(h - 512 * 333 / 999) <= 1.0


def test_scored_boxes_accepted_and_ordered():
    rng = np.random.default_rng(5)
    image = random_image(rng, 400, 400)
    regions = [
        ScoredBox(box=Box(10, 10, 100, 100), score=0.8, phrase="a"),
        ScoredBox(box=Box(200, 200, 300, 300), score=0.95, phrase="b"),
    ]
    out = compose_spatial(image, regions)
    # highest score placed first
    assert out.placements[0][0] == Box(200, 200, 300, 300)


def test_compose_output_never_exceeds_tile_target():
    rng = np.random.default_rng(6)
    for _ in range(10):
        w = int(rng.integers(30, 400))
        h = int(rng.integers(30, 400))
        image = random_image(rng, w, h)
        boxes = non_overlapping_boxes(rng, w, h, 2)
        out = compose_spatial(image, boxes)
        assert max(out.pixels.size) <= 512


# ---------------------------------------------------------------------------
# crop_zoom


def test_crop_zoom_tile_sized_box_is_pure_crop():
    rng = np.random.default_rng(7)
    image = random_image(rng, 1000, 800)
    out = crop_zoom(image, Box(100, 100, 612, 356))
    assert out.pixels.size == (512, 256)
    assert out.shrink_factor == pytest.approx(1.0)
    assert np.array_equal(
        np.asarray(out.pixels), np.asarray(image)[100:356, 100:612]
    )


def test_crop_zoom_upscales_small_box():
    rng = np.random.default_rng(8)
    image = random_image(rng, 1000, 800)
    out = crop_zoom(image, Box(0, 0, 100, 50))
    assert out.pixels.size == (512, 256)
    assert out.shrink_factor == pytest.approx(5.12)


def test_crop_zoom_downscales_large_box():
    rng = np.random.default_rng(9)
    image = random_image(rng, 2500, 1500)
    out = crop_zoom(image, Box(0, 0, 2048, 1024))
    assert out.pixels.size == (512, 256)
    assert out.shrink_factor == pytest.approx(0.25)
    assert out.kind == "zoomed_crop"


def test_crop_zoom_degenerate_box_raises():
    image = Image.new("RGB", (100, 100))
    with pytest.raises(DegenerateBox):
        crop_zoom(image, Box(-10, -10, -0.5, -0.5))


def test_crop_zoom_whole_image_equals_global_view():
    rng = np.random.default_rng(10)
    image = random_image(rng, 1600, 1200)
    a = crop_zoom(image, Box(0, 0, 1600, 1200))
    b = global_view(image)
    assert png_bytes(a.pixels) == png_bytes(b.pixels)


# ---------------------------------------------------------------------------
# global_view


def test_global_view_hr_example():
    image = Image.new("RGB", (4240, 2832))
    out = global_view(image)
    assert out.pixels.size == (512, 342)


def test_global_view_small_image_unchanged():
    rng = np.random.default_rng(11)
    image = random_image(rng, 300, 200)
    out = global_view(image)
    assert out.pixels.size == (300, 200)
    assert out.shrink_factor == 1.0
    assert np.array_equal(np.asarray(out.pixels), np.asarray(image))


def test_global_view_square_halving():
    image = Image.new("RGB", (1024, 1024))
    assert global_view(image).pixels.size == (512, 512)


def test_wrap_raw_identity():
    rng = np.random.default_rng(12)
    image = random_image(rng, 123, 77)
    out = wrap_raw(image)
    assert out.kind == "raw"
    assert out.shrink_factor == 1.0
    assert np.array_equal(np.asarray(out.pixels), np.asarray(image))


# ---------------------------------------------------------------------------
# render_overlay


def test_overlay_zero_boxes_is_unmodified_copy(tmp_path):
    rng = np.random.default_rng(13)
    image = random_image(rng, 64, 64)
    out_path = tmp_path / "overlay.png"
    annotated = render_overlay(image, [], str(out_path))
    assert np.array_equal(np.asarray(annotated), np.asarray(image))
    assert out_path.exists()


def test_overlay_draws_four_edges(tmp_path):
    image = Image.new("RGB", (100, 100), (0, 0, 0))
    sb = ScoredBox(box=Box(20, 30, 60, 70), score=0.9, phrase="x")
    annotated = render_overlay(image, [sb], str(tmp_path / "o.png"))
    arr = np.asarray(annotated)
    color = np.array(OVERLAY_COLOR, dtype=np.uint8)
    assert (arr[30, 20:60] == color).all()       # top edge
    assert (arr[69, 20:60] == color).all()       # bottom edge
    assert (arr[30:70, 20] == color).all()       # left edge
    assert (arr[30:70, 59] == color).all()       # right edge
    # original image untouched
    assert (np.asarray(image) == 0).all()


def test_overlay_unwritable_path_raises(tmp_path):
    image = Image.new("RGB", (10, 10))
    with pytest.raises(OSError):
        render_overlay(image, [], str(tmp_path / "missing_dir" / "o.png"))
