import json
import random

import pytest
from PIL import Image

from zoomer.emphasizer import (
    DetectorBinding,
    EmphasisConfig,
    detect,
    detect_default,
    divide_into_patches,
    encode_detections,
    fixture_detect,
    load_fixture_annotations,
    multi_resolution_detect,
    multi_scale_detect,
)
from zoomer.errors import ImageTooSmall
from zoomer.geometry import WHOLE_IMAGE, Box, iou
from zoomer.keyterms import KeyTermSet


def write_fixture(tmp_path, records, name="fixture.jsonl"):
    path = tmp_path / name
    path.write_text(
        "".join(
            json.dumps({"phrase": p, "box": list(box), "score": s}) + "\n"
            for p, box, s in records
        ),
        "utf-8",
    )
    return str(path)


def blank_image(w=1024, h=768):
    return Image.new("RGB", (w, h), (128, 128, 128))


TERMS = KeyTermSet(terms=("cat",), source_span="full")


# ---------------------------------------------------------------------------
# divide_into_patches


def test_single_patch_is_whole_image():
    patches = divide_into_patches(1024, 768, 1)
    assert len(patches) == 1
    assert patches[0].box == Box(0, 0, 1024, 768)
    assert patches[0].index == (0, 0)


def test_even_division_two_by_two():
    patches = divide_into_patches(1024, 768, 2)
    assert len(patches) == 4
    assert all(p.box.width == 512 and p.box.height == 384 for p in patches)


def test_remainder_goes_to_last_patch():
    patches = divide_into_patches(1000, 1000, 3)
    xs = sorted({p.box.x0 for p in patches})
    assert xs == [0, 333, 666]
    widths = sorted({p.box.width for p in patches})
    assert widths == [333, 334]
    last = [p for p in patches if p.index == (2, 2)][0]
    assert last.box.width == 334 and last.box.height == 334


def test_patches_tile_exactly():
    rng = random.Random(3)
    for _ in range(20):
        w, h = rng.randint(10, 500), rng.randint(10, 500)
        s = rng.randint(1, 5)
        patches = divide_into_patches(w, h, s)
        assert len(patches) == s * s
        assert sum(p.box.area for p in patches) == pytest.approx(w * h)
        for i, a in enumerate(patches):
            for b in patches[i + 1:]:
                assert iou(a.box, b.box) == 0.0


def test_image_smaller_than_grid_raises():
    with pytest.raises(ImageTooSmall):
        divide_into_patches(2, 100, 3)


# ---------------------------------------------------------------------------
# fixture detect semantics


def test_fixture_no_annotations_gives_nothing(tmp_path):
    binding = DetectorBinding.fixture(write_fixture(tmp_path, []))
    assert detect(binding, blank_image(), ["cat"], 0.8) == []


def test_fixture_full_visibility_keeps_base_score(tmp_path):
    binding = DetectorBinding.fixture(
        write_fixture(tmp_path, [("cat", (100, 100, 200, 180), 0.9)])
    )
    result = detect(binding, blank_image(), ["cat"], 0.8)
    assert len(result) == 1
    phrase, box, score = result[0]
    assert phrase == "cat"
    assert box == Box(100, 100, 200, 180)
    assert score == pytest.approx(0.9)


def test_fixture_half_visible_is_filtered_at_threshold(tmp_path):
    path = write_fixture(tmp_path, [("cat", (0, 0, 100, 100), 0.9)])
    binding = DetectorBinding.fixture(path)
    region = Box(50, 0, 500, 500)  # right half of the annotation visible
    result = detect(binding, blank_image(), ["cat"], 0.8, region=region)
    assert result == []
    result = detect(binding, blank_image(), ["cat"], 0.4, region=region)
    assert len(result) == 1
    _, box, score = result[0]
    assert score == pytest.approx(0.45)
    assert box == Box(0, 0, 50, 100)  # clipped, in region-local coordinates


def test_fixture_phrase_filtering(tmp_path):
    binding = DetectorBinding.fixture(
        write_fixture(tmp_path, [("cat", (0, 0, 10, 10), 0.9), ("dog", (20, 20, 40, 40), 0.9)])
    )
    result = detect(binding, blank_image(), ["dog"], 0.8)
    assert [r[0] for r in result] == ["dog"]


def test_fixture_binding_requires_parseable_file(tmp_path):
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"phrase": "x"}\n', "utf-8")
    with pytest.raises(ValueError):
        DetectorBinding.fixture(str(bad))
    with pytest.raises(FileNotFoundError):
        DetectorBinding.fixture(str(tmp_path / "missing.jsonl"))


def test_encode_detections_is_canonical():
    body = encode_detections([("cat", Box(1, 2, 3, 4), 0.5)])
    assert body == b'{"detections":[{"phrase":"cat","box":[1.0,2.0,3.0,4.0],"score":0.5}]}'


# ---------------------------------------------------------------------------
# multi_scale_detect


def test_multi_scale_empty_detector(tmp_path):
    binding = DetectorBinding.fixture(write_fixture(tmp_path, []))
    assert multi_scale_detect(blank_image(), TERMS, EmphasisConfig(), binding) == []


def test_multi_scale_finds_annotation_in_patch(tmp_path):
    # annotation fully inside the (0, 0) patch at s=2 on a 1024x768 image
    ann = (100.0, 100.0, 300.0, 250.0)
    binding = DetectorBinding.fixture(write_fixture(tmp_path, [("cat", ann, 0.9)]))
    out = multi_scale_detect(blank_image(), TERMS, EmphasisConfig(), binding)

    from_patch = [sb for sb in out if sb.origin == (2, 0, 0)]
    assert len(from_patch) == 1
    assert iou(from_patch[0].box, Box(*ann)) >= 0.999
    assert from_patch[0].score == pytest.approx(0.9)

    whole = [sb for sb in out if sb.origin == WHOLE_IMAGE]
    assert len(whole) == 1
    assert iou(whole[0].box, Box(*ann)) >= 0.999


def test_multi_scale_seam_straddler_recovered_by_whole_pass(tmp_path):
    # straddles the s=2 vertical seam of a 1024x768 image (seam at x=512)
    ann = (412.0, 100.0, 612.0, 200.0)
    binding = DetectorBinding.fixture(write_fixture(tmp_path, [("cat", ann, 0.95)]))

    cfg = EmphasisConfig(s_max=2)
    out = multi_scale_detect(blank_image(), TERMS, cfg, binding)
    assert [sb.origin for sb in out] == [WHOLE_IMAGE]
    assert out[0].score == pytest.approx(0.95)

    literal = EmphasisConfig(s_max=2, include_whole_image=False)
    assert multi_scale_detect(blank_image(), TERMS, literal, binding) == []


def test_multi_scale_orders_by_scale_then_patch_then_score(tmp_path):
    records = [
        ("cat", (50.0, 50.0, 120.0, 120.0), 0.85),      # in patch (0,0) at s=2 and s=3
        ("cat", (700.0, 500.0, 760.0, 560.0), 0.95),    # in patch (1,1) at s=2
    ]
    binding = DetectorBinding.fixture(write_fixture(tmp_path, records))
    out = multi_scale_detect(blank_image(), TERMS, EmphasisConfig(), binding)
    origins = [sb.origin for sb in out]
    assert origins == sorted(
        origins, key=lambda o: (1, 0, 0) if o == WHOLE_IMAGE else (o[0] + 1, o[1], o[2])
    )
    whole = [sb for sb in out if sb.origin == WHOLE_IMAGE]
    assert [sb.score for sb in whole] == sorted((0.85, 0.95), reverse=True)


def test_multi_scale_deterministic_across_runs_and_concurrency(tmp_path):
    rng = random.Random(12)
    records = []
    for _ in range(10):
        x0, y0 = rng.uniform(0, 900), rng.uniform(0, 650)
        records.append(
            ("cat", (x0, y0, x0 + rng.uniform(5, 100), y0 + rng.uniform(5, 100)), rng.uniform(0.8, 1.0))
        )
    binding = DetectorBinding.fixture(write_fixture(tmp_path, records))
    serial = EmphasisConfig(max_concurrent_detections=1)
    threaded = EmphasisConfig(max_concurrent_detections=4)
    a = multi_scale_detect(blank_image(), TERMS, serial, binding)
    b = multi_scale_detect(blank_image(), TERMS, threaded, binding)
    c = multi_scale_detect(blank_image(), TERMS, threaded, binding)
    assert a == b == c


def test_every_output_within_bounds_and_above_threshold(tmp_path):
    rng = random.Random(13)
    records = []
    for _ in range(20):
        x0, y0 = rng.uniform(0, 1000), rng.uniform(0, 700)
        records.append(
            ("cat", (x0, y0, x0 + rng.uniform(2, 200), y0 + rng.uniform(2, 200)), rng.uniform(0.5, 1.0))
        )
    # annotations may exceed image bounds; clip them to stay valid fixtures
    clipped = []
    for p, (x0, y0, x1, y1), s in records:
        clipped.append((p, (x0, y0, min(x1, 1024.0), min(y1, 768.0)), s))
    binding = DetectorBinding.fixture(write_fixture(tmp_path, clipped))
    cfg = EmphasisConfig()
    bounds = Box(0, 0, 1024, 768)
    for sb in multi_scale_detect(blank_image(), TERMS, cfg, binding):
        assert sb.score >= cfg.t_conf
        assert bounds.contains(sb.box)


# ---------------------------------------------------------------------------
# multi_resolution_detect / detect_default


def test_multi_resolution_identity_resolution_matches_plain_detect(tmp_path):
    ann = (100.0, 50.0, 300.0, 200.0)
    binding = DetectorBinding.fixture(write_fixture(tmp_path, [("cat", ann, 0.9)]))
    cfg = EmphasisConfig(resolutions=(None,))
    out = multi_resolution_detect(blank_image(), TERMS, cfg, binding)
    assert len(out) == 1
    assert out[0].box == Box(*ann)
    assert out[0].origin == WHOLE_IMAGE


def test_multi_resolution_rescales_boxes_back(tmp_path):
    ann = (0.0, 0.0, 100.0, 100.0)
    binding = DetectorBinding.fixture(write_fixture(tmp_path, [("cat", ann, 0.9)]))
    cfg = EmphasisConfig(resolutions=(512,))  # half of the 1024-wide image
    out = multi_resolution_detect(blank_image(), TERMS, cfg, binding)
    assert len(out) == 1
    assert out[0].box.as_tuple() == pytest.approx((0, 0, 100, 100))


def test_multi_resolution_empty(tmp_path):
    binding = DetectorBinding.fixture(write_fixture(tmp_path, []))
    assert multi_resolution_detect(blank_image(), TERMS, EmphasisConfig(), binding) == []


def test_default_equals_multi_scale_at_scale_one(tmp_path):
    records = [("cat", (10.0, 10.0, 60.0, 60.0), 0.9), ("cat", (500.0, 400.0, 700.0, 600.0), 0.85)]
    binding = DetectorBinding.fixture(write_fixture(tmp_path, records))
    cfg = EmphasisConfig()
    default = detect_default(blank_image(), TERMS, cfg, binding)
    scale_one = multi_scale_detect(blank_image(), TERMS, cfg, binding, scales=[1])
    assert default == scale_one
    assert all(sb.origin == WHOLE_IMAGE for sb in default)


def test_fixture_detect_visibility_scaling_direct():
    from zoomer.emphasizer import FixtureAnnotation

    anns = (FixtureAnnotation(phrase="cat", box=Box(0, 0, 10, 10), base_score=0.8),)
    # quarter visible
    out = fixture_detect(anns, Box(5, 5, 20, 20), (15.0, 15.0), ["cat"], 0.1)
    assert len(out) == 1
    _, box, score = out[0]
    assert score == pytest.approx(0.2)
    assert box == Box(0, 0, 5, 5)


def test_load_fixture_annotations_caches(tmp_path):
    path = write_fixture(tmp_path, [("cat", (0, 0, 10, 10), 0.9)])
    assert load_fixture_annotations(path) is load_fixture_annotations(path)
