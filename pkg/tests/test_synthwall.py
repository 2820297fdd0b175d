import json

import numpy as np
import pytest
import shapely.geometry as sg
from hypothesis import given, settings
from hypothesis import strategies as st

from crackmeter.annotations import ClassLabel, PolygonMask
from crackmeter.errors import OutOfBounds
from crackmeter.hough import HoughConfig
from crackmeter.measure import measure_cracks
from crackmeter.rectify import rectify_image
from crackmeter.synthwall import (
    CrackSpec,
    WallSpec,
    brick_rects,
    expected_brick_count,
    generate,
    max_chord_width,
    oracle_check,
    random_distortion,
    random_scene,
    random_step_crack,
    save_outputs,
    scene_fraction,
    thicken_polyline,
)


def test_plain_wall_counts():
    gt, pred, truth = generate(WallSpec(rows=5, cols=8, ends="toothed"))
    assert len(gt.of_label(ClassLabel.BRICK)) == 40 and gt.of_label(ClassLabel.CRACK) == []
    assert truth.crack_total_width_mm is None
    gt, _, _ = generate(WallSpec(rows=5, cols=8))
    assert len(gt.of_label(ClassLabel.BRICK)) == expected_brick_count(5, 8) == 38


@given(st.integers(1, 15), st.integers(2, 9), st.sampled_from(["flush", "toothed"]))
def test_brick_count_formula(rows, cols, ends):
    spec = WallSpec(rows=rows, cols=cols, ends=ends)
    rects = brick_rects(spec)
    assert len(rects) == expected_brick_count(rows, cols, ends)
    wall_w, wall_h = spec.wall_size_mm
    assert all(0 <= x1 < x2 <= wall_w + 1e-9 and 0 <= y1 < y2 <= wall_h + 1e-9 for x1, y1, x2, y2 in rects)


def test_step_crack_bbox_is_polyline_extent_plus_opening():
    verts = ((300.0, 100.0), (400.0, 100.0), (400.0, 170.0), (500.0, 170.0), (500.0, 240.0), (600.0, 240.0))
    spec = WallSpec(rows=8, cols=5, crack=CrackSpec(verts, 10.0), noise=0.0)
    mask = thicken_polyline(verts, 10.0)
    x1, y1, x2, y2 = mask.bbox()
    assert (x2 - x1, y2 - y1) == pytest.approx((300.0, 140.0 + 10.0))
    _, _, truth = generate(spec)
    assert truth.crack_total_height_mm == pytest.approx(150.0)
    assert truth.crack_total_width_mm == pytest.approx(300.0)
    # widest horizontal chord of a stair with flat caps is the run plus the opening
    assert truth.crack_max_transverse_width_mm == pytest.approx(110.0, rel=1e-6)


def test_thickened_polyline_is_minkowski_like():
    verts = ((0.0, 0.0), (40.0, 0.0), (40.0, 30.0), (90.0, 30.0))
    mask = thicken_polyline(verts, 6.0)
    ref = sg.LineString(verts).buffer(3.0, cap_style=2, join_style=2)
    assert sg.Polygon(mask.vertices).symmetric_difference(ref).area < 1e-6


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 50), st.floats(0, 50)), min_size=3, max_size=8))
def test_chord_width_matches_sampling(pts):
    hull = sg.MultiPoint(pts).convex_hull
    if hull.geom_type != "Polygon" or hull.area < 1:
        return
    mask = PolygonMask(tuple(hull.exterior.coords[:-1]))
    x1, y1, x2, y2 = hull.bounds
    sampled = max(
        (hull.intersection(sg.LineString([(x1 - 1, y), (x2 + 1, y)])).length for y in np.linspace(y1, y2, 2001)),
    )
    assert max_chord_width(mask) >= sampled - 1e-6 * max(1.0, x2 - x1, y2 - y1)
    assert max_chord_width(mask) <= sampled + (x2 - x1) * 2e-3 + 1e-9


def test_broken_bricks_touch_the_crack():
    spec = random_scene(3)
    gt, _, _ = generate(spec)
    crack = sg.Polygon(gt.of_label(ClassLabel.CRACK)[0].mask.vertices)
    broken = gt.of_label(ClassLabel.BROKEN_BRICK)
    assert broken
    assert all(sg.Polygon(b.mask.vertices).intersects(crack) for b in broken)


def test_same_seed_is_bit_identical(tmp_path):
    spec = random_scene(12)
    paths = []
    for run in range(2):
        out = [tmp_path / f"{run}_{n}.json" for n in ("gt", "pred", "truth")]
        save_outputs(*generate(spec), *out)
        paths.append(out)
    for a, b in zip(*paths):
        assert a.read_bytes() == b.read_bytes()
    assert generate(spec)[0] == generate(spec)[0]
    assert json.loads(paths[0][2].read_text())["crack"] is not None


def test_spec_round_trip():
    doc = json.loads(json.dumps(random_scene(7).to_dict()))
    assert WallSpec.from_dict(doc).to_dict() == doc
    with pytest.raises(ValueError):
        WallSpec.from_dict({"rows": 3, "colour": "red"})
    with pytest.raises(ValueError):
        WallSpec(bond="flemish")


def test_crack_outside_wall():
    with pytest.raises(OutOfBounds):
        generate(WallSpec(rows=3, cols=3, crack=CrackSpec(((-50.0, 10.0), (100.0, 10.0)), 5.0)))


@given(st.integers(0, 2**31), st.floats(0.01, 0.3))
def test_distortion_radius(seed, fraction):
    rng = np.random.default_rng(seed)
    g = random_distortion(600, 400, fraction, rng)
    corners = np.array([(0, 0), (600, 0), (600, 400), (0, 400)], dtype=float)
    moved = g.apply_many(corners)
    assert np.hypot(*(moved - corners).T).max() <= fraction * 400 + 1e-6


def test_step_crack_stays_inside():
    for seed in range(30):
        spec = WallSpec(rows=10, cols=5)
        crack = random_step_crack(spec, np.random.default_rng(seed))
        x1, y1, x2, y2 = thicken_polyline(crack.vertices, crack.opening_mm).bbox()
        w, h = spec.wall_size_mm
        assert 0 < x1 and x2 < w and 0 < y1 and y2 < h
        assert 4 <= crack.opening_mm <= 15


def test_identity_wall_oracle():
    spec = WallSpec(rows=10, cols=5, seed=8)
    spec = WallSpec(rows=10, cols=5, seed=8, crack=random_step_crack(spec, np.random.default_rng(8)))
    gt, _, truth = generate(spec)
    r = rectify_image(gt)
    res = oracle_check(truth, measure_cracks(r.warped, r.scale), r.scale, tolerance=0.05, scale_tolerance=0.02)
    assert res.passed, res.deltas


@pytest.mark.parametrize("index", [4, 20, 24])
def test_moderate_perspective_oracle(index):
    assert scene_fraction(index) <= 0.15
    gt, _, truth = generate(random_scene(index))
    r = rectify_image(gt, HoughConfig(threshold_fraction=0.15))
    res = oracle_check(truth, measure_cracks(r.warped, r.scale), tolerance=0.05)
    assert res.passed, res.deltas


@pytest.mark.parametrize("index", [30, 45, 49])
def test_strong_perspective_oracle(index):
    assert scene_fraction(index) <= 0.30
    gt, _, truth = generate(random_scene(index))
    r = rectify_image(gt, HoughConfig(threshold_fraction=0.15))
    assert oracle_check(truth, measure_cracks(r.warped, r.scale), tolerance=0.10).passed
