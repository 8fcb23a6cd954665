"""Tests for distance fields and the semantic consistency cost."""

import numpy as np
import pytest

from semcal.costfield import (
    CostEvaluator,
    behind_camera_penalty,
    build_distance_field,
    build_distance_fields,
    consistency,
    pair_cost,
    point_cost,
    query_distance,
    query_distances,
    total_cost,
)
from semcal.errors import CalibrationError, EmptyClass, ZeroDenominator
from semcal.geometry import CameraIntrinsics, Extrinsics, RotationAngles, Translation
from semcal.scene import IGNORE_CLASS, FramePair, LabelImage, LabeledPointCloud


def brute_force_distance(labels: np.ndarray, class_id: int) -> np.ndarray:
    """O(W^2 H^2) reference: min L1 distance to any same-class pixel."""
    h, w = labels.shape
    rows, cols = np.nonzero(labels == class_id)
    out = np.full((h, w), np.inf)
    if rows.size == 0:
        return out
    for r in range(h):
        for c in range(w):
            out[r, c] = np.min(np.abs(rows - r) + np.abs(cols - c))
    return out


@pytest.fixture
def k():
    return CameraIntrinsics(fx=100.0, fy=100.0, cx=8.0, cy=6.0, width=16, height=12)


def test_distance_field_single_seed():
    labels = np.zeros((5, 7), dtype=int)
    labels[2, 3] = 4
    field = build_distance_field(LabelImage(labels=labels), 4)
    expected = np.fromfunction(lambda r, c: np.abs(r - 2) + np.abs(c - 3), (5, 7))
    assert np.array_equal(field.d, expected)
    assert not field.empty_class


def test_distance_field_matches_brute_force():
    rng = np.random.default_rng(11)
    for _ in range(20):
        h = int(rng.integers(1, 25))
        w = int(rng.integers(1, 25))
        n_classes = int(rng.integers(1, 5))
        labels = rng.integers(0, n_classes + 1, size=(h, w))
        img = LabelImage(labels=labels)
        for cid in range(1, n_classes + 1):
            field = build_distance_field(img, cid)
            assert np.array_equal(field.d, brute_force_distance(labels, cid))


def test_distance_field_empty_class():
    field = build_distance_field(LabelImage(labels=np.zeros((4, 4), dtype=int)), 3)
    assert field.empty_class
    assert np.isinf(field.d).all()
    with pytest.raises(EmptyClass):
        query_distance(field, (1, 1))


def test_build_distance_fields_multithreaded_equal():
    rng = np.random.default_rng(5)
    img = LabelImage(labels=rng.integers(0, 4, size=(30, 40)))
    seq = build_distance_fields(img, (1, 2, 3), threads=1)
    par = build_distance_fields(img, (1, 2, 3), threads=4)
    for cid in (1, 2, 3):
        assert np.array_equal(seq[cid].d, par[cid].d)


def test_query_distance_out_of_range_matches_brute_force():
    rng = np.random.default_rng(3)
    labels = rng.integers(0, 3, size=(10, 14))
    img = LabelImage(labels=labels)
    field = build_distance_field(img, 1)
    ref = brute_force_distance(labels, 1)
    rows, cols = np.nonzero(labels == 1)
    for _ in range(200):
        u = int(rng.integers(-30, 44))
        v = int(rng.integers(-25, 35))
        expected = np.min(np.abs(rows - v) + np.abs(cols - u))
        assert query_distance(field, (u, v)) == expected
        # in-range queries agree with the table itself
        if 0 <= u < 14 and 0 <= v < 10:
            assert query_distance(field, (u, v)) == ref[v, u]


def test_query_distances_vectorized_matches_scalar():
    rng = np.random.default_rng(9)
    img = LabelImage(labels=rng.integers(0, 3, size=(8, 8)))
    field = build_distance_field(img, 2)
    uv = rng.integers(-10, 18, size=(50, 2))
    batch = query_distances(field, uv)
    for (u, v), d in zip(uv, batch):
        assert query_distance(field, (int(u), int(v))) == d


def test_consistency_binary_and_smooth():
    assert consistency(3, 3) == 0.0
    assert consistency(3, 5) == 1.0
    # smooth mode falls off with label distance and stays in [0, 1)
    assert consistency(3, 3, epsilon=2.0) == 0.0
    near = consistency(3, 4, epsilon=2.0)
    far = consistency(3, 9, epsilon=2.0)
    assert 0.0 < near < far < 1.0


def test_behind_camera_penalty(k):
    assert behind_camera_penalty(k, 4.0) == (16 + 12) * 4.0


def make_pair(k):
    # class 1 occupies a 2x2 block around the principal point
    labels = np.zeros((12, 16), dtype=int)
    labels[5:7, 7:9] = 1
    labels[0, 0] = 2
    cloud = LabeledPointCloud(
        points=np.array([[0.0, 0.0, 1.0], [0.05, 0.0, 1.0], [0.0, 0.0, -1.0]]),
        labels=np.array([1, 1, 1]),
    )
    return FramePair(cloud=cloud, image=LabelImage(labels=labels), intrinsics=k,
                     frame_id="f0")


def test_point_cost_branches(k):
    pair = make_pair(k)
    fields = build_distance_fields(pair.image, (1, 2))
    ident = Extrinsics.identity()
    # lands on its own class: zero
    assert point_cost([0.0, 0.0, 1.0], 1, ident, k, fields) == 0.0
    # lands at u=13, 5 px right of the nearest class-1 column, times |p|^2
    cost = point_cost([0.05, 0.0, 1.0], 1, ident, k, fields)
    assert cost == pytest.approx(5 * (0.05**2 + 1.0))
    # behind camera: fixed penalty scaled by squared range
    assert point_cost([0.0, 0.0, -1.0], 1, ident, k, fields) == (16 + 12) * 1.0
    # class with no pixels anywhere: same penalty
    fields3 = build_distance_fields(pair.image, (3,))
    assert point_cost([0.0, 0.0, 1.0], 3, ident, k, fields3) == (16 + 12) * 1.0
    # ignore class is rejected outright
    with pytest.raises(CalibrationError):
        point_cost([0.0, 0.0, 1.0], IGNORE_CLASS, ident, k, fields)
    # smooth consistency needs the image
    with pytest.raises(CalibrationError):
        point_cost([0.0, 0.0, 1.0], 1, ident, k, fields, epsilon=1.0)


def test_point_cost_out_of_image(k):
    pair = make_pair(k)
    fields = build_distance_fields(pair.image, (1,))
    # projects far left of the image; cost is clamped distance times |p|^2
    p = [-1.0, 0.0, 1.0]
    cost = point_cost(p, 1, Extrinsics.identity(), k, fields)
    u = round(100 * -1.0 + 8)  # -92
    expected = query_distance(fields[1], (u, 6)) * (1.0 + 1.0)
    assert cost == expected
    assert cost > 0


def test_point_cost_range_weighting_off(k):
    pair = make_pair(k)
    fields = build_distance_fields(pair.image, (1,))
    cost = point_cost([0.05, 0.0, 1.0], 1, Extrinsics.identity(), k, fields,
                      range_weighting=False)
    assert cost == pytest.approx(5.0)


def test_pair_cost_normalizes_by_class_count(k):
    pair = make_pair(k)
    # two class-1 points in front, one behind; denominator counts all three
    breakdown = pair_cost(pair, Extrinsics.identity(), (1,))
    per_point = [0.0, 5 * (0.05**2 + 1.0), (16 + 12) * 1.0]
    assert breakdown.denominator == 3
    assert breakdown.numerator == pytest.approx(sum(per_point))


def test_pair_cost_zero_denominator(k):
    labels = np.zeros((12, 16), dtype=int)
    labels[0, 0] = 2
    pair = FramePair(
        cloud=LabeledPointCloud(points=np.array([[0.0, 0.0, 1.0]]), labels=np.array([1])),
        image=LabelImage(labels=labels), intrinsics=k, frame_id="f0",
    )
    with pytest.raises(ZeroDenominator):
        pair_cost(pair, Extrinsics.identity(), (2,))


def test_class_list_validation(k):
    pair = make_pair(k)
    with pytest.raises(CalibrationError):
        total_cost([pair], Extrinsics.identity(), ())
    with pytest.raises(CalibrationError):
        total_cost([pair], Extrinsics.identity(), (1, IGNORE_CLASS))
    # duplicates are tolerated by de-duplication, not an error
    a = total_cost([pair], Extrinsics.identity(), (1, 1))
    b = total_cost([pair], Extrinsics.identity(), (1,))
    assert a.total == b.total


def test_total_cost_matches_evaluator(k):
    pair = make_pair(k)
    ext = Extrinsics(RotationAngles(0.01, -0.02, 0.005), Translation(0.01, 0.0, -0.02))
    one_shot = total_cost([pair], ext, (1,))
    evaluator = CostEvaluator([pair], (1,))
    assert evaluator.evaluate_total(ext) == one_shot.total
    breakdown = evaluator.evaluate(ext)
    assert breakdown.total == one_shot.total
    assert breakdown.denominator == 3
    assert set(breakdown.per_pair) == {"f0"}


def test_evaluator_deterministic_bits(k):
    rng = np.random.default_rng(2)
    labels = rng.integers(0, 4, size=(12, 16))
    cloud = LabeledPointCloud(points=rng.normal(size=(60, 3)) + [0, 0, 3],
                              labels=rng.integers(1, 4, size=60))
    pair = FramePair(cloud=cloud, image=LabelImage(labels=labels), intrinsics=k,
                     frame_id="f0")
    ext = Extrinsics(RotationAngles(0.1, 0.02, -0.03), Translation(0.05, -0.01, 0.0))
    a = CostEvaluator([pair], (1, 2, 3)).evaluate_total(ext)
    b = CostEvaluator([pair], (1, 2, 3)).evaluate_total(ext)
    assert a == b
    # threaded field construction changes nothing
    c = CostEvaluator([pair], (1, 2, 3), threads=4).evaluate_total(ext)
    assert a == c


def test_evaluator_zero_denominator_at_construction(k):
    labels = np.zeros((12, 16), dtype=int)
    labels[3, 3] = 1
    pair = FramePair(
        cloud=LabeledPointCloud(points=np.array([[0.0, 0.0, 2.0]]), labels=np.array([2])),
        image=LabelImage(labels=labels), intrinsics=k, frame_id="f0",
    )
    with pytest.raises(ZeroDenominator):
        CostEvaluator([pair], (1,))


def test_evaluator_breakdown_counts(k):
    pair = make_pair(k)
    breakdown = CostEvaluator([pair], (1,)).evaluate(Extrinsics.identity())
    assert breakdown.n_consistent == 1
    assert breakdown.n_inconsistent == 1
    assert breakdown.n_behind_camera == 1
    assert breakdown.per_pair["f0"].denominator == 3
