import numpy as np
import pytest

from flattenquant.core.errors import InvalidParameterError, PlanMismatchError, ShapeMismatchError
from flattenquant.quant.calibration import build_truncation_policy, row_maxes
from flattenquant.quant.flatten import (
    FlattenPlan,
    build_flatten_plan,
    flatten_activation,
    flatten_pair,
    flatten_rows,
    flatten_tensor,
    repeat_channels,
    saturation_count,
)
from tests.conftest import outlier_activations


def test_single_channel_plan():
    plan = build_flatten_plan(np.array([7.0]), 2.0)
    np.testing.assert_array_equal(plan.extensions, [3])
    assert plan.c_extend == 3
    assert plan.slot_of(0) == [0, 1, 2, 3]
    assert plan.width == 4
    assert plan.padded_width == 32
    assert plan.capacity[0] == pytest.approx(8.0)


def test_maxima_below_threshold_need_no_extensions():
    plan = build_flatten_plan(np.array([1.0, 1.0, 1.0]), 2.0)
    assert plan.c_extend == 0
    assert plan.padded_width == 32
    assert plan.flatten_ratio == 0.0


def test_wide_layer_padding():
    maxes = np.concatenate([np.full(1024, 1.5), np.full(3072, 0.5)])
    plan = build_flatten_plan(maxes, 1.0)
    assert plan.c_extend == 1024
    assert plan.padded_width == 5120
    assert plan.flatten_ratio == pytest.approx(0.25)


def test_slot_groups_are_contiguous_and_disjoint():
    plan = build_flatten_plan(np.array([5.0, 0.5, 3.0]), 1.0)
    assert plan.slot_of(0) == [0, 3, 4, 5, 6, 7]
    assert plan.slot_of(1) == [1]
    assert plan.slot_of(2) == [2, 8, 9, 10]
    np.testing.assert_array_equal(plan.source_channel, [0, 1, 2, 0, 0, 0, 0, 0, 2, 2, 2])


def test_positive_value_splits_into_threshold_pieces():
    plan = build_flatten_plan(np.array([7.0]), 2.0)
    out = flatten_tensor(np.array([[7.0]]), plan)
    np.testing.assert_array_equal(out[0, :4], [2.0, 2.0, 2.0, 1.0])
    assert not np.any(out[0, 4:])


def test_negative_value_keeps_its_sign():
    plan = build_flatten_plan(np.array([7.0]), 2.0)
    out = flatten_tensor(np.array([[-5.0]]), plan)
    np.testing.assert_array_equal(out[0, :4], [-2.0, -2.0, -1.0, 0.0])


def test_exact_multiple_leaves_a_zero_remainder():
    plan = build_flatten_plan(np.array([6.0]), 2.0)
    out = flatten_tensor(np.array([[6.0]]), plan)
    np.testing.assert_array_equal(out[0, :4], [2.0, 2.0, 2.0, 0.0])


def test_identity_plan_only_pads(rng):
    x = rng.standard_normal((4, 10))
    out = flatten_tensor(x, FlattenPlan.identity(10, 10.0))
    np.testing.assert_array_equal(out[:, :10], x)
    assert out.shape == (4, 32)
    assert not np.any(out[:, 10:])


def test_slot_groups_conserve_each_value(rng):
    x = outlier_activations(rng, 16, 40)
    maxes = np.max(np.abs(x), axis=0)
    plan = build_flatten_plan(maxes, build_truncation_policy(maxes, 1.3).threshold)
    out = flatten_tensor(x, plan)
    for j in range(40):
        np.testing.assert_allclose(out[:, plan.slot_of(j)].sum(axis=1), x[:, j], rtol=0, atol=1e-12 * maxes[j])


def test_flattened_values_stay_within_threshold(rng):
    x = outlier_activations(rng, 32, 64)
    maxes = np.max(np.abs(x), axis=0)
    plan = build_flatten_plan(maxes, 1.5)
    assert np.max(np.abs(flatten_tensor(x, plan))) <= plan.threshold


def test_extension_count_falls_as_threshold_rises(rng):
    maxes = np.max(np.abs(outlier_activations(rng, 32, 64)), axis=0)
    counts = [build_flatten_plan(maxes, t).c_extend for t in (0.5, 1.0, 2.0, 4.0, 8.0)]
    assert counts == sorted(counts, reverse=True)


def test_repeat_channels_copies_rows():
    plan = build_flatten_plan(np.array([7.0]), 2.0)
    out = repeat_channels(np.array([[5.0]]), plan)
    assert out.shape == (32, 1)
    np.testing.assert_array_equal(out[:4, 0], [5.0, 5.0, 5.0, 5.0])
    assert not np.any(out[4:])


def test_flatten_pair_example():
    pair = flatten_pair(np.array([[6.0]]), np.array([[6.0]]), 2.0, 3.0)
    np.testing.assert_array_equal(pair.plan_x.extensions, [3])
    np.testing.assert_array_equal(pair.plan_w.extensions[:4], [2, 2, 2, 2])
    assert np.max(np.abs(pair.x)) <= 2.0
    assert np.max(np.abs(pair.w)) <= 3.0
    np.testing.assert_allclose(pair.x @ pair.w, [[36.0]])


def test_flatten_pair_preserves_the_product(rng):
    for _ in range(20):
        x = outlier_activations(rng, 24, 48)
        w = rng.standard_normal((48, 16))
        t_x = build_truncation_policy(np.max(np.abs(x), axis=0), 1.3).threshold
        t_w = build_truncation_policy(row_maxes(w), 1.3).threshold
        pair = flatten_pair(x, w, t_x, t_w)
        reference = x @ w
        assert np.max(np.abs(pair.x @ pair.w - reference)) <= 1e-9 * max(1.0, np.max(np.abs(reference)))
        assert pair.x.shape[1] == pair.w.shape[0] == pair.plan_w.padded_width
        assert pair.x.shape[1] % 32 == 0


def test_high_thresholds_leave_the_pair_unchanged(rng):
    x = rng.standard_normal((4, 6))
    w = rng.standard_normal((6, 3))
    pair = flatten_pair(x, w, 100.0, 100.0)
    np.testing.assert_array_equal(pair.x[:, :6], x)
    np.testing.assert_array_equal(pair.w[:6], w)
    assert pair.plan_x.c_extend == 0
    assert pair.plan_w.c_extend == 0


def test_value_beyond_capacity_is_a_plan_mismatch():
    plan = build_flatten_plan(np.array([7.0]), 2.0)
    with pytest.raises(PlanMismatchError):
        flatten_tensor(np.array([[9.0]]), plan)


def test_saturation_clamps_to_capacity():
    plan = build_flatten_plan(np.array([7.0]), 2.0)
    x = np.array([[9.0], [-20.0], [3.0]])
    assert saturation_count(x, plan) == 2
    out = flatten_tensor(x, plan, saturate=True)
    np.testing.assert_array_equal(out[:, :4].sum(axis=1), [8.0, -8.0, 3.0])


def test_activation_path_reports_saturation():
    plan_x = build_flatten_plan(np.array([7.0]), 2.0)
    plan_w = FlattenPlan.identity(plan_x.padded_width, 1.0)
    out, events = flatten_activation(np.array([[9.0]]), plan_x, plan_w)
    assert events == 1
    assert out.shape == (1, 32)


def test_flatten_rows_splits_weight_rows():
    plan = build_flatten_plan(np.array([6.0]), 3.0)
    out = flatten_rows(np.array([[6.0, -4.5]]), plan)
    np.testing.assert_array_equal(out[:3], [[3.0, -3.0], [3.0, -1.5], [0.0, 0.0]])


def test_invalid_plans_are_rejected():
    with pytest.raises(InvalidParameterError):
        build_flatten_plan(np.array([1.0]), 0.0)
    with pytest.raises(InvalidParameterError):
        build_flatten_plan(np.array([1.0]), 1.0, block=0)
    with pytest.raises(ShapeMismatchError):
        flatten_tensor(np.ones((2, 3)), build_flatten_plan(np.ones(2), 1.0))
