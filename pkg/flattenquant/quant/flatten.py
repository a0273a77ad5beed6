"""
Channel flattening

A channel whose maximum reaches the truncation threshold T gets E_j = floor(max_j / T)
extension slots. Every element of that channel is split sign-preservingly into
[T, ..., T, |x| mod T, 0, ...] across its slot group, and the partner tensor
repeats the channel once per slot, so the matrix product is unchanged.
Widths are padded with zero channels to a multiple of the block size.
"""

from dataclasses import dataclass
from functools import cached_property
from typing import List, Tuple

import numpy as np
import numpy.typing as npt

from flattenquant.core.errors import InvalidParameterError, PlanMismatchError, ShapeMismatchError
from flattenquant.quant.calibration import Vector, row_maxes
from flattenquant.quant.tensor_io import Matrix

DEFAULT_BLOCK = 32

# relative slack before a value above channel capacity counts as a plan mismatch
CAPACITY_RTOL = 1e-12


@dataclass(frozen=True)
class FlattenPlan:
    threshold: float
    extensions: npt.NDArray[np.int64]
    block: int = DEFAULT_BLOCK

    @property
    def channels(self) -> int:
        return int(self.extensions.shape[0])

    @cached_property
    def c_extend(self) -> int:
        return int(self.extensions.sum())

    @property
    def width(self) -> int:
        """Original plus extension slots, before padding"""
        return self.channels + self.c_extend

    @property
    def padded_width(self) -> int:
        return -(-self.width // self.block) * self.block

    @property
    def flatten_ratio(self) -> float:
        return self.c_extend / self.channels

    @cached_property
    def offsets(self) -> npt.NDArray[np.int64]:
        """Index of channel j's first extension slot"""
        exclusive = np.concatenate(([0], np.cumsum(self.extensions)[:-1])).astype(np.int64)
        return self.channels + exclusive

    @cached_property
    def capacity(self) -> Vector:
        """Largest magnitude each channel's slot group can hold"""
        return (self.extensions + 1).astype(np.float64) * self.threshold

    @cached_property
    def source_channel(self) -> npt.NDArray[np.int64]:
        """Original channel feeding each of the first `width` slots"""
        return np.concatenate((np.arange(self.channels), np.repeat(np.arange(self.channels), self.extensions)))

    def slot_of(self, channel: int) -> List[int]:
        start = int(self.offsets[channel])
        return [channel] + list(range(start, start + int(self.extensions[channel])))

    @classmethod
    def identity(cls, channels: int, threshold: float, block: int = DEFAULT_BLOCK) -> "FlattenPlan":
        """No extensions; channel capacity is the threshold itself"""
        return cls(threshold=float(threshold), extensions=_frozen_ints(np.zeros(channels)), block=block)


@dataclass(frozen=True)
class FlattenedPair:
    x: Matrix
    w: Matrix
    plan_x: FlattenPlan
    plan_w: FlattenPlan


def _frozen_ints(values: np.ndarray) -> npt.NDArray[np.int64]:
    arr = np.array(values, dtype=np.int64)
    arr.setflags(write=False)
    return arr


def _frozen(arr: np.ndarray) -> Matrix:
    arr.setflags(write=False)
    return arr


def build_flatten_plan(channel_maxes: Vector, threshold: float, block: int = DEFAULT_BLOCK) -> FlattenPlan:
    """
    E_j = floor(max_j / T) for each channel

    Raises:
        InvalidParameterError: If T <= 0, block < 1 or a maximum is negative
    """
    if not (np.isfinite(threshold) and threshold > 0):
        raise InvalidParameterError("truncation threshold must be positive", {"threshold": threshold})
    if block < 1:
        raise InvalidParameterError("block must be at least 1", {"block": block})
    maxes = np.asarray(channel_maxes, dtype=np.float64)
    if maxes.ndim != 1 or maxes.size == 0:
        raise InvalidParameterError("channel maxima must be a non-empty vector")
    if np.any(maxes < 0):
        raise InvalidParameterError("channel maxima must be non-negative")
    extensions = np.floor(maxes / threshold)
    return FlattenPlan(threshold=float(threshold), extensions=_frozen_ints(extensions), block=block)


def _split_magnitude(magnitude: np.ndarray, threshold: float) -> Tuple[np.ndarray, np.ndarray]:
    """Whole pieces n and remainder r with n*T + r = |x| and 0 <= r < T"""
    n = np.floor(magnitude / threshold)
    r = magnitude - n * threshold
    low = r < 0
    n = np.where(low, n - 1, n)
    r = np.where(low, r + threshold, r)
    high = r >= threshold
    n = np.where(high, n + 1, n)
    r = np.where(high, r - threshold, r)
    return n.astype(np.int64), np.clip(r, 0.0, threshold)


def saturation_count(x: Matrix, plan: FlattenPlan) -> int:
    """Elements whose magnitude exceeds their channel's capacity"""
    _check_columns(x, plan)
    limit = plan.capacity * (1.0 + CAPACITY_RTOL)
    return int(np.count_nonzero(np.abs(x) > limit[np.newaxis, :]))


def _check_columns(x: Matrix, plan: FlattenPlan) -> None:
    if x.ndim != 2 or x.shape[1] != plan.channels:
        raise ShapeMismatchError(
            "tensor width does not match flatten plan",
            {"shape": list(x.shape), "plan_channels": plan.channels},
        )


def flatten_tensor(x: Matrix, plan: FlattenPlan, saturate: bool = False) -> Matrix:
    """
    Split every element along the reduction (column) axis into its slot group

    Args:
        x: Tensor with plan.channels columns
        plan: Flatten plan for those columns
        saturate: Clamp values above channel capacity instead of failing

    Returns:
        Matrix: rows x plan.padded_width

    Raises:
        ShapeMismatchError: If the column count differs from the plan
        PlanMismatchError: If a value exceeds capacity and saturate is False
    """
    _check_columns(x, plan)
    threshold = plan.threshold
    extensions = plan.extensions
    magnitude = np.abs(x)
    sign = np.sign(x)

    n, r = _split_magnitude(magnitude, threshold)
    needed = n + (r > 0)
    over = needed > (extensions + 1)[np.newaxis, :]
    if np.any(over):
        if not saturate:
            beyond = magnitude > (plan.capacity * (1.0 + CAPACITY_RTOL))[np.newaxis, :]
            if np.any(beyond):
                rows, cols = np.nonzero(beyond)
                raise PlanMismatchError(
                    "value exceeds flatten plan capacity",
                    {"count": int(rows.size), "row": int(rows[0]), "channel": int(cols[0])},
                )
        # full slot group of T pieces
        n = np.where(over, (extensions + 1)[np.newaxis, :], n)
        r = np.where(over, 0.0, r)

    out = np.zeros((x.shape[0], plan.padded_width), dtype=np.float64)
    for k in range(int(extensions.max()) + 1):
        cols = np.nonzero(extensions >= k)[0]
        dest = cols if k == 0 else plan.offsets[cols] + (k - 1)
        nk = n[:, cols]
        piece = np.where(nk > k, threshold, np.where(nk == k, r[:, cols], 0.0))
        out[:, dest] = sign[:, cols] * piece
    return _frozen(out)


def repeat_channels(w: Matrix, plan: FlattenPlan) -> Matrix:
    """
    Copy row j of W into every slot of channel j; pad rows are zero

    Raises:
        ShapeMismatchError: If W's row count differs from the plan
    """
    if w.ndim != 2 or w.shape[0] != plan.channels:
        raise ShapeMismatchError(
            "weight rows do not match flatten plan",
            {"shape": list(w.shape), "plan_channels": plan.channels},
        )
    out = np.zeros((plan.padded_width, w.shape[1]), dtype=np.float64)
    out[: plan.width] = w[plan.source_channel]
    return _frozen(out)


def flatten_columns_repeat(x: Matrix, plan: FlattenPlan) -> Matrix:
    """Repeat the columns of an activation according to a weight-side plan"""
    return _frozen(np.ascontiguousarray(repeat_channels(x.T, plan).T))


def flatten_rows(w: Matrix, plan: FlattenPlan, saturate: bool = False) -> Matrix:
    """Flatten a weight along its rows (its reduction axis)"""
    return _frozen(np.ascontiguousarray(flatten_tensor(w.T, plan, saturate=saturate).T))


def flatten_pair(
    x: Matrix,
    w: Matrix,
    threshold_x: float,
    threshold_w: float,
    block: int = DEFAULT_BLOCK,
) -> FlattenedPair:
    """
    Flatten activation, then weight

    Stage 1 plans the activation columns from their maxima and T_x, flattens X
    and repeats W's rows. Stage 2 plans the stage-1 weight rows from their
    maxima and T_w, flattens W along its rows and repeats X's columns.

    Raises:
        ShapeMismatchError: If X columns differ from W rows
    """
    if x.shape[1] != w.shape[0]:
        raise ShapeMismatchError(
            "activation columns must match weight rows",
            {"x": list(x.shape), "w": list(w.shape)},
        )
    plan_x = build_flatten_plan(np.max(np.abs(x), axis=0), threshold_x, block)
    x1 = flatten_tensor(x, plan_x)
    w1 = repeat_channels(w, plan_x)

    plan_w = build_flatten_plan(row_maxes(w1), threshold_w, block)
    w2 = flatten_rows(w1, plan_w)
    x2 = flatten_columns_repeat(x1, plan_w)
    return FlattenedPair(x=x2, w=w2, plan_x=plan_x, plan_w=plan_w)


def flatten_activation(x: Matrix, plan_x: FlattenPlan, plan_w: FlattenPlan) -> Tuple[Matrix, int]:
    """
    Inference-time activation path: flatten by plan_x, repeat by plan_w

    Values beyond the calibrated capacity saturate; their count is returned.
    """
    events = saturation_count(x, plan_x)
    x1 = flatten_tensor(x, plan_x, saturate=True)
    return flatten_columns_repeat(x1, plan_w), events
