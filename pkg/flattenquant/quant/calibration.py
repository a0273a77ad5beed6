"""
Calibration statistics and the truncation threshold

Channel maxima are gathered over the calibration set; boxplot fences computed
over those maxima suppress outlier channels before the threshold
T = beta * mean(clipped maxima) is taken.
"""

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np
import numpy.typing as npt

from flattenquant.core.errors import (
    DegenerateCalibrationError,
    EmptyCalibrationError,
    InvalidParameterError,
    ShapeMismatchError,
)
from flattenquant.quant.tensor_io import Matrix

Vector = npt.NDArray[np.float64]

IQR_FENCE = 1.5


@dataclass(frozen=True)
class ChannelStats:
    """Per-channel max |value| over every calibration row seen so far"""

    max_abs: Vector
    sample_count: int

    @property
    def channels(self) -> int:
        return int(self.max_abs.shape[0])

    def merge(self, other: "ChannelStats") -> "ChannelStats":
        """Combine two partial aggregates; order does not matter"""
        if other.channels != self.channels:
            raise ShapeMismatchError(
                "cannot merge channel stats of different widths",
                {"left": self.channels, "right": other.channels},
            )
        return ChannelStats(
            max_abs=_frozen(np.maximum(self.max_abs, other.max_abs)),
            sample_count=self.sample_count + other.sample_count,
        )


@dataclass(frozen=True)
class TruncationPolicy:
    beta: float
    q1: float
    q3: float
    iqr: float
    clipped_max: Vector
    threshold: float

    @property
    def lower_fence(self) -> float:
        return self.q1 - IQR_FENCE * self.iqr

    @property
    def upper_fence(self) -> float:
        return self.q3 + IQR_FENCE * self.iqr


def _frozen(values: npt.ArrayLike) -> Vector:
    arr = np.array(values, dtype=np.float64)
    arr.setflags(write=False)
    return arr


def collect_channel_maxes(samples: Sequence[Matrix]) -> ChannelStats:
    """
    Per-channel max |X[i, j]| over all samples and rows

    Raises:
        EmptyCalibrationError: If no samples are given
        ShapeMismatchError: If samples disagree on the column count
    """
    if len(samples) == 0:
        raise EmptyCalibrationError("empty calibration set")

    channels = samples[0].shape[1]
    stats = None
    for index, sample in enumerate(samples):
        if sample.ndim != 2 or sample.shape[1] != channels:
            raise ShapeMismatchError(
                "calibration samples disagree on channel count",
                {"expected": channels, "sample": index, "shape": list(sample.shape)},
            )
        partial = ChannelStats(max_abs=_frozen(np.max(np.abs(sample), axis=0)), sample_count=sample.shape[0])
        stats = partial if stats is None else stats.merge(partial)
    return stats


def boxplot_quartiles(values: Vector) -> Tuple[float, float]:
    """Q1 and Q3 of the channel maxima, linear interpolation between order statistics"""
    q1, q3 = np.percentile(np.asarray(values, dtype=np.float64), [25.0, 75.0], method="linear")
    return float(q1), float(q3)


def clip_outlier_channels(stats: ChannelStats) -> Vector:
    """Clip every channel maximum into [Q1 - 1.5 IQR, Q3 + 1.5 IQR]"""
    q1, q3 = boxplot_quartiles(stats.max_abs)
    iqr = q3 - q1
    return _frozen(np.clip(stats.max_abs, q1 - IQR_FENCE * iqr, q3 + IQR_FENCE * iqr))


def truncation_threshold(clipped: Vector, beta: float) -> float:
    """
    T = beta * mean(clipped)

    Raises:
        InvalidParameterError: If beta <= 0 or clipped is empty
        DegenerateCalibrationError: If every clipped maximum is zero
    """
    if not beta > 0:
        raise InvalidParameterError("beta must be positive", {"beta": beta})
    clipped = np.asarray(clipped, dtype=np.float64)
    if clipped.size == 0:
        raise InvalidParameterError("clipped channel maxima are empty")
    threshold = beta * float(np.mean(clipped))
    if not threshold > 0:
        raise DegenerateCalibrationError("degenerate calibration", {"reason": "all channel maxima are zero"})
    return threshold


def build_truncation_policy(max_abs: Vector, beta: float, clip: bool = True) -> TruncationPolicy:
    """
    Threshold recipe for one tensor's channel maxima

    Args:
        max_abs: Channel maxima (activations: per column, weights: per row)
        beta: Threshold coefficient
        clip: Apply the boxplot suppression; False averages the raw maxima
    """
    max_abs = _frozen(max_abs)
    q1, q3 = boxplot_quartiles(max_abs)
    if clip:
        clipped = clip_outlier_channels(ChannelStats(max_abs=max_abs, sample_count=0))
    else:
        clipped = max_abs
    return TruncationPolicy(
        beta=float(beta),
        q1=q1,
        q3=q3,
        iqr=q3 - q1,
        clipped_max=clipped,
        threshold=truncation_threshold(clipped, beta),
    )


def row_maxes(weight: Matrix) -> Vector:
    """Per-row max |W[j, k]|, the weight-side channel statistic"""
    return _frozen(np.max(np.abs(weight), axis=1))
