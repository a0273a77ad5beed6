"""
Per-tensor symmetric quantization, KL-based bit-width selection and the
simulated integer GEMM
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
import numpy.typing as npt

from flattenquant.core.config import HistogramRule
from flattenquant.core.errors import (
    AccumulatorOverflowError,
    DegenerateScaleError,
    HistogramMismatchError,
    InvalidParameterError,
    ShapeMismatchError,
)
from flattenquant.core.logging import get_logger
from flattenquant.quant.calibration import Vector
from flattenquant.quant.tensor_io import IntMatrix, Matrix

logger = get_logger(__name__)

SUPPORTED_BITS = (4, 8)
DEFAULT_BINS = 2048
MIN_BINS = 16
HISTOGRAM_EPS = 1e-10
KL_FLOOR = 1e-12
ACCUMULATOR_MAX = 2**31 - 1


def qmax_for(bits: int) -> int:
    if bits not in SUPPORTED_BITS:
        raise InvalidParameterError("bits must be 4 or 8", {"bits": bits})
    return 2 ** (bits - 1) - 1


@dataclass(frozen=True)
class QuantParams:
    bits: int
    scale: float

    def __post_init__(self) -> None:
        qmax_for(self.bits)
        if not (np.isfinite(self.scale) and self.scale > 0):
            raise DegenerateScaleError("degenerate scale", {"scale": self.scale})

    @property
    def qmax(self) -> int:
        return qmax_for(self.bits)


@dataclass(frozen=True)
class QuantizedTensor:
    q: IntMatrix
    params: QuantParams

    @property
    def shape(self) -> tuple:
        return self.q.shape


def round_half_away(values: np.ndarray) -> np.ndarray:
    return np.sign(values) * np.floor(np.abs(values) + 0.5)


def quantize_with_params(m: Matrix, params: QuantParams) -> QuantizedTensor:
    q = np.clip(round_half_away(np.asarray(m) / params.scale), -params.qmax, params.qmax).astype(np.int32)
    q.setflags(write=False)
    return QuantizedTensor(q=q, params=params)


def quantize_per_tensor(m: Matrix, bits: int, scale_override: Optional[float] = None) -> QuantizedTensor:
    """
    q = clamp(round(M / s), -qmax, qmax), rounding half away from zero

    Args:
        m: Tensor to quantize
        bits: 4 or 8
        scale_override: Static scale; defaults to max|M| / qmax

    Raises:
        DegenerateScaleError: If M is all zero and no override is given
    """
    qmax = qmax_for(bits)
    if scale_override is None:
        peak = float(np.max(np.abs(m)))
        if peak == 0.0:
            raise DegenerateScaleError("degenerate scale", {"reason": "all-zero tensor"})
        scale = peak / qmax
    else:
        scale = float(scale_override)
    return quantize_with_params(m, QuantParams(bits=bits, scale=scale))


def dequantize(qt: QuantizedTensor) -> Matrix:
    out = qt.q.astype(np.float64) * qt.params.scale
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class HistogramDistribution:
    """Uniform-bin histogram over [lo, hi]; probabilities are epsilon-smoothed"""

    bin_count: int
    lo: float
    hi: float
    counts: Vector

    @property
    def probabilities(self) -> Vector:
        total = float(self.counts.sum())
        p = (self.counts / total if total > 0 else np.zeros(self.bin_count)) + HISTOGRAM_EPS
        return p / p.sum()

    @property
    def centers(self) -> Vector:
        edges = np.linspace(self.lo, self.hi, self.bin_count + 1)
        return (edges[:-1] + edges[1:]) / 2.0

    def same_layout(self, other: "HistogramDistribution") -> bool:
        return self.bin_count == other.bin_count and self.lo == other.lo and self.hi == other.hi

    def merge(self, other: "HistogramDistribution") -> "HistogramDistribution":
        """Bin-wise count addition; layouts must agree"""
        _check_layout(self, other)
        return HistogramDistribution(self.bin_count, self.lo, self.hi, _frozen(self.counts + other.counts))


def _frozen(values: npt.ArrayLike) -> Vector:
    arr = np.array(values, dtype=np.float64)
    arr.setflags(write=False)
    return arr


def _check_layout(p: HistogramDistribution, q: HistogramDistribution) -> None:
    if not p.same_layout(q):
        raise HistogramMismatchError(
            "histograms have different bin layouts",
            {"p": [p.bin_count, p.lo, p.hi], "q": [q.bin_count, q.lo, q.hi]},
        )


def build_histogram(m: Matrix, bin_count: int = DEFAULT_BINS, drop_zeros: bool = False) -> HistogramDistribution:
    """
    Histogram over the symmetric range [-max|M|, max|M|]

    Args:
        m: Tensor
        bin_count: Number of uniform bins, at least 16
        drop_zeros: Leave exact zeros out of the counts

    An all-zero tensor (or one with nothing left after dropping zeros)
    becomes a single spike at the centre bin.
    """
    if bin_count < MIN_BINS:
        raise InvalidParameterError(f"bin count must be at least {MIN_BINS}", {"bins": bin_count})
    values = np.asarray(m, dtype=np.float64).ravel()
    peak = float(np.max(np.abs(values))) if values.size else 0.0
    if drop_zeros:
        values = values[values != 0.0]

    if peak == 0.0 or values.size == 0:
        counts = np.zeros(bin_count)
        counts[bin_count // 2] = max(values.size, 1)
        return HistogramDistribution(bin_count, 0.0, 0.0, _frozen(counts))

    counts, _ = np.histogram(values, bins=bin_count, range=(-peak, peak))
    return HistogramDistribution(bin_count, -peak, peak, _frozen(counts))


def quantized_histogram(p: HistogramDistribution, bits: int) -> HistogramDistribution:
    """
    Distribution of the b-bit quantized tensor on P's bin layout

    Each bin belongs to the integer level its centre rounds to; a level's mass
    is spread evenly over the non-empty bins of its cell.
    """
    qmax = qmax_for(bits)
    if p.hi == p.lo:
        return p
    scale = p.hi / qmax
    levels = np.clip(round_half_away(p.centers / scale), -qmax, qmax).astype(np.int64) + qmax
    occupied = p.counts > 0
    mass = np.bincount(levels, weights=p.counts, minlength=2 * qmax + 1)
    spread = np.bincount(levels, weights=occupied.astype(np.float64), minlength=2 * qmax + 1)
    per_bin = np.divide(mass, spread, out=np.zeros_like(mass), where=spread > 0)
    return HistogramDistribution(p.bin_count, p.lo, p.hi, _frozen(np.where(occupied, per_bin[levels], 0.0)))


def dequantized_histogram(m: Matrix, p: HistogramDistribution, bits: int) -> HistogramDistribution:
    """
    Histogram of the b-bit round-tripped non-zero elements of M on P's bin layout
    """
    if p.hi == p.lo:
        return p
    qmax = qmax_for(bits)
    scale = p.hi / qmax
    values = np.asarray(m, dtype=np.float64).ravel()
    values = values[values != 0.0]
    restored = np.clip(np.clip(round_half_away(values / scale), -qmax, qmax) * scale, p.lo, p.hi)
    counts, _ = np.histogram(restored, bins=p.bin_count, range=(p.lo, p.hi))
    return HistogramDistribution(p.bin_count, p.lo, p.hi, _frozen(counts))


def reference_histogram(
    m: Matrix, p: HistogramDistribution, bits: int, rule: HistogramRule = HistogramRule.EXPANDED
) -> HistogramDistribution:
    if rule is HistogramRule.DEQUANTIZED:
        return dequantized_histogram(m, p, bits)
    return quantized_histogram(p, bits)


def kl_divergence(p: HistogramDistribution, q: HistogramDistribution) -> float:
    """
    KL(P || Q) = sum p ln(p / q), never negative

    Raises:
        HistogramMismatchError: If the bin layouts differ
    """
    _check_layout(p, q)
    pp = p.probabilities
    qq = q.probabilities
    return max(0.0, float(np.sum(pp * np.log(pp / qq))))


def kl_ratio(m: Matrix, bins: int = DEFAULT_BINS, rule: HistogramRule = HistogramRule.EXPANDED) -> float:
    """KL(P, Q_INT4) / KL(P, Q_INT8), with the denominator floored at 1e-12"""
    p = build_histogram(m, bins, drop_zeros=True)
    kl4 = kl_divergence(p, reference_histogram(m, p, 4, rule))
    kl8 = kl_divergence(p, reference_histogram(m, p, 8, rule))
    return kl4 / max(kl8, KL_FLOOR)


@dataclass(frozen=True)
class BitWidthDecision:
    bits: int
    ratio_act: float
    ratio_weight: float


def bit_width_decision(
    act: Matrix,
    weight: Matrix,
    gamma: float,
    bins: int = DEFAULT_BINS,
    rule: HistogramRule = HistogramRule.EXPANDED,
) -> BitWidthDecision:
    """
    4 bits only when both the activation and the weight KL ratio are below gamma

    Raises:
        InvalidParameterError: If gamma is negative
    """
    if gamma < 0:
        raise InvalidParameterError("gamma must be non-negative", {"gamma": gamma})
    ratio_act = kl_ratio(act, bins, rule)
    ratio_weight = kl_ratio(weight, bins, rule)
    bits = 4 if (ratio_act < gamma and ratio_weight < gamma) else 8
    logger.debug("Bit width selected", bits=bits, ratio_act=ratio_act, ratio_weight=ratio_weight, gamma=gamma)
    return BitWidthDecision(bits=bits, ratio_act=ratio_act, ratio_weight=ratio_weight)


def select_bit_width(act: Matrix, weight: Matrix, gamma: float, bins: int = DEFAULT_BINS) -> int:
    return bit_width_decision(act, weight, gamma, bins).bits


def accumulator_bound(qmax_x: int, qmax_w: int, inner: int) -> int:
    """Largest possible |accumulator| of one output element"""
    return qmax_x * qmax_w * inner


def integer_gemm(qx: QuantizedTensor, qw: QuantizedTensor) -> npt.NDArray[np.int64]:
    """
    Integer product of the two quantized tensors

    Raises:
        ShapeMismatchError: If the inner dimensions differ
        AccumulatorOverflowError: If the product could leave the int32 range
    """
    if qx.q.shape[1] != qw.q.shape[0]:
        raise ShapeMismatchError(
            "inner dimensions differ",
            {"x": list(qx.q.shape), "w": list(qw.q.shape)},
        )
    inner = qx.q.shape[1]
    bound = accumulator_bound(qx.params.qmax, qw.params.qmax, inner)
    if bound > ACCUMULATOR_MAX:
        raise AccumulatorOverflowError(
            "accumulator may overflow 32 bits",
            {"qmax_x": qx.params.qmax, "qmax_w": qw.params.qmax, "inner": inner, "bound": bound},
        )
    return qx.q.astype(np.int64) @ qw.q.astype(np.int64)


def int_matmul(qx: QuantizedTensor, qw: QuantizedTensor) -> Matrix:
    """Integer GEMM, dequantized by s_x * s_w"""
    acc = integer_gemm(qx, qw)
    out = acc.astype(np.float64) * (qx.params.scale * qw.params.scale)
    out.setflags(write=False)
    return out
