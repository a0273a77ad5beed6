"""
Cross-channel smoothing

Moves magnitude between activations and weights with a per-channel divisor s:
X' = X diag(s)^-1, W' = diag(s) W. The product X'W' equals XW.
"""

from dataclasses import dataclass

import numpy as np

from flattenquant.core.errors import InvalidParameterError, ShapeMismatchError
from flattenquant.quant.calibration import Vector
from flattenquant.quant.tensor_io import Matrix

SMOOTHQUANT_FLOOR = 1e-5


@dataclass(frozen=True)
class SmoothingScales:
    alpha: float
    s: Vector
    mu_x: float = 0.0
    sigma_x: float = 0.0
    mu_w: float = 0.0
    sigma_w: float = 0.0

    @property
    def channels(self) -> int:
        return int(self.s.shape[0])

    @classmethod
    def identity(cls, channels: int, alpha: float = 0.5) -> "SmoothingScales":
        return cls(alpha=alpha, s=_frozen(np.ones(channels)))

    def inverse(self) -> "SmoothingScales":
        return SmoothingScales(
            alpha=self.alpha,
            s=_frozen(1.0 / self.s),
            mu_x=self.mu_x,
            sigma_x=self.sigma_x,
            mu_w=self.mu_w,
            sigma_w=self.sigma_w,
        )


def _frozen(values: np.ndarray) -> Vector:
    arr = np.array(values, dtype=np.float64)
    arr.setflags(write=False)
    return arr


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # exp(-log(1 + e^-z)) stays finite for any z
    return np.exp(-np.logaddexp(0.0, -z))


def _normalized(maxes: Vector) -> tuple:
    mu = float(np.mean(maxes))
    sigma = float(np.std(maxes))
    if sigma == 0.0:
        return np.zeros_like(maxes), mu, sigma
    return (maxes - mu) / sigma, mu, sigma


def _check_inputs(act_maxes: Vector, weight_maxes: Vector, alpha: float) -> None:
    if act_maxes.shape != weight_maxes.shape or act_maxes.ndim != 1:
        raise ShapeMismatchError(
            "activation and weight channel maxima differ in length",
            {"act": list(act_maxes.shape), "weight": list(weight_maxes.shape)},
        )
    if not 0.0 <= alpha <= 1.0:
        raise InvalidParameterError("alpha must lie in [0, 1]", {"alpha": alpha})
    if not np.any(act_maxes > 0) or not np.any(weight_maxes > 0):
        raise InvalidParameterError("smoothing needs a nonzero channel on both sides")


def smoothing_scales(act_maxes: Vector, weight_maxes: Vector, alpha: float) -> SmoothingScales:
    """
    Sigmoid-normalised smoothing scales

    s_j = Sigmoid(z_x[j])^alpha / Sigmoid(z_w[j])^(1 - alpha), where z is the
    channel maximum standardised by the mean and population standard deviation
    of its own tensor's channel maxima (0 when that deviation is 0).

    Raises:
        ShapeMismatchError: If the two vectors differ in length
        InvalidParameterError: If alpha is outside [0, 1] or a side is all zero
    """
    act_maxes = np.asarray(act_maxes, dtype=np.float64)
    weight_maxes = np.asarray(weight_maxes, dtype=np.float64)
    _check_inputs(act_maxes, weight_maxes, alpha)

    z_x, mu_x, sigma_x = _normalized(act_maxes)
    z_w, mu_w, sigma_w = _normalized(weight_maxes)
    s = _sigmoid(z_x) ** alpha / _sigmoid(z_w) ** (1.0 - alpha)
    return SmoothingScales(alpha=alpha, s=_frozen(s), mu_x=mu_x, sigma_x=sigma_x, mu_w=mu_w, sigma_w=sigma_w)


def smoothquant_scales(act_maxes: Vector, weight_maxes: Vector, alpha: float) -> SmoothingScales:
    """Classic SmoothQuant rule s_j = max|X_j|^alpha / max|W_j|^(1 - alpha), floored at 1e-5"""
    act_maxes = np.asarray(act_maxes, dtype=np.float64)
    weight_maxes = np.asarray(weight_maxes, dtype=np.float64)
    _check_inputs(act_maxes, weight_maxes, alpha)

    a = np.maximum(act_maxes, SMOOTHQUANT_FLOOR)
    w = np.maximum(weight_maxes, SMOOTHQUANT_FLOOR)
    s = np.maximum(a ** alpha / w ** (1.0 - alpha), SMOOTHQUANT_FLOOR)
    return SmoothingScales(alpha=alpha, s=_frozen(s))


def apply_smoothing(x: Matrix, w: Matrix, scales: SmoothingScales) -> tuple:
    """
    (X diag(s)^-1, diag(s) W)

    Raises:
        ShapeMismatchError: If X columns, W rows and the scale length disagree
    """
    if x.shape[1] != scales.channels or w.shape[0] != scales.channels:
        raise ShapeMismatchError(
            "smoothing dimensions disagree",
            {"x": list(x.shape), "w": list(w.shape), "scales": scales.channels},
        )
    return smooth_activation(x, scales), smooth_weight(w, scales)


def smooth_activation(x: Matrix, scales: SmoothingScales) -> Matrix:
    out = x / scales.s[np.newaxis, :]
    out.setflags(write=False)
    return out


def smooth_weight(w: Matrix, scales: SmoothingScales) -> Matrix:
    out = w * scales.s[:, np.newaxis]
    out.setflags(write=False)
    return out
