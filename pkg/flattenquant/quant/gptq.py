"""
GPTQ weight rounding on a single per-tensor grid

Weights are stored K x N (input channels on rows). Columns of W.T are
quantized in index order and each residual is pushed into the not yet
quantized channels through the upper Cholesky factor of the inverse Hessian.
"""

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from flattenquant.core.errors import (
    EmptyCalibrationError,
    IllConditionedHessianError,
    InvalidParameterError,
    ShapeMismatchError,
)
from flattenquant.core.logging import get_logger
from flattenquant.quant.quantize import QuantizedTensor, QuantParams, round_half_away
from flattenquant.quant.tensor_io import Matrix

logger = get_logger(__name__)

DEFAULT_DAMPING = 0.01
DEFAULT_BLOCK_SIZE = 128


@dataclass(frozen=True)
class HessianEstimate:
    """Undamped sum of 2 X^T X; damping is applied on read"""

    raw: Matrix
    damping: float
    sample_count: int

    @property
    def dim(self) -> int:
        return int(self.raw.shape[0])

    @property
    def damped(self) -> Matrix:
        """H + damping * mean(diag(H)) * I"""
        bump = self.damping * float(np.mean(np.diag(self.raw)))
        return self.raw + bump * np.eye(self.dim)

    def merge(self, other: "HessianEstimate") -> "HessianEstimate":
        if other.dim != self.dim:
            raise ShapeMismatchError("cannot merge Hessians of different size", {"left": self.dim, "right": other.dim})
        return HessianEstimate(
            raw=self.raw + other.raw,
            damping=self.damping,
            sample_count=self.sample_count + other.sample_count,
        )


def hessian_from_calibration(flattened_acts: Sequence[Matrix], damping: float = DEFAULT_DAMPING) -> HessianEstimate:
    """
    Accumulate 2 X^T X over flattened calibration activations

    Raises:
        EmptyCalibrationError: If no samples are given
        ShapeMismatchError: If samples disagree on width
        InvalidParameterError: If damping is not positive
    """
    if len(flattened_acts) == 0:
        raise EmptyCalibrationError("empty calibration set")
    if not damping > 0:
        raise InvalidParameterError("damping must be positive", {"damping": damping})

    width = flattened_acts[0].shape[1]
    h = np.zeros((width, width))
    rows = 0
    for index, x in enumerate(flattened_acts):
        if x.shape[1] != width:
            raise ShapeMismatchError(
                "calibration samples disagree on width",
                {"expected": width, "sample": index, "shape": list(x.shape)},
            )
        h += 2.0 * (x.T @ x)
        rows += x.shape[0]
    return HessianEstimate(raw=h, damping=damping, sample_count=rows)


def _inverse_cholesky_upper(h: Matrix) -> Matrix:
    """Upper Cholesky factor of H^-1"""
    try:
        lower = np.linalg.cholesky(h)
        lower_inv = np.linalg.inv(lower)
        h_inv = lower_inv.T @ lower_inv
        upper = np.linalg.cholesky(h_inv).T
    except np.linalg.LinAlgError as e:
        raise IllConditionedHessianError("ill-conditioned Hessian, increase damping") from e
    if not np.all(np.isfinite(upper)):
        raise IllConditionedHessianError("ill-conditioned Hessian, increase damping")
    return upper


def gptq_optimize(
    w_flat: Matrix,
    hessian: HessianEstimate,
    params: QuantParams,
    block_size: int = DEFAULT_BLOCK_SIZE,
) -> QuantizedTensor:
    """
    Quantize a flattened weight with Hessian-guided error compensation

    Args:
        w_flat: K x N weight, K equal to the Hessian dimension
        hessian: Calibration Hessian of the flattened activations
        params: Per-tensor grid, fixed before the column loop
        block_size: Columns per lazy batched update

    Raises:
        ShapeMismatchError: If K differs from the Hessian dimension
        IllConditionedHessianError: If the damped Hessian is not positive definite
    """
    if w_flat.shape[0] != hessian.dim:
        raise ShapeMismatchError(
            "weight rows do not match Hessian size",
            {"weight": list(w_flat.shape), "hessian": hessian.dim},
        )
    if block_size < 1:
        raise InvalidParameterError("GPTQ block size must be at least 1", {"block_size": block_size})

    upper = _inverse_cholesky_upper(hessian.damped)
    work = np.array(w_flat.T, dtype=np.float64)
    columns = work.shape[1]
    q = np.zeros(work.shape, dtype=np.int32)
    scale, qmax = params.scale, params.qmax

    for start in range(0, columns, block_size):
        stop = min(start + block_size, columns)
        block = work[:, start:stop].copy()
        errors = np.zeros_like(block)
        u_block = upper[start:stop, start:stop]

        for i in range(stop - start):
            column = block[:, i]
            quantized = np.clip(round_half_away(column / scale), -qmax, qmax)
            q[:, start + i] = quantized
            err = (column - quantized * scale) / u_block[i, i]
            block[:, i:] -= np.outer(err, u_block[i, i:])
            errors[:, i] = err

        # lazy update of the remaining columns
        work[:, stop:] -= errors @ upper[start:stop, stop:]

    q_out = np.ascontiguousarray(q.T)
    q_out.setflags(write=False)
    logger.debug("GPTQ finished", columns=columns, outputs=work.shape[0], bits=params.bits)
    return QuantizedTensor(q=q_out, params=params)


def hessian_objective(w: Matrix, w_hat: Matrix, h: Matrix) -> float:
    """tr((W - W_hat)^T H (W - W_hat))"""
    delta = np.asarray(w) - np.asarray(w_hat)
    return float(np.trace(delta.T @ h @ delta))
