"""
Ablation sweeps

Re-quantizes a model once per value of a single parameter and tabulates the
aggregate metrics.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Any, List, Mapping, Sequence

from pydantic import ValidationError

from flattenquant.core.config import RunConfig, SmoothingRule
from flattenquant.core.errors import InvalidParameterError
from flattenquant.core.logging import get_logger
from flattenquant.quant.pipeline import evaluate_model, quantize_model
from flattenquant.quant.tensor_io import Matrix

logger = get_logger(__name__)

_ON = {"on", "true", "1", "yes"}
_OFF = {"off", "false", "0", "no"}


class SweepParam(str, Enum):
    BETA = "beta"
    GAMMA = "gamma"
    ALPHA = "alpha"
    CLIP = "clip"
    SMOOTH = "smooth"


@dataclass(frozen=True)
class SweepRow:
    value: str
    flatten_ratio_x: float
    flatten_ratio_w: float
    int4_fraction: float
    mean_output_mse: float
    mean_sqnr_db: float
    total_bytes: int
    total_bitops: int
    saturation_events: int


@dataclass(frozen=True)
class SweepTable:
    param: SweepParam
    rows: List[SweepRow]


def _switch(raw: str) -> bool:
    value = raw.strip().lower()
    if value in _ON:
        return True
    if value in _OFF:
        return False
    raise InvalidParameterError(f"expected on/off, got '{raw}'", {"value": raw})


def parse_sweep_values(param: SweepParam, raw_values: Sequence[str]) -> List[Any]:
    """Typed values for a sweep; clip and smooth take on/off"""
    if not raw_values:
        raise InvalidParameterError("sweep needs at least one value", {"param": param.value})
    if param in (SweepParam.CLIP, SweepParam.SMOOTH):
        return [_switch(v) for v in raw_values]
    try:
        return [float(v) for v in raw_values]
    except ValueError as e:
        raise InvalidParameterError(f"non-numeric sweep value for {param.value}", {"values": list(raw_values)}) from e


def config_for(base: RunConfig, param: SweepParam, value: Any) -> RunConfig:
    """Copy of base with one parameter replaced, re-validated"""
    if param is SweepParam.CLIP:
        update = {"clip_outliers": value}
    elif param is SweepParam.SMOOTH:
        rule = base.smoothing if base.smoothing is not SmoothingRule.NONE else SmoothingRule.FLATTEN
        update = {"smoothing": rule if value else SmoothingRule.NONE}
    else:
        update = {param.value: value}
    try:
        return RunConfig.model_validate({**base.model_dump(), **update})
    except ValidationError as e:
        raise InvalidParameterError(
            f"invalid {param.value} value", {"value": str(value), "errors": [err["msg"] for err in e.errors()]}
        ) from e


def _label(param: SweepParam, value: Any) -> str:
    if param in (SweepParam.CLIP, SweepParam.SMOOTH):
        return "on" if value else "off"
    return repr(float(value))


def run_sweep(
    param: SweepParam,
    values: Sequence[Any],
    base: RunConfig,
    model: Mapping[str, Matrix],
    calib: Mapping[str, Sequence[Matrix]],
    eval_inputs: Mapping[str, Matrix],
) -> SweepTable:
    """
    One row per value, in the order given

    Raises:
        InvalidParameterError: If values is empty or a value fails validation
    """
    if not values:
        raise InvalidParameterError("sweep needs at least one value", {"param": param.value})

    rows = []
    for value in values:
        cfg = config_for(base, param, value)
        report = evaluate_model(quantize_model(model, calib, cfg), model, eval_inputs)
        rows.append(
            SweepRow(
                value=_label(param, value),
                flatten_ratio_x=report.mean_flatten_ratio,
                flatten_ratio_w=report.mean_flatten_ratio_w,
                int4_fraction=report.int4_fraction,
                mean_output_mse=report.mean_output_mse,
                mean_sqnr_db=report.mean_sqnr_db,
                total_bytes=report.total_bytes,
                total_bitops=report.total_bitops,
                saturation_events=report.saturation_events,
            )
        )
        logger.info("Sweep point done", param=param.value, value=rows[-1].value, mse=report.mean_output_mse)
    return SweepTable(param=param, rows=rows)
