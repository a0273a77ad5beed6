"""
Per-layer quantization pipeline

A layer is a single linear transform Y = X W with W stored K x N. Quantizing
a layer runs three stages, each of which the CLI persists separately:

    calibrate_layer  channel maxima, smoothing scales, activation threshold
    plan_layer       activation plan, weight threshold, weight plan
    finalize_layer   flatten, bit selection, weight rounding, static scale

quantize_layer runs all three in memory.
"""

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np

from flattenquant.core.config import QuantMode, RunConfig, SmoothingRule
from flattenquant.core.errors import (
    ArtifactError,
    DegenerateCalibrationError,
    EmptyCalibrationError,
    ShapeMismatchError,
)
from flattenquant.core.logging import get_logger, log_layer_summary, log_saturation, log_stage
from flattenquant.quant.calibration import (
    ChannelStats,
    TruncationPolicy,
    Vector,
    boxplot_quartiles,
    build_truncation_policy,
    collect_channel_maxes,
    row_maxes,
)
from flattenquant.quant.flatten import (
    FlattenPlan,
    build_flatten_plan,
    flatten_activation,
    flatten_columns_repeat,
    flatten_rows,
    flatten_tensor,
    repeat_channels,
)
from flattenquant.quant.gptq import gptq_optimize, hessian_from_calibration, hessian_objective
from flattenquant.quant.quantize import (
    QuantizedTensor,
    QuantParams,
    bit_width_decision,
    dequantize,
    int_matmul,
    qmax_for,
    quantize_per_tensor,
    quantize_with_params,
)
from flattenquant.quant.smoothing import (
    SmoothingScales,
    smooth_activation,
    smooth_weight,
    smoothing_scales,
    smoothquant_scales,
)
from flattenquant.quant.tensor_io import Matrix

logger = get_logger(__name__)

SQNR_CAP_DB = 300.0


def effective_smoothing(cfg: RunConfig) -> SmoothingRule:
    """The baselines pin their smoothing rule; FlattenQuant modes follow the config"""
    if cfg.mode is QuantMode.W8A8:
        return SmoothingRule.NONE
    if cfg.mode is QuantMode.SMOOTHQUANT:
        return SmoothingRule.SMOOTHQUANT
    return cfg.smoothing


@dataclass(frozen=True)
class LayerCalibration:
    stats: ChannelStats
    weight_maxes: Vector
    rule: SmoothingRule
    scales: SmoothingScales
    smoothed_maxes: Vector
    truncation: TruncationPolicy


@dataclass(frozen=True)
class LayerPlan:
    plan_x: FlattenPlan
    truncation_w: TruncationPolicy
    plan_w: FlattenPlan


@dataclass(frozen=True)
class LayerQuantConfig:
    name: str
    mode: QuantMode
    alpha: float
    beta: float
    gamma: float
    block: int
    bins: int
    bits: int
    smoothing: SmoothingRule
    smooth_scales: SmoothingScales
    truncation: TruncationPolicy
    truncation_w: TruncationPolicy
    plan_x: FlattenPlan
    plan_w: FlattenPlan
    weight_q: QuantizedTensor
    act_scale: float
    kl_ratio_act: Optional[float] = None
    kl_ratio_w: Optional[float] = None
    gptq: bool = False
    damping: Optional[float] = None
    gptq_objective: Optional[float] = None
    rtn_objective: Optional[float] = None

    @property
    def in_features(self) -> int:
        return self.plan_x.channels

    @property
    def out_features(self) -> int:
        return int(self.weight_q.q.shape[1])


@dataclass(frozen=True)
class LayerOutput:
    y: Matrix
    saturation_events: int


@dataclass(frozen=True)
class LayerReport:
    name: str
    mode: QuantMode
    bits: int
    output_mse: float
    sqnr_db: float
    cosine_sim: float
    flatten_ratio_x: float
    flatten_ratio_w: float
    weight_bytes_quantized: int
    weight_bytes_int8: int
    weight_bytes_fp16: int
    bitops: int
    saturation_events: int


@dataclass(frozen=True)
class ModelReport:
    layers: List[LayerReport] = field(default_factory=list)
    int4_fraction: float = 0.0
    total_bytes: int = 0
    total_bytes_int8: int = 0
    total_bytes_fp16: int = 0
    total_bitops: int = 0
    mean_output_mse: float = 0.0
    mean_sqnr_db: float = 0.0
    mean_flatten_ratio: float = 0.0
    mean_flatten_ratio_w: float = 0.0
    saturation_events: int = 0

    @classmethod
    def from_layers(cls, layers: Sequence[LayerReport]) -> "ModelReport":
        if not layers:
            return cls()
        count = len(layers)
        return cls(
            layers=list(layers),
            int4_fraction=sum(1 for r in layers if r.bits == 4) / count,
            total_bytes=sum(r.weight_bytes_quantized for r in layers),
            total_bytes_int8=sum(r.weight_bytes_int8 for r in layers),
            total_bytes_fp16=sum(r.weight_bytes_fp16 for r in layers),
            total_bitops=sum(r.bitops for r in layers),
            mean_output_mse=float(np.mean([r.output_mse for r in layers])),
            mean_sqnr_db=float(np.mean([r.sqnr_db for r in layers])),
            mean_flatten_ratio=float(np.mean([r.flatten_ratio_x for r in layers])),
            mean_flatten_ratio_w=float(np.mean([r.flatten_ratio_w for r in layers])),
            saturation_events=sum(r.saturation_events for r in layers),
        )


def calibration_max_policy(max_abs: Vector) -> TruncationPolicy:
    """Baseline threshold: the largest calibrated channel maximum, no clipping"""
    max_abs = np.asarray(max_abs, dtype=np.float64)
    threshold = float(np.max(max_abs))
    if not threshold > 0:
        raise DegenerateCalibrationError("degenerate calibration", {"reason": "all channel maxima are zero"})
    q1, q3 = boxplot_quartiles(max_abs)
    return TruncationPolicy(beta=1.0, q1=q1, q3=q3, iqr=q3 - q1, clipped_max=max_abs, threshold=threshold)


def _threshold_policy(max_abs: Vector, cfg: RunConfig) -> TruncationPolicy:
    if cfg.mode.is_flatten:
        return build_truncation_policy(max_abs, cfg.beta, clip=cfg.clip_outliers)
    return calibration_max_policy(max_abs)


def calibrate_layer(weight: Matrix, calib: Sequence[Matrix], cfg: RunConfig) -> LayerCalibration:
    """
    Channel statistics, smoothing scales and the activation threshold

    Raises:
        EmptyCalibrationError: If calib is empty
        ShapeMismatchError: If calibration width differs from the weight rows
        DegenerateCalibrationError: If the smoothed maxima are all zero
    """
    stats = collect_channel_maxes(calib)
    if weight.shape[0] != stats.channels:
        raise ShapeMismatchError(
            "calibration width does not match weight rows",
            {"calib_channels": stats.channels, "weight": list(weight.shape)},
        )
    weight_maxes = row_maxes(weight)
    rule = effective_smoothing(cfg)
    if rule is SmoothingRule.FLATTEN:
        scales = smoothing_scales(stats.max_abs, weight_maxes, cfg.alpha)
    elif rule is SmoothingRule.SMOOTHQUANT:
        scales = smoothquant_scales(stats.max_abs, weight_maxes, cfg.alpha)
    else:
        scales = SmoothingScales.identity(stats.channels, cfg.alpha)

    smoothed = stats.max_abs / scales.s
    smoothed.setflags(write=False)
    return LayerCalibration(
        stats=stats,
        weight_maxes=weight_maxes,
        rule=rule,
        scales=scales,
        smoothed_maxes=smoothed,
        truncation=_threshold_policy(smoothed, cfg),
    )


def plan_layer(weight: Matrix, calibration: LayerCalibration, cfg: RunConfig) -> LayerPlan:
    """
    Activation plan from the smoothed maxima, then the weight plan from the
    stage-1 weight rows (pad rows excluded from the weight threshold)
    """
    channels = calibration.stats.channels
    threshold_x = calibration.truncation.threshold
    if cfg.mode.is_flatten:
        plan_x = build_flatten_plan(calibration.smoothed_maxes, threshold_x, cfg.block)
    else:
        plan_x = FlattenPlan.identity(channels, threshold_x, cfg.block)

    w1 = repeat_channels(smooth_weight(weight, calibration.scales), plan_x)
    stage_one_maxes = row_maxes(w1)
    truncation_w = _threshold_policy(stage_one_maxes[: plan_x.width], cfg)
    if cfg.mode.is_flatten:
        plan_w = build_flatten_plan(stage_one_maxes, truncation_w.threshold, cfg.block)
    else:
        plan_w = FlattenPlan.identity(plan_x.padded_width, truncation_w.threshold, cfg.block)
    return LayerPlan(plan_x=plan_x, truncation_w=truncation_w, plan_w=plan_w)


def flatten_calibration(calib: Sequence[Matrix], scales: SmoothingScales, plan: LayerPlan) -> List[Matrix]:
    """Smoothed and fully flattened calibration batches; fails if a batch exceeds the plan"""
    return [
        flatten_columns_repeat(flatten_tensor(smooth_activation(x, scales), plan.plan_x), plan.plan_w)
        for x in calib
    ]


def flatten_weight(weight: Matrix, scales: SmoothingScales, plan: LayerPlan) -> Matrix:
    return flatten_rows(repeat_channels(smooth_weight(weight, scales), plan.plan_x), plan.plan_w)


def finalize_layer(
    name: str,
    weight: Matrix,
    calib: Sequence[Matrix],
    calibration: LayerCalibration,
    plan: LayerPlan,
    cfg: RunConfig,
) -> LayerQuantConfig:
    """
    Flatten, choose the bit width, round the weight and fix the activation scale

    O2/O3 choose 4 or 8 bits from the KL ratios of the flattened tensors; every
    other mode is INT8. O3 rounds the weight with GPTQ on the same per-tensor
    grid round-to-nearest would use.
    """
    x_flat = flatten_calibration(calib, calibration.scales, plan)
    w_flat = flatten_weight(weight, calibration.scales, plan)

    ratio_act: Optional[float] = None
    ratio_w: Optional[float] = None
    if cfg.mode.mixes_bits:
        decision = bit_width_decision(np.vstack(x_flat), w_flat, cfg.gamma, cfg.bins, cfg.kl_histogram)
        bits, ratio_act, ratio_w = decision.bits, decision.ratio_act, decision.ratio_weight
    else:
        bits = 8

    qmax = qmax_for(bits)
    rtn = quantize_per_tensor(w_flat, bits)
    weight_q = rtn
    gptq_objective: Optional[float] = None
    rtn_objective: Optional[float] = None
    if cfg.mode.uses_gptq:
        hessian = hessian_from_calibration(x_flat, cfg.damping)
        weight_q = gptq_optimize(w_flat, hessian, rtn.params, cfg.gptq_block_size)
        h = hessian.damped
        gptq_objective = hessian_objective(w_flat, dequantize(weight_q), h)
        rtn_objective = hessian_objective(w_flat, dequantize(rtn), h)

    return LayerQuantConfig(
        name=name,
        mode=cfg.mode,
        alpha=cfg.alpha,
        beta=cfg.beta,
        gamma=cfg.gamma,
        block=cfg.block,
        bins=cfg.bins,
        bits=bits,
        smoothing=calibration.rule,
        smooth_scales=calibration.scales,
        truncation=calibration.truncation,
        truncation_w=plan.truncation_w,
        plan_x=plan.plan_x,
        plan_w=plan.plan_w,
        weight_q=weight_q,
        act_scale=plan.plan_x.threshold / qmax,
        kl_ratio_act=ratio_act,
        kl_ratio_w=ratio_w,
        gptq=cfg.mode.uses_gptq,
        damping=cfg.damping if cfg.mode.uses_gptq else None,
        gptq_objective=gptq_objective,
        rtn_objective=rtn_objective,
    )


def quantize_layer(weight: Matrix, calib: Sequence[Matrix], cfg: RunConfig, name: str = "layer") -> LayerQuantConfig:
    """Run calibration, planning and finalization for one layer"""
    start = time.perf_counter()
    calibration = calibrate_layer(weight, calib, cfg)
    log_stage("calibrate", name, time.perf_counter() - start, threshold=calibration.truncation.threshold)

    start = time.perf_counter()
    plan = plan_layer(weight, calibration, cfg)
    log_stage("plan", name, time.perf_counter() - start, c_extend=plan.plan_x.c_extend)

    start = time.perf_counter()
    config = finalize_layer(name, weight, calib, calibration, plan, cfg)
    log_stage("quantize", name, time.perf_counter() - start, bits=config.bits)

    log_layer_summary(
        name,
        cfg.mode.value,
        config.bits,
        {
            "flatten_ratio_x": plan.plan_x.flatten_ratio,
            "padded_width": plan.plan_w.padded_width,
            "kl_ratio_act": config.kl_ratio_act,
            "kl_ratio_w": config.kl_ratio_w,
        },
    )
    return config


def execute_layer(cfg: LayerQuantConfig, x: Matrix) -> LayerOutput:
    """
    Inference path: smooth, flatten, column-repeat, quantize statically,
    integer GEMM, dequantize

    Raises:
        ShapeMismatchError: If X's width differs from the layer's input channels
    """
    if x.ndim != 2 or x.shape[1] != cfg.in_features:
        raise ShapeMismatchError(
            "input width does not match layer",
            {"layer": cfg.name, "shape": list(x.shape), "in_features": cfg.in_features},
        )
    x_flat, events = flatten_activation(smooth_activation(x, cfg.smooth_scales), cfg.plan_x, cfg.plan_w)
    qx = quantize_with_params(x_flat, QuantParams(bits=cfg.bits, scale=cfg.act_scale))
    return LayerOutput(y=int_matmul(qx, cfg.weight_q), saturation_events=events)


def run_layer(cfg: LayerQuantConfig, x: Matrix) -> Matrix:
    output = execute_layer(cfg, x)
    log_saturation(cfg.name, output.saturation_events, cfg.in_features)
    return output.y


def sqnr_db(reference: Matrix, output: Matrix) -> float:
    """10 log10(signal power / error power), capped at +-300 dB"""
    noise = float(np.mean((output - reference) ** 2))
    signal = float(np.mean(reference**2))
    if noise == 0.0:
        return SQNR_CAP_DB
    if signal == 0.0:
        return -SQNR_CAP_DB
    return float(np.clip(10.0 * np.log10(signal / noise), -SQNR_CAP_DB, SQNR_CAP_DB))


def cosine_similarity(a: Matrix, b: Matrix) -> float:
    a = np.ravel(a)
    b = np.ravel(b)
    norm_a = float(np.linalg.norm(a))
    norm_b = float(np.linalg.norm(b))
    if norm_a == 0.0 and norm_b == 0.0:
        return 1.0
    if norm_a == 0.0 or norm_b == 0.0:
        return 0.0
    return float(np.dot(a, b) / (norm_a * norm_b))


def evaluate_layer(cfg: LayerQuantConfig, x_test: Matrix, w_ref: Matrix) -> LayerReport:
    """Compare the quantized layer with the double-precision X W reference"""
    if w_ref.shape != (cfg.in_features, cfg.out_features):
        raise ShapeMismatchError(
            "reference weight does not match layer",
            {"layer": cfg.name, "weight": list(w_ref.shape), "expected": [cfg.in_features, cfg.out_features]},
        )
    output = execute_layer(cfg, x_test)
    log_saturation(cfg.name, output.saturation_events, cfg.in_features)
    reference = x_test @ w_ref

    padded = cfg.plan_w.padded_width
    rows = x_test.shape[0]
    return LayerReport(
        name=cfg.name,
        mode=cfg.mode,
        bits=cfg.bits,
        output_mse=float(np.mean((output.y - reference) ** 2)),
        sqnr_db=sqnr_db(reference, output.y),
        cosine_sim=cosine_similarity(reference, output.y),
        flatten_ratio_x=cfg.plan_x.flatten_ratio,
        flatten_ratio_w=cfg.plan_w.c_extend / cfg.in_features,
        weight_bytes_quantized=weight_bytes(padded, cfg.out_features, cfg.bits),
        weight_bytes_int8=weight_bytes(padded, cfg.out_features, 8),
        weight_bytes_fp16=weight_bytes(cfg.in_features, cfg.out_features, 16),
        bitops=2 * rows * cfg.out_features * padded * cfg.bits * cfg.bits,
        saturation_events=output.saturation_events,
    )


def weight_bytes(rows: int, cols: int, bits: int) -> int:
    return -(-rows * cols * bits // 8)


def quantize_model(
    model: Mapping[str, Matrix],
    calib: Mapping[str, Sequence[Matrix]],
    cfg: RunConfig,
) -> Dict[str, LayerQuantConfig]:
    """
    Quantize every layer; layers are independent and may run concurrently

    Returns:
        Dict[str, LayerQuantConfig]: In model order
    """
    names = list(model)
    for name in names:
        if not calib.get(name):
            raise EmptyCalibrationError("empty calibration set", {"layer": name})

    def _one(name: str) -> LayerQuantConfig:
        return quantize_layer(model[name], calib[name], cfg, name=name)

    if cfg.workers > 1 and len(names) > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_one, names))
    else:
        results = [_one(name) for name in names]
    logger.info("Model quantized", layers=len(names), mode=cfg.mode.value)
    return dict(zip(names, results))


def evaluate_model(
    configs: Mapping[str, LayerQuantConfig],
    model: Mapping[str, Matrix],
    eval_inputs: Mapping[str, Matrix],
) -> ModelReport:
    """Evaluate each layer on its held-out activations and aggregate"""
    reports = []
    for name, cfg in configs.items():
        if name not in eval_inputs or name not in model:
            raise ArtifactError("missing evaluation input or weight for layer", {"layer": name})
        reports.append(evaluate_layer(cfg, eval_inputs[name], model[name]))
    return ModelReport.from_layers(reports)
