"""
Calibration statistics artifact (stats/<layer>.json)
"""

from typing import Any, Dict

import numpy as np
from pydantic import BaseModel, Field

from flattenquant.core.config import SmoothingRule
from flattenquant.quant.calibration import ChannelStats, TruncationPolicy
from flattenquant.quant.pipeline import LayerCalibration
from flattenquant.quant.smoothing import SmoothingScales
from flattenquant.schemas.common import ArtifactModel, Decimal, DecimalList


def _vector(values: Any) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    arr.setflags(write=False)
    return arr


class SmoothingSchema(BaseModel):
    """Smoothing rule and its per-channel divisors"""

    rule: SmoothingRule = Field(..., description="Smoothing rule")
    alpha: Decimal = Field(..., description="Migration strength")
    scales: DecimalList = Field(..., description="Per-channel divisor s")
    mu_x: Decimal = Field(default=0.0)
    sigma_x: Decimal = Field(default=0.0)
    mu_w: Decimal = Field(default=0.0)
    sigma_w: Decimal = Field(default=0.0)

    @classmethod
    def from_scales(cls, rule: SmoothingRule, scales: SmoothingScales) -> "SmoothingSchema":
        return cls(
            rule=rule,
            alpha=scales.alpha,
            scales=scales.s.tolist(),
            mu_x=scales.mu_x,
            sigma_x=scales.sigma_x,
            mu_w=scales.mu_w,
            sigma_w=scales.sigma_w,
        )

    def to_scales(self) -> SmoothingScales:
        return SmoothingScales(
            alpha=self.alpha,
            s=_vector(self.scales),
            mu_x=self.mu_x,
            sigma_x=self.sigma_x,
            mu_w=self.mu_w,
            sigma_w=self.sigma_w,
        )


class TruncationSchema(BaseModel):
    """Boxplot fences and the truncation threshold"""

    beta: Decimal = Field(..., description="Threshold coefficient")
    q1: Decimal = Field(..., description="First quartile of channel maxima")
    q3: Decimal = Field(..., description="Third quartile of channel maxima")
    iqr: Decimal = Field(..., description="Interquartile range")
    clipped_max: DecimalList = Field(..., description="Channel maxima after outlier suppression")
    threshold: Decimal = Field(..., description="Truncation threshold T")

    @classmethod
    def from_policy(cls, policy: TruncationPolicy) -> "TruncationSchema":
        return cls(
            beta=policy.beta,
            q1=policy.q1,
            q3=policy.q3,
            iqr=policy.iqr,
            clipped_max=policy.clipped_max.tolist(),
            threshold=policy.threshold,
        )

    def to_policy(self) -> TruncationPolicy:
        return TruncationPolicy(
            beta=self.beta,
            q1=self.q1,
            q3=self.q3,
            iqr=self.iqr,
            clipped_max=_vector(self.clipped_max),
            threshold=self.threshold,
        )


class StatsArtifact(ArtifactModel):
    """Output of the calibrate command for one layer"""

    layer: str = Field(..., description="Layer name")
    channels: int = Field(..., description="Input channels")
    sample_count: int = Field(..., description="Calibration rows seen")
    max_abs: DecimalList = Field(..., description="Per-channel max |X|")
    weight_max: DecimalList = Field(..., description="Per-row max |W|")
    smoothing: SmoothingSchema
    smoothed_max: DecimalList = Field(..., description="Per-channel max |X| after smoothing")
    truncation: TruncationSchema

    @classmethod
    def from_calibration(cls, layer: str, calibration: LayerCalibration, config: Dict[str, Any]) -> "StatsArtifact":
        return cls(
            config=config,
            layer=layer,
            channels=calibration.stats.channels,
            sample_count=calibration.stats.sample_count,
            max_abs=calibration.stats.max_abs.tolist(),
            weight_max=calibration.weight_maxes.tolist(),
            smoothing=SmoothingSchema.from_scales(calibration.rule, calibration.scales),
            smoothed_max=calibration.smoothed_maxes.tolist(),
            truncation=TruncationSchema.from_policy(calibration.truncation),
        )

    def to_calibration(self) -> LayerCalibration:
        return LayerCalibration(
            stats=ChannelStats(max_abs=_vector(self.max_abs), sample_count=self.sample_count),
            weight_maxes=_vector(self.weight_max),
            rule=self.smoothing.rule,
            scales=self.smoothing.to_scales(),
            smoothed_maxes=_vector(self.smoothed_max),
            truncation=self.truncation.to_policy(),
        )
