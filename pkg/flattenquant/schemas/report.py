"""
Model report artifact (report.json)
"""

from typing import Any, Dict, List

from pydantic import BaseModel, Field

from flattenquant.core.config import QuantMode
from flattenquant.quant.pipeline import LayerReport, ModelReport
from flattenquant.schemas.common import ArtifactModel, Decimal


class LayerReportSchema(BaseModel):
    name: str
    mode: QuantMode
    bits: int
    output_mse: Decimal
    sqnr_db: Decimal = Field(..., description="Capped at +-300 dB")
    cosine_sim: Decimal
    flatten_ratio_x: Decimal
    flatten_ratio_w: Decimal
    weight_bytes_quantized: int
    weight_bytes_int8: int
    weight_bytes_fp16: int
    bitops: int
    saturation_events: int

    @classmethod
    def from_report(cls, report: LayerReport) -> "LayerReportSchema":
        return cls(**vars(report))


class ReportArtifact(ArtifactModel):
    layers: List[LayerReportSchema]
    int4_fraction: Decimal = Field(..., description="Fraction of layers quantized to INT4")
    total_bytes: int = Field(..., description="Quantized weight bytes")
    total_bytes_int8: int
    total_bytes_fp16: int
    total_bitops: int
    mean_output_mse: Decimal
    mean_sqnr_db: Decimal
    mean_flatten_ratio: Decimal
    mean_flatten_ratio_w: Decimal
    saturation_events: int

    @classmethod
    def from_report(cls, report: ModelReport, config: Dict[str, Any]) -> "ReportArtifact":
        return cls(
            config=config,
            layers=[LayerReportSchema.from_report(layer) for layer in report.layers],
            int4_fraction=report.int4_fraction,
            total_bytes=report.total_bytes,
            total_bytes_int8=report.total_bytes_int8,
            total_bytes_fp16=report.total_bytes_fp16,
            total_bitops=report.total_bitops,
            mean_output_mse=report.mean_output_mse,
            mean_sqnr_db=report.mean_sqnr_db,
            mean_flatten_ratio=report.mean_flatten_ratio,
            mean_flatten_ratio_w=report.mean_flatten_ratio_w,
            saturation_events=report.saturation_events,
        )
