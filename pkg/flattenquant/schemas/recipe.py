"""
Quantization recipe artifact (recipes/<layer>.json)

Holds every field of a quantized layer except the integer weight, which lives
in quantized.fqta under the layer name.
"""

from typing import Any, Dict, List, Optional

from pydantic import Field, field_validator

from flattenquant.core.config import QuantMode
from flattenquant.core.errors import ArtifactError
from flattenquant.quant.pipeline import LayerQuantConfig
from flattenquant.quant.quantize import QuantizedTensor, QuantParams
from flattenquant.quant.tensor_io import IntMatrix
from flattenquant.schemas.common import ArtifactModel, Decimal
from flattenquant.schemas.plan import FlattenPlanSchema
from flattenquant.schemas.stats import SmoothingSchema, TruncationSchema


class RecipeArtifact(ArtifactModel):
    layer: str = Field(..., description="Layer name")
    mode: QuantMode = Field(..., description="Quantization mode")
    bits: int = Field(..., description="Resolved bit width")
    alpha: Decimal
    beta: Decimal
    gamma: Decimal
    block: int
    bins: int
    smoothing: SmoothingSchema
    truncation: TruncationSchema
    truncation_w: TruncationSchema
    plan_x: FlattenPlanSchema
    plan_w: FlattenPlanSchema
    weight_scale: Decimal = Field(..., description="Per-tensor weight scale")
    weight_shape: List[int] = Field(..., description="Rows and columns of the flattened weight")
    act_scale: Decimal = Field(..., description="Static activation scale")
    kl_ratio_act: Optional[Decimal] = None
    kl_ratio_w: Optional[Decimal] = None
    gptq: bool = False
    damping: Optional[Decimal] = None
    gptq_objective: Optional[Decimal] = None
    rtn_objective: Optional[Decimal] = None

    @field_validator("bits")
    @classmethod
    def validate_bits(cls, v: int) -> int:
        if v not in (4, 8):
            raise ValueError("bits must be 4 or 8")
        return v

    @classmethod
    def from_layer(cls, layer: LayerQuantConfig, config: Dict[str, Any]) -> "RecipeArtifact":
        return cls(
            config=config,
            layer=layer.name,
            mode=layer.mode,
            bits=layer.bits,
            alpha=layer.alpha,
            beta=layer.beta,
            gamma=layer.gamma,
            block=layer.block,
            bins=layer.bins,
            smoothing=SmoothingSchema.from_scales(layer.smoothing, layer.smooth_scales),
            truncation=TruncationSchema.from_policy(layer.truncation),
            truncation_w=TruncationSchema.from_policy(layer.truncation_w),
            plan_x=FlattenPlanSchema.from_plan(layer.plan_x),
            plan_w=FlattenPlanSchema.from_plan(layer.plan_w),
            weight_scale=layer.weight_q.params.scale,
            weight_shape=list(layer.weight_q.q.shape),
            act_scale=layer.act_scale,
            kl_ratio_act=layer.kl_ratio_act,
            kl_ratio_w=layer.kl_ratio_w,
            gptq=layer.gptq,
            damping=layer.damping,
            gptq_objective=layer.gptq_objective,
            rtn_objective=layer.rtn_objective,
        )

    def to_layer(self, q: IntMatrix) -> LayerQuantConfig:
        """
        Rebuild the layer from this recipe and its stored integer weight

        Raises:
            ArtifactError: If the weight shape or range disagrees with the recipe
        """
        if list(q.shape) != self.weight_shape:
            raise ArtifactError(
                "quantized weight shape does not match recipe",
                {"layer": self.layer, "weight": list(q.shape), "recipe": self.weight_shape},
            )
        params = QuantParams(bits=self.bits, scale=self.weight_scale)
        if q.size and int(abs(q).max()) > params.qmax:
            raise ArtifactError("quantized weight exceeds its bit range", {"layer": self.layer, "bits": self.bits})
        return LayerQuantConfig(
            name=self.layer,
            mode=self.mode,
            alpha=self.alpha,
            beta=self.beta,
            gamma=self.gamma,
            block=self.block,
            bins=self.bins,
            bits=self.bits,
            smoothing=self.smoothing.rule,
            smooth_scales=self.smoothing.to_scales(),
            truncation=self.truncation.to_policy(),
            truncation_w=self.truncation_w.to_policy(),
            plan_x=self.plan_x.to_plan(),
            plan_w=self.plan_w.to_plan(),
            weight_q=QuantizedTensor(q=q, params=params),
            act_scale=self.act_scale,
            kl_ratio_act=self.kl_ratio_act,
            kl_ratio_w=self.kl_ratio_w,
            gptq=self.gptq,
            damping=self.damping,
            gptq_objective=self.gptq_objective,
            rtn_objective=self.rtn_objective,
        )
