"""
Flatten plan artifact (plans/<layer>.json)
"""

from typing import Any, Dict, List

import numpy as np
from pydantic import BaseModel, Field, model_validator

from flattenquant.quant.flatten import FlattenPlan
from flattenquant.quant.pipeline import LayerPlan
from flattenquant.schemas.common import ArtifactModel, Decimal
from flattenquant.schemas.stats import TruncationSchema


class FlattenPlanSchema(BaseModel):
    """One flatten stage; derived sizes are recorded for readers and checked on load"""

    threshold: Decimal = Field(..., description="Truncation threshold T")
    extensions: List[int] = Field(..., description="Extension slots E per channel")
    block: int = Field(..., description="Padding multiple")
    channels: int = Field(..., description="Channels before flattening")
    c_extend: int = Field(..., description="Total extension slots")
    padded_width: int = Field(..., description="Width after flattening and padding")
    flatten_ratio: Decimal = Field(..., description="c_extend / channels")

    @model_validator(mode="after")
    def validate_sizes(self) -> "FlattenPlanSchema":
        if len(self.extensions) != self.channels or sum(self.extensions) != self.c_extend:
            raise ValueError("plan sizes disagree with its extension counts")
        return self

    @classmethod
    def from_plan(cls, plan: FlattenPlan) -> "FlattenPlanSchema":
        return cls(
            threshold=plan.threshold,
            extensions=plan.extensions.tolist(),
            block=plan.block,
            channels=plan.channels,
            c_extend=plan.c_extend,
            padded_width=plan.padded_width,
            flatten_ratio=plan.flatten_ratio,
        )

    def to_plan(self) -> FlattenPlan:
        extensions = np.array(self.extensions, dtype=np.int64)
        extensions.setflags(write=False)
        return FlattenPlan(threshold=self.threshold, extensions=extensions, block=self.block)


class PlanArtifact(ArtifactModel):
    """Output of the plan command for one layer"""

    layer: str = Field(..., description="Layer name")
    activation: FlattenPlanSchema
    weight_truncation: TruncationSchema
    weight: FlattenPlanSchema

    @classmethod
    def from_plan(cls, layer: str, plan: LayerPlan, config: Dict[str, Any]) -> "PlanArtifact":
        return cls(
            config=config,
            layer=layer,
            activation=FlattenPlanSchema.from_plan(plan.plan_x),
            weight_truncation=TruncationSchema.from_policy(plan.truncation_w),
            weight=FlattenPlanSchema.from_plan(plan.plan_w),
        )

    def to_plan(self) -> LayerPlan:
        return LayerPlan(
            plan_x=self.activation.to_plan(),
            truncation_w=self.weight_truncation.to_policy(),
            plan_w=self.weight.to_plan(),
        )
