"""
Schemas package for FlattenQuant artifacts
"""

from .common import SCHEMA_VERSION, ArtifactModel, Decimal, DecimalList, read_json, write_json
from .error import ErrorResponse
from .plan import FlattenPlanSchema, PlanArtifact
from .recipe import RecipeArtifact
from .report import LayerReportSchema, ReportArtifact
from .stats import SmoothingSchema, StatsArtifact, TruncationSchema
from .sweep import SweepArtifact, SweepRowSchema

__all__ = [
    # Common
    "SCHEMA_VERSION", "ArtifactModel", "Decimal", "DecimalList", "read_json", "write_json",

    # Errors
    "ErrorResponse",

    # Layer artifacts
    "StatsArtifact", "SmoothingSchema", "TruncationSchema",
    "PlanArtifact", "FlattenPlanSchema",
    "RecipeArtifact",

    # Model artifacts
    "ReportArtifact", "LayerReportSchema",
    "SweepArtifact", "SweepRowSchema",
]
