"""
Configuration management for FlattenQuant
Process-level settings come from pydantic-settings; every result-affecting knob
lives in RunConfig and is set from command-line flags only
"""

from enum import Enum
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class QuantMode(str, Enum):
    """Quantization modes: the FlattenQuant levels plus the two reference methods"""

    O1 = "o1"
    O2 = "o2"
    O3 = "o3"
    W8A8 = "w8a8"
    SMOOTHQUANT = "smoothquant"

    @property
    def is_flatten(self) -> bool:
        return self in (QuantMode.O1, QuantMode.O2, QuantMode.O3)

    @property
    def mixes_bits(self) -> bool:
        return self in (QuantMode.O2, QuantMode.O3)

    @property
    def uses_gptq(self) -> bool:
        return self is QuantMode.O3


class SmoothingRule(str, Enum):
    """Channel smoothing rule applied before thresholding"""

    FLATTEN = "flatten"
    SMOOTHQUANT = "smoothquant"
    NONE = "none"


class HistogramRule(str, Enum):
    """How the b-bit reference histogram of the KL bit-width test is built"""

    EXPANDED = "expanded"
    DEQUANTIZED = "dequantized"


class Settings(BaseSettings):
    """Process settings loaded from FLATTENQUANT_* environment variables"""

    model_config = SettingsConfigDict(
        env_prefix="FLATTENQUANT_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    # Application Settings
    app_name: str = Field(default="flattenquant")
    app_version: str = Field(default="1.0.0")

    # Logging Settings
    log_level: str = Field(default="WARNING")
    log_format: str = Field(default="json")
    log_file_path: Optional[str] = Field(default=None)

    @field_validator("log_level")
    @classmethod
    def validate_log_level(cls, v: str) -> str:
        """Validate log level is one of the allowed values"""
        allowed_levels = ["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]
        if v.upper() not in allowed_levels:
            raise ValueError(f"log level must be one of {allowed_levels}")
        return v.upper()

    @field_validator("log_format")
    @classmethod
    def validate_log_format(cls, v: str) -> str:
        """Validate log format is json or console"""
        if v.lower() not in ("json", "console"):
            raise ValueError("log format must be 'json' or 'console'")
        return v.lower()


PATH_FIELDS = {"workdir", "input_path", "output_path"}

# Fields that change quantization results; stage artifacts must agree on them
METHOD_FIELDS = {
    "mode", "alpha", "beta", "gamma", "block", "bins", "damping",
    "gptq_block_size", "clip_outliers", "smoothing", "kl_histogram",
}


@lru_cache
def get_settings() -> Settings:
    """Get the cached settings instance"""
    return Settings()


class RunConfig(BaseModel):
    """
    Resolved configuration of one CLI run

    Defaults for alpha, beta, gamma and block follow the published setup;
    bins, damping and seed are toolkit defaults.
    """

    model_config = ConfigDict(extra="forbid", use_enum_values=False)

    # Method
    mode: QuantMode = Field(default=QuantMode.O2, description="Quantization mode")
    alpha: float = Field(default=0.5, description="Migration strength of channel smoothing")
    beta: float = Field(default=1.3, description="Truncation threshold coefficient")
    gamma: float = Field(default=1.86, description="KL-ratio tolerance for INT4 layers")
    block: int = Field(default=32, description="Channel padding multiple")
    bins: int = Field(default=2048, description="Histogram bins for KL divergence")
    damping: float = Field(default=0.01, description="GPTQ damping, fraction of mean Hessian diagonal")
    gptq_block_size: int = Field(default=128, description="GPTQ lazy-update block size")
    clip_outliers: bool = Field(default=True, description="Boxplot outlier-channel suppression")
    smoothing: SmoothingRule = Field(default=SmoothingRule.FLATTEN, description="Channel smoothing rule")
    kl_histogram: HistogramRule = Field(
        default=HistogramRule.EXPANDED, description="Reference histogram construction for the KL test"
    )
    seed: int = Field(default=42, description="Seed for synthetic generation")
    workers: int = Field(default=1, description="Layers processed concurrently")

    # Synthetic generator
    layers: int = Field(default=8, description="Number of synthetic layers")
    in_features: int = Field(default=256, description="Input channels of generated layers")
    out_features: int = Field(default=128, description="Output channels of generated layers")
    tokens: int = Field(default=64, description="Rows per calibration batch")
    batches: int = Field(default=2, description="Calibration batches per layer")
    eval_tokens: int = Field(default=64, description="Rows of the held-out evaluation matrix")
    outlier_fraction: float = Field(default=0.01, description="Fraction of activation channels with outliers")
    outlier_min: float = Field(default=20.0, description="Smallest outlier magnification")
    outlier_max: float = Field(default=100.0, description="Largest outlier magnification")
    bounded_fraction: float = Field(default=0.5, description="Fraction of layers with bounded, outlier-free tensors")

    # Paths
    workdir: Path = Field(default=Path("fq_run"), description="Directory holding all artifacts")
    input_path: Optional[Path] = Field(default=None, description="Input archive for infer")
    output_path: Optional[Path] = Field(default=None, description="Output archive for infer")

    @field_validator("alpha")
    @classmethod
    def validate_alpha(cls, v: float) -> float:
        if not 0.0 <= v <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        return v

    @field_validator("beta", "damping")
    @classmethod
    def validate_positive(cls, v: float) -> float:
        if not v > 0.0:
            raise ValueError("value must be positive")
        return v

    @field_validator("gamma")
    @classmethod
    def validate_gamma(cls, v: float) -> float:
        if v < 0.0:
            raise ValueError("gamma must be non-negative")
        return v

    @field_validator("bins")
    @classmethod
    def validate_bins(cls, v: int) -> int:
        if v < 16:
            raise ValueError("bins must be at least 16")
        return v

    @field_validator("block", "gptq_block_size", "workers", "layers", "in_features",
                     "out_features", "tokens", "batches", "eval_tokens")
    @classmethod
    def validate_count(cls, v: int) -> int:
        if v < 1:
            raise ValueError("count must be at least 1")
        return v

    @field_validator("outlier_fraction", "bounded_fraction")
    @classmethod
    def validate_fraction(cls, v: float) -> float:
        if not 0.0 <= v <= 1.0:
            raise ValueError("fraction must lie in [0, 1]")
        return v

    @model_validator(mode="after")
    def validate_outlier_range(self) -> "RunConfig":
        if not 0.0 < self.outlier_min <= self.outlier_max:
            raise ValueError("outlier range must satisfy 0 < min <= max")
        return self

    def resolved(self) -> Dict[str, Any]:
        """JSON-ready dump recorded in every artifact; paths are left out"""
        return self.model_dump(mode="json", exclude=PATH_FIELDS)

    def method(self) -> Dict[str, Any]:
        return self.model_dump(mode="json", include=METHOD_FIELDS)

    # Artifact layout under workdir
    @property
    def model_path(self) -> Path:
        return self.workdir / "model.fqta"

    @property
    def calib_dir(self) -> Path:
        return self.workdir / "calib"

    @property
    def eval_path(self) -> Path:
        return self.workdir / "eval.fqta"

    @property
    def stats_dir(self) -> Path:
        return self.workdir / "stats"

    @property
    def plans_dir(self) -> Path:
        return self.workdir / "plans"

    @property
    def recipes_dir(self) -> Path:
        return self.workdir / "recipes"

    @property
    def quantized_path(self) -> Path:
        return self.workdir / "quantized.fqta"

    @property
    def report_path(self) -> Path:
        return self.workdir / "report.json"
