"""
Seeded synthetic models with two layer profiles

Outlier layers: Gaussian activations with a log-uniform per-channel gain;
a fraction of the channels is magnified so that its calibration maximum is
a factor in [outlier_min, outlier_max] times the median maximum of the
ordinary channels. Weight rows carry the inverse gain, and planted rows are
damped by the fourth root of their factor.

Bounded layers: uniform activations and weights sharing a near-flat
per-channel gain, no planted channels. Their value histograms are flat with
hard edges, so they tolerate INT4 under the KL test where outlier layers do not.

Layer i is bounded when the running count floor(i * bounded_fraction)
steps up at i + 1, which interleaves the two profiles.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Dict, List

import numpy as np
import numpy.typing as npt

from flattenquant.core.config import RunConfig
from flattenquant.core.logging import get_logger
from flattenquant.quant.tensor_io import Matrix, TensorArchive

logger = get_logger(__name__)

GAIN_RANGE = 1.67
BOUNDED_GAIN = (0.9, 1.1)
PLANTED_WEIGHT_DAMPING = 0.25


class LayerProfile(str, Enum):
    OUTLIER = "outlier"
    BOUNDED = "bounded"


@dataclass(frozen=True)
class SyntheticLayer:
    name: str
    profile: LayerProfile
    weight: Matrix
    calib: List[Matrix]
    eval_x: Matrix
    outlier_channels: npt.NDArray[np.int64]
    factors: npt.NDArray[np.float64]


@dataclass(frozen=True)
class SyntheticModel:
    layers: List[SyntheticLayer]

    def model_archive(self) -> TensorArchive:
        return TensorArchive((layer.name, layer.weight) for layer in self.layers)

    def calib_archives(self) -> Dict[str, TensorArchive]:
        return {
            layer.name: TensorArchive((batch_name(k), x) for k, x in enumerate(layer.calib))
            for layer in self.layers
        }

    def eval_archive(self) -> TensorArchive:
        return TensorArchive((layer.name, layer.eval_x) for layer in self.layers)


def layer_name(index: int) -> str:
    return f"layer_{index:02d}"


def batch_name(index: int) -> str:
    return f"batch_{index}"


def outlier_count(channels: int, fraction: float) -> int:
    """At least one planted channel whenever the fraction is positive"""
    if fraction <= 0.0:
        return 0
    return min(channels, max(1, int(round(fraction * channels))))


def layer_profile(index: int, bounded_fraction: float) -> LayerProfile:
    """Layer 0 is always an outlier layer unless every layer is bounded"""
    if int(np.floor((index + 1) * bounded_fraction)) > int(np.floor(index * bounded_fraction)):
        return LayerProfile.BOUNDED
    return LayerProfile.OUTLIER


def _outlier_layer(rng: np.random.Generator, cfg: RunConfig, rows: int):
    channels, outputs = cfg.in_features, cfg.out_features
    calib_rows = cfg.tokens * cfg.batches

    log_range = np.log(GAIN_RANGE)
    gain = np.exp(rng.uniform(-log_range, log_range, size=channels))
    acts = rng.standard_normal((rows, channels)) * gain

    planted = np.sort(rng.choice(channels, size=outlier_count(channels, cfg.outlier_fraction), replace=False))
    factors = rng.uniform(cfg.outlier_min, cfg.outlier_max, size=planted.size)
    if planted.size:
        calib_part = np.abs(acts[:calib_rows])
        bulk = np.delete(calib_part.max(axis=0), planted)
        bulk_median = float(np.median(bulk)) if bulk.size else 1.0
        current = calib_part[:, planted].max(axis=0)
        acts[:, planted] *= factors * bulk_median / current

    weight = rng.standard_normal((channels, outputs)) / (gain[:, np.newaxis] * np.sqrt(channels))
    weight[planted] /= factors[:, np.newaxis] ** PLANTED_WEIGHT_DAMPING
    return acts, weight, planted, factors


def _bounded_layer(rng: np.random.Generator, cfg: RunConfig, rows: int):
    channels, outputs = cfg.in_features, cfg.out_features
    gain = rng.uniform(*BOUNDED_GAIN, size=channels)
    acts = rng.uniform(-1.0, 1.0, size=(rows, channels)) * gain
    weight = rng.uniform(-1.0, 1.0, size=(channels, outputs)) * gain[:, np.newaxis] * np.sqrt(3.0 / channels)
    return acts, weight, np.empty(0, dtype=np.int64), np.empty(0, dtype=np.float64)


def generate_layer(
    rng: np.random.Generator, name: str, cfg: RunConfig, profile: LayerProfile = LayerProfile.OUTLIER
) -> SyntheticLayer:
    calib_rows = cfg.tokens * cfg.batches
    rows = calib_rows + cfg.eval_tokens
    build = _bounded_layer if profile is LayerProfile.BOUNDED else _outlier_layer
    acts, weight, planted, factors = build(rng, cfg, rows)

    calib = [acts[k * cfg.tokens:(k + 1) * cfg.tokens] for k in range(cfg.batches)]
    return SyntheticLayer(
        name=name,
        profile=profile,
        weight=weight,
        calib=calib,
        eval_x=acts[calib_rows:],
        outlier_channels=planted.astype(np.int64),
        factors=factors,
    )


def generate_model(cfg: RunConfig) -> SyntheticModel:
    """Layers named layer_00, layer_01, ...; reproducible for a given seed"""
    rng = np.random.default_rng(cfg.seed)
    layers = [
        generate_layer(rng, layer_name(i), cfg, layer_profile(i, cfg.bounded_fraction))
        for i in range(cfg.layers)
    ]
    logger.info(
        "Synthetic model generated",
        layers=cfg.layers,
        bounded_layers=sum(layer.profile is LayerProfile.BOUNDED for layer in layers),
        in_features=cfg.in_features,
        out_features=cfg.out_features,
        planted_per_layer=outlier_count(cfg.in_features, cfg.outlier_fraction),
        seed=cfg.seed,
    )
    return SyntheticModel(layers=layers)
