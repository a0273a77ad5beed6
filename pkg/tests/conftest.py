"""
Shared fixtures
"""

import numpy as np
import pytest

from flattenquant.core.config import RunConfig
from flattenquant.core.logging import setup_logging
from flattenquant.quant.synthetic import generate_model


@pytest.fixture(autouse=True, scope="session")
def quiet_logging():
    setup_logging("WARNING", "console")


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(0)


@pytest.fixture
def small_cfg(tmp_path) -> RunConfig:
    return RunConfig(
        layers=3,
        in_features=64,
        out_features=32,
        tokens=32,
        batches=2,
        eval_tokens=32,
        outlier_fraction=0.05,
        workdir=tmp_path / "run",
    )


@pytest.fixture
def small_model(small_cfg):
    return generate_model(small_cfg)


def outlier_activations(rng: np.random.Generator, rows: int, cols: int, fraction: float = 0.02) -> np.ndarray:
    """Gaussian activations with a few channels magnified 20-100x"""
    x = rng.standard_normal((rows, cols))
    planted = rng.choice(cols, size=max(1, int(fraction * cols)), replace=False)
    x[:, planted] *= rng.uniform(20.0, 100.0, size=planted.size)
    return x


def grid_layer(rng: np.random.Generator, rows: int = 64, channels: int = 32, outputs: int = 16):
    """
    Activations on k * 0.25 and weights on k * 0.5 for k in [-7, 7]; every
    activation column and every weight row reaches magnitude 7
    """
    x = rng.integers(-7, 8, size=(rows, channels)).astype(np.float64)
    x[0, :] = 7.0
    w = rng.integers(-7, 8, size=(channels, outputs)).astype(np.float64)
    w[:, 0] = 7.0
    return x * 0.25, w * 0.5


@pytest.fixture(scope="session")
def reference_maps():
    """Weights, calibration and eval inputs of the default synthetic model"""
    model = generate_model(RunConfig())
    weights = {layer.name: layer.weight for layer in model.layers}
    calib = {layer.name: layer.calib for layer in model.layers}
    evals = {layer.name: layer.eval_x for layer in model.layers}
    return weights, calib, evals
