"""
gen: write a seeded synthetic model of outlier and bounded layers
"""

import argparse

from flattenquant.cli.deps import calib_path, emit
from flattenquant.cli.router import CliCommand
from flattenquant.core.config import RunConfig
from flattenquant.core.logging import get_logger
from flattenquant.quant.synthetic import generate_model
from flattenquant.quant.tensor_io import write_archive

logger = get_logger(__name__)


def run(cfg: RunConfig, args: argparse.Namespace) -> int:
    model = generate_model(cfg)
    write_archive(model.model_archive(), cfg.model_path)
    for name, archive in model.calib_archives().items():
        write_archive(archive, calib_path(cfg, name))
    write_archive(model.eval_archive(), cfg.eval_path)

    logger.info("Model written", workdir=str(cfg.workdir), layers=len(model.layers))
    emit({
        "command": "gen",
        "layers": [layer.name for layer in model.layers],
        "profiles": {layer.name: layer.profile.value for layer in model.layers},
        "outlier_channels": {layer.name: layer.outlier_channels.tolist() for layer in model.layers},
        "model": str(cfg.model_path),
    })
    return 0


command = CliCommand(name="gen", help="Generate a synthetic model, calibration and evaluation archives", handler=run)
