"""
calibrate: channel statistics, smoothing scales and activation thresholds
"""

import argparse
import time

from flattenquant.cli.deps import emit, layer_json, load_calibration, load_model
from flattenquant.cli.router import CliCommand
from flattenquant.core.config import RunConfig
from flattenquant.core.logging import log_stage
from flattenquant.quant.pipeline import calibrate_layer
from flattenquant.schemas.common import write_json
from flattenquant.schemas.stats import StatsArtifact


def run(cfg: RunConfig, args: argparse.Namespace) -> int:
    model = load_model(cfg)
    thresholds = {}
    for name, weight in model.items():
        start = time.perf_counter()
        calibration = calibrate_layer(weight, load_calibration(cfg, name), cfg)
        write_json(StatsArtifact.from_calibration(name, calibration, cfg.resolved()), layer_json(cfg.stats_dir, name))
        log_stage("calibrate", name, time.perf_counter() - start, threshold=calibration.truncation.threshold)
        thresholds[name] = repr(calibration.truncation.threshold)

    emit({"command": "calibrate", "thresholds": thresholds, "stats_dir": str(cfg.stats_dir)})
    return 0


command = CliCommand(name="calibrate", help="Collect calibration statistics per layer", handler=run)
