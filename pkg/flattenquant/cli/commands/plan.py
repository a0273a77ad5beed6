"""
plan: activation and weight flatten plans from stored statistics
"""

import argparse
import time

from flattenquant.cli.deps import check_config, emit, layer_json, load_model
from flattenquant.cli.router import CliCommand
from flattenquant.core.config import RunConfig
from flattenquant.core.logging import log_stage
from flattenquant.quant.pipeline import plan_layer
from flattenquant.schemas.common import read_json, write_json
from flattenquant.schemas.plan import PlanArtifact
from flattenquant.schemas.stats import StatsArtifact


def run(cfg: RunConfig, args: argparse.Namespace) -> int:
    model = load_model(cfg)
    ratios = {}
    for name, weight in model.items():
        start = time.perf_counter()
        stats_path = layer_json(cfg.stats_dir, name)
        stats = read_json(StatsArtifact, stats_path)
        check_config(stats, cfg, stats_path)

        plan = plan_layer(weight, stats.to_calibration(), cfg)
        write_json(PlanArtifact.from_plan(name, plan, cfg.resolved()), layer_json(cfg.plans_dir, name))
        log_stage("plan", name, time.perf_counter() - start, padded_width=plan.plan_w.padded_width)
        ratios[name] = repr(plan.plan_x.flatten_ratio)

    emit({"command": "plan", "flatten_ratio_x": ratios, "plans_dir": str(cfg.plans_dir)})
    return 0


command = CliCommand(name="plan", help="Build flatten plans from calibration statistics", handler=run)
