"""
quantize: flatten, select bit widths and round weights from stats and plans
"""

import argparse
import time

from flattenquant.cli.deps import check_config, emit, layer_json, load_calibration, load_model
from flattenquant.cli.router import CliCommand
from flattenquant.core.config import RunConfig
from flattenquant.core.logging import log_layer_summary, log_stage
from flattenquant.quant.pipeline import finalize_layer
from flattenquant.quant.tensor_io import TensorArchive, write_archive
from flattenquant.schemas.common import read_json, write_json
from flattenquant.schemas.plan import PlanArtifact
from flattenquant.schemas.recipe import RecipeArtifact
from flattenquant.schemas.stats import StatsArtifact


def run(cfg: RunConfig, args: argparse.Namespace) -> int:
    model = load_model(cfg)
    quantized = TensorArchive()
    bits = {}
    for name, weight in model.items():
        start = time.perf_counter()
        stats_path = layer_json(cfg.stats_dir, name)
        plan_path = layer_json(cfg.plans_dir, name)
        stats = read_json(StatsArtifact, stats_path)
        plan = read_json(PlanArtifact, plan_path)
        check_config(stats, cfg, stats_path)
        check_config(plan, cfg, plan_path)

        layer = finalize_layer(name, weight, load_calibration(cfg, name), stats.to_calibration(), plan.to_plan(), cfg)
        quantized.add(name, layer.weight_q.q)
        write_json(RecipeArtifact.from_layer(layer, cfg.resolved()), layer_json(cfg.recipes_dir, name))
        log_stage("quantize", name, time.perf_counter() - start, bits=layer.bits)
        log_layer_summary(name, cfg.mode.value, layer.bits, {"padded_width": layer.plan_w.padded_width})
        bits[name] = layer.bits

    write_archive(quantized, cfg.quantized_path)
    emit({"command": "quantize", "mode": cfg.mode.value, "bits": bits, "quantized": str(cfg.quantized_path)})
    return 0


command = CliCommand(name="quantize", help="Quantize every layer from stored statistics and plans", handler=run)
