"""
report: error and cost metrics of the quantized model on the evaluation archive
"""

import argparse

from flattenquant.cli.deps import emit, load_archive, load_model, load_quantized_layers
from flattenquant.cli.router import CliCommand
from flattenquant.core.config import RunConfig
from flattenquant.quant.pipeline import evaluate_model
from flattenquant.schemas.common import write_json
from flattenquant.schemas.report import ReportArtifact


def run(cfg: RunConfig, args: argparse.Namespace) -> int:
    report = evaluate_model(load_quantized_layers(cfg), load_model(cfg), load_archive(cfg.input_path or cfg.eval_path))
    write_json(ReportArtifact.from_report(report, cfg.resolved()), cfg.report_path)
    emit({
        "command": "report",
        "report": str(cfg.report_path),
        "int4_fraction": repr(report.int4_fraction),
        "mean_output_mse": repr(report.mean_output_mse),
        "total_bytes": report.total_bytes,
        "total_bytes_fp16": report.total_bytes_fp16,
    })
    return 0


command = CliCommand(name="report", help="Write the model report", handler=run)
