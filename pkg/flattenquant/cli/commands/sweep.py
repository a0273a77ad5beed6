"""
sweep: re-quantize the generated model across values of one parameter
"""

import argparse

from flattenquant.cli.deps import emit, load_archive, load_calibration, load_model
from flattenquant.cli.router import CliCommand
from flattenquant.core.config import RunConfig
from flattenquant.quant.sweep import SweepParam, parse_sweep_values, run_sweep
from flattenquant.schemas.common import write_json
from flattenquant.schemas.sweep import SweepArtifact


def add_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--param", required=True, choices=[p.value for p in SweepParam], help="Parameter to sweep")
    parser.add_argument("--values", required=True, nargs="+", help="Values; clip and smooth take on/off")


def run(cfg: RunConfig, args: argparse.Namespace) -> int:
    param = SweepParam(args.param)
    values = parse_sweep_values(param, args.values)
    model = load_model(cfg)
    calib = {name: load_calibration(cfg, name) for name in model}
    table = run_sweep(param, values, cfg, model, calib, load_archive(cfg.eval_path))

    artifact = SweepArtifact.from_table(table, cfg.resolved())
    json_path = cfg.workdir / "sweep.json"
    csv_path = cfg.workdir / "sweep.csv"
    write_json(artifact, json_path)
    csv_path.write_text(artifact.to_csv(), encoding="utf-8")
    emit({"command": "sweep", "param": param.value, "rows": len(table.rows), "json": str(json_path), "csv": str(csv_path)})
    return 0


command = CliCommand(name="sweep", help="Ablation sweep over one parameter", handler=run, add_arguments=add_arguments)
