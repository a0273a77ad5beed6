"""
infer: run quantized layers on an input archive keyed by layer name
"""

import argparse

from flattenquant.cli.deps import emit, load_archive, load_quantized_layers
from flattenquant.cli.router import CliCommand
from flattenquant.core.config import RunConfig
from flattenquant.core.errors import ArtifactError
from flattenquant.core.logging import log_saturation
from flattenquant.quant.pipeline import execute_layer
from flattenquant.quant.tensor_io import TensorArchive, write_archive


def run(cfg: RunConfig, args: argparse.Namespace) -> int:
    input_path = cfg.input_path or cfg.eval_path
    output_path = cfg.output_path or cfg.workdir / "output.fqta"
    layers = load_quantized_layers(cfg)
    inputs = load_archive(input_path)

    outputs = TensorArchive()
    saturation = {}
    for name, x in inputs.items():
        if name not in layers:
            raise ArtifactError(f"input tensor '{name}' matches no quantized layer", {"name": name})
        result = execute_layer(layers[name], x)
        log_saturation(name, result.saturation_events, layers[name].in_features)
        outputs.add(name, result.y)
        saturation[name] = result.saturation_events

    write_archive(outputs, output_path)
    emit({"command": "infer", "output": str(output_path), "saturation_events": saturation})
    return 0


command = CliCommand(name="infer", help="Run the quantized model on an input archive", handler=run)
