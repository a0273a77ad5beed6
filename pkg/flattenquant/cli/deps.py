"""
Shared CLI dependencies
RunConfig flags, artifact loading and consistency checks used by every command
"""

import argparse
import json
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic import ValidationError

from flattenquant.core.config import RunConfig
from flattenquant.core.errors import ArtifactError, InvalidParameterError
from flattenquant.core.logging import get_logger
from flattenquant.quant.pipeline import LayerQuantConfig
from flattenquant.quant.tensor_io import Matrix, TensorArchive, read_archive
from flattenquant.schemas.common import ArtifactModel, read_json
from flattenquant.schemas.recipe import RecipeArtifact

logger = get_logger(__name__)


def add_config_arguments(parser: argparse.ArgumentParser) -> None:
    """One flag per RunConfig field; absent flags keep the RunConfig default"""
    for name, field in RunConfig.model_fields.items():
        flag = "--" + name.replace("_", "-")
        annotation = field.annotation
        default = field.default.value if isinstance(field.default, Enum) else field.default
        kwargs: Dict[str, Any] = {
            "dest": name,
            "default": argparse.SUPPRESS,
            "help": f"{field.description} (default: {default})",
        }
        if annotation is bool:
            parser.add_argument(flag, action=argparse.BooleanOptionalAction, **kwargs)
        elif isinstance(annotation, type) and issubclass(annotation, Enum):
            parser.add_argument(flag, choices=[m.value for m in annotation], **kwargs)
        elif annotation in (Path, Optional[Path]):
            parser.add_argument(flag, type=Path, **kwargs)
        else:
            parser.add_argument(flag, type=annotation, **kwargs)


def build_run_config(args: argparse.Namespace) -> RunConfig:
    """
    RunConfig from parsed flags

    Raises:
        InvalidParameterError: If a flag value fails validation
    """
    values = {name: getattr(args, name) for name in RunConfig.model_fields if hasattr(args, name)}
    try:
        return RunConfig(**values)
    except ValidationError as e:
        errors = [f"{'.'.join(str(p) for p in err['loc']) or 'config'}: {err['msg']}" for err in e.errors()]
        raise InvalidParameterError("invalid configuration", {"errors": errors}) from e


def require_file(path: Path) -> Path:
    if not path.is_file():
        raise ArtifactError(f"missing artifact {path}", {"path": str(path)})
    return path


def load_archive(path: Path) -> TensorArchive:
    return read_archive(require_file(path))


def load_model(cfg: RunConfig) -> TensorArchive:
    model = load_archive(cfg.model_path)
    if len(model) == 0:
        raise ArtifactError("model archive holds no layers", {"path": str(cfg.model_path)})
    return model


def calib_path(cfg: RunConfig, layer: str) -> Path:
    return cfg.calib_dir / f"{layer}.fqta"


def load_calibration(cfg: RunConfig, layer: str) -> List[Matrix]:
    """Calibration batches of one layer, in archive order"""
    return list(load_archive(calib_path(cfg, layer)).values())


def layer_json(directory: Path, layer: str) -> Path:
    return directory / f"{layer}.json"


def check_config(artifact: ArtifactModel, cfg: RunConfig, path: Path) -> None:
    """
    Stage artifacts must come from a run with the same method settings

    Raises:
        ArtifactError: If any method field differs
    """
    expected = cfg.method()
    recorded = {key: artifact.config.get(key) for key in expected}
    if recorded != expected:
        differing = sorted(k for k in expected if recorded[k] != expected[k])
        raise ArtifactError(
            "artifact was produced with a different configuration",
            {"path": str(path), "fields": differing},
        )


def emit(summary: Dict[str, Any]) -> None:
    """Command summary on stdout"""
    print(json.dumps(summary, indent=2))


def load_quantized_layers(cfg: RunConfig) -> Dict[str, LayerQuantConfig]:
    """Quantized weights joined with their recipes, in archive order"""
    weights = load_archive(cfg.quantized_path)
    layers = {}
    for name, q in weights.items():
        path = layer_json(cfg.recipes_dir, name)
        recipe = read_json(RecipeArtifact, path)
        check_config(recipe, cfg, path)
        layers[name] = recipe.to_layer(q)
    logger.debug("Quantized layers loaded", layers=len(layers), path=str(cfg.quantized_path))
    return layers
