"""
Shared pieces of the JSON artifacts
"""

from pathlib import Path
from typing import Annotated, Any, Dict, List, Type, TypeVar, Union

from pydantic import BaseModel, BeforeValidator, Field, PlainSerializer, ValidationError

from flattenquant.core.errors import ArtifactError

SCHEMA_VERSION = 1


def _to_float(v: Any) -> float:
    return float(v)


def _to_decimal(v: float) -> str:
    return repr(float(v))


# Reals travel as shortest round-trip decimal strings
Decimal = Annotated[
    float,
    BeforeValidator(_to_float),
    PlainSerializer(_to_decimal, return_type=str, when_used="json"),
]
DecimalList = List[Decimal]


class ArtifactModel(BaseModel):
    """Base for every JSON artifact"""

    schema_version: int = Field(default=SCHEMA_VERSION, description="Artifact schema version")
    config: Dict[str, Any] = Field(default_factory=dict, description="Resolved run configuration")

    def to_json(self) -> str:
        return self.model_dump_json(indent=2) + "\n"


ArtifactT = TypeVar("ArtifactT", bound=BaseModel)


def write_json(model: BaseModel, path: Union[str, Path]) -> None:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    text = model.to_json() if isinstance(model, ArtifactModel) else model.model_dump_json(indent=2) + "\n"
    target.write_text(text, encoding="utf-8")


def read_json(cls: Type[ArtifactT], path: Union[str, Path]) -> ArtifactT:
    """
    Load and validate an artifact

    Raises:
        ArtifactError: If the file is missing, malformed or has another schema version
    """
    target = Path(path)
    if not target.is_file():
        raise ArtifactError(f"missing artifact {target}", {"path": str(target)})
    try:
        model = cls.model_validate_json(target.read_text(encoding="utf-8"))
    except ValidationError as e:
        raise ArtifactError(
            f"invalid artifact {target}",
            {"path": str(target), "errors": [err["msg"] for err in e.errors()]},
        ) from e
    version = getattr(model, "schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ArtifactError(
            f"unsupported schema version {version}", {"path": str(target), "schema_version": version}
        )
    return model
