"""
Command router for the FlattenQuant CLI
Collects the subcommands and builds the argument parser
"""

import argparse
from dataclasses import dataclass
from typing import Callable, List, Optional

from flattenquant.core.config import RunConfig, get_settings

Handler = Callable[[RunConfig, argparse.Namespace], int]
ArgumentHook = Callable[[argparse.ArgumentParser], None]


@dataclass(frozen=True)
class CliCommand:
    name: str
    help: str
    handler: Handler
    add_arguments: Optional[ArgumentHook] = None


class CommandRouter:
    """Ordered set of subcommands sharing the RunConfig flags"""

    def __init__(self) -> None:
        self._commands: List[CliCommand] = []

    def include(self, command: CliCommand) -> None:
        if any(c.name == command.name for c in self._commands):
            raise ValueError(f"command '{command.name}' registered twice")
        self._commands.append(command)

    @property
    def names(self) -> List[str]:
        return [c.name for c in self._commands]

    def build_parser(self, config_arguments: ArgumentHook) -> argparse.ArgumentParser:
        settings = get_settings()
        parser = argparse.ArgumentParser(
            prog=settings.app_name,
            description="Post-training quantization of linear layers with channel flattening",
        )
        parser.add_argument("--version", action="version", version=f"%(prog)s {settings.app_version}")
        parser.add_argument("--log-level", default=None, type=str.upper,
                            choices=["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"],
                            help="Overrides FLATTENQUANT_LOG_LEVEL")
        parser.add_argument("--log-format", default=None, choices=["json", "console"],
                            help="Overrides FLATTENQUANT_LOG_FORMAT")

        subparsers = parser.add_subparsers(dest="command", required=True)
        for command in self._commands:
            sub = subparsers.add_parser(command.name, help=command.help, description=command.help)
            config_arguments(sub)
            if command.add_arguments is not None:
                command.add_arguments(sub)
            sub.set_defaults(handler=command.handler)
        return parser
