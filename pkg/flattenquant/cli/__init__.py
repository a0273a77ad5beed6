"""
Command-line front end
"""

from flattenquant.cli.commands import calibrate, gen, infer, plan, quantize, report, sweep
from flattenquant.cli.router import CommandRouter

# Create main command router
cli_router = CommandRouter()

# Include subcommands in pipeline order
cli_router.include(gen.command)
cli_router.include(calibrate.command)
cli_router.include(plan.command)
cli_router.include(quantize.command)
cli_router.include(infer.command)
cli_router.include(report.command)
cli_router.include(sweep.command)
