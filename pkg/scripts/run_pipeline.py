#!/usr/bin/env python3
"""
End-to-end run of the FlattenQuant CLI
gen -> calibrate -> plan -> quantize -> infer -> report, each as a subprocess.
Extra arguments are passed to every stage (e.g. --mode o3 --workdir runs/o3).
"""

import os
import subprocess
import sys
from pathlib import Path
from typing import List

# Add the project root to Python path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from flattenquant.core.logging import get_logger, setup_logging  # noqa: E402

logger = get_logger(__name__)

STAGES = ["gen", "calibrate", "plan", "quantize", "infer", "report"]


def run_stage(stage: str, extra: List[str]) -> bool:
    """Run one CLI stage"""
    try:
        logger.info("Running stage", stage=stage)
        result = subprocess.run(
            [sys.executable, "-m", "flattenquant", stage, *extra],
            capture_output=True,
            text=True,
            check=True,
            cwd=project_root,
            env={**os.environ, "PYTHONPATH": str(project_root)},
        )
        logger.info("Stage completed", stage=stage, summary=result.stdout.strip())
        return True

    except subprocess.CalledProcessError as e:
        logger.error("Stage failed", stage=stage, exit_code=e.returncode, error_output=e.stderr.strip())
        return False


def main() -> None:
    """Main pipeline function"""
    setup_logging()
    extra = sys.argv[1:]
    for stage in STAGES:
        if not run_stage(stage, extra):
            logger.error("Pipeline aborted", stage=stage)
            sys.exit(1)
    logger.info("Pipeline completed successfully")


if __name__ == "__main__":
    main()
