#!/usr/bin/env python
"""Run the exact-agreement demo config and print where outputs landed."""
from __future__ import annotations

import sys
from pathlib import Path

from gadmm.cli import main

ROOT = Path(__file__).resolve().parent.parent

if __name__ == "__main__":
    sys.exit(
        main(
            [
                "run",
                "--config",
                str(ROOT / "configs" / "single_run.toml"),
                "--out",
                str(ROOT / "out" / "single_run"),
            ]
        )
    )
