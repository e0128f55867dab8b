#!/usr/bin/env python
"""Sweep the agreement tolerance and emit summary, traces and plot data."""
from __future__ import annotations

import sys
from pathlib import Path

from gadmm.cli import main

ROOT = Path(__file__).resolve().parent.parent

if __name__ == "__main__":
    sys.exit(
        main(
            [
                "sweep",
                "--config",
                str(ROOT / "configs" / "epsilon_sweep.toml"),
                "--out",
                str(ROOT / "out" / "epsilon_sweep"),
            ]
        )
    )
