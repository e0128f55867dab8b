#!/usr/bin/env python
"""Emit solvability diagnostics for the agreement-tolerance instance."""
from __future__ import annotations

import sys
from pathlib import Path

from gadmm.cli import main

ROOT = Path(__file__).resolve().parent.parent

if __name__ == "__main__":
    sys.exit(
        main(
            [
                "diagnose",
                "--config",
                str(ROOT / "configs" / "epsilon_sweep.toml"),
                "--out",
                str(ROOT / "out" / "diagnostics"),
            ]
        )
    )
