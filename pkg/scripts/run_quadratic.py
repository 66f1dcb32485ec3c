#!/usr/bin/env python3
"""Run the quadratic saddle-point study and write artifacts.

Usage: run_quadratic.py [--config cfg.json] [--out DIR] [--seed N]
"""

import sys

from mismatch_splitting.cli import main

if __name__ == "__main__":
    args = sys.argv[1:]
    if not any(a.startswith("--out") for a in args):
        args += ["--out", "out/quadratic"]
    sys.exit(main(["quadratic"] + args))
