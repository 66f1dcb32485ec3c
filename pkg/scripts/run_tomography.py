#!/usr/bin/env python3
"""Run the desk-scale tomographic reconstruction study and write artifacts.

Usage: run_tomography.py [--config cfg.json] [--out DIR] [--seed N] [--full-scale]
"""

import sys

from mismatch_splitting.cli import main

if __name__ == "__main__":
    args = sys.argv[1:]
    if not any(a.startswith("--out") for a in args):
        args += ["--out", "out/tomo"]
    sys.exit(main(["tomo"] + args))
