#!/usr/bin/env python3
"""Run the identity-map divergence demonstration and write artifacts.

Usage: run_counterexample.py [--config cfg.json] [--out DIR] [--seed N]
"""

import sys

from mismatch_splitting.cli import main

if __name__ == "__main__":
    args = sys.argv[1:]
    if not any(a.startswith("--out") for a in args):
        args += ["--out", "out/counterexample"]
    sys.exit(main(["counterexample"] + args))
