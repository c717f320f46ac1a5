#!/usr/bin/env python3
"""Full compartmental experiment: build, diagnose, search, evaluate.

Reproduction-scale budgets live in configs/compartmental_sig.toml; pass
--quick for a desk-scale variant that finishes in minutes.
"""

import argparse
import sys
import tempfile
from pathlib import Path

from auxdesign.cli import main as cli_main

ROOT = Path(__file__).resolve().parents[1]

QUICK = """
schema = 1
[experiment]
model = "compartmental"
family = "normal"
utility = "sig"
seed = 1
out = "runs/compartmental_sig_quick"
[design]
n = [15]
min_spacing = 0.25
[training]
m = 100
n_sim = 2000
l = 200
m0 = 100
[ace]
q = 20
b_fit = 1000
b_test = 2000
iterations = 5
restarts = 2
[evaluate]
b = 1000
c = 1000
replicates = 5
evaluator = "nested-exact"
"""


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--quick", action="store_true", help="desk-scale budgets")
    parser.add_argument("--out", default=None)
    parser.add_argument("--threads", type=int, default=None)
    args = parser.parse_args()
    if args.quick:
        cfg = Path(tempfile.mkstemp(suffix=".toml")[1])
        cfg.write_text(QUICK)
    else:
        cfg = ROOT / "configs" / "compartmental_sig.toml"
    argv = ["run", str(cfg)]
    if args.out:
        argv += ["--out", args.out]
    if args.threads:
        argv += ["--threads", str(args.threads)]
    return cli_main(argv)


if __name__ == "__main__":
    sys.exit(main())
