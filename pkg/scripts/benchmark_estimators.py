#!/usr/bin/env python3
"""Time the auxiliary vs nested Monte Carlo estimators on the aphid model.

Builds (or reuses) desk-scale auxiliary models, then reports wall time per
expected-utility evaluation and the nested/auxiliary ratio as the inner
sample size grows.
"""

import argparse
import sys
from pathlib import Path

from auxdesign import coupled as cp
from auxdesign import models as md
from auxdesign import utility as ut
from auxdesign.design_space import equally_spaced
from auxdesign.emulator import load_mgp, save_mgp
from auxdesign.families import get_family


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n", type=int, default=15, help="design size")
    parser.add_argument("--b", type=int, default=1000, help="outer sample size")
    parser.add_argument("--m", type=int, default=100, help="emulator training rows")
    parser.add_argument("--n-sim", type=int, default=2000, help="draws per training row")
    parser.add_argument("--cache", type=Path, default=Path("runs/benchmark-cache"))
    args = parser.parse_args()

    model, prior, space = md.aphid_model()
    fam = get_family("negbin")
    args.cache.mkdir(parents=True, exist_ok=True)
    paths = {k: args.cache / f"aphid-{k}-{args.m}-{args.n_sim}.mgp"
             for k in ("cond", "marg")}
    if paths["cond"].exists():
        cond = cp.ConditionalAux(family=fam, emulator=load_mgp(paths["cond"]))
        marg = cp.MarginalAux(family=fam, emulator=load_mgp(paths["marg"]))
    else:
        print("building auxiliary models ...", file=sys.stderr)
        cond = cp.build_conditional(model, prior, space, fam, args.m, args.n_sim, 42)
        marg = cp.build_marginal(model, prior, space, fam, args.m, args.n_sim, 42)
        save_mgp(cond.emulator, paths["cond"])
        save_mgp(marg.emulator, paths["marg"])

    design = equally_spaced(space, args.n).matrix
    rows = ut.cost_benchmark(design, model, prior, cond, marg, b=args.b,
                             inner_sizes=(250, 500, 1000), l_train=200, seed=0)
    print(f"{'C':>6} {'aux (s)':>9} {'nested (s)':>11} {'ratio':>7}")
    for r in rows:
        print(f"{r['c']:>6} {r['aux_seconds']:>9.2f} {r['nested_seconds']:>11.2f} "
              f"{r['ratio']:>7.2f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
