"""Pipeline orchestration and command-line interface.

Subcommands: ``build-aux``, ``diagnose``, ``design``, ``evaluate``,
``benchmark``, and ``run`` (the full pipeline).  All artifacts are plain CSV
or JSON under the configured output directory; numeric CSV output uses
17-significant-digit formatting so reruns are byte-identical.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import coupled as cp
from . import diagnostics as dg
from . import models as md
from . import utility as ut
from .ace import ace_optimize
from .config import ConfigError, ExperimentConfig, load_config
from .design_space import (
    Design,
    DesignSpace,
    design_to_csv,
    equally_spaced,
    load_design_csv,
    maximin_lhd,
)
from .emulator import load_mgp, save_mgp
from .rng import derive_seed

__all__ = ["main", "Problem", "build_problem", "stage_build_aux", "stage_diagnose",
           "stage_design", "stage_evaluate", "stage_benchmark", "run_pipeline"]


def _fmt(x) -> str:
    return f"{float(x):.17g}"


def _write_csv(path: Path, header: list[str], rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(v if isinstance(v, str) else _fmt(v) for v in row) + "\n")


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


class Problem:
    """Everything the pipeline stages need, resolved from a config."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        from .families import get_family

        self.family = get_family(cfg.family)
        kwargs = {}
        if cfg.window is not None:
            kwargs["window"] = cfg.window
        if cfg.models[0] == "compartmental" and cfg.min_spacing is not None:
            kwargs["min_spacing"] = cfg.min_spacing
        if cfg.is_model_comparison:
            self.model_set, self.space = md.epidemic_model_set(**kwargs) \
                if set(cfg.models) <= set(md.MODEL_KEYS[3:]) else (None, None)
            if self.model_set is None:
                raise ConfigError("model comparison is supported for the epidemic set")
            keep = {}
            for mk_label, key in zip(sorted(self.model_set.models), md.MODEL_KEYS[3:]):
                if key in cfg.models:
                    keep[mk_label] = self.model_set.models[mk_label]
            if len(keep) != len(cfg.models):
                raise ConfigError("unknown epidemic model key in models list")
            probs = {m: 1.0 / len(keep) for m in keep}
            self.model_set = md.ModelSet(keep, probs)
            self.model = self.prior = None
        else:
            self.model, self.prior, self.space, _ = md.get_model(cfg.models[0], **kwargs)
            self.model_set = None
        if cfg.min_spacing is not None and cfg.models[0] != "compartmental":
            from .design_space import MinSpacing

            self.space = DesignSpace(self.space.bounds,
                                     constraints=(MinSpacing(0, cfg.min_spacing),))

    @property
    def is_model_comparison(self) -> bool:
        return self.model_set is not None


def build_problem(cfg: ExperimentConfig) -> Problem:
    return Problem(cfg)


def _training_hash(cfg: ExperimentConfig) -> str:
    blob = json.dumps(cfg.training_key(), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def stage_build_aux(problem: Problem, force: bool = False):
    """Build (or load from cache) the off-line auxiliary models."""
    cfg = problem.cfg
    tag = _training_hash(cfg)
    emu_dir = cfg.out / "emulators"
    emu_dir.mkdir(parents=True, exist_ok=True)
    cond = marg = None
    if problem.is_model_comparison:
        marg_path = emu_dir / f"marginal-see-{tag}.mgp"
        if marg_path.exists() and not force:
            emu = load_mgp(marg_path)
            any_model = problem.model_set.models[problem.model_set.labels[0]][0]
            marg = cp.MarginalAux(family=problem.family, emulator=emu,
                                  response_bound=any_model.response_bound,
                                  model_labels=tuple(problem.model_set.labels))
        else:
            marg = cp.build_marginal_modelset(problem.model_set, problem.space,
                                              problem.family, cfg.m, cfg.n_sim, cfg.seed)
            save_mgp(marg.emulator, marg_path)
        return None, marg

    cond_path = emu_dir / f"conditional-{tag}.mgp"
    marg_path = emu_dir / f"marginal-{tag}.mgp"
    if cond_path.exists() and not force:
        cond = cp.ConditionalAux(family=problem.family, emulator=load_mgp(cond_path),
                                 response_bound=problem.model.response_bound)
    else:
        cond = cp.build_conditional(problem.model, problem.prior, problem.space,
                                    problem.family, cfg.m, cfg.n_sim, cfg.seed)
        save_mgp(cond.emulator, cond_path)
    if marg_path.exists() and not force:
        marg = cp.MarginalAux(family=problem.family, emulator=load_mgp(marg_path),
                              response_bound=problem.model.response_bound)
    else:
        marg = cp.build_marginal(problem.model, problem.prior, problem.space,
                                 problem.family, cfg.m, cfg.n_sim, cfg.seed)
        save_mgp(marg.emulator, marg_path)
    return cond, marg


def _write_report(out_dir: Path, name: str, report) -> dict:
    csv_path = out_dir / f"{name}.csv"
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    csv_path.write_text(report.to_csv())
    _write_json(out_dir / f"{name}.json", report.summary())
    return report.summary()


def _write_trajectories(problem: Problem, out_dir: Path, count=200, grid_size=100):
    cfg = problem.cfg
    grid = np.linspace(problem.space.lo[0], problem.space.hi[0], grid_size)[1:]
    rows = []
    if problem.is_model_comparison:
        items = [(str(mk), *problem.model_set.models[mk]) for mk in problem.model_set.labels]
        per = max(count // len(items), 1)
    else:
        items = [("", problem.model, problem.prior)]
        per = count
    for label, model, prior in items:
        rng_seed = derive_seed(cfg.seed, f"trajectories-{label}")
        thetas = prior.sample(per, np.random.default_rng(rng_seed))
        if isinstance(model, md.MarkovJumpModel) and model.design_dim == 1:
            traj = md.simulate_trajectories(model, thetas, [grid[-1]], grid, rng_seed)
        else:
            traj = np.empty((per, grid.size))
            for g, t in enumerate(grid):
                traj[:, g] = model.simulate_rows(
                    thetas, np.full((per, 1), t), derive_seed(rng_seed, f"g{g}")
                )
        for i in range(per):
            for g, t in enumerate(grid):
                rows.append((f"{label}:{i}" if label else str(i), t, traj[i, g]))
    _write_csv(out_dir / "trajectories.csv", ["sample", "time", "value"],
               [(s, _fmt(t), _fmt(v)) for s, t, v in rows])


def stage_diagnose(problem: Problem, cond, marg, force: bool = False) -> dict:
    cfg = problem.cfg
    out_dir = cfg.out / "diagnostics"
    summaries = {}
    seed = derive_seed(cfg.seed, "diagnostics")
    if cond is not None:
        rep = dg.assess_conditional(cond, problem.model, problem.prior, problem.space,
                                    cfg.m0, cfg.n_sim, seed)
        summaries["conditional"] = _write_report(out_dir, "conditional", rep)
    if problem.is_model_comparison:
        rep = dg.assess_marginal(marg, None, None, problem.space, cfg.m0, cfg.n_sim,
                                 seed, model_set=problem.model_set)
    else:
        rep = dg.assess_marginal(marg, problem.model, problem.prior, problem.space,
                                 cfg.m0, cfg.n_sim, seed)
    summaries["marginal"] = _write_report(out_dir, "marginal", rep)
    for n in cfg.n_list:
        if problem.is_model_comparison:
            rep = dg.assess_coupled(marg, problem.space, None, None, cfg.m0, cfg.l, n,
                                    seed, model_set=problem.model_set)
        else:
            rep = dg.assess_coupled(marg, problem.space, problem.prior, problem.model,
                                    cfg.m0, cfg.l, n, seed)
        summaries[f"coupled_n{n}"] = _write_report(out_dir, f"coupled_n{n}", rep)
    _write_trajectories(problem, out_dir)
    return summaries


def make_evaluator(problem: Problem, cond, marg, copula_form="standard"):
    """Auxiliary-MC expected-utility evaluator used by ACE and `evaluate`."""
    cfg = problem.cfg
    if problem.is_model_comparison:
        def evaluate(mat, b, seed):
            return ut.expected_utility_models(
                cfg.utility, mat, problem.model_set, marg,
                ut.EvalBudget(b=b, l=cfg.l, seed=seed),
            )
    else:
        def evaluate(mat, b, seed):
            return ut.expected_utility_aux(
                cfg.utility, mat, problem.model, problem.prior, cond, marg,
                ut.EvalBudget(b=b, l=cfg.l, seed=seed), copula_form=copula_form,
            )
    return evaluate


def _baseline_design(problem: Problem, n: int) -> Design:
    cfg = problem.cfg
    if cfg.baseline == "equally_spaced" and problem.space.w == 1:
        return equally_spaced(problem.space, n)
    return maximin_lhd(problem.space, n, restarts=100,
                       seed=derive_seed(cfg.seed, f"baseline-{n}"))


def stage_design(problem: Problem, cond, marg, force: bool = False) -> dict:
    cfg = problem.cfg
    designs_dir = cfg.out / "designs"
    traces_dir = cfg.out / "traces"
    designs_dir.mkdir(parents=True, exist_ok=True)
    traces_dir.mkdir(parents=True, exist_ok=True)
    evaluate = make_evaluator(problem, cond, marg, cfg.copula_form)
    results = {}
    for n in cfg.n_list:
        ace_path = designs_dir / f"ace_n{n}.csv"
        base_path = designs_dir / f"baseline_n{n}.csv"
        base = _baseline_design(problem, n)
        base_path.write_text(design_to_csv(base))
        if ace_path.exists() and not force:
            best = load_design_csv(ace_path)
        else:
            best, trace = ace_optimize(evaluate, problem.space, n, cfg.ace,
                                       derive_seed(cfg.seed, f"ace-n{n}"))
            ace_path.write_text(design_to_csv(best))
            _write_csv(
                traces_dir / f"ace_n{n}.csv",
                ["restart", "iteration", "run", "coord", "proposed", "p_star",
                 "accepted", "emulated_max"],
                [(s.restart, s.iteration, s.run, s.coord, s.proposed, s.p_star,
                  float(s.accepted), s.emulated_max) for s in trace.steps],
            )
        results[n] = {"ace": best, "baseline": base}
    return results


def _evaluator_fn(problem: Problem, cond, marg, evaluator: str):
    cfg = problem.cfg
    if problem.is_model_comparison:
        if evaluator != "aux":
            raise ConfigError(
                "nested evaluators need a per-model conditional auxiliary "
                "likelihood; model-comparison runs support evaluator='aux'"
            )
        return make_evaluator(problem, cond, marg, cfg.copula_form)
    if evaluator == "aux":
        return make_evaluator(problem, cond, marg, cfg.copula_form)
    if evaluator == "nested-aux":
        source = ut.AuxLikelihoodSource(cond)
    elif evaluator == "nested-exact":
        if getattr(problem.model, "logdensity", None) is None:
            raise ConfigError(
                f"model {problem.model.name!r} has an intractable likelihood; "
                "nested-exact evaluation is refused"
            )
        source = ut.ExactLikelihoodSource(problem.model)
    else:
        raise ConfigError(f"unknown evaluator {evaluator!r}")

    def evaluate(mat, b, seed):
        return ut.expected_utility_nested(
            cfg.utility, mat, problem.model, problem.prior, source,
            ut.EvalBudget(b=b, c=cfg.eval_c, l=cfg.l, seed=seed),
        )

    return evaluate


def stage_evaluate(problem: Problem, cond, marg, designs: dict,
                   evaluator: str | None = None, replicates: int | None = None) -> list[dict]:
    """Replicated expected-utility estimates for each named design."""
    cfg = problem.cfg
    evaluator = evaluator or cfg.evaluator
    replicates = replicates or cfg.eval_replicates
    fn = _evaluator_fn(problem, cond, marg, evaluator)
    out_rows, trace_rows, table = [], [], []
    for n, named in sorted(designs.items()):
        for name, design in sorted(named.items()):
            estimates = []
            for r in range(replicates):
                seed = derive_seed(cfg.seed, f"evaluate-{evaluator}-n{n}-{name}-rep{r}")
                ev = fn(design.matrix, cfg.eval_b, seed)
                estimates.append(ev.estimate)
                table.append((name, n, evaluator, r, ev.estimate))
                if r == 0:
                    draws = ev.draws if ev.draws is not None else np.full(len(ev.samples), np.nan)
                    draws = np.atleast_2d(np.asarray(draws, dtype=float))
                    if draws.shape[0] != len(ev.samples):
                        draws = draws.T
                    for i in range(len(ev.samples)):
                        trace_rows.append((
                            name, n, i,
                            " ".join(_fmt(v) for v in np.atleast_1d(draws[i])),
                            ev.loglik_cond[i] if ev.loglik_cond is not None else np.nan,
                            ev.loglik_marg[i] if ev.loglik_marg is not None else np.nan,
                            ev.samples[i],
                        ))
            est = np.asarray(estimates)
            out_rows.append({
                "design": name, "n": n, "evaluator": evaluator,
                "replicates": replicates, "mean": float(est.mean()),
                "se": float(est.std(ddof=1) / np.sqrt(len(est))) if len(est) > 1 else None,
            })
    ev_dir = cfg.out / "evaluations"
    _write_csv(ev_dir / f"estimates_{evaluator}.csv",
               ["design", "n", "evaluator", "replicate", "estimate"],
               [(d, _fmt(n), e, _fmt(r), _fmt(x)) for d, n, e, r, x in table])
    _write_csv(ev_dir / f"trace_{evaluator}.csv",
               ["design", "n", "i", "draw", "loglik_cond", "loglik_marg", "u_i"],
               [(d, _fmt(n), _fmt(i), th, _fmt(lc), _fmt(lm), _fmt(u))
                for d, n, i, th, lc, lm, u in trace_rows])
    _write_json(ev_dir / f"summary_{evaluator}.json", {"rows": out_rows})
    return out_rows


def stage_benchmark(problem: Problem, cond, marg) -> list[dict]:
    cfg = problem.cfg
    if problem.is_model_comparison:
        raise ConfigError("the cost benchmark compares estimators for one model")
    n = cfg.n_list[0]
    design = _baseline_design(problem, n)
    rows = ut.cost_benchmark(design.matrix, problem.model, problem.prior, cond, marg,
                             b=cfg.eval_b, l_train=cfg.l,
                             seed=derive_seed(cfg.seed, "benchmark"))
    _write_csv(cfg.out / "benchmark.csv",
               ["b", "c", "n", "aux_seconds", "nested_seconds", "ratio"],
               [(r["b"], r["c"], r["n"], r["aux_seconds"], r["nested_seconds"], r["ratio"])
                for r in rows])
    return rows


def run_pipeline(cfg: ExperimentConfig, force: bool = False) -> int:
    t_start = time.perf_counter()
    problem = build_problem(cfg)
    timings = {}

    t0 = time.perf_counter()
    cond, marg = stage_build_aux(problem, force)
    timings["build_aux"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    diag = stage_diagnose(problem, cond, marg, force)
    timings["diagnose"] = time.perf_counter() - t0
    inadequate = [k for k, v in diag.items() if v["verdict"] != "adequate"]
    if inadequate and not force:
        print(f"adequacy gate failed for: {', '.join(inadequate)} "
              "(rerun with --force to continue)", file=sys.stderr)
        _write_json(cfg.out / "summary.json", {"diagnostics": diag, "gate": "failed"})
        return 3

    t0 = time.perf_counter()
    designs = stage_design(problem, cond, marg, force)
    timings["design"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    evals = stage_evaluate(problem, cond, marg, designs)
    timings["evaluate"] = time.perf_counter() - t0
    timings["total"] = time.perf_counter() - t_start

    summary = {
        "schema": 1,
        "config_hash": _training_hash(cfg),
        "gate": "passed" if not inadequate else "forced",
        "diagnostics": diag,
        "designs": {
            f"n={n}": {name: d.matrix.tolist() for name, d in named.items()}
            for n, named in designs.items()
        },
        "evaluations": evals,
    }
    _write_json(cfg.out / "summary.json", summary)
    _write_json(cfg.out / "timings.json", timings)  # wall clock; not reproducible
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="auxdesign",
        description="Bayesian experimental design for simulable models with "
                    "intractable likelihoods",
    )
    parser.add_argument("command",
                        choices=["run", "build-aux", "diagnose", "design",
                                 "evaluate", "benchmark"])
    parser.add_argument("config", type=Path, help="experiment TOML file")
    parser.add_argument("--seed", type=int, default=None, help="override master seed")
    parser.add_argument("--out", type=Path, default=None, help="override output directory")
    parser.add_argument("--threads", type=int, default=None, help="cap simulation threads")
    parser.add_argument("--force", action="store_true",
                        help="ignore caches and the adequacy gate")
    parser.add_argument("--design", type=Path, default=None,
                        help="design CSV to evaluate (evaluate command)")
    parser.add_argument("--evaluator", default=None,
                        choices=["aux", "nested-aux", "nested-exact"])
    parser.add_argument("--replicates", type=int, default=None)
    parser.add_argument("--copula-density", default=None, choices=["standard", "paper"])
    search = parser.add_argument_group("design search overrides")
    search.add_argument("--iterations", type=int, default=None)
    search.add_argument("--restarts", type=int, default=None)
    search.add_argument("--q", type=int, default=None)
    search.add_argument("--b-fit", type=int, default=None)
    search.add_argument("--b-test", type=int, default=None)
    search.add_argument("--acceptance", default=None, choices=["normal", "binary"])
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.out is not None:
            cfg.out = args.out
        if args.copula_density is not None:
            cfg.copula_form = args.copula_density
        ace_overrides = {
            "iterations": args.iterations, "restarts": args.restarts, "q": args.q,
            "b_fit": args.b_fit, "b_test": args.b_test, "acceptance": args.acceptance,
        }
        ace_overrides = {k: v for k, v in ace_overrides.items() if v is not None}
        if ace_overrides:
            from dataclasses import replace

            cfg.ace = replace(cfg.ace, **ace_overrides)
        if args.threads is not None:
            import numba

            numba.set_num_threads(max(1, args.threads))

        if args.command == "run":
            return run_pipeline(cfg, args.force)

        problem = build_problem(cfg)
        cond, marg = stage_build_aux(problem, args.force and args.command == "build-aux")
        if args.command == "build-aux":
            print(f"auxiliary models written to {cfg.out / 'emulators'}")
            return 0
        if args.command == "diagnose":
            diag = stage_diagnose(problem, cond, marg, args.force)
            bad = [k for k, v in diag.items() if v["verdict"] != "adequate"]
            for k, v in sorted(diag.items()):
                print(f"{k}: p={v['p_value']:.3f} ({v['verdict']})")
            return 0 if (not bad or args.force) else 3
        if args.command == "design":
            stage_design(problem, cond, marg, args.force)
            print(f"designs written to {cfg.out / 'designs'}")
            return 0
        if args.command == "evaluate":
            if args.design is not None:
                design = load_design_csv(args.design)
                designs = {design.n: {args.design.stem: design}}
            else:
                designs = {n: {"baseline": _baseline_design(problem, n)}
                           for n in cfg.n_list}
            rows = stage_evaluate(problem, cond, marg, designs,
                                  evaluator=args.evaluator, replicates=args.replicates)
            for r in rows:
                se = "" if r["se"] is None else f" ({r['se']:.4g})"
                print(f"{r['design']} n={r['n']} [{r['evaluator']}]: "
                      f"{r['mean']:.4g}{se}")
            return 0
        if args.command == "benchmark":
            rows = stage_benchmark(problem, cond, marg)
            for r in rows:
                print(f"C={r['c']}: aux {r['aux_seconds']:.2f}s, "
                      f"nested {r['nested_seconds']:.2f}s, ratio {r['ratio']:.1f}")
            return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except cp.AdequacyError as exc:
        print(f"adequacy failure: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
