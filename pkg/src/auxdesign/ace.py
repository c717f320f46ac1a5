"""Approximate coordinate exchange over noisy expected-utility evaluations.

One coordinate at a time: evaluate the Monte Carlo expected utility at Q
points spanning the coordinate's interval, smooth with a 1-D GP, maximise the
predictive mean on a fine grid, then accept or reject the proposed move with
a Bayesian comparison of fresh utility samples at the current and proposed
designs (t-test form for continuous utilities, Beta posterior comparison for
binary ones).  Multiple restarts guard against local optima; restart winners
are compared with a common-seed evaluation.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .design_space import Design, DesignSpace, check_constraints, project_coordinate
from .emulator import Standardizer, fit_mgp
from .rng import derive_rng, derive_seed

__all__ = ["AceConfig", "AceStep", "AceTrace", "acceptance_normal",
           "acceptance_binary", "ace_optimize"]


@dataclass(frozen=True)
class AceConfig:
    q: int = 20             # 1-D emulator training size
    b_fit: int = 1000       # MC size for emulator-building evaluations
    b_test: int = 20000     # MC size for the acceptance test
    iterations: int = 20
    restarts: int = 20
    acceptance: str = "normal"  # "normal" | "binary"
    grid: int = 1000        # 1-D maximisation grid
    workers: int = 2        # threads for the Q emulator-building evaluations

    def __post_init__(self):
        if self.q < 4:
            raise ValueError("need at least Q = 4 emulator points")
        if min(self.b_fit, self.b_test, self.iterations, self.restarts) < 1:
            raise ValueError("all ACE counts must be positive")
        if self.acceptance not in ("normal", "binary"):
            raise ValueError("acceptance mode must be 'normal' or 'binary'")


@dataclass
class AceStep:
    restart: int
    iteration: int
    run: int
    coord: int
    proposed: float
    p_star: float
    accepted: bool
    emulated_max: float


@dataclass
class AceIterationSnapshot:
    restart: int
    iteration: int
    design: np.ndarray
    estimate: float  # test-phase estimate of the current design


@dataclass
class AceTrace:
    steps: list = field(default_factory=list)
    iterations: list = field(default_factory=list)
    restart_designs: list = field(default_factory=list)
    restart_estimates: list = field(default_factory=list)
    skipped: list = field(default_factory=list)
    best_index: int = -1


def acceptance_normal(u_current: np.ndarray, u_proposed: np.ndarray) -> float:
    """Probability that the proposed design improves the expected utility.

    Pooled-variance t comparison; a degenerate pooled variance falls back to
    a deterministic comparison of the means.
    """
    u_c = np.asarray(u_current, dtype=float)
    u_p = np.asarray(u_proposed, dtype=float)
    if u_c.size != u_p.size:
        raise ValueError("acceptance test needs equal sample sizes")
    b = u_c.size
    mean_c, mean_p = np.mean(u_c), np.mean(u_p)
    pooled = (np.sum((u_c - mean_c) ** 2) + np.sum((u_p - mean_p) ** 2)) / (2 * b - 2)
    if pooled <= 0:
        if mean_p > mean_c:
            return 1.0
        return 0.5 if mean_p == mean_c else 0.0
    statistic = -(b * mean_p - b * mean_c) / np.sqrt(2 * b * pooled)
    return float(1.0 - stats.t.cdf(statistic, df=2 * b - 2))


def acceptance_binary(u_current, u_proposed, rng: np.random.Generator) -> float:
    """Monte Carlo Beta-posterior comparison for 0/1 utility samples."""
    u_c = np.asarray(u_current, dtype=float)
    u_p = np.asarray(u_proposed, dtype=float)
    if u_c.size != u_p.size:
        raise ValueError("acceptance test needs equal sample sizes")
    b = u_c.size
    mean_c, mean_p = np.mean(u_c), np.mean(u_p)
    rho = rng.beta(1 + b * mean_c, 1 + b - b * mean_c, size=b)
    return float(1.0 - np.mean(stats.beta.cdf(rho, 1 + b * mean_p, 1 + b - b * mean_p)))


def _random_feasible_design(space: DesignSpace, n: int, rng) -> Design:
    mat = space.sample_uniform(n, rng)
    design = Design(mat)
    for k in range(n):
        for j in range(space.w):
            mat[k, j] = project_coordinate(design, k, j, mat[k, j], space)
            design = Design(mat)
    return design


def _fit_1d_gp(values: np.ndarray, estimates: np.ndarray, lo: float, hi: float):
    order = np.argsort(values)
    values, estimates = values[order], estimates[order]
    keep = np.concatenate([[True], np.diff(values) > 1e-12 * (hi - lo + 1.0)])
    values, estimates = values[keep], estimates[keep]
    if values.size < 4:
        return None
    std = Standardizer.from_ranges(np.array([[lo, hi]]))
    return fit_mgp(values[:, None], estimates[:, None], standardizer=std,
                   n_starts=5, seed=0)


def ace_optimize(
    evaluate,
    space: DesignSpace,
    n: int,
    config: AceConfig,
    seed: int,
    initial: Design | None = None,
) -> tuple[Design, AceTrace]:
    """Maximise an expected utility over the n x w design space.

    ``evaluate(design_matrix, b, seed)`` must return an object with
    ``estimate`` and per-sample ``samples``; fresh seeds are derived for every
    call so the acceptance comparison never reuses emulator-building draws.
    """
    trace = AceTrace()
    for r in range(config.restarts):
        rseed = derive_seed(seed, f"restart-{r}")
        if initial is not None:
            design = Design(initial.matrix.copy())
        else:
            design = _random_feasible_design(space, n, derive_rng(rseed, "init"))
        accept_rng = derive_rng(rseed, "accept")
        for it in range(config.iterations):
            current_estimate = np.nan
            for k in range(n):
                for j in range(space.w):
                    lo, hi = space.bounds[j]
                    cand = np.linspace(lo, hi, config.q - 1)
                    cand = np.append(cand, design.matrix[k, j])
                    cand = np.array([
                        project_coordinate(design, k, j, v, space) for v in cand
                    ])
                    def fit_eval(qi_v):
                        qi, v = qi_v
                        mat = design.matrix.copy()
                        mat[k, j] = v
                        ev = evaluate(mat, config.b_fit,
                                      derive_seed(rseed, f"fit-{it}-{k}-{j}-{qi}"))
                        return ev.estimate

                    # independent evaluations: thread them, collect by index
                    if config.workers > 1:
                        with ThreadPoolExecutor(config.workers) as pool:
                            zs = np.fromiter(
                                pool.map(fit_eval, enumerate(cand)), dtype=float,
                                count=cand.size,
                            )
                    else:
                        zs = np.fromiter(map(fit_eval, enumerate(cand)), dtype=float,
                                         count=cand.size)
                    gp = _fit_1d_gp(cand, zs, lo, hi)
                    if gp is None:
                        trace.skipped.append((r, it, k, j))
                        continue
                    grid = np.linspace(lo, hi, config.grid)
                    pred = gp.predict_mean(grid[:, None])[:, 0]
                    best = grid[int(np.argmax(pred))]
                    proposed_value = project_coordinate(design, k, j, best, space)
                    proposed = design.matrix.copy()
                    proposed[k, j] = proposed_value

                    ev_c = evaluate(design.matrix, config.b_test,
                                    derive_seed(rseed, f"acc-cur-{it}-{k}-{j}"))
                    ev_p = evaluate(proposed, config.b_test,
                                    derive_seed(rseed, f"acc-prop-{it}-{k}-{j}"))
                    if config.acceptance == "binary":
                        p_star = acceptance_binary(ev_c.samples, ev_p.samples, accept_rng)
                    else:
                        p_star = acceptance_normal(ev_c.samples, ev_p.samples)
                    accepted = bool(accept_rng.uniform() < p_star)
                    if accepted:
                        design = Design(proposed)
                        current_estimate = ev_p.estimate
                    else:
                        current_estimate = ev_c.estimate
                    trace.steps.append(AceStep(
                        restart=r, iteration=it, run=k, coord=j,
                        proposed=float(proposed_value), p_star=p_star,
                        accepted=accepted, emulated_max=float(np.max(pred)),
                    ))
            trace.iterations.append(AceIterationSnapshot(
                restart=r, iteration=it, design=design.matrix.copy(),
                estimate=float(current_estimate),
            ))
        ok, violations = check_constraints(design, space)
        if not ok:
            raise RuntimeError(f"ACE produced an infeasible design: {violations}")
        trace.restart_designs.append(design)

    # common-seed comparison of the restart winners
    final_seed = derive_seed(seed, "final-comparison")
    for design in trace.restart_designs:
        ev = evaluate(design.matrix, config.b_test, final_seed)
        trace.restart_estimates.append(ev.estimate)
    trace.best_index = int(np.argmax(trace.restart_estimates))
    return trace.restart_designs[trace.best_index], trace
