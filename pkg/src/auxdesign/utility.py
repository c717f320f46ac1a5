"""Monte Carlo estimators of expected likelihood-based utilities.

Three estimators share the same outer sampling scheme (B joint draws of
parameters and responses at the candidate design):

* auxiliary MC: likelihood and marginal likelihood replaced by the emulated
  conditional model and the copula-coupled marginal model; cost O((B + L) n).
* nested MC: the marginal likelihood is an inner average over C prior draws,
  costing O(B C n) density evaluations.
* model-comparison MC: per-model coupled marginal likelihoods, mixed over the
  prior model probabilities.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .coupled import (
    ConditionalAux,
    MarginalAux,
    aux_loglik_batch,
    aux_marginal_loglik,
    fit_copula,
)
from .models import ModelSet, simulate_response_matrix
from .rng import derive_rng, derive_seed

__all__ = [
    "EvalBudget",
    "UtilityEvaluation",
    "ExactLikelihoodSource",
    "AuxLikelihoodSource",
    "expected_utility_aux",
    "expected_utility_nested",
    "expected_utility_models",
    "cost_benchmark",
    "UTILITY_KINDS",
]

UTILITY_KINDS = ("sig", "lr", "sig_models", "zero_one")
_EXP_CLIP = 700.0


@dataclass(frozen=True)
class EvalBudget:
    b: int                 # outer Monte Carlo size
    c: int = 1000          # inner size (nested only)
    l: int = 500           # copula training sample size
    seed: int = 0

    def __post_init__(self):
        if min(self.b, self.c, self.l) <= 0:
            raise ValueError("budget sizes must be positive")


@dataclass
class UtilityEvaluation:
    estimate: float
    samples: np.ndarray                  # (B,) per-sample utilities
    loglik_cond: np.ndarray | None = None
    loglik_marg: np.ndarray | None = None
    draws: np.ndarray | None = None      # outer thetas, or model labels
    timings: dict = field(default_factory=dict)

    @property
    def std_error(self) -> float:
        s = self.samples[np.isfinite(self.samples)]
        if s.size < 2:
            return float("nan")
        return float(np.std(s, ddof=1) / np.sqrt(s.size))


def _utility_from_logliks(kind: str, loglik_cond, loglik_marg) -> np.ndarray:
    if kind == "sig":
        return loglik_cond - loglik_marg
    if kind == "lr":
        expo = np.clip(0.5 * loglik_marg - 0.5 * loglik_cond, -np.inf, _EXP_CLIP)
        return 1.0 - np.exp(expo)
    raise ValueError(f"utility kind {kind!r} needs a parameter-estimation setup")


def expected_utility_aux(
    kind: str,
    design_matrix,
    model,
    prior,
    cond: ConditionalAux,
    marg: MarginalAux,
    budget: EvalBudget,
    copula_form: str = "standard",
) -> UtilityEvaluation:
    """Auxiliary Monte Carlo estimate of the expected utility at one design.

    Steps: draw the outer joint sample; draw the copula training sample;
    two-stage copula fit; emulated conditional and coupled marginal log
    likelihoods; average the per-sample utilities.
    """
    D = np.atleast_2d(np.asarray(design_matrix, dtype=float))
    timings = {}
    t0 = time.perf_counter()
    thetas = prior.sample(budget.b, derive_rng(budget.seed, "outer-theta"))
    y = simulate_response_matrix(model, thetas, D, derive_seed(budget.seed, "outer-sim"))
    timings["simulate"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    cop = fit_copula(marg, model, prior, D, budget.l, derive_seed(budget.seed, "copula"))
    timings["copula_fit"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    ll_cond = aux_loglik_batch(cond, y, thetas, D)
    timings["conditional"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    ll_marg = aux_marginal_loglik(marg, cop, y, D, form=copula_form)
    timings["marginal"] = time.perf_counter() - t0

    u = _utility_from_logliks(kind, ll_cond, ll_marg)
    timings["total"] = sum(timings.values())
    return UtilityEvaluation(
        estimate=float(np.mean(u)), samples=u, loglik_cond=ll_cond,
        loglik_marg=ll_marg, draws=thetas, timings=timings,
    )


# ---------------------------------------------------------------------------
# nested Monte Carlo
# ---------------------------------------------------------------------------

class ExactLikelihoodSource:
    """Closed-form log likelihood of a DirectModel (compartmental, toys)."""

    def __init__(self, model):
        if getattr(model, "logdensity", None) is None:
            raise ValueError(f"model {model.name!r} has no tractable likelihood")
        self.model = model

    def rowwise_loglik(self, y, thetas, D):
        y = np.atleast_2d(np.asarray(y, dtype=float))
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        D = np.atleast_2d(np.asarray(D, dtype=float))
        terms = self.model.logdensity(y, thetas[:, None, :], D[None, :, :])
        return terms.sum(axis=-1)

    def pairwise_loglik(self, y, inner_thetas, D, chunk=None):
        """(B, C) log pi(y_i | theta_j, D)."""
        y = np.atleast_2d(np.asarray(y, dtype=float))
        th = np.atleast_2d(np.asarray(inner_thetas, dtype=float))
        D = np.atleast_2d(np.asarray(D, dtype=float))
        B, n = y.shape
        C = th.shape[0]
        if chunk is None:
            chunk = max(1, int(2_000_000 / max(C * n, 1)))
        out = np.empty((B, C))
        for s in range(0, B, chunk):
            yy = y[s:s + chunk][:, None, :]
            terms = self.model.logdensity(yy, th[None, :, None, :], D[None, None, :, :])
            out[s:s + chunk] = terms.sum(axis=-1)
        return out


class AuxLikelihoodSource:
    """Emulated conditional auxiliary likelihood for intractable models."""

    def __init__(self, cond: ConditionalAux):
        self.cond = cond

    def rowwise_loglik(self, y, thetas, D):
        return aux_loglik_batch(self.cond, y, thetas, D)

    def pairwise_loglik(self, y, inner_thetas, D, chunk=None):
        y = np.atleast_2d(np.asarray(y, dtype=float))
        th = np.atleast_2d(np.asarray(inner_thetas, dtype=float))
        D = np.atleast_2d(np.asarray(D, dtype=float))
        B, n = y.shape
        C = th.shape[0]
        x = np.column_stack([np.repeat(th, n, axis=0), np.tile(D, (C, 1))])
        phi = self.cond.emulator.predict_phi(x, self.cond.family).reshape(C, n, -1)
        ctx = None
        if self.cond.family.needs_context:
            ctx = self.cond.response_bound(D)[None, None, :]
        if chunk is None:
            chunk = max(1, int(2_000_000 / max(C * n, 1)))  # keep temporaries small
        out = np.empty((B, C))
        for s in range(0, B, chunk):
            terms = self.cond.family.logpdf(
                y[s:s + chunk][:, None, :], phi[None, :, :, :], context=ctx
            )
            out[s:s + chunk] = terms.sum(axis=-1)
        return out


def expected_utility_nested(
    kind: str,
    design_matrix,
    model,
    prior,
    source,
    budget: EvalBudget,
) -> UtilityEvaluation:
    """Nested Monte Carlo: inner average over a shared prior sample of size C."""
    D = np.atleast_2d(np.asarray(design_matrix, dtype=float))
    timings = {}
    t0 = time.perf_counter()
    thetas = prior.sample(budget.b, derive_rng(budget.seed, "outer-theta"))
    y = simulate_response_matrix(model, thetas, D, derive_seed(budget.seed, "outer-sim"))
    timings["simulate"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    ll_cond = source.rowwise_loglik(y, thetas, D)
    timings["conditional"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    inner = prior.sample(budget.c, derive_rng(budget.seed, "inner-theta"))
    pair = source.pairwise_loglik(y, inner, D)
    ll_marg = special.logsumexp(pair, axis=1) - np.log(budget.c)
    timings["inner"] = time.perf_counter() - t0

    u = _utility_from_logliks(kind, ll_cond, ll_marg)
    timings["total"] = sum(timings.values())
    return UtilityEvaluation(
        estimate=float(np.mean(u)), samples=u, loglik_cond=ll_cond,
        loglik_marg=ll_marg, draws=thetas, timings=timings,
    )


# ---------------------------------------------------------------------------
# model comparison
# ---------------------------------------------------------------------------

def fit_modelset_copulas(marg: MarginalAux, model_set: ModelSet, design_matrix,
                         l_train: int, seed: int) -> dict:
    """One copula per candidate model, each from that model's marginal draws."""
    cops = {}
    for mk in model_set.labels:
        model, prior = model_set.models[mk]
        cops[mk] = fit_copula(marg, model, prior, design_matrix, l_train,
                              derive_seed(seed, f"copula-m{mk}"), model_label=mk)
    return cops


def expected_utility_models(
    kind: str,
    design_matrix,
    model_set: ModelSet,
    marg: MarginalAux,
    budget: EvalBudget,
) -> UtilityEvaluation:
    """Model-comparison utilities via per-model coupled marginal likelihoods."""
    if kind not in ("sig_models", "zero_one"):
        raise ValueError(f"utility kind {kind!r} needs a parameter-estimation setup")
    D = np.atleast_2d(np.asarray(design_matrix, dtype=float))
    labels = model_set.labels
    timings = {}

    t0 = time.perf_counter()
    m_draw = model_set.sample_models(budget.b, derive_rng(budget.seed, "outer-models"))
    y = np.empty((budget.b, D.shape[0]))
    for mk in labels:
        rows = np.nonzero(m_draw == mk)[0]
        if rows.size == 0:
            continue
        model, prior = model_set.models[mk]
        thetas = prior.sample(rows.size, derive_rng(budget.seed, f"outer-theta-m{mk}"))
        y[rows] = simulate_response_matrix(
            model, thetas, D, derive_seed(budget.seed, f"outer-sim-m{mk}")
        )
    timings["simulate"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    cops = fit_modelset_copulas(marg, model_set, D, budget.l, budget.seed)
    timings["copula_fit"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    ll = np.empty((budget.b, len(labels)))
    logprior = np.empty(len(labels))
    for j, mk in enumerate(labels):
        ll[:, j] = aux_marginal_loglik(marg, cops[mk], y, D, model_label=mk)
        logprior[j] = np.log(model_set.prior_probs[mk])
    scored = ll + logprior
    log_mix = special.logsumexp(scored, axis=1)
    timings["marginal"] = time.perf_counter() - t0

    idx = np.array([labels.index(mk) for mk in m_draw])
    if kind == "sig_models":
        u = ll[np.arange(budget.b), idx] - log_mix
    else:
        # ties break to the lowest model label (argmax returns first maximum)
        modal = np.argmax(scored, axis=1)
        u = (modal == idx).astype(float)
    timings["total"] = sum(timings.values())
    return UtilityEvaluation(
        estimate=float(np.mean(u)), samples=u,
        loglik_cond=ll[np.arange(budget.b), idx], loglik_marg=log_mix,
        draws=m_draw.astype(float), timings=timings,
    )


# ---------------------------------------------------------------------------
# cost benchmark
# ---------------------------------------------------------------------------

def cost_benchmark(
    design_matrix,
    model,
    prior,
    cond: ConditionalAux,
    marg: MarginalAux,
    b: int = 1000,
    inner_sizes=(250, 500, 1000),
    l_train: int = 500,
    seed: int = 0,
    repeats: int = 3,
) -> list[dict]:
    """Wall time per expected-utility evaluation: auxiliary vs nested MC.

    The nested estimator uses the auxiliary likelihood, so the comparison
    isolates the cost of the inner marginal-likelihood loop.
    """
    D = np.atleast_2d(np.asarray(design_matrix, dtype=float))
    source = AuxLikelihoodSource(cond)
    warm = EvalBudget(b=max(b // 10, 2), c=10, l=l_train, seed=derive_seed(seed, "warm"))
    expected_utility_aux("sig", D, model, prior, cond, marg, warm)
    expected_utility_nested("sig", D, model, prior, source, warm)
    rows = []
    for c in inner_sizes:
        taux, tnest = [], []
        for r in range(repeats):
            budget = EvalBudget(b=b, c=c, l=l_train, seed=derive_seed(seed, f"bench-{c}-{r}"))
            t0 = time.perf_counter()
            expected_utility_aux("sig", D, model, prior, cond, marg, budget)
            taux.append(time.perf_counter() - t0)
            t0 = time.perf_counter()
            expected_utility_nested("sig", D, model, prior, source, budget)
            tnest.append(time.perf_counter() - t0)
        aux_s, nested_s = float(np.median(taux)), float(np.median(tnest))
        rows.append({
            "b": b, "c": c, "n": D.shape[0],
            "aux_seconds": aux_s, "nested_seconds": nested_s,
            "ratio": nested_s / aux_s,
        })
    return rows
