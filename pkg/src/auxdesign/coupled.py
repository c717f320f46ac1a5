"""Coupled auxiliary models: emulated likelihood + copula marginal likelihood.

Off-line, two auxiliary models are trained from simulations:

* conditional: y | theta, d  ~ H_X(phi_f(theta, d)), phi_f emulated over (theta, d)
* marginal:    y | d         ~ H_X(phi_g(d)),        phi_g emulated over d
  (or over (m, d) with an exchangeable categorical kernel term when several
  candidate models are compared)

On-line, at a fixed design D, a t-copula is fitted to probability-integral-
transformed marginal draws and couples the n per-run marginals into an
approximate marginal likelihood.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, special, stats

from .design_space import DesignSpace, latin_hypercube
from .emulator import MgpFit, Standardizer, fit_mgp
from .families import AuxiliaryFamily
from .rng import derive_rng, derive_seed

__all__ = [
    "AdequacyError",
    "ConditionalAux",
    "MarginalAux",
    "TCopulaFit",
    "build_conditional",
    "build_marginal",
    "build_marginal_modelset",
    "aux_loglik",
    "fit_copula",
    "fit_copula_from_sample",
    "copula_logdensity",
    "copula_sample",
    "aux_marginal_loglik",
    "sample_coupled",
]

U_CLIP = 1e-12
CORR_CLIP = 0.999
DF_RANGE = (2.5, 350.0)


class AdequacyError(RuntimeError):
    """Raised when an auxiliary family is plainly wrong for the model."""


# ---------------------------------------------------------------------------
# training-table construction (shared by conditional and marginal builds)
# ---------------------------------------------------------------------------

@dataclass
class TrainingTable:
    """Per-row simulation samples and fitted link-scale auxiliary parameters."""

    inputs: np.ndarray  # (M, s) emulator inputs
    z: np.ndarray  # (M, v)
    ok: np.ndarray  # (M,) bool
    samples: np.ndarray  # (M, N) raw simulated responses
    contexts: np.ndarray | None  # (M,) trial counts, discrete bounded families

    @property
    def failure_fraction(self) -> float:
        return 1.0 - float(np.mean(self.ok))


def _fit_rows(family: AuxiliaryFamily, samples: np.ndarray, contexts) -> tuple[np.ndarray, np.ndarray]:
    M = samples.shape[0]
    z = np.empty((M, family.v))
    ok = np.zeros(M, dtype=bool)
    for i in range(M):
        ctx = None if contexts is None else contexts[i]
        try:
            fit = family.fit_mle(samples[i], context=ctx)
        except Exception:
            continue
        if fit.ok and np.all(np.isfinite(fit.z)):
            z[i] = fit.z
            ok[i] = True
    return z, ok


def simulate_training_table(
    model, prior, space: DesignSpace, family: AuxiliaryFamily,
    m: int, n_sim: int, seed: int, marginal: bool,
) -> TrainingTable:
    """Simulate the M x N training draws and fit per-row auxiliary MLEs.

    Conditional tables share one prior draw per row; marginal tables redraw
    theta for every simulated observation.  Both use the same space-filling
    design-point sample for a given master seed.
    """
    d_train = latin_hypercube(space, m, derive_seed(seed, "aux-train-lhs"))
    ds_rep = np.repeat(d_train, n_sim, axis=0)
    if marginal:
        thetas = prior.sample(m * n_sim, derive_rng(seed, "aux-train-theta-marginal"))
        label = "aux-train-sim-marginal"
    else:
        theta_rows = prior.sample(m, derive_rng(seed, "aux-train-theta"))
        thetas = np.repeat(theta_rows, n_sim, axis=0)
        label = "aux-train-sim"
    y = model.simulate_rows(thetas, ds_rep, derive_seed(seed, label)).reshape(m, n_sim)

    contexts = None
    if family.needs_context:
        if model.response_bound is None:
            raise ValueError(f"family {family.name} needs a trial count; model has none")
        contexts = model.response_bound(d_train)

    z, ok = _fit_rows(family, y, contexts)
    inputs = d_train if marginal else np.column_stack([theta_rows, d_train])
    return TrainingTable(inputs=inputs, z=z, ok=ok, samples=y, contexts=contexts)


def _check_failures(table: TrainingTable, what: str, max_failure: float = 0.2):
    if table.failure_fraction > max_failure:
        raise AdequacyError(
            f"{what}: {table.failure_fraction:.0%} of auxiliary MLE fits failed; "
            "the auxiliary family is likely inadequate for this model"
        )


# ---------------------------------------------------------------------------
# conditional auxiliary model
# ---------------------------------------------------------------------------

@dataclass
class ConditionalAux:
    family: AuxiliaryFamily
    emulator: MgpFit
    response_bound: object = None  # callable ds -> trial counts
    mle_failure_fraction: float = 0.0

    def predict_phi(self, thetas, ds) -> np.ndarray:
        x = np.column_stack([np.atleast_2d(thetas), np.atleast_2d(ds)])
        return self.emulator.predict_phi(x, self.family)

    def loglik_terms(self, y_matrix, thetas, design_matrix) -> np.ndarray:
        """(B, n) per-run log densities under the emulated auxiliary model."""
        Y = np.atleast_2d(np.asarray(y_matrix, dtype=float))
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        D = np.atleast_2d(np.asarray(design_matrix, dtype=float))
        B, n = Y.shape
        x = np.column_stack([np.repeat(thetas, n, axis=0), np.tile(D, (B, 1))])
        phi = self.emulator.predict_phi(x, self.family).reshape(B, n, self.family.v)
        ctx = None
        if self.family.needs_context:
            ctx = np.tile(self.response_bound(D), B).reshape(B, n)
        return self.family.logpdf(Y, phi, context=ctx)


def build_conditional(model, prior, space, family, m, n_sim, seed,
                      table: TrainingTable | None = None, n_starts=10) -> ConditionalAux:
    if table is None:
        table = simulate_training_table(model, prior, space, family, m, n_sim, seed,
                                        marginal=False)
    _check_failures(table, f"conditional aux ({model.name}/{family.name})")
    keep = table.ok
    ranges = np.vstack([prior.scaling_range(), space.bounds])
    std = Standardizer.from_ranges(ranges)
    emu = fit_mgp(
        table.inputs[keep], table.z[keep], standardizer=std,
        seed=derive_seed(seed, "aux-train-mgp"), n_starts=n_starts,
        meta={"model": model.name, "family": family.name, "kind": "conditional",
              "M": m, "N": n_sim, "seed": seed},
    )
    return ConditionalAux(family=family, emulator=emu, response_bound=model.response_bound,
                          mle_failure_fraction=table.failure_fraction)


def aux_loglik(cond: ConditionalAux, y_vector, theta, design_matrix) -> float:
    """Sum over runs of the emulated auxiliary log density (one (theta, y))."""
    terms = cond.loglik_terms(np.atleast_2d(y_vector), np.atleast_2d(theta), design_matrix)
    return float(terms.sum())


def aux_loglik_batch(cond: ConditionalAux, y_matrix, thetas, design_matrix) -> np.ndarray:
    return cond.loglik_terms(y_matrix, thetas, design_matrix).sum(axis=1)


# ---------------------------------------------------------------------------
# marginal auxiliary model
# ---------------------------------------------------------------------------

@dataclass
class MarginalAux:
    family: AuxiliaryFamily
    emulator: MgpFit
    response_bound: object = None
    mle_failure_fraction: float = 0.0
    model_labels: tuple = ()  # nonempty for the model-comparison variant

    @property
    def has_model_label(self) -> bool:
        return len(self.model_labels) > 0

    def _inputs(self, design_matrix, model_label=None) -> np.ndarray:
        D = np.atleast_2d(np.asarray(design_matrix, dtype=float))
        if self.has_model_label:
            if model_label is None:
                raise ValueError("this marginal auxiliary model needs a model label")
            return np.column_stack([np.full(D.shape[0], float(model_label)), D])
        return D

    def phi_at(self, design_matrix, model_label=None) -> np.ndarray:
        """(n, v) natural-scale auxiliary parameters, one row per design point."""
        return self.emulator.predict_phi(self._inputs(design_matrix, model_label), self.family)

    def contexts_at(self, design_matrix) -> np.ndarray | None:
        if not self.family.needs_context:
            return None
        return self.response_bound(np.atleast_2d(np.asarray(design_matrix, dtype=float)))

    def logpdf_terms(self, y_matrix, design_matrix, model_label=None) -> np.ndarray:
        Y = np.atleast_2d(np.asarray(y_matrix, dtype=float))
        phi = self.phi_at(design_matrix, model_label)
        ctx = self.contexts_at(design_matrix)
        return self.family.logpdf(Y, phi[None, :, :], context=None if ctx is None else ctx[None, :])

    def _tables(self, design_matrix, model_label=None):
        """Per-run (pmf, cdf) support tables for bounded discrete families."""
        phi = self.phi_at(design_matrix, model_label)
        ctx = self.contexts_at(design_matrix)
        return self.family.support_tables(phi, ctx)

    def pit(self, y_matrix, design_matrix, model_label=None, mode="mid",
            rng: np.random.Generator | None = None) -> np.ndarray:
        """Probability integral transform of responses under the marginal aux.

        Continuous families use the plain cdf.  Discrete families spread each
        atom: randomized u = G(y-1) + V g(y) for copula fitting (unbiased rank
        statistics), deterministic mid-placement V = 1/2 for density
        evaluation.
        """
        Y = np.atleast_2d(np.asarray(y_matrix, dtype=float))
        phi = self.phi_at(design_matrix, model_label)
        ctx = self.contexts_at(design_matrix)
        if not self.family.discrete:
            u = self.family.cdf(Y, phi[None, :, :])
        else:
            if hasattr(self.family, "support_tables"):
                pmf_t, cdf_t = self._tables(design_matrix, model_label)
                yi = np.clip(np.rint(Y).astype(int), 0, pmf_t.shape[1] - 1)
                cols = np.arange(Y.shape[1])[None, :]
                pmf = pmf_t[cols, yi]
                cdf_left = np.where(yi > 0, cdf_t[cols, yi - 1], 0.0)
            else:
                c = None if ctx is None else ctx[None, :]
                cdf_left = self.family.cdf(Y - 1.0, phi[None, :, :], context=c)
                pmf = np.exp(self.family.logpdf(Y, phi[None, :, :], context=c))
            if mode == "randomized":
                if rng is None:
                    raise ValueError("randomized PIT needs an rng")
                v = rng.uniform(size=Y.shape)
            elif mode == "mid":
                v = 0.5
            else:
                raise ValueError(f"unknown PIT mode {mode!r}")
            u = cdf_left + v * pmf
        return np.clip(u, U_CLIP, 1.0 - U_CLIP)

    def quantile(self, u_matrix, design_matrix, model_label=None) -> np.ndarray:
        U = np.atleast_2d(np.asarray(u_matrix, dtype=float))
        if self.family.discrete and hasattr(self.family, "support_tables"):
            _, cdf_t = self._tables(design_matrix, model_label)
            out = np.empty(U.shape)
            for k in range(U.shape[1]):
                out[:, k] = np.searchsorted(cdf_t[k], U[:, k], side="left")
            return out
        phi = self.phi_at(design_matrix, model_label)
        ctx = self.contexts_at(design_matrix)
        return self.family.quantile(U, phi[None, :, :],
                                    context=None if ctx is None else ctx[None, :])

    def sample(self, design_matrix, count, rng, model_label=None) -> np.ndarray:
        """(count, n) draws with independent coordinates (margins only)."""
        D = np.atleast_2d(np.asarray(design_matrix, dtype=float))
        phi = self.phi_at(D, model_label)
        ctx = self.contexts_at(D)
        n = D.shape[0]
        out = np.empty((count, n))
        for k in range(n):
            out[:, k] = self.family.sample(
                phi[k], rng, size=count,
                context=None if ctx is None else np.full(count, ctx[k]),
            )
        return out


def build_marginal(model, prior, space, family, m, n_sim, seed,
                   table: TrainingTable | None = None, n_starts=10) -> MarginalAux:
    if table is None:
        table = simulate_training_table(model, prior, space, family, m, n_sim, seed,
                                        marginal=True)
    _check_failures(table, f"marginal aux ({model.name}/{family.name})")
    keep = table.ok
    std = Standardizer.from_ranges(space.bounds)
    emu = fit_mgp(
        table.inputs[keep], table.z[keep], standardizer=std,
        seed=derive_seed(seed, "aux-train-mgp-marginal"), n_starts=n_starts,
        meta={"model": model.name, "family": family.name, "kind": "marginal",
              "M": m, "N": n_sim, "seed": seed},
    )
    return MarginalAux(family=family, emulator=emu, response_bound=model.response_bound,
                       mle_failure_fraction=table.failure_fraction)


def build_marginal_modelset(model_set, space, family, m, n_sim, seed, n_starts=10) -> MarginalAux:
    """One marginal auxiliary model over (m, d), exchangeable in the label."""
    d_train = latin_hypercube(space, m, derive_seed(seed, "aux-train-lhs"))
    labels = model_set.sample_models(m, derive_rng(seed, "aux-train-models"))
    samples = np.empty((m, n_sim))
    any_bound = None
    for mk in model_set.labels:
        rows = np.nonzero(labels == mk)[0]
        if rows.size == 0:
            continue
        model, prior = model_set.models[mk]
        thetas = prior.sample(rows.size * n_sim, derive_rng(seed, f"aux-train-theta-m{mk}"))
        ds_rep = np.repeat(d_train[rows], n_sim, axis=0)
        y = model.simulate_rows(thetas, ds_rep, derive_seed(seed, f"aux-train-sim-m{mk}"))
        samples[rows] = y.reshape(rows.size, n_sim)
        any_bound = model.response_bound
    contexts = None
    if family.needs_context:
        contexts = any_bound(d_train)
    z, ok = _fit_rows(family, samples, contexts)
    table = TrainingTable(
        inputs=np.column_stack([labels.astype(float), d_train]),
        z=z, ok=ok, samples=samples, contexts=contexts,
    )
    _check_failures(table, f"marginal aux (model set/{family.name})")
    ranges = np.vstack([[0.0, 1.0], space.bounds])
    cat = np.zeros(1 + space.w, dtype=bool)
    cat[0] = True
    std = Standardizer.from_ranges(ranges, categorical=cat)
    emu = fit_mgp(
        table.inputs[ok], table.z[ok], standardizer=std,
        seed=derive_seed(seed, "aux-train-mgp-modelset"), n_starts=n_starts,
        meta={"model": "modelset", "family": family.name, "kind": "marginal-see",
              "M": m, "N": n_sim, "seed": seed},
    )
    return MarginalAux(family=family, emulator=emu, response_bound=any_bound,
                       mle_failure_fraction=table.failure_fraction,
                       model_labels=tuple(model_set.labels))


# ---------------------------------------------------------------------------
# t-copula
# ---------------------------------------------------------------------------

@dataclass
class TCopulaFit:
    corr: np.ndarray  # (n, n)
    df: float
    _chol: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.corr = np.atleast_2d(np.asarray(self.corr, dtype=float))
        if self._chol is None and self.n > 1:
            self._chol = np.linalg.cholesky(self.corr)

    @property
    def n(self) -> int:
        return self.corr.shape[0]


def _nearest_correlation(R: np.ndarray) -> np.ndarray:
    """Eigenvalue-clipped projection; shrinks towards identity as a fallback."""
    R = (R + R.T) / 2.0
    w, V = np.linalg.eigh(R)
    if w.min() > 1e-8:
        return R
    w = np.maximum(w, 1e-8)
    R2 = (V * w) @ V.T
    d = np.sqrt(np.diag(R2))
    R2 = R2 / np.outer(d, d)
    np.fill_diagonal(R2, 1.0)
    off = ~np.eye(R2.shape[0], dtype=bool)
    R2[off] = np.clip(R2[off], -CORR_CLIP, CORR_CLIP)
    try:
        np.linalg.cholesky(R2)
        return R2
    except np.linalg.LinAlgError:
        pass
    for eps in np.geomspace(1e-6, 1.0, 40):
        cand = (1.0 - eps) * R2 + eps * np.eye(R2.shape[0])
        try:
            np.linalg.cholesky(cand)
            return cand
        except np.linalg.LinAlgError:
            continue
    return np.eye(R2.shape[0])


def copula_logdensity(fit: TCopulaFit, u_matrix, form: str = "standard") -> np.ndarray:
    """Log t-copula density at rows of u.

    ``standard`` is the normalised density (multivariate-t over the product
    of univariate-t margins).  ``paper`` evaluates the unnormalised literal
    variant with the pooled v'v marginal term; the two are not interchangeable.
    """
    U = np.clip(np.atleast_2d(np.asarray(u_matrix, dtype=float)), U_CLIP, 1.0 - U_CLIP)
    n = fit.n
    if U.shape[-1] != n:
        raise ValueError("u dimension does not match the fitted copula")
    if n == 1:
        return np.zeros(U.shape[0])
    df = fit.df
    v = special.stdtrit(df, U)
    sol = linalg.solve_triangular(fit._chol, v.T, lower=True).T
    quad = np.sum(sol**2, axis=1)
    vv = np.sum(v**2, axis=1)
    logdet = 2.0 * np.sum(np.log(np.diag(fit._chol)))
    if form == "paper":
        return -0.5 * logdet + 0.5 * (df + n) * (np.log(df + vv) - np.log(df + quad))
    if form != "standard":
        raise ValueError(f"unknown copula density form {form!r}")
    const = (
        special.gammaln((df + n) / 2.0)
        + (n - 1.0) * special.gammaln(df / 2.0)
        - n * special.gammaln((df + 1.0) / 2.0)
    )
    return (
        const
        - 0.5 * logdet
        - 0.5 * (df + n) * np.log1p(quad / df)
        + 0.5 * (df + 1.0) * np.sum(np.log1p(v**2 / df), axis=1)
    )


def copula_sample(fit: TCopulaFit, count: int, rng: np.random.Generator) -> np.ndarray:
    """(count, n) dependent uniforms from the fitted t-copula."""
    if fit.n == 1:
        return rng.uniform(size=(count, 1))
    z = rng.standard_normal((count, fit.n)) @ fit._chol.T
    s = rng.chisquare(fit.df, size=(count, 1)) / fit.df
    v = z / np.sqrt(s)
    return np.clip(special.stdtr(fit.df, v), U_CLIP, 1.0 - U_CLIP)


def _kendall_tau_matrix(U: np.ndarray) -> np.ndarray:
    """All pairwise tau-b values via sign-outer-product matrix algebra.

    Matches the tie-adjusted tau-b statistic: concordances minus discordances
    over the geometric mean of untied pair counts.
    """
    L, n = U.shape
    iu = np.triu_indices(L, k=1)
    signs = np.empty((n, iu[0].size))
    untied = np.empty(n)
    for j in range(n):
        s = np.sign(U[:, j][:, None] - U[:, j][None, :])[iu]
        signs[j] = s
        untied[j] = np.count_nonzero(s)
    cmd = signs @ signs.T  # concordant minus discordant pairs
    denom = np.sqrt(np.outer(untied, untied))
    with np.errstate(invalid="ignore", divide="ignore"):
        tau = cmd / denom
    tau[~np.isfinite(tau)] = 0.0
    np.fill_diagonal(tau, 1.0)
    return tau


def fit_copula_from_u(U: np.ndarray) -> TCopulaFit:
    """Two-stage fit: Kendall-tau inversion for R, profile likelihood for df."""
    U = np.atleast_2d(np.asarray(U, dtype=float))
    L, n = U.shape
    if n == 1:
        return TCopulaFit(corr=np.eye(1), df=DF_RANGE[1])
    if L < n + 2:
        raise ValueError(f"copula training sample too small: L={L} < n+2={n + 2}")
    R = np.sin(0.5 * np.pi * _kendall_tau_matrix(U))
    off = ~np.eye(n, dtype=bool)
    R[off] = np.clip(R[off], -CORR_CLIP, CORR_CLIP)
    np.fill_diagonal(R, 1.0)
    R = _nearest_correlation(R)
    chol = np.linalg.cholesky(R)

    def neg_profile(df):
        return -float(np.sum(copula_logdensity(TCopulaFit(R, df, _chol=chol), U)))

    df = _golden_section(neg_profile, *DF_RANGE, tol=0.5)
    return TCopulaFit(corr=R, df=df, _chol=chol)


def _golden_section(f, lo, hi, tol):
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return (a + b) / 2.0


def fit_copula_from_sample(marg: MarginalAux, y_matrix, design_matrix, seed: int,
                           model_label=None) -> TCopulaFit:
    rng = derive_rng(seed, "copula-pit")
    U = marg.pit(y_matrix, design_matrix, model_label=model_label,
                 mode="randomized" if marg.family.discrete else "mid", rng=rng)
    return fit_copula_from_u(U)


def fit_copula(marg: MarginalAux, model, prior, design_matrix, l_train: int, seed: int,
               model_label=None) -> TCopulaFit:
    """Simulate the L marginal training vectors at D and fit the copula."""
    from .models import simulate_response_matrix

    D = np.atleast_2d(np.asarray(design_matrix, dtype=float))
    thetas = prior.sample(l_train, derive_rng(seed, "copula-train-theta"))
    Y = simulate_response_matrix(model, thetas, D, derive_seed(seed, "copula-train-sim"))
    return fit_copula_from_sample(marg, Y, D, seed, model_label=model_label)


def aux_marginal_loglik(marg: MarginalAux, cop: TCopulaFit, y_matrix, design_matrix,
                        model_label=None, form: str = "standard") -> np.ndarray:
    """log pi_X(y | D) for each row of y: copula density + marginal log terms."""
    Y = np.atleast_2d(np.asarray(y_matrix, dtype=float))
    terms = marg.logpdf_terms(Y, design_matrix, model_label)
    total = terms.sum(axis=1)
    finite = np.isfinite(total)
    out = np.full(Y.shape[0], -np.inf)
    if np.any(finite):
        U = marg.pit(Y[finite], design_matrix, model_label=model_label, mode="mid")
        out[finite] = copula_logdensity(cop, U, form=form) + total[finite]
    return out


def sample_coupled(marg: MarginalAux, space: DesignSpace, prior, model, l_train: int,
                   n: int, seed: int, model_label=None, return_fit: bool = False):
    """One coupled-model response vector at a random design.

    Fixed-theta copula refit: a single prior draw generates the L x n copula
    training sample, the copula is fitted against the marginal-aux PIT, one
    copula vector is drawn, and coordinates are mapped through the marginal
    quantile function.
    """
    from .models import simulate_response_matrix

    rng = derive_rng(seed, "coupled-design")
    D = space.sample_uniform(n, rng)
    theta = prior.sample(1, derive_rng(seed, "coupled-theta"))
    thetas = np.repeat(theta, l_train, axis=0)
    Y_train = simulate_response_matrix(model, thetas, D, derive_seed(seed, "coupled-train-sim"))
    cop = fit_copula_from_sample(marg, Y_train, D, seed, model_label=model_label)
    u = copula_sample(cop, 1, derive_rng(seed, "coupled-draw"))
    y = marg.quantile(u, D, model_label=model_label)[0]
    if return_fit:
        return y, cop, D, theta[0]
    return y
