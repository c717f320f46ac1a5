"""Simulable models: Markov jump processes (Gillespie) and direct samplers.

Markov jump models are simulated with the exact direct method (exponential
waiting time + categorical reaction choice), compiled with numba.  Batch
simulation seeds each trajectory independently from a labelled seed stream,
so results are bit-identical regardless of thread count and can be fanned
out across workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numba
import numpy as np
from numba import njit, prange

# the bundled TBB is too old on some images; OpenMP keeps prange quiet and fast
numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

from .design_space import DesignSpace, MinSpacing
from .priors import (
    GammaMeanVar,
    LogNormalIndependent,
    MultivariateNormal,
    Prior,
    SqrtBivariateNormal,
    UniformBox,
)
from .rng import derive_rng, row_seeds

__all__ = [
    "MarkovJumpModel",
    "DirectModel",
    "ModelSet",
    "gillespie_simulate",
    "simulate_rows",
    "simulate_response_matrix",
    "simulate_trajectories",
    "compartmental_mean",
    "compartmental_variance",
    "compartmental_loglik",
    "get_model",
    "epidemic_model_set",
    "conjugate_normal_toy",
    "MODEL_KEYS",
]

EPIDEMIC_POPULATION = 200


def _make_driver(rates_fn):
    @njit(parallel=True)
    def driver(deltas, init_states, thetas, stop_times, seeds, out, err):
        n_react = deltas.shape[0]
        sdim = deltas.shape[1]
        for t in prange(init_states.shape[0]):
            np.random.seed(seeds[t])
            state = init_states[t].copy()
            theta = thetas[t]
            rates = np.empty(n_react)
            tstop = stop_times[t]
            tt = 0.0
            while True:
                rates_fn(state, theta, rates)
                total = 0.0
                bad = False
                for r in range(n_react):
                    if rates[r] < 0.0:
                        bad = True
                    total += rates[r]
                if bad:
                    err[t] = 1
                    break
                if total <= 0.0:
                    break  # absorbed: state frozen until stop time
                tt += np.random.exponential(1.0 / total)
                if tt >= tstop:
                    break
                u = np.random.random() * total
                acc = 0.0
                j = n_react - 1
                for r in range(n_react):
                    acc += rates[r]
                    if u < acc:
                        j = r
                        break
                for s in range(sdim):
                    state[s] += deltas[j, s]
            out[t] = state

    return driver


def _make_grid_driver(rates_fn):
    @njit(parallel=True)
    def driver(deltas, init_states, thetas, grid, seeds, observe_index, out, err):
        n_react = deltas.shape[0]
        sdim = deltas.shape[1]
        n_grid = grid.shape[0]
        for t in prange(init_states.shape[0]):
            np.random.seed(seeds[t])
            state = init_states[t].copy()
            theta = thetas[t]
            rates = np.empty(n_react)
            tstop = grid[n_grid - 1]
            tt = 0.0
            g = 0
            while True:
                rates_fn(state, theta, rates)
                total = 0.0
                bad = False
                for r in range(n_react):
                    if rates[r] < 0.0:
                        bad = True
                    total += rates[r]
                if bad:
                    err[t] = 1
                    break
                if total <= 0.0:
                    tnext = tstop + 1.0
                else:
                    tnext = tt + np.random.exponential(1.0 / total)
                while g < n_grid and grid[g] < tnext:
                    out[t, g] = state[observe_index]
                    g += 1
                if g >= n_grid or tnext > tstop:
                    break
                tt = tnext
                u = np.random.random() * total
                acc = 0.0
                j = n_react - 1
                for r in range(n_react):
                    acc += rates[r]
                    if u < acc:
                        j = r
                        break
                for s in range(sdim):
                    state[s] += deltas[j, s]

    return driver


@dataclass
class MarkovJumpModel:
    """Reaction network simulable by the Gillespie direct method."""

    name: str
    state_dim: int
    param_dim: int
    design_dim: int
    deltas: np.ndarray  # (n_reactions, state_dim)
    rates: Callable  # numba-compiled (state, theta, out) -> None
    initial_state: Callable[[np.ndarray], np.ndarray]  # (T, w) -> (T, state_dim)
    stop_time: Callable[[np.ndarray], np.ndarray]  # (T, w) -> (T,)
    observe_index: int
    response_bound: Callable[[np.ndarray], np.ndarray] | None = None  # trials per run
    _driver: Callable | None = field(default=None, repr=False, compare=False)
    _grid_driver: Callable | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.deltas = np.asarray(self.deltas, dtype=np.float64)

    def driver(self):
        if self._driver is None:
            self._driver = _make_driver(self.rates)
        return self._driver

    def grid_driver(self):
        if self._grid_driver is None:
            self._grid_driver = _make_grid_driver(self.rates)
        return self._grid_driver

    def simulate_rows(self, thetas, ds, seed, label="sim") -> np.ndarray:
        """One observation per row: y[t] from trajectory at (thetas[t], ds[t])."""
        thetas = np.ascontiguousarray(np.atleast_2d(thetas), dtype=np.float64)
        ds = np.ascontiguousarray(np.atleast_2d(ds), dtype=np.float64)
        T = thetas.shape[0]
        init = np.ascontiguousarray(self.initial_state(ds), dtype=np.float64)
        stop = np.ascontiguousarray(self.stop_time(ds), dtype=np.float64)
        seeds = row_seeds(seed, label, T)
        out = np.empty((T, self.state_dim))
        err = np.zeros(T, dtype=np.uint8)
        self.driver()(self.deltas, init, thetas, stop, seeds, out, err)
        if err.any():
            raise RuntimeError(
                f"model {self.name!r}: negative reaction rate encountered "
                f"({int(err.sum())} of {T} trajectories); check model definition"
            )
        return out[:, self.observe_index]


@dataclass
class DirectModel:
    """Model with a direct (non-SSA) sampler and an optional exact density."""

    name: str
    param_dim: int
    design_dim: int
    sampler: Callable  # (thetas (T,p), ds (T,w), rng) -> (T,)
    logdensity: Callable | None = None  # broadcasting (y, thetas, ds) -> loglik
    response_bound: Callable | None = None

    def simulate_rows(self, thetas, ds, seed, label="sim") -> np.ndarray:
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        ds = np.atleast_2d(np.asarray(ds, dtype=float))
        return self.sampler(thetas, ds, derive_rng(seed, label))


@dataclass(frozen=True)
class ModelSet:
    """Competing models with prior model probabilities."""

    models: dict[int, tuple]  # m -> (model, prior)
    prior_probs: dict[int, float]

    def __post_init__(self):
        total = sum(self.prior_probs.values())
        if abs(total - 1.0) > 1e-9:
            raise ValueError("prior model probabilities must sum to 1")
        if set(self.models) != set(self.prior_probs):
            raise ValueError("models and prior_probs must share keys")

    @property
    def labels(self) -> list[int]:
        return sorted(self.models)

    def sample_models(self, count: int, rng: np.random.Generator) -> np.ndarray:
        labels = self.labels
        probs = np.array([self.prior_probs[m] for m in labels])
        return np.asarray(labels)[rng.choice(len(labels), size=count, p=probs)]


# ---------------------------------------------------------------------------
# generic simulation entry points
# ---------------------------------------------------------------------------

def gillespie_simulate(model: MarkovJumpModel, theta, d, rng: np.random.Generator):
    """Single exact SSA observation (direct method)."""
    seed = int(rng.integers(2**63 - 1))
    return float(model.simulate_rows(np.atleast_2d(theta), np.atleast_2d(d), seed)[0])


def simulate_rows(model, thetas, ds, seed, label="sim") -> np.ndarray:
    return model.simulate_rows(thetas, ds, seed, label=label)


def simulate_response_matrix(model, thetas, design_matrix, seed, label="sim") -> np.ndarray:
    """y[i, k] ~ model at (thetas[i], d_k), all independent."""
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    D = np.atleast_2d(np.asarray(design_matrix, dtype=float))
    B, n = thetas.shape[0], D.shape[0]
    rep_theta = np.repeat(thetas, n, axis=0)
    tile_d = np.tile(D, (B, 1))
    return model.simulate_rows(rep_theta, tile_d, seed, label=label).reshape(B, n)


def simulate_trajectories(model: MarkovJumpModel, thetas, d, grid, seed) -> np.ndarray:
    """Observed component on a fixed time grid, one row per theta."""
    thetas = np.ascontiguousarray(np.atleast_2d(thetas), dtype=np.float64)
    T = thetas.shape[0]
    ds = np.tile(np.atleast_2d(np.asarray(d, dtype=float)), (T, 1))
    init = np.ascontiguousarray(model.initial_state(ds), dtype=np.float64)
    grid = np.ascontiguousarray(grid, dtype=np.float64)
    seeds = row_seeds(seed, "trajectories", T)
    out = np.empty((T, grid.size))
    err = np.zeros(T, dtype=np.uint8)
    model.grid_driver()(model.deltas, init, thetas, grid, seeds, model.observe_index, out, err)
    if err.any():
        raise RuntimeError(f"model {model.name!r}: negative rate in trajectory recording")
    return out


# ---------------------------------------------------------------------------
# compartmental model (tractable; the only model with an exact density)
# ---------------------------------------------------------------------------

def compartmental_mean(theta, t):
    """Mean drug concentration at time t; stable at theta_2 == theta_1."""
    theta = np.asarray(theta, dtype=float)
    t = np.asarray(t, dtype=float)
    th1, th2, th3 = theta[..., 0], theta[..., 1], theta[..., 2]
    diff = th2 - th1
    near = np.abs(diff) <= 1e-9 * np.maximum(np.abs(th1), np.abs(th2))
    safe = np.where(near, 1.0, diff)
    main = 400.0 * th2 * (np.exp(-th1 * t) - np.exp(-th2 * t)) / (th3 * safe)
    limit = 400.0 * th1 * t * np.exp(-th1 * t) / th3
    return np.where(near, limit, main)


def compartmental_variance(theta, t):
    mu = compartmental_mean(theta, t)
    return 0.1 + 0.01 * mu**2


def compartmental_loglik(y, theta, t):
    """Exact log-density, broadcasting over leading axes."""
    mu = compartmental_mean(theta, t)
    var = compartmental_variance(theta, t)
    y = np.asarray(y, dtype=float)
    return -0.5 * (np.log(2 * np.pi * var) + (y - mu) ** 2 / var)


def compartmental_sample(theta, t, rng: np.random.Generator):
    """Concentration draw(s) at time t; broadcasting like the mean formula."""
    mu = compartmental_mean(theta, t)
    return rng.normal(mu, np.sqrt(0.1 + 0.01 * mu**2))


def _compartmental_sampler(thetas, ds, rng):
    t = ds[:, 0]
    mu = compartmental_mean(thetas, t)
    var = compartmental_variance(thetas, t)
    return rng.normal(mu, np.sqrt(var))


def compartmental_model(window=(0.0, 24.0), min_spacing=0.25):
    """Drug-concentration sampling design; times in hours, spacing 15 min."""
    model = DirectModel(
        name="compartmental",
        param_dim=3,
        design_dim=1,
        sampler=_compartmental_sampler,
        logdensity=lambda y, thetas, ds: compartmental_loglik(y, thetas, ds[..., 0]),
    )
    prior = Prior((
        LogNormalIndependent(
            np.log(np.array([0.1, 1.0, 20.0])), np.full(3, 0.05)
        ),
    ))
    space = DesignSpace(
        np.array([[window[0], window[1]]]),
        constraints=(MinSpacing(0, min_spacing),) if min_spacing else (),
    )
    return model, prior, space


# ---------------------------------------------------------------------------
# aphid population growth model
# ---------------------------------------------------------------------------

@njit(inline="always")
def _aphid_rates(state, theta, out):
    out[0] = theta[0] * state[0]  # birth: N += 1, C += 1
    out[1] = theta[1] * state[0] * state[1]  # death: N -= 1


def aphid_model(window=(0.0, 49.0), n0=28.0, c0=28.0):
    model = MarkovJumpModel(
        name="aphid",
        state_dim=2,
        param_dim=2,
        design_dim=1,
        deltas=np.array([[1.0, 1.0], [-1.0, 0.0]]),
        rates=_aphid_rates,
        initial_state=lambda ds: np.tile(np.array([n0, c0]), (ds.shape[0], 1)),
        stop_time=lambda ds: ds[:, 0].copy(),
        observe_index=0,
    )
    prior = Prior((
        MultivariateNormal(
            np.array([2.46e-1, 1.34e-4]),
            np.array([[6.24e-5, 5.80e-8], [5.80e-8, 4.00e-10]]),
            nonnegative=True,
        ),
    ))
    space = DesignSpace(np.array([[window[0], window[1]]]))
    return model, prior, space


# ---------------------------------------------------------------------------
# parasite (host-immunity) model
# ---------------------------------------------------------------------------

@njit(inline="always")
def _parasite_rates(state, theta, out):
    J, M, I = state[0], state[1], state[2]
    out[0] = theta[0] * J  # maturation: J -> M
    out[1] = (theta[3] + theta[4] * I) * J  # juvenile death
    out[2] = theta[1] * M  # mature death
    out[3] = theta[2] * J  # immunity up
    out[4] = theta[5] * I  # immunity down


def _parasite_initial(ds):
    out = np.zeros((ds.shape[0], 3))
    out[:, 0] = np.rint(ds[:, 0])
    return out


def parasite_model(time_clip=1e-6):
    model = MarkovJumpModel(
        name="parasite",
        state_dim=3,
        param_dim=6,
        design_dim=2,
        deltas=np.array([
            [-1.0, 1.0, 0.0],
            [-1.0, 0.0, 0.0],
            [0.0, -1.0, 0.0],
            [0.0, 0.0, 1.0],
            [0.0, 0.0, -1.0],
        ]),
        rates=_parasite_rates,
        initial_state=_parasite_initial,
        stop_time=lambda ds: ds[:, 1].copy(),
        observe_index=1,
        response_bound=lambda ds: np.rint(ds[:, 0]).astype(int),
    )
    prior = Prior((
        GammaMeanVar(np.array([0.04]), np.array([4.00e-4])),
        GammaMeanVar(np.array([0.00147]), np.array([2.56e-7])),
        SqrtBivariateNormal(
            np.array([0.0361, 0.0854]),
            np.array([[2.03e-5, -1.07e-4], [-1.07e-4, 1.17e-3]]),
        ),
        GammaMeanVar(np.array([1.10]), np.array([0.21])),
        GammaMeanVar(np.array([0.31]), np.array([0.18])),
    ))
    # the sacrifice-time interval is open; clip so ACE sees a closed box
    space = DesignSpace(np.array([[100.0, 200.0], [30.0 + time_clip, 300.0 - time_clip]]))
    return model, prior, space


# ---------------------------------------------------------------------------
# epidemic models (state (S, E, I); S + E + I = K by construction)
# ---------------------------------------------------------------------------

@njit(inline="always")
def _epi_death_rates(state, theta, out):
    out[0] = theta[0] * state[0]


@njit(inline="always")
def _epi_si_rates(state, theta, out):
    out[0] = (theta[0] + theta[1] * state[2]) * state[0]


@njit(inline="always")
def _epi_sei_rates(state, theta, out):
    out[0] = theta[0] * state[0]
    out[1] = state[1] / max(theta[1], 1e-12)


@njit(inline="always")
def _epi_sei2_rates(state, theta, out):
    out[0] = (theta[0] + theta[1] * state[2]) * state[0]
    out[1] = state[1] / max(theta[2], 1e-12)


_S_TO_I = [-1.0, 0.0, 1.0]
_S_TO_E = [-1.0, 1.0, 0.0]
_E_TO_I = [0.0, -1.0, 1.0]

_EPIDEMIC_SPECS = {
    "epi_death": (_epi_death_rates, [_S_TO_I], [(0.0, 0.5)]),
    "epi_si": (_epi_si_rates, [_S_TO_I], [(0.0, 0.5), (0.0, 0.005)]),
    "epi_sei": (_epi_sei_rates, [_S_TO_E, _E_TO_I], [(0.0, 0.5), (0.0, 10.0)]),
    "epi_sei2": (
        _epi_sei2_rates,
        [_S_TO_E, _E_TO_I],
        [(0.0, 0.5), (0.0, 0.005), (0.0, 10.0)],
    ),
}


def epidemic_model(key, window=(0.0, 10.0), population=EPIDEMIC_POPULATION):
    rates, deltas, unif = _EPIDEMIC_SPECS[key]
    K = float(population)
    model = MarkovJumpModel(
        name=key,
        state_dim=3,
        param_dim=len(unif),
        design_dim=1,
        deltas=np.array(deltas),
        rates=rates,
        initial_state=lambda ds: np.tile(np.array([K, 0.0, 0.0]), (ds.shape[0], 1)),
        stop_time=lambda ds: ds[:, 0].copy(),
        observe_index=2,
        response_bound=lambda ds: np.full(ds.shape[0], int(K)),
    )
    prior = Prior((
        UniformBox(np.array([b[0] for b in unif]), np.array([b[1] for b in unif])),
    ))
    space = DesignSpace(np.array([[window[0], window[1]]]))
    return model, prior, space


def epidemic_model_set(window=(0.0, 10.0), population=EPIDEMIC_POPULATION) -> tuple[ModelSet, DesignSpace]:
    keys = ["epi_death", "epi_si", "epi_sei", "epi_sei2"]
    models = {}
    space = None
    for m, key in enumerate(keys, start=1):
        model, prior, space = epidemic_model(key, window, population)
        models[m] = (model, prior)
    probs = {m: 1.0 / len(keys) for m in models}
    return ModelSet(models, probs), space


# ---------------------------------------------------------------------------
# conjugate normal-mean toy (oracle for nested Monte Carlo)
# ---------------------------------------------------------------------------

def conjugate_normal_toy(mu0=0.0, tau2=1.0, sigma2=1.0):
    """y ~ N(theta, sigma2), theta ~ N(mu0, tau2); SIG has a closed form."""
    sd = np.sqrt(sigma2)
    model = DirectModel(
        name="conjugate_toy",
        param_dim=1,
        design_dim=1,
        sampler=lambda thetas, ds, rng: rng.normal(thetas[:, 0], sd),
        logdensity=lambda y, thetas, ds: -0.5 * (
            np.log(2 * np.pi * sigma2) + (np.asarray(y, float) - thetas[..., 0]) ** 2 / sigma2
        ),
    )
    prior = Prior((MultivariateNormal(np.array([mu0]), np.array([[tau2]])),))
    space = DesignSpace(np.array([[0.0, 1.0]]))
    return model, prior, space


_ZOO = {
    "compartmental": (compartmental_model, "normal"),
    "aphid": (aphid_model, "negbin"),
    "parasite": (parasite_model, "betabinom"),
    "epi_death": (lambda: epidemic_model("epi_death"), "betabinom"),
    "epi_si": (lambda: epidemic_model("epi_si"), "betabinom"),
    "epi_sei": (lambda: epidemic_model("epi_sei"), "betabinom"),
    "epi_sei2": (lambda: epidemic_model("epi_sei2"), "betabinom"),
}
MODEL_KEYS = tuple(_ZOO)


def get_model(key: str, **kwargs):
    """(model, prior, space, default family key) for a zoo model."""
    try:
        factory, family = _ZOO[key]
    except KeyError:
        raise ValueError(f"unknown model {key!r}; choose from {MODEL_KEYS}") from None
    model, prior, space = factory(**kwargs) if kwargs else factory()
    return model, prior, space, family
