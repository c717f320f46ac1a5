import numpy as np
import pytest
from scipy import integrate, stats

from auxdesign import models as md
from auxdesign.models import MarkovJumpModel
from auxdesign.priors import (
    GammaMeanVar,
    LogNormalIndependent,
    MultivariateNormal,
    Prior,
    SqrtBivariateNormal,
    UniformBox,
)


# -- compartmental -----------------------------------------------------------

def test_compartmental_at_time_zero():
    th = np.array([0.37, 1.4, 11.0])
    assert md.compartmental_mean(th, 0.0) == pytest.approx(0.0)
    assert md.compartmental_variance(th, 0.0) == pytest.approx(0.1)


def test_compartmental_hand_value():
    # 400*1/(20*0.9) * (e^-0.1 - e^-1) evaluated by hand
    th = np.array([0.1, 1.0, 20.0])
    expected = 400.0 / 18.0 * (np.exp(-0.1) - np.exp(-1.0))
    assert md.compartmental_mean(th, 1.0) == pytest.approx(expected, rel=1e-12)
    assert expected == pytest.approx(11.93, abs=5e-3)


def test_compartmental_equal_rates_limit():
    t = 2.3
    exact_limit = 400.0 * 0.5 * t * np.exp(-0.5 * t) / 15.0
    th_eq = np.array([0.5, 0.5, 15.0])
    assert md.compartmental_mean(th_eq, t) == pytest.approx(exact_limit, rel=1e-9)
    th_near = np.array([0.5, 0.5 * (1 + 1e-7), 15.0])
    assert md.compartmental_mean(th_near, t) == pytest.approx(exact_limit, rel=1e-5)


def test_compartmental_logdensity_mode():
    th = np.array([0.1, 1.0, 20.0])
    mu = md.compartmental_mean(th, 3.0)
    var = md.compartmental_variance(th, 3.0)
    assert md.compartmental_loglik(mu, th, 3.0) == pytest.approx(-0.5 * np.log(2 * np.pi * var))


def test_compartmental_density_normalised():
    rng = np.random.default_rng(0)
    model, prior, _ = md.compartmental_model()
    thetas = prior.sample(20, rng)
    ts = rng.uniform(0.0, 24.0, 20)
    for th, t in zip(thetas, ts):
        sd = np.sqrt(md.compartmental_variance(th, t))
        mu = md.compartmental_mean(th, t)
        val, _ = integrate.quad(
            lambda y: np.exp(md.compartmental_loglik(y, th, t)),
            mu - 12 * sd, mu + 12 * sd,
        )
        assert val == pytest.approx(1.0, abs=1e-6)


def test_compartmental_sample_moments():
    th = np.array([0.1, 1.0, 20.0])
    rng = np.random.default_rng(9)
    y = md.compartmental_sample(np.tile(th, (30000, 1)), 2.0, rng)
    mu = md.compartmental_mean(th, 2.0)
    var = md.compartmental_variance(th, 2.0)
    assert y.mean() == pytest.approx(mu, abs=4 * np.sqrt(var / 30000))


def test_compartmental_sampler_matches_moments():
    model, prior, _ = md.compartmental_model()
    th = np.tile([[0.1, 1.0, 20.0]], (20000, 1))
    y = model.simulate_rows(th, np.full((20000, 1), 2.0), seed=4)
    mu = md.compartmental_mean(np.array([0.1, 1.0, 20.0]), 2.0)
    var = md.compartmental_variance(np.array([0.1, 1.0, 20.0]), 2.0)
    assert y.mean() == pytest.approx(mu, abs=4 * np.sqrt(var / 20000))
    assert y.var() == pytest.approx(var, rel=0.05)


# -- Gillespie ----------------------------------------------------------------

def test_death_model_zero_rate_is_frozen():
    model, _, _ = md.epidemic_model("epi_death")
    th = np.zeros((50, 1))
    y = model.simulate_rows(th, np.full((50, 1), 5.0), seed=1)
    assert np.all(y == 0.0)


def test_death_model_binomial_oracle_small():
    # I(t) ~ Binomial(K, 1 - exp(-theta t)): each susceptible converts independently
    model, _, _ = md.epidemic_model("epi_death")
    reps, theta, t, K = 10_000, 0.1, 5.0, 200
    y = model.simulate_rows(np.full((reps, 1), theta), np.full((reps, 1), t), seed=2)
    p = 1 - np.exp(-theta * t)
    se = np.sqrt(K * p * (1 - p) / reps)
    assert y.mean() == pytest.approx(K * p, abs=3 * se)


def test_aphid_pure_birth_oracle():
    # theta_2 = 0 reduces to a Yule process: E N(t) = N0 exp(theta_1 t)
    model, _, _ = md.aphid_model()
    reps, th1, t = 10_000, 0.246, 4.0
    thetas = np.column_stack([np.full(reps, th1), np.zeros(reps)])
    y = model.simulate_rows(thetas, np.full((reps, 1), t), seed=3)
    mean = 28 * np.exp(th1 * t)
    var = 28 * np.exp(2 * th1 * t) * (1 - np.exp(-th1 * t))
    assert y.mean() == pytest.approx(mean, abs=3 * np.sqrt(var / reps))


def test_parasite_counts_bounded_by_dose():
    model, prior, space = md.parasite_model()
    rng = np.random.default_rng(5)
    thetas = prior.sample(300, rng)
    ds = space.sample_uniform(300, rng)
    y = model.simulate_rows(thetas, ds, seed=6)
    assert np.all(y >= 0)
    assert np.all(y <= np.rint(ds[:, 0]))


def test_epidemic_population_conserved():
    # deltas move individuals between compartments; total stays K
    for key in ("epi_death", "epi_si", "epi_sei", "epi_sei2"):
        model, prior, space = md.epidemic_model(key)
        assert np.all(model.deltas.sum(axis=1) == 0.0)
        rng = np.random.default_rng(7)
        y = model.simulate_rows(prior.sample(200, rng), space.sample_uniform(200, rng), seed=8)
        assert np.all((0 <= y) & (y <= md.EPIDEMIC_POPULATION))


def test_negative_rate_aborts():
    from numba import njit

    @njit(inline="always")
    def bad_rates(state, theta, out):
        out[0] = theta[0] * state[0]  # negative when theta < 0

    model = MarkovJumpModel(
        name="bad", state_dim=1, param_dim=1, design_dim=1,
        deltas=np.array([[1.0]]), rates=bad_rates,
        initial_state=lambda ds: np.ones((ds.shape[0], 1)),
        stop_time=lambda ds: ds[:, 0].copy(), observe_index=0,
    )
    with pytest.raises(RuntimeError, match="negative"):
        model.simulate_rows(np.array([[-1.0]]), np.array([[5.0]]), seed=0)


def test_time_rescaling_invariance():
    # scaling all rates by c and the horizon by 1/c leaves the law unchanged
    model, _, _ = md.aphid_model()
    reps, c = 10_000, 3.0
    base = np.tile([[0.246, 1.34e-4]], (reps, 1))
    y1 = model.simulate_rows(base, np.full((reps, 1), 6.0), seed=11)
    y2 = model.simulate_rows(base * c, np.full((reps, 1), 6.0 / c), seed=12)
    assert stats.ks_2samp(y1, y2).pvalue > 1e-3


def test_gillespie_single_deterministic_given_rng():
    model, prior, _ = md.aphid_model()
    th = prior.sample(1, np.random.default_rng(0))[0]
    a = md.gillespie_simulate(model, th, [10.0], np.random.default_rng(33))
    b = md.gillespie_simulate(model, th, [10.0], np.random.default_rng(33))
    assert a == b


def test_batch_matches_thread_count(monkeypatch):
    import numba

    model, prior, space = md.aphid_model()
    rng = np.random.default_rng(1)
    thetas = prior.sample(64, rng)
    ds = space.sample_uniform(64, rng)
    old = numba.get_num_threads()
    try:
        numba.set_num_threads(1)
        y1 = model.simulate_rows(thetas, ds, seed=21)
        numba.set_num_threads(2)
        y2 = model.simulate_rows(thetas, ds, seed=21)
    finally:
        numba.set_num_threads(old)
    np.testing.assert_array_equal(y1, y2)


def test_trajectory_grid_consistent_with_endpoint():
    model, prior, _ = md.aphid_model()
    thetas = prior.sample(40, np.random.default_rng(2))
    grid = np.array([2.0, 5.0, 9.0])
    traj = md.simulate_trajectories(model, thetas, [9.0], grid, seed=13)
    assert traj.shape == (40, 3)
    assert np.all(traj[:, 0] >= 0)
    # population grows on average over the early window
    assert traj[:, 2].mean() > traj[:, 0].mean()


# -- priors -------------------------------------------------------------------

def test_uniform_logdensity_value():
    prior = Prior((UniformBox(np.array([0.0]), np.array([0.5])),))
    assert prior.logpdf(np.array([[0.2]]))[0] == pytest.approx(np.log(2.0))
    assert prior.logpdf(np.array([[0.7]]))[0] == -np.inf


def test_aphid_prior_mean():
    _, prior, _ = md.aphid_model()
    draws = prior.sample(100_000, np.random.default_rng(3))
    se = np.sqrt(6.24e-5) / np.sqrt(100_000)
    assert draws[:, 0].mean() == pytest.approx(2.46e-1, abs=3 * se)
    assert np.all(draws >= 0)  # admissibility clamp


def test_sqrt_bivariate_nonnegative_and_normalised():
    block = SqrtBivariateNormal(
        np.array([0.0361, 0.0854]),
        np.array([[2.03e-5, -1.07e-4], [-1.07e-4, 1.17e-3]]),
    )
    draws = block.sample(5000, np.random.default_rng(4))
    assert np.all(draws >= 0)
    # substitute u = sqrt(theta): the 1/sqrt singularity at 0 drops out and the
    # density must integrate to ~1 over a box holding nearly all mass
    us = np.linspace(1e-9, 0.08, 500)
    vs = np.linspace(1e-9, 0.28, 500)
    U, V = np.meshgrid(us, vs, indexing="ij")
    pts = np.stack([(U**2).ravel(), (V**2).ravel()], axis=-1)
    dens = np.exp(block.logpdf(pts)).reshape(U.shape) * 4.0 * U * V
    total = np.trapezoid(np.trapezoid(dens, vs, axis=1), us)
    assert total == pytest.approx(1.0, abs=1e-2)


def test_gamma_prior_moments():
    block = GammaMeanVar(np.array([0.04]), np.array([4e-4]))
    draws = block.sample(200_000, np.random.default_rng(5))
    assert draws.mean() == pytest.approx(0.04, rel=0.02)
    assert draws.var() == pytest.approx(4e-4, rel=0.05)


def test_lognormal_prior_support():
    block = LogNormalIndependent(np.log(np.array([0.1, 1.0, 20.0])), np.full(3, 0.05))
    draws = block.sample(1000, np.random.default_rng(6))
    assert np.all(draws > 0)
    assert np.isfinite(block.logpdf(draws)).all()
    assert block.logpdf(np.array([[1.0, -1.0, 1.0]]))[0] == -np.inf


def test_non_pd_covariance_rejected():
    with pytest.raises(np.linalg.LinAlgError):
        MultivariateNormal(np.zeros(2), np.array([[1.0, 2.0], [2.0, 1.0]]))


def test_prior_logpdf_matches_scipy_for_mvn():
    mean = np.array([1.0, -2.0])
    cov = np.array([[2.0, 0.3], [0.3, 0.5]])
    block = MultivariateNormal(mean, cov)
    x = np.array([[1.3, -1.7], [0.0, 0.0]])
    expected = stats.multivariate_normal(mean, cov).logpdf(x)
    np.testing.assert_allclose(block.logpdf(x), expected, rtol=1e-12)


def test_model_zoo_keys():
    for key in md.MODEL_KEYS:
        model, prior, space, family = md.get_model(key)
        assert model.param_dim == prior.dim
        assert space.w == model.design_dim
    with pytest.raises(ValueError):
        md.get_model("nope")
