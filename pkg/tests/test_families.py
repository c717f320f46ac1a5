import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from auxdesign.families import FAMILY_KEYS, get_family


def random_phi(family, rng):
    if family.name == "normal":
        return np.array([rng.normal(0, 5), rng.uniform(0.1, 9.0)])
    if family.name == "poisson":
        return np.array([rng.uniform(0.2, 40.0)])
    if family.name == "negbin":
        return np.array([rng.uniform(0.5, 40.0), rng.uniform(0.3, 30.0)])
    return np.array([rng.uniform(0.05, 0.95), rng.uniform(0.01, 0.6)])


def context_for(family):
    return 60.0 if family.needs_context else None


def test_unknown_family_rejected():
    with pytest.raises(ValueError):
        get_family("laplace")


def test_poisson_mle_is_mean():
    fam = get_family("poisson")
    fit = fam.fit_mle(np.array([2.0, 2.0, 2.0, 2.0]))
    assert fit.phi[0] == pytest.approx(2.0)
    assert fit.ok


def test_normal_mle_closed_form():
    fam = get_family("normal")
    fit = fam.fit_mle(np.array([0.0, 2.0]))
    np.testing.assert_allclose(fit.phi, [1.0, 1.0])  # mean, biased variance


def test_negbin_simulate_and_refit():
    fam = get_family("negbin")
    truth = np.array([10.0, 5.0])
    y = fam.sample(truth, np.random.default_rng(0), size=10_000)
    fit = fam.fit_mle(y)
    assert fit.ok
    np.testing.assert_allclose(fit.phi, truth, rtol=0.10)


def test_betabinom_simulate_and_refit():
    fam = get_family("betabinom")
    truth = np.array([0.3, 0.15])
    ctx = 150.0
    y = fam.sample(truth, np.random.default_rng(1), size=8000, context=np.full(8000, ctx))
    fit = fam.fit_mle(y, context=ctx)
    assert fit.ok
    np.testing.assert_allclose(fit.phi, truth, rtol=0.15)


def test_densities_normalised():
    rng = np.random.default_rng(7)
    for key in FAMILY_KEYS:
        fam = get_family(key)
        for _ in range(20):
            phi = random_phi(fam, rng)
            ctx = context_for(fam)
            if fam.discrete:
                top = int(ctx) if fam.needs_context else 100_000
                ys = np.arange(0, top + 1, dtype=float)
                total = np.exp(fam.logpdf(ys, phi, context=ctx)).sum()
            else:
                m, v = phi
                total, _ = integrate.quad(
                    lambda y: np.exp(fam.logpdf(y, phi)), m - 14 * np.sqrt(v), m + 14 * np.sqrt(v)
                )
            assert total == pytest.approx(1.0, abs=1e-8), (key, phi)


def test_quantile_cdf_round_trips():
    rng = np.random.default_rng(8)
    for key in FAMILY_KEYS:
        fam = get_family(key)
        phi = random_phi(fam, rng)
        ctx = context_for(fam)
        y = fam.sample(phi, rng, size=50, context=None if ctx is None else np.full(50, ctx))
        u = fam.cdf(y, phi, context=ctx)
        back = fam.quantile(u, phi, context=ctx)
        if fam.discrete:
            np.testing.assert_array_equal(back, y)
        else:
            np.testing.assert_allclose(back, y, atol=1e-8)


def test_quantile_is_generalised_inverse():
    fam = get_family("poisson")
    phi = np.array([3.0])
    for u in (0.05, 0.31, 0.5, 0.77, 0.99):
        q = fam.quantile(np.array([u]), phi)[0]
        assert fam.cdf(np.array([q]), phi)[0] >= u
        if q > 0:
            assert fam.cdf(np.array([q - 1]), phi)[0] < u


def test_fit_never_loses_to_moment_start():
    rng = np.random.default_rng(9)
    for key in ("negbin", "betabinom"):
        fam = get_family(key)
        truth = random_phi(fam, rng)
        ctx = context_for(fam)
        y = fam.sample(truth, rng, size=500, context=None if ctx is None else np.full(500, ctx))
        fit = fam.fit_mle(y, context=ctx)
        start = fam.moment_start(y, context=ctx)
        ll_fit = fam.logpdf(y, fit.phi, context=ctx).sum()
        ll_start = fam.logpdf(y, start, context=ctx).sum()
        assert ll_fit >= ll_start - 1e-6


def test_negbin_poisson_limit():
    nb, pois = get_family("negbin"), get_family("poisson")
    mu = 7.3
    ys = np.arange(0, 80, dtype=float)
    ks = np.max(np.abs(nb.cdf(ys, np.array([mu, 1e6])) - pois.cdf(ys, np.array([mu]))))
    assert ks < 1e-3


def test_betabinom_binomial_limit():
    fam = get_family("betabinom")
    n, p = 20, 0.37
    ys = np.arange(0, n + 1, dtype=float)
    pmf_bb = np.exp(fam.logpdf(ys, np.array([p, 1e-8]), context=float(n)))
    pmf_bin = stats.binom.pmf(ys.astype(int), n, p)
    assert np.max(np.abs(pmf_bb - pmf_bin)) < 1e-6


@settings(max_examples=40, deadline=None)
@given(
    key=st.sampled_from(FAMILY_KEYS),
    raw=st.tuples(st.floats(-4, 4), st.floats(-4, 4)),
)
def test_link_round_trip(key, raw):
    fam = get_family(key)
    z = np.array(raw[: fam.v])
    phi = fam.from_link(z)
    np.testing.assert_allclose(fam.to_link(phi), z, atol=1e-12)
    np.testing.assert_allclose(fam.from_link(fam.to_link(phi)), phi, rtol=1e-12, atol=1e-300)


def test_degenerate_samples_clamped():
    pois = get_family("poisson")
    fit = pois.fit_mle(np.zeros(10))
    assert fit.phi[0] == pytest.approx(1e-8)
    assert np.isfinite(fit.z).all()
    norm = get_family("normal")
    fit = norm.fit_mle(np.full(10, 3.3))
    assert fit.phi[1] == pytest.approx(1e-8)
    assert np.isfinite(fit.z).all()
    nb = get_family("negbin")
    fit = nb.fit_mle(np.zeros(10))
    assert np.isfinite(fit.z).all()


def test_simple_values():
    norm = get_family("normal")
    assert norm.cdf(np.array([0.0]), np.array([0.0, 1.0]))[0] == pytest.approx(0.5)
    pois = get_family("poisson")
    assert np.exp(pois.logpdf(np.array([0.0]), np.array([1.0])))[0] == pytest.approx(np.exp(-1.0))


def test_off_support_values():
    pois = get_family("poisson")
    assert pois.logpdf(np.array([-1.0]), np.array([2.0]))[0] == -np.inf
    assert pois.logpdf(np.array([1.5]), np.array([2.0]))[0] == -np.inf
    assert pois.cdf(np.array([-1.0]), np.array([2.0]))[0] == 0.0
    bb = get_family("betabinom")
    assert bb.logpdf(np.array([61.0]), np.array([0.5, 0.1]), context=60.0)[0] == -np.inf
    assert bb.cdf(np.array([61.0]), np.array([0.5, 0.1]), context=60.0)[0] == 1.0


def test_betabinom_needs_context():
    bb = get_family("betabinom")
    with pytest.raises(ValueError):
        bb.logpdf(np.array([1.0]), np.array([0.5, 0.1]))


def test_fit_needs_two_observations():
    with pytest.raises(ValueError):
        get_family("normal").fit_mle(np.array([1.0]))


def test_vectorised_phi_rows():
    # the emulator hot path evaluates one phi row per observation
    nb = get_family("negbin")
    phi = np.array([[5.0, 2.0], [50.0, 8.0], [1.0, 1.0]])
    y = np.array([4.0, 60.0, 0.0])
    out = nb.logpdf(y, phi)
    expected = [nb.logpdf(np.array([y[i]]), phi[i])[0] for i in range(3)]
    np.testing.assert_allclose(out, expected)
