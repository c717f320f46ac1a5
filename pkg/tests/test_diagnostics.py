import numpy as np
import pytest

from auxdesign import coupled as cp
from auxdesign import diagnostics as dg
from auxdesign import models as md
from auxdesign.families import get_family
from auxdesign.rng import derive_rng, derive_seed


class ExactCompartmentalEmulator:
    """Predicts the exact auxiliary parameters (oracle-swap construction)."""

    def predict_phi(self, x, family):
        x = np.atleast_2d(x)
        mu = md.compartmental_mean(x[:, :3], x[:, 3])
        return np.column_stack([mu, 0.1 + 0.01 * mu**2])


def exact_cond():
    return cp.ConditionalAux(family=get_family("normal"),
                             emulator=ExactCompartmentalEmulator())


def test_oracle_swap_conditional_centered():
    # auxiliary model identical to the assumed model: indicator is exchangeable
    model, prior, space = md.compartmental_model()
    cond = exact_cond()
    ps = [
        dg.assess_conditional(cond, model, prior, space, m0=60, n_sim=300, seed=s).p_value
        for s in range(5)
    ]
    assert 0.2 < np.mean(ps) < 0.8


def test_oracle_swap_mean_over_many_seeds():
    model, prior, space = md.compartmental_model()
    cond = exact_cond()
    ps = [
        dg.assess_conditional(cond, model, prior, space, m0=40, n_sim=150, seed=s).p_value
        for s in range(50)
    ]
    assert 0.4 <= np.mean(ps) <= 0.6


def test_report_fields_and_determinism(comp_setup):
    s = comp_setup
    r1 = dg.assess_conditional(s["cond"], s["model"], s["prior"], s["space"],
                               m0=50, n_sim=400, seed=123)
    r2 = dg.assess_conditional(s["cond"], s["model"], s["prior"], s["space"],
                               m0=50, n_sim=400, seed=123)
    assert r1.p_value == r2.p_value
    assert 0.0 <= r1.p_value <= 1.0
    assert set(r1.statistic_pairs) == {"mean", "variance", "median"}
    a, x = r1.statistic_pairs["mean"]
    assert len(a) == 50 and len(x) == 50
    assert r1.verdict in ("adequate", "inadequate")
    csv = r1.to_csv()
    assert csv.splitlines()[0] == "row,statistic,assumed,auxiliary"
    assert len(csv.splitlines()) == 1 + 3 * 50


def test_adequate_model_mean_slope_near_unity(comp_setup):
    s = comp_setup
    rep = dg.assess_conditional(s["cond"], s["model"], s["prior"], s["space"],
                                m0=100, n_sim=1000, seed=9)
    assert 0.8 <= rep.slope("mean") <= 1.25


def test_marginal_assessment_runs(comp_setup):
    s = comp_setup
    rep = dg.assess_marginal(s["marg"], s["model"], s["prior"], s["space"],
                             m0=50, n_sim=400, seed=10)
    assert 0.0 <= rep.p_value <= 1.0


def test_marginal_modelset_assessment(epi_setup):
    rep = dg.assess_marginal(epi_setup["marg"], None, None, epi_setup["space"],
                             m0=40, n_sim=400, seed=11, model_set=epi_setup["model_set"])
    assert rep.what.startswith("marginal/modelset")
    assert 0.0 <= rep.p_value <= 1.0


def test_coupled_oracle_swap(parasite_setup):
    # both samples from the coupled generator: scores are exchangeable
    s = parasite_setup
    marg, space, prior, model = s["marg"], s["space"], s["prior"], s["model"]
    m0, n = 40, 4
    ind = []
    for i in range(m0):
        seed_a = derive_seed(777, f"a{i}")
        seed_b = derive_seed(777, f"b{i}")
        ya, cop, D, _ = cp.sample_coupled(marg, space, prior, model, 80, n, seed_a,
                                          return_fit=True)
        # second draw from the same fitted copula, same design
        u = cp.copula_sample(cop, 1, derive_rng(seed_b, "draw"))
        yb = marg.quantile(u, D)[0]
        la = cp.aux_marginal_loglik(marg, cop, ya[None, :], D)[0]
        lb = cp.aux_marginal_loglik(marg, cop, yb[None, :], D)[0]
        ind.append(1.0 if lb > la else (0.5 if la == lb else 0.0))
    assert 0.2 < np.mean(ind) < 0.8


def test_assess_coupled_runs_and_is_deterministic(comp_setup):
    s = comp_setup
    r1 = dg.assess_coupled(s["marg"], s["space"], s["prior"], s["model"],
                           m0=30, l_train=80, n=5, seed=12)
    r2 = dg.assess_coupled(s["marg"], s["space"], s["prior"], s["model"],
                           m0=30, l_train=80, n=5, seed=12)
    assert r1.p_value == r2.p_value
    assert "n=5" in r1.what


def test_json_summary_round_trip(comp_setup):
    import json

    s = comp_setup
    rep = dg.assess_marginal(s["marg"], s["model"], s["prior"], s["space"],
                             m0=30, n_sim=200, seed=14)
    payload = json.loads(rep.to_json())
    assert payload["verdict"] == rep.verdict
    assert payload["p_value"] == rep.p_value
