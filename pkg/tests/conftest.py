"""Shared desk-scale fixtures.

The expensive off-line auxiliary-model builds (M=100 training points, N=2000
simulations each) are cached on disk under tests/.cache so repeated test runs
skip the simulation stage.  All seeds are fixed, so cached artifacts are
bit-identical to fresh builds.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from auxdesign import coupled as cp
from auxdesign import models as md
from auxdesign.emulator import load_mgp, save_mgp
from auxdesign.families import get_family

CACHE = Path(__file__).parent / ".cache"
DESK_M = 100
DESK_N = 2000
DESK_L = 200
DESK_M0 = 100

COMP_SEED = 101
APHID_SEED = 102
PARASITE_SEED = 103
EPI_SEED = 104


def _cached(name, build):
    path = CACHE / f"{name}.mgp"
    if path.exists():
        return load_mgp(path)
    fit = build()
    CACHE.mkdir(exist_ok=True)
    save_mgp(fit, path)
    return fit


@pytest.fixture(scope="session")
def comp_setup():
    model, prior, space = md.compartmental_model()
    fam = get_family("normal")
    cond_emu = _cached(
        "comp-cond",
        lambda: cp.build_conditional(model, prior, space, fam, DESK_M, DESK_N,
                                     COMP_SEED).emulator,
    )
    marg_emu = _cached(
        "comp-marg",
        lambda: cp.build_marginal(model, prior, space, fam, DESK_M, DESK_N,
                                  COMP_SEED).emulator,
    )
    cond = cp.ConditionalAux(family=fam, emulator=cond_emu, response_bound=None)
    marg = cp.MarginalAux(family=fam, emulator=marg_emu, response_bound=None)
    return {"model": model, "prior": prior, "space": space, "family": fam,
            "cond": cond, "marg": marg, "seed": COMP_SEED}


@pytest.fixture(scope="session")
def aphid_setup():
    model, prior, space = md.aphid_model()
    nb = get_family("negbin")
    pois = get_family("poisson")
    names = ["aphid-cond-negbin", "aphid-cond-poisson", "aphid-marg-negbin"]
    if not all((CACHE / f"{n}.mgp").exists() for n in names):
        # one simulation table serves both conditional family fits
        table = cp.simulate_training_table(model, prior, space, nb, DESK_M, DESK_N,
                                           APHID_SEED, marginal=False)
        cond_nb = cp.build_conditional(model, prior, space, nb, DESK_M, DESK_N,
                                       APHID_SEED, table=table)
        z_p, ok_p = cp._fit_rows(pois, table.samples, None)
        table_p = cp.TrainingTable(inputs=table.inputs, z=z_p, ok=ok_p,
                                   samples=table.samples, contexts=None)
        cond_pois = cp.build_conditional(model, prior, space, pois, DESK_M, DESK_N,
                                         APHID_SEED, table=table_p)
        marg_nb = cp.build_marginal(model, prior, space, nb, DESK_M, DESK_N, APHID_SEED)
        CACHE.mkdir(exist_ok=True)
        save_mgp(cond_nb.emulator, CACHE / f"{names[0]}.mgp")
        save_mgp(cond_pois.emulator, CACHE / f"{names[1]}.mgp")
        save_mgp(marg_nb.emulator, CACHE / f"{names[2]}.mgp")
    cond_nb = cp.ConditionalAux(family=nb, emulator=load_mgp(CACHE / f"{names[0]}.mgp"))
    cond_pois = cp.ConditionalAux(family=pois, emulator=load_mgp(CACHE / f"{names[1]}.mgp"))
    marg_nb = cp.MarginalAux(family=nb, emulator=load_mgp(CACHE / f"{names[2]}.mgp"))
    return {"model": model, "prior": prior, "space": space,
            "cond_negbin": cond_nb, "cond_poisson": cond_pois, "marg_negbin": marg_nb,
            "seed": APHID_SEED}


@pytest.fixture(scope="session")
def parasite_setup():
    model, prior, space = md.parasite_model()
    fam = get_family("betabinom")
    cond_emu = _cached(
        "parasite-cond",
        lambda: cp.build_conditional(model, prior, space, fam, DESK_M, DESK_N,
                                     PARASITE_SEED).emulator,
    )
    marg_emu = _cached(
        "parasite-marg",
        lambda: cp.build_marginal(model, prior, space, fam, DESK_M, DESK_N,
                                  PARASITE_SEED).emulator,
    )
    cond = cp.ConditionalAux(family=fam, emulator=cond_emu,
                             response_bound=model.response_bound)
    marg = cp.MarginalAux(family=fam, emulator=marg_emu,
                          response_bound=model.response_bound)
    return {"model": model, "prior": prior, "space": space, "family": fam,
            "cond": cond, "marg": marg, "seed": PARASITE_SEED}


@pytest.fixture(scope="session")
def full_scale_comp_cond():
    """Paper-default training size; cheap because the sampler is direct."""
    model, prior, space = md.compartmental_model()
    fam = get_family("normal")
    emu = _cached(
        "comp-cond-full",
        lambda: cp.build_conditional(model, prior, space, fam, 500, 10_000, 55).emulator,
    )
    return cp.ConditionalAux(family=fam, emulator=emu)


@pytest.fixture(scope="session")
def full_scale_comp(full_scale_comp_cond):
    """Conditional + marginal pair at the paper-default training size."""
    model, prior, space = md.compartmental_model()
    fam = get_family("normal")
    marg_emu = _cached(
        "comp-marg-full",
        lambda: cp.build_marginal(model, prior, space, fam, 500, 10_000, 55).emulator,
    )
    return {"model": model, "prior": prior, "space": space, "family": fam,
            "cond": full_scale_comp_cond,
            "marg": cp.MarginalAux(family=fam, emulator=marg_emu)}


@pytest.fixture(scope="session")
def epi_setup():
    model_set, space = md.epidemic_model_set()
    fam = get_family("betabinom")
    any_model = model_set.models[1][0]
    emu = _cached(
        "epi-marg-see",
        lambda: cp.build_marginal_modelset(model_set, space, fam, DESK_M, DESK_N,
                                           EPI_SEED).emulator,
    )
    marg = cp.MarginalAux(family=fam, emulator=emu,
                          response_bound=any_model.response_bound,
                          model_labels=tuple(model_set.labels))
    return {"model_set": model_set, "space": space, "family": fam, "marg": marg,
            "seed": EPI_SEED}
