"""Experiment configuration: a versioned TOML schema, validated before compute."""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .ace import AceConfig
from .families import FAMILY_KEYS
from .models import MODEL_KEYS
from .utility import UTILITY_KINDS

__all__ = ["ExperimentConfig", "load_config", "ConfigError"]

SCHEMA_VERSION = 1
EVALUATORS = ("aux", "nested-aux", "nested-exact")
BASELINES = ("equally_spaced", "maximin_lhd")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    models: list[str]            # one key, or several for model comparison
    family: str
    utility: str
    seed: int
    out: Path
    n_list: list[int]
    window: tuple[float, float] | None = None
    min_spacing: float | None = None
    baseline: str = "equally_spaced"
    m: int = 500
    n_sim: int = 10000
    l: int = 500
    m0: int = 100
    ace: AceConfig = field(default_factory=AceConfig)
    eval_b: int = 1000
    eval_c: int = 1000
    eval_replicates: int = 20
    evaluator: str = "nested-aux"
    copula_form: str = "standard"

    @property
    def is_model_comparison(self) -> bool:
        return len(self.models) > 1

    def training_key(self) -> dict:
        """The cache key for off-line artifacts."""
        return {
            "models": self.models, "family": self.family, "m": self.m,
            "n_sim": self.n_sim, "seed": self.seed,
            "window": list(self.window) if self.window else None,
            "min_spacing": self.min_spacing,
        }


def _expect(table: dict, key: str, types, what: str, default=None, required=False):
    if key not in table:
        if required:
            raise ConfigError(f"missing required key {what}.{key}")
        return default
    val = table[key]
    if not isinstance(val, types):
        raise ConfigError(f"{what}.{key} has wrong type {type(val).__name__}")
    return val


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)

    if raw.get("schema") != SCHEMA_VERSION:
        raise ConfigError(f"config schema must be {SCHEMA_VERSION}")
    exp = raw.get("experiment")
    if not isinstance(exp, dict):
        raise ConfigError("missing [experiment] table")

    if "models" in exp:
        models = _expect(exp, "models", list, "experiment", required=True)
    else:
        models = [_expect(exp, "model", str, "experiment", required=True)]
    for mk in models:
        if mk not in MODEL_KEYS:
            raise ConfigError(f"unknown model key {mk!r}; choose from {MODEL_KEYS}")

    family = _expect(exp, "family", str, "experiment", required=True)
    if family not in FAMILY_KEYS:
        raise ConfigError(f"unknown family key {family!r}; choose from {FAMILY_KEYS}")
    utility = _expect(exp, "utility", str, "experiment", required=True)
    if utility not in UTILITY_KINDS:
        raise ConfigError(f"unknown utility {utility!r}; choose from {UTILITY_KINDS}")
    if len(models) > 1 and utility not in ("sig_models", "zero_one"):
        raise ConfigError("model comparison configs need utility sig_models or zero_one")
    if len(models) == 1 and utility in ("sig_models", "zero_one"):
        raise ConfigError(f"utility {utility!r} needs a models = [...] list")

    seed = _expect(exp, "seed", int, "experiment", default=0)
    out = Path(_expect(exp, "out", str, "experiment", required=True))

    design = raw.get("design", {})
    n_list = _expect(design, "n", list, "design", default=[10])
    if not all(isinstance(v, int) and v > 0 for v in n_list):
        raise ConfigError("design.n must be a list of positive integers")
    window = _expect(design, "window", list, "design")
    if window is not None:
        if len(window) != 2 or not all(isinstance(v, (int, float)) for v in window):
            raise ConfigError("design.window must be [lo, hi]")
        window = (float(window[0]), float(window[1]))
    min_spacing = _expect(design, "min_spacing", (int, float), "design")
    baseline = _expect(design, "baseline", str, "design", default="equally_spaced")
    if baseline not in BASELINES:
        raise ConfigError(f"design.baseline must be one of {BASELINES}")

    training = raw.get("training", {})
    m = _expect(training, "m", int, "training", default=500)
    n_sim = _expect(training, "n_sim", int, "training", default=10000)
    l = _expect(training, "l", int, "training", default=500)
    m0 = _expect(training, "m0", int, "training", default=100)
    if min(m, n_sim, l, m0) <= 0:
        raise ConfigError("training sizes must be positive")

    ace_raw = raw.get("ace", {})
    ace = AceConfig(
        q=_expect(ace_raw, "q", int, "ace", default=20),
        b_fit=_expect(ace_raw, "b_fit", int, "ace", default=1000),
        b_test=_expect(ace_raw, "b_test", int, "ace", default=20000),
        iterations=_expect(ace_raw, "iterations", int, "ace", default=20),
        restarts=_expect(ace_raw, "restarts", int, "ace", default=20),
        acceptance=_expect(ace_raw, "acceptance", str, "ace", default="normal"),
    )

    ev = raw.get("evaluate", {})
    evaluator = _expect(ev, "evaluator", str, "evaluate", default="nested-aux")
    if evaluator not in EVALUATORS:
        raise ConfigError(f"evaluate.evaluator must be one of {EVALUATORS}")

    return ExperimentConfig(
        models=models, family=family, utility=utility, seed=seed, out=out,
        n_list=list(n_list), window=window,
        min_spacing=None if min_spacing is None else float(min_spacing),
        baseline=baseline, m=m, n_sim=n_sim, l=l, m0=m0, ace=ace,
        eval_b=_expect(ev, "b", int, "evaluate", default=1000),
        eval_c=_expect(ev, "c", int, "evaluate", default=1000),
        eval_replicates=_expect(ev, "replicates", int, "evaluate", default=20),
        evaluator=evaluator,
        copula_form=_expect(exp, "copula_density", str, "experiment", default="standard"),
    )
