"""Parametric auxiliary families: densities, cdfs, quantiles, sampling, MLE.

Each family has v natural parameters ``phi`` and an element-wise link taking
phi to the real line (``z``), which is the scale the emulator works on.

Parameterizations
-----------------
* normal:    phi = (mean, variance),            links (identity, log)
* poisson:   phi = (mean,),                     links (log,)
* negbin:    phi = (mean, dispersion kappa),    links (log, log)
             Var = mu + mu^2 / kappa
* betabinom: phi = (mean probability p, overdispersion rho), links (logit, logit)
             trial count is per-observation context; Var/trial grows with rho

Discrete support violations give logpdf = -inf; cdf clamps to {0, 1}.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize, special, stats

__all__ = ["AuxParams", "AuxiliaryFamily", "get_family", "FAMILY_KEYS"]

_EPS = 1e-8
_LOGIT_CLIP = 1e-8


def _logit(p):
    return np.log(p) - np.log1p(-p)


def _expit(z):
    return special.expit(z)


def _apply_link(link: str, phi):
    phi = np.asarray(phi, dtype=float)
    if link == "identity":
        return phi
    if link == "log":
        return np.log(phi)
    if link == "logit":
        return _logit(phi)
    raise ValueError(f"unknown link {link!r}")


def _apply_inverse_link(link: str, z):
    z = np.asarray(z, dtype=float)
    if link == "identity":
        return z
    if link == "log":
        return np.exp(z)
    if link == "logit":
        return _expit(z)
    raise ValueError(f"unknown link {link!r}")


@dataclass(frozen=True)
class AuxParams:
    """Fitted auxiliary parameters on natural (phi) and link (z) scales."""

    phi: np.ndarray
    z: np.ndarray
    ok: bool = True
    message: str = ""


class AuxiliaryFamily:
    """Base class; subclasses implement the distribution-specific parts."""

    name: str = ""
    v: int = 0
    links: tuple[str, ...] = ()
    discrete: bool = False
    needs_context: bool = False

    # -- link plumbing ------------------------------------------------------
    def to_link(self, phi) -> np.ndarray:
        phi = np.atleast_1d(np.asarray(phi, dtype=float))
        return np.stack(
            [_apply_link(l, phi[..., j]) for j, l in enumerate(self.links)], axis=-1
        )

    def from_link(self, z) -> np.ndarray:
        z = np.atleast_1d(np.asarray(z, dtype=float))
        return np.stack(
            [_apply_inverse_link(l, z[..., j]) for j, l in enumerate(self.links)],
            axis=-1,
        )

    def params(self, phi) -> AuxParams:
        phi = np.atleast_1d(np.asarray(phi, dtype=float))
        return AuxParams(phi=phi, z=self.to_link(phi))

    # -- distribution interface (phi has shape (..., v), broadcast with y) --
    def logpdf(self, y, phi, context=None) -> np.ndarray:
        raise NotImplementedError

    def cdf(self, y, phi, context=None) -> np.ndarray:
        raise NotImplementedError

    def quantile(self, u, phi, context=None) -> np.ndarray:
        raise NotImplementedError

    def sample(self, phi, rng, size=None, context=None) -> np.ndarray:
        raise NotImplementedError

    def moment_start(self, y, context=None) -> np.ndarray:
        raise NotImplementedError

    def fit_mle(self, y, context=None) -> AuxParams:
        """Maximum likelihood fit from an i.i.d. sample.

        Runs bounded L-BFGS on the link scale from the method-of-moments
        start plus jittered multi-starts.  Families with closed-form MLEs
        override this.
        """
        y = np.asarray(y, dtype=float)
        if y.size < 2:
            raise ValueError("need at least two observations to fit")
        start = self.to_link(self.moment_start(y, context))
        bounds = self._link_bounds()
        lo = np.array([b[0] for b in bounds])
        hi = np.array([b[1] for b in bounds])

        def nll(z):
            phi = self.from_link(z)
            val = self.logpdf(y, phi, context)
            if not np.all(np.isfinite(val)):
                return 1e12
            return -float(np.mean(val))

        rng = np.random.default_rng(0)
        starts = [np.clip(start, lo, hi)]
        for _ in range(4):
            starts.append(np.clip(start + rng.normal(scale=0.5, size=self.v), lo, hi))

        best = None
        for z0 in starts:
            res = optimize.minimize(
                nll, z0, method="L-BFGS-B", bounds=bounds,
                options={"maxiter": 200, "ftol": 1e-12, "gtol": 1e-8},
            )
            if best is None or res.fun < best.fun:
                best = res
        ok = bool(np.isfinite(best.fun)) and best.fun < 1e11
        phi = self.from_link(best.x)
        return AuxParams(phi=phi, z=np.asarray(best.x), ok=ok,
                         message="" if ok else "MLE optimizer failed to converge")

    def _link_bounds(self):
        return [(-30.0, 30.0)] * self.v


class NormalFamily(AuxiliaryFamily):
    name = "normal"
    v = 2
    links = ("identity", "log")
    discrete = False

    def logpdf(self, y, phi, context=None):
        y = np.asarray(y, dtype=float)
        m, var = phi[..., 0], phi[..., 1]
        return -0.5 * (np.log(2 * np.pi * var) + (y - m) ** 2 / var)

    def cdf(self, y, phi, context=None):
        m, var = phi[..., 0], phi[..., 1]
        return special.ndtr((np.asarray(y, float) - m) / np.sqrt(var))

    def quantile(self, u, phi, context=None):
        m, var = phi[..., 0], phi[..., 1]
        return m + np.sqrt(var) * special.ndtri(np.asarray(u, float))

    def sample(self, phi, rng, size=None, context=None):
        m, var = phi[..., 0], phi[..., 1]
        return rng.normal(m, np.sqrt(var), size=size)

    def moment_start(self, y, context=None):
        return np.array([np.mean(y), max(np.var(y), _EPS)])

    def fit_mle(self, y, context=None):
        y = np.asarray(y, dtype=float)
        if y.size < 2:
            raise ValueError("need at least two observations to fit")
        phi = np.array([np.mean(y), max(np.var(y), _EPS)])
        return self.params(phi)


class PoissonFamily(AuxiliaryFamily):
    name = "poisson"
    v = 1
    links = ("log",)
    discrete = True

    def logpdf(self, y, phi, context=None):
        y = np.asarray(y, dtype=float)
        mu = phi[..., 0]
        out = special.xlogy(y, mu) - mu - special.gammaln(y + 1.0)
        bad = (y < 0) | (np.floor(y) != y)
        return np.where(bad, -np.inf, out)

    def cdf(self, y, phi, context=None):
        y = np.floor(np.asarray(y, dtype=float))
        mu = np.broadcast_to(phi[..., 0], np.broadcast_shapes(y.shape, phi[..., 0].shape))
        out = special.pdtr(np.maximum(y, 0), mu)
        return np.where(y < 0, 0.0, out)

    def quantile(self, u, phi, context=None):
        return stats.poisson.ppf(np.asarray(u, float), phi[..., 0])

    def sample(self, phi, rng, size=None, context=None):
        return rng.poisson(phi[..., 0], size=size).astype(float)

    def moment_start(self, y, context=None):
        return np.array([max(np.mean(y), _EPS)])

    def fit_mle(self, y, context=None):
        y = np.asarray(y, dtype=float)
        if y.size < 2:
            raise ValueError("need at least two observations to fit")
        return self.params(self.moment_start(y))


class NegativeBinomialFamily(AuxiliaryFamily):
    name = "negbin"
    v = 2
    links = ("log", "log")
    discrete = True

    def _np(self, phi):
        mu, kappa = phi[..., 0], phi[..., 1]
        return kappa, kappa / (kappa + mu)

    def logpdf(self, y, phi, context=None):
        y = np.asarray(y, dtype=float)
        mu, kappa = phi[..., 0], phi[..., 1]
        out = (
            special.gammaln(y + kappa)
            - special.gammaln(kappa)
            - special.gammaln(y + 1.0)
            + special.xlogy(kappa, kappa / (kappa + mu))
            + special.xlogy(y, mu / (kappa + mu))
        )
        bad = (y < 0) | (np.floor(y) != y)
        return np.where(bad, -np.inf, out)

    def cdf(self, y, phi, context=None):
        y = np.floor(np.asarray(y, dtype=float))
        kappa, p = self._np(phi)
        shape = np.broadcast_shapes(y.shape, kappa.shape)
        out = special.betainc(
            np.broadcast_to(kappa, shape),
            np.maximum(np.broadcast_to(y, shape), 0) + 1.0,
            np.broadcast_to(p, shape),
        )
        return np.where(y < 0, 0.0, out)

    def quantile(self, u, phi, context=None):
        kappa, p = self._np(phi)
        return stats.nbinom.ppf(np.asarray(u, float), kappa, p)

    def sample(self, phi, rng, size=None, context=None):
        kappa, p = self._np(phi)
        return rng.negative_binomial(kappa, p, size=size).astype(float)

    def moment_start(self, y, context=None):
        m = max(np.mean(y), _EPS)
        v = np.var(y)
        kappa = m**2 / (v - m) if v > m * (1 + 1e-9) else 1e6
        return np.array([m, float(np.clip(kappa, _EPS, 1e8))])

    def _link_bounds(self):
        return [(np.log(_EPS), np.log(1e12)), (np.log(_EPS), np.log(1e8))]


class BetaBinomialFamily(AuxiliaryFamily):
    """Beta-binomial on {0..context}; context is the per-observation trial count."""

    name = "betabinom"
    v = 2
    links = ("logit", "logit")
    discrete = True
    needs_context = True

    def _ab(self, phi):
        p, rho = phi[..., 0], phi[..., 1]
        a = p * (1.0 - rho) / rho
        b = (1.0 - p) * (1.0 - rho) / rho
        return a, b

    @staticmethod
    def _trials(context):
        if context is None:
            raise ValueError("beta-binomial needs a trial-count context")
        return np.asarray(context, dtype=float)

    def logpdf(self, y, phi, context=None):
        y = np.asarray(y, dtype=float)
        n = self._trials(context)
        a, b = self._ab(phi)
        out = (
            special.gammaln(n + 1.0)
            - special.gammaln(y + 1.0)
            - special.gammaln(n - y + 1.0)
            + special.betaln(y + a, n - y + b)
            - special.betaln(a, b)
        )
        bad = (y < 0) | (y > n) | (np.floor(y) != y)
        return np.where(bad, -np.inf, out)

    def pmf_table(self, phi, context) -> np.ndarray:
        """pmf over the full support 0..context for a single phi."""
        n = int(self._trials(context))
        y = np.arange(n + 1, dtype=float)
        return np.exp(self.logpdf(y, np.asarray(phi, float), float(n)))

    def support_tables(self, phi_rows: np.ndarray, contexts) -> tuple[np.ndarray, np.ndarray]:
        """(pmf, cdf) tables over 0..max(context), one row per phi row.

        The bounded support makes exact tabulation cheap; bulk cdf/quantile
        evaluations then reduce to integer lookups.
        """
        phi_rows = np.atleast_2d(np.asarray(phi_rows, dtype=float))
        ns = self._trials(contexts).astype(int)
        width = int(ns.max()) + 1
        y = np.arange(width, dtype=float)[None, :]
        logp = self.logpdf(y, phi_rows[:, None, :], context=ns[:, None].astype(float))
        pmf = np.where(y <= ns[:, None], np.exp(logp), 0.0)
        cdf = np.cumsum(pmf, axis=1)
        cdf = np.minimum(cdf, 1.0)
        cdf[np.arange(len(ns)), ns] = 1.0
        return pmf, cdf

    def cdf(self, y, phi, context=None):
        y_arr = np.floor(np.asarray(y, dtype=float))
        n = self._trials(context)
        a, b = self._ab(phi)
        y_b, n_b, a_b, b_b = np.broadcast_arrays(y_arr, n, a, b)
        out = np.empty(y_b.shape, dtype=float)
        flat = out.reshape(-1)
        yf, nf, af, bf = (x.reshape(-1) for x in (y_b, n_b, a_b, b_b))
        for i in range(flat.size):
            if yf[i] < 0:
                flat[i] = 0.0
            elif yf[i] >= nf[i]:
                flat[i] = 1.0
            else:
                flat[i] = stats.betabinom.cdf(yf[i], int(nf[i]), af[i], bf[i])
        return out

    def quantile(self, u, phi, context=None):
        n = self._trials(context)
        a, b = self._ab(phi)
        return stats.betabinom.ppf(np.asarray(u, float), n.astype(int), a, b)

    def sample(self, phi, rng, size=None, context=None):
        n = self._trials(context)
        a, b = self._ab(phi)
        if size is not None:
            n = np.broadcast_to(n, size)
            a, b = np.broadcast_to(a, size), np.broadcast_to(b, size)
        p = rng.beta(a, b)
        return rng.binomial(n.astype(int), p).astype(float)

    def moment_start(self, y, context=None):
        n = self._trials(context)
        n = np.broadcast_to(n, np.shape(y)).astype(float)
        p = float(np.clip(np.sum(y) / np.sum(n), 1e-4, 1 - 1e-4))
        nbar = np.mean(n)
        binom_var = nbar * p * (1 - p)
        excess = np.var(y) / max(binom_var, _EPS) - 1.0
        rho = excess / max(nbar - 1.0, 1.0)
        return np.array([p, float(np.clip(rho, 1e-4, 0.9))])

    def _link_bounds(self):
        lim = _logit(np.array([_LOGIT_CLIP]))[0]
        return [(lim, -lim), (lim, -lim)]


_FAMILIES = {
    f.name: f
    for f in (
        NormalFamily(),
        PoissonFamily(),
        NegativeBinomialFamily(),
        BetaBinomialFamily(),
    )
}
FAMILY_KEYS = tuple(_FAMILIES)


def get_family(name: str) -> AuxiliaryFamily:
    try:
        return _FAMILIES[name]
    except KeyError:
        raise ValueError(f"unknown family {name!r}; choose from {FAMILY_KEYS}") from None
