"""Prior distributions over model parameters, built from independent blocks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special, stats

__all__ = [
    "MultivariateNormal",
    "LogNormalIndependent",
    "GammaMeanVar",
    "UniformBox",
    "SqrtBivariateNormal",
    "Prior",
]


@dataclass(frozen=True)
class MultivariateNormal:
    """Optionally truncated to the nonnegative orthant (admissibility clamp).

    The truncation only discards a negligible tail for the priors in the model
    zoo, so the log-density skips the renormalisation constant.
    """

    mean: np.ndarray
    cov: np.ndarray
    nonnegative: bool = False

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=float))
        object.__setattr__(self, "cov", np.atleast_2d(np.asarray(self.cov, dtype=float)))
        if not np.allclose(self.cov, self.cov.T):
            raise ValueError("covariance must be symmetric")
        object.__setattr__(self, "_chol", np.linalg.cholesky(self.cov))  # raises if not PD

    @property
    def dim(self) -> int:
        return self.mean.size

    def sample(self, count: int, rng: np.random.Generator) -> np.ndarray:
        z = rng.standard_normal((count, self.dim))
        x = self.mean + z @ self._chol.T
        if self.nonnegative:
            for _ in range(100):
                bad = np.any(x < 0, axis=1)
                if not bad.any():
                    break
                z = rng.standard_normal((int(bad.sum()), self.dim))
                x[bad] = self.mean + z @ self._chol.T
            x = np.maximum(x, 0.0)
        return x

    def logpdf(self, x: np.ndarray) -> np.ndarray:
        diff = np.asarray(x, dtype=float) - self.mean
        sol = np.linalg.solve(self._chol, diff[..., None])[..., 0]
        quad = np.sum(sol**2, axis=-1)
        logdet = 2.0 * np.sum(np.log(np.diag(self._chol)))
        out = -0.5 * (self.dim * np.log(2 * np.pi) + logdet + quad)
        if self.nonnegative:
            out = np.where(np.any(np.asarray(x) < 0, axis=-1), -np.inf, out)
        return out

    def scaling_range(self, z: float) -> np.ndarray:
        sd = np.sqrt(np.diag(self.cov))
        lo, hi = self.mean - z * sd, self.mean + z * sd
        if self.nonnegative:
            lo = np.maximum(lo, 0.0)
        return np.column_stack([lo, hi])


@dataclass(frozen=True)
class LogNormalIndependent:
    log_means: np.ndarray
    log_vars: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "log_means", np.asarray(self.log_means, dtype=float))
        object.__setattr__(self, "log_vars", np.asarray(self.log_vars, dtype=float))
        if np.any(self.log_vars <= 0):
            raise ValueError("log-scale variances must be positive")

    @property
    def dim(self) -> int:
        return self.log_means.size

    def sample(self, count, rng):
        z = rng.standard_normal((count, self.dim))
        return np.exp(self.log_means + np.sqrt(self.log_vars) * z)

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            lx = np.log(x)
            comp = (
                -0.5 * (np.log(2 * np.pi * self.log_vars) + (lx - self.log_means) ** 2 / self.log_vars)
                - lx
            )
        out = np.sum(np.where(x > 0, comp, -np.inf), axis=-1)
        return out

    def scaling_range(self, z):
        sd = np.sqrt(self.log_vars)
        return np.exp(np.column_stack([self.log_means - z * sd, self.log_means + z * sd]))


@dataclass(frozen=True)
class GammaMeanVar:
    """Independent gammas, parameterised by mean and variance per element."""

    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "means", np.asarray(self.means, dtype=float))
        object.__setattr__(self, "variances", np.asarray(self.variances, dtype=float))
        if np.any(self.means <= 0) or np.any(self.variances <= 0):
            raise ValueError("gamma mean and variance must be positive")

    @property
    def dim(self) -> int:
        return self.means.size

    @property
    def shape(self):
        return self.means**2 / self.variances

    @property
    def scale(self):
        return self.variances / self.means

    def sample(self, count, rng):
        return rng.gamma(self.shape, self.scale, size=(count, self.dim))

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        k, s = self.shape, self.scale
        with np.errstate(divide="ignore", invalid="ignore"):
            comp = special.xlogy(k - 1.0, x) - x / s - special.gammaln(k) - k * np.log(s)
        return np.sum(np.where(x > 0, comp, -np.inf), axis=-1)

    def scaling_range(self, z):
        q = special.ndtr(np.array([-z, z]))
        return np.column_stack([
            stats.gamma.ppf(q[0], self.shape, scale=self.scale),
            stats.gamma.ppf(q[1], self.shape, scale=self.scale),
        ])


@dataclass(frozen=True)
class UniformBox:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lo", np.atleast_1d(np.asarray(self.lo, dtype=float)))
        object.__setattr__(self, "hi", np.atleast_1d(np.asarray(self.hi, dtype=float)))
        if np.any(self.lo >= self.hi):
            raise ValueError("need lo < hi")

    @property
    def dim(self) -> int:
        return self.lo.size

    def sample(self, count, rng):
        return rng.uniform(self.lo, self.hi, size=(count, self.dim))

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        inside = np.all((x >= self.lo) & (x <= self.hi), axis=-1)
        val = -np.sum(np.log(self.hi - self.lo))
        return np.where(inside, val, -np.inf)

    def scaling_range(self, z):
        return np.column_stack([self.lo, self.hi])


@dataclass(frozen=True)
class SqrtBivariateNormal:
    """(sqrt(theta_a), sqrt(theta_b)) is bivariate normal; thetas are the squares."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=float))
        object.__setattr__(self, "cov", np.atleast_2d(np.asarray(self.cov, dtype=float)))
        object.__setattr__(self, "_chol", np.linalg.cholesky(self.cov))

    @property
    def dim(self) -> int:
        return 2

    def sample(self, count, rng):
        z = rng.standard_normal((count, 2))
        root = self.mean + z @ self._chol.T
        return root**2

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        x = np.maximum(x, 1e-300)
        root = np.sqrt(x)
        logdet = 2.0 * np.sum(np.log(np.diag(self._chol)))
        out = None
        # sum the normal density over the four sign preimages of the squares
        for s1 in (1.0, -1.0):
            for s2 in (1.0, -1.0):
                pt = np.stack([s1 * root[..., 0], s2 * root[..., 1]], axis=-1) - self.mean
                sol = np.linalg.solve(self._chol, pt[..., None])[..., 0]
                quad = np.sum(sol**2, axis=-1)
                term = -0.5 * (2 * np.log(2 * np.pi) + logdet + quad)
                out = term if out is None else np.logaddexp(out, term)
        jac = -np.log(4.0) - 0.5 * np.log(x[..., 0]) - 0.5 * np.log(x[..., 1])
        return out + jac

    def scaling_range(self, z):
        sd = np.sqrt(np.diag(self.cov))
        lo = np.maximum(self.mean - z * sd, 0.0) ** 2
        hi = (self.mean + z * sd) ** 2
        return np.column_stack([lo, hi])


@dataclass(frozen=True)
class Prior:
    """Independent blocks concatenated into one parameter vector."""

    components: tuple

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))

    @property
    def dim(self) -> int:
        return sum(c.dim for c in self.components)

    def sample(self, count: int, rng: np.random.Generator) -> np.ndarray:
        return np.concatenate([c.sample(count, rng) for c in self.components], axis=1)

    def logpdf(self, theta) -> np.ndarray:
        theta = np.atleast_2d(np.asarray(theta, dtype=float))
        out = np.zeros(theta.shape[:-1])
        j = 0
        for c in self.components:
            out = out + c.logpdf(theta[..., j:j + c.dim])
            j += c.dim
        return out

    def scaling_range(self, z: float = 3.09) -> np.ndarray:
        """Per-coordinate (lo, hi) spanning roughly the 0.1%-99.9% mass.

        Used only to standardise emulator inputs, so approximate ranges are
        fine; each block reports an analytic range.
        """
        return np.concatenate([c.scaling_range(z) for c in self.components], axis=0)
