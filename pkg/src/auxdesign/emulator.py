"""Multivariate (matrix-normal) Gaussian-process emulator on the link scale.

The emulator maps an input vector x (parameters and/or design variables, plus
an optional trailing categorical model label) to v outputs.  Outputs share a
single correlation structure across inputs (squared-exponential kernel with a
nugget; an exchangeable extra term handles the categorical label) and have an
unstructured v x v cross-output covariance.

Given kernel hyperparameters, the constant mean and the cross-output
covariance have closed-form maximum-likelihood estimates; the kernel weights
and nugget maximise the resulting profile log-likelihood.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize

from .design_space import latin_hypercube, DesignSpace

__all__ = ["Standardizer", "kernel_eval", "MgpFit", "MgpPrediction", "fit_mgp",
           "save_mgp", "load_mgp", "mgp_to_text", "mgp_from_text"]

LOG_RHO_BOUNDS = (-10.0, 10.0)
LOG_ETA_BOUNDS = (np.log(1e-8), 0.0)


@dataclass(frozen=True)
class Standardizer:
    """Per-column affine map to roughly [0, 1]; categorical columns pass through."""

    offsets: np.ndarray
    scales: np.ndarray
    categorical: np.ndarray  # bool per column

    @classmethod
    def from_ranges(cls, ranges: np.ndarray, categorical=None) -> "Standardizer":
        ranges = np.atleast_2d(np.asarray(ranges, dtype=float))
        s = ranges.shape[0]
        cat = np.zeros(s, dtype=bool) if categorical is None else np.asarray(categorical)
        off = np.where(cat, 0.0, ranges[:, 0])
        span = np.where(cat, 1.0, ranges[:, 1] - ranges[:, 0])
        # never stretch a numerically degenerate range into O(1) noise
        floor = 1e-4 * np.maximum(1.0, np.abs(ranges).max(axis=1))
        span = np.maximum(span, np.where(cat, 1.0, floor))
        if np.any(span <= 0):
            raise ValueError("standardization ranges must have positive span")
        return cls(offsets=off, scales=span, categorical=cat)

    @classmethod
    def identity(cls, s: int) -> "Standardizer":
        return cls(np.zeros(s), np.ones(s), np.zeros(s, dtype=bool))

    def apply(self, x: np.ndarray) -> np.ndarray:
        return (np.atleast_2d(np.asarray(x, dtype=float)) - self.offsets) / self.scales


def _sq_diff_stack(xs: np.ndarray, categorical: np.ndarray) -> np.ndarray:
    """(s, M, M) stack of per-dimension squared differences / mismatch flags."""
    M, s = xs.shape
    out = np.empty((s, M, M))
    for l in range(s):
        col = xs[:, l]
        if categorical[l]:
            out[l] = (col[:, None] != col[None, :]).astype(float)
        else:
            diff = col[:, None] - col[None, :]
            out[l] = diff * diff
    return out


def kernel_eval(rho, x_i, x_j, categorical=None) -> float:
    """Correlation between two raw-scale-free input vectors (no nugget)."""
    rho = np.asarray(rho, dtype=float)
    x_i = np.asarray(x_i, dtype=float)
    x_j = np.asarray(x_j, dtype=float)
    cat = np.zeros(x_i.size, dtype=bool) if categorical is None else np.asarray(categorical)
    d2 = np.where(cat, (x_i != x_j).astype(float), (x_i - x_j) ** 2)
    return float(np.exp(-np.sum(rho * d2)))


@dataclass
class MgpPrediction:
    mean: np.ndarray  # (v,)
    scale: float  # 1 + eta - a' A^-1 a
    row_cov: np.ndarray  # (v, v)


@dataclass
class MgpFit:
    """Fitted emulator; immutable after construction, safe for concurrent predict."""

    x: np.ndarray  # (M, s) raw inputs
    z: np.ndarray  # (M, v) link-scale outputs
    rho: np.ndarray  # (s,)
    eta: float
    beta: np.ndarray  # (v,)
    sigma: np.ndarray  # (v, v)
    standardizer: Standardizer
    meta: dict = field(default_factory=dict)
    _xs: np.ndarray = field(default=None, repr=False)
    _chol: np.ndarray = field(default=None, repr=False)
    _weights: np.ndarray = field(default=None, repr=False)  # A^-1 (Z - beta)
    _ainv_a_cache: None = field(default=None, repr=False)

    def __post_init__(self):
        if self._xs is None:
            self._build_caches()

    def _build_caches(self):
        xs = self.standardizer.apply(self.x)
        d2 = _sq_diff_stack(xs, self.standardizer.categorical)
        A = np.exp(-np.tensordot(self.rho, d2, axes=1))
        A[np.diag_indices_from(A)] += self.eta
        L = np.linalg.cholesky(A)
        resid = self.z - self.beta
        self._xs = xs
        self._chol = L
        self._weights = linalg.cho_solve((L, True), resid)

    @property
    def m(self) -> int:
        return self.x.shape[0]

    @property
    def s(self) -> int:
        return self.x.shape[1]

    @property
    def v(self) -> int:
        return self.z.shape[1]

    def with_nugget(self, eta: float) -> "MgpFit":
        """Same kernel weights and training data, different nugget."""
        xs = self.standardizer.apply(self.x)
        d2 = _sq_diff_stack(xs, self.standardizer.categorical)
        A = np.exp(-np.tensordot(self.rho, d2, axes=1))
        A[np.diag_indices_from(A)] += eta
        L = np.linalg.cholesky(A)
        beta, sigma = _profile_mean_cov(self.z, L)
        return MgpFit(self.x, self.z, self.rho, eta, beta, sigma,
                      self.standardizer, dict(self.meta))

    def _cross_corr(self, xstar_std: np.ndarray) -> np.ndarray:
        """(T, M) correlations between prediction inputs and training inputs.

        Quantitative dimensions use the expanded-square form so the cross
        term is a single matrix product.
        """
        cat = self.standardizer.categorical
        quant = ~cat
        xq = xstar_std[:, quant]
        tq = self._xs[:, quant]
        rq = self.rho[quant]
        acc = (xq * rq) @ tq.T
        acc *= -2.0
        acc += (xq * xq) @ rq[:, None]
        acc += ((tq * tq) @ rq)[None, :]
        for l in np.nonzero(cat)[0]:
            acc += self.rho[l] * (xstar_std[:, l][:, None] != self._xs[:, l][None, :])
        np.maximum(acc, 0.0, out=acc)  # guard tiny negative round-off
        # exponentiate only where the correlation is non-negligible
        out = np.zeros_like(acc)
        near = acc < 45.0
        out[near] = np.exp(-acc[near])
        return out

    def predict_mean(self, xstar: np.ndarray, chunk: int = 50000) -> np.ndarray:
        """Predictive means, (T, v); vectorised and chunked over rows."""
        xstar = np.atleast_2d(np.asarray(xstar, dtype=float))
        out = np.empty((xstar.shape[0], self.v))
        xs = self.standardizer.apply(xstar)
        for start in range(0, xs.shape[0], chunk):
            a = self._cross_corr(xs[start:start + chunk])
            out[start:start + chunk] = self.beta + a @ self._weights
        return out

    def predict(self, xstar: np.ndarray) -> MgpPrediction:
        xstar = np.atleast_2d(np.asarray(xstar, dtype=float))
        if xstar.shape[0] != 1:
            raise ValueError("predict takes a single input; use predict_mean for batches")
        xs = self.standardizer.apply(xstar)
        a = self._cross_corr(xs)[0]
        sol = linalg.cho_solve((self._chol, True), a)
        scale = float(1.0 + self.eta - a @ sol)
        mean = self.beta + a @ self._weights
        return MgpPrediction(mean=mean, scale=scale, row_cov=self.sigma)

    def predict_phi(self, xstar: np.ndarray, family) -> np.ndarray:
        """Inverse-link of the predictive mean, (T, v) on the natural scale."""
        return family.from_link(self.predict_mean(xstar))


def _profile_mean_cov(z: np.ndarray, L: np.ndarray):
    """Closed-form GLS mean and row covariance given the Cholesky of A."""
    M = z.shape[0]
    ones = np.ones(M)
    ainv_one = linalg.cho_solve((L, True), ones)
    denom = ones @ ainv_one
    beta = (z.T @ ainv_one) / denom
    resid = z - beta
    sigma = resid.T @ linalg.cho_solve((L, True), resid) / M
    return beta, sigma


def _profile_loglik(params, z, d2):
    s = d2.shape[0]
    rho = np.exp(params[:s])
    eta = np.exp(params[s])
    A = np.exp(-np.tensordot(rho, d2, axes=1))
    A[np.diag_indices_from(A)] += eta
    try:
        L = np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        return -np.inf
    M, v = z.shape
    beta, sigma = _profile_mean_cov(z, L)
    logdet_a = 2.0 * np.sum(np.log(np.diag(L)))
    sign, logdet_sigma = np.linalg.slogdet(sigma + 1e-280 * np.eye(v))
    if sign <= 0:
        return -np.inf
    return -0.5 * v * logdet_a - 0.5 * M * logdet_sigma


def fit_mgp(
    x: np.ndarray,
    z: np.ndarray,
    standardizer: Standardizer | None = None,
    n_starts: int = 10,
    seed: int = 0,
    fixed_rho=None,
    fixed_eta=None,
    meta: dict | None = None,
) -> MgpFit:
    """Maximum-likelihood emulator fit.

    Kernel weights and nugget are searched on the log scale by multi-start
    L-BFGS-B over log rho in [-10, 10], eta in [1e-8, 1]; the mean and row
    covariance are profiled out in closed form.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    z = np.asarray(z, dtype=float)
    if z.ndim == 1:
        z = z[:, None]
    M, s = x.shape
    if M < s + 2:
        raise ValueError(f"need at least s + 2 = {s + 2} training rows, got {M}")
    if not np.all(np.isfinite(z)):
        raise ValueError("link-scale outputs must be finite (drop failed MLE rows first)")
    if standardizer is None:
        standardizer = Standardizer.identity(s)

    xs = standardizer.apply(x)
    d2 = _sq_diff_stack(xs, standardizer.categorical)

    if fixed_rho is not None:
        rho = np.asarray(fixed_rho, dtype=float)
        eta = 1e-6 if fixed_eta is None else float(fixed_eta)
    else:
        bounds = [LOG_RHO_BOUNDS] * s + [LOG_ETA_BOUNDS]
        box = DesignSpace(np.asarray(bounds))
        starts = list(latin_hypercube(box, max(n_starts, 2), seed=seed))[:n_starts]
        starts.append(np.array([0.0] * s + [np.log(1e-4)]))  # (rho=1, eta=1e-4) anchor

        def neg(params):
            val = _profile_loglik(params, z, d2)
            return 1e12 if not np.isfinite(val) else -val

        best = None
        for p0 in starts:
            res = optimize.minimize(neg, p0, method="L-BFGS-B", bounds=bounds,
                                    options={"maxiter": 120, "ftol": 1e-11})
            if best is None or res.fun < best.fun:
                best = res
        if best.fun >= 1e12:
            raise RuntimeError("emulator fit failed: no hyperparameter candidate was valid")
        rho = np.exp(best.x[:s])
        eta = float(np.exp(best.x[s]))
        if fixed_eta is not None:
            eta = float(fixed_eta)

    A = np.exp(-np.tensordot(rho, d2, axes=1))
    A[np.diag_indices_from(A)] += eta
    L = np.linalg.cholesky(A)
    beta, sigma = _profile_mean_cov(z, L)
    return MgpFit(x=x, z=z, rho=rho, eta=eta, beta=beta, sigma=sigma,
                  standardizer=standardizer, meta=dict(meta or {}))


def profile_loglik(fit: MgpFit) -> float:
    """Profile log-likelihood of a fit's hyperparameters on its own data."""
    xs = fit.standardizer.apply(fit.x)
    d2 = _sq_diff_stack(xs, fit.standardizer.categorical)
    return _profile_loglik(np.concatenate([np.log(fit.rho), [np.log(fit.eta)]]), fit.z, d2)


# ---------------------------------------------------------------------------
# portable text serialization (CSV blocks)
# ---------------------------------------------------------------------------

def _fmt_row(vals) -> str:
    return ",".join(f"{float(v):.17g}" for v in np.atleast_1d(vals))


def mgp_to_text(fit: MgpFit) -> str:
    buf = io.StringIO()
    meta = " ".join(f"{k}={v}" for k, v in sorted(fit.meta.items()))
    buf.write(f"# mgp M={fit.m} s={fit.s} v={fit.v} {meta}\n".rstrip() + "\n")
    buf.write("# rho\n" + _fmt_row(fit.rho) + "\n")
    buf.write("# eta\n" + _fmt_row([fit.eta]) + "\n")
    buf.write("# beta\n" + _fmt_row(fit.beta) + "\n")
    buf.write("# sigma\n")
    for row in np.atleast_2d(fit.sigma):
        buf.write(_fmt_row(row) + "\n")
    buf.write("# offsets\n" + _fmt_row(fit.standardizer.offsets) + "\n")
    buf.write("# scales\n" + _fmt_row(fit.standardizer.scales) + "\n")
    buf.write("# categorical\n" + ",".join(str(int(c)) for c in fit.standardizer.categorical) + "\n")
    buf.write("# X\n")
    for row in fit.x:
        buf.write(_fmt_row(row) + "\n")
    buf.write("# Z\n")
    for row in fit.z:
        buf.write(_fmt_row(row) + "\n")
    return buf.getvalue()


def mgp_from_text(text: str) -> MgpFit:
    lines = text.strip().splitlines()
    if not lines or not lines[0].startswith("# mgp"):
        raise ValueError("not an emulator file")
    meta = {}
    for tok in lines[0].split()[2:]:
        if "=" in tok:
            k, v = tok.split("=", 1)
            if k not in ("M", "s", "v"):
                meta[k] = v
    blocks: dict[str, list[str]] = {}
    key = None
    for line in lines[1:]:
        if line.startswith("# "):
            key = line[2:].strip()
            blocks[key] = []
        elif key is not None and line.strip():
            blocks[key].append(line)

    def rows(name):
        return np.array([[float(v) for v in ln.split(",")] for ln in blocks[name]])

    rho = rows("rho")[0]
    eta = float(rows("eta")[0][0])
    beta = rows("beta")[0]
    sigma = rows("sigma")
    std = Standardizer(
        offsets=rows("offsets")[0],
        scales=rows("scales")[0],
        categorical=np.array([bool(int(v)) for v in blocks["categorical"][0].split(",")]),
    )
    return MgpFit(x=rows("X"), z=rows("Z"), rho=rho, eta=eta, beta=beta,
                  sigma=sigma, standardizer=std, meta=meta)


def save_mgp(fit: MgpFit, path) -> None:
    with open(path, "w") as fh:
        fh.write(mgp_to_text(fit))


def load_mgp(path) -> MgpFit:
    with open(path) as fh:
        return mgp_from_text(fh.read())
