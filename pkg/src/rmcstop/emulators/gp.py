"""Gaussian-process regression with known heteroskedastic noise.

The emulator is a constant-trend GP: the trend is the generalized
least-squares estimate, the predictive mean is

    m(x) = beta0 + k(x, X)' (K + Lambda)^{-1} (ybar - beta0 1)

and the predictive variance follows the standard kriging equations,
including the trend-estimation term.  Lambda is the stochastic-kriging
diagonal sigma^2(x_n)/r_n built from replicated simulations, or a learned
homoskedastic nugget when no replication variance is available.
Hyperparameters are either user-fixed or maximized by a gradient-free
simplex search over log-lengthscales and log-variance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.optimize import minimize

from ..sampling import RandomStream, lhs
from .base import EmulatorFit, STATE_VERSION, register_kind

__all__ = ["GPHyper", "GPFit", "fit_gp", "kernel_matrix"]

KERNELS = ("matern52", "gaussian")

GP_SITE_CAP = 1500  # cubic-cost guard

JITTER_START = 1e-8
JITTER_MAX = 1e-4

MLE_RESTARTS = 5
MLE_MAXFEV = 200


@dataclass
class GPHyper:
    """Kernel family, ARD lengthscales, process variance, optional nugget."""

    kernel: str = "matern52"
    lengthscales: np.ndarray = field(default_factory=lambda: np.array([1.0]))
    variance: float = 1.0
    nugget: float = 0.0

    def __post_init__(self):
        if self.kernel not in KERNELS:
            raise ValueError(f"unknown kernel family {self.kernel!r}")
        self.lengthscales = np.atleast_1d(np.asarray(self.lengthscales, dtype=float))
        if np.any(self.lengthscales <= 0) or self.variance <= 0:
            raise ValueError("lengthscales and variance must be > 0")
        if self.nugget < 0:
            raise ValueError("nugget must be >= 0")


def _scaled_sqdist(x1, x2, ls):
    a = x1 / ls
    b = x2 / ls
    d2 = (
        (a**2).sum(axis=1)[:, None]
        + (b**2).sum(axis=1)[None, :]
        - 2.0 * a @ b.T
    )
    return np.maximum(d2, 0.0)


def kernel_matrix(kernel, x1, x2, lengthscales, variance):
    """Covariance matrix k(x1, x2) for the gaussian or Matern-5/2 family."""
    d2 = _scaled_sqdist(
        np.atleast_2d(x1), np.atleast_2d(x2), np.asarray(lengthscales, dtype=float)
    )
    if kernel == "gaussian":
        return variance * np.exp(-0.5 * d2)
    if kernel == "matern52":
        u = np.sqrt(5.0 * d2)
        return variance * (1.0 + u + u**2 / 3.0) * np.exp(-u)
    raise ValueError(f"unknown kernel family {kernel!r}")


def _factorize(x, hyper, noise_var):
    """Cholesky of K + Lambda with escalating jitter; returns (L, jitter)."""
    k = kernel_matrix(hyper.kernel, x, x, hyper.lengthscales, hyper.variance)
    lam = np.zeros(len(x)) if noise_var is None else np.asarray(noise_var, float)
    lam = lam + hyper.nugget
    jitter = JITTER_START
    while True:
        try:
            l = scipy.linalg.cholesky(
                k + np.diag(lam + jitter * hyper.variance), lower=True
            )
            return l, jitter
        except scipy.linalg.LinAlgError:
            jitter *= 10.0
            if jitter > JITTER_MAX:
                raise scipy.linalg.LinAlgError(
                    "GP covariance not positive definite even with jitter "
                    f"{JITTER_MAX:g} * variance"
                ) from None


def _profile_loglik(x, y, hyper, noise_var):
    """Concentrated log-likelihood with the GLS constant trend profiled out."""
    n = len(y)
    try:
        l, _ = _factorize(x, hyper, noise_var)
    except scipy.linalg.LinAlgError:
        return -np.inf, None
    ones = np.ones(n)
    li_y = scipy.linalg.solve_triangular(l, y, lower=True)
    li_1 = scipy.linalg.solve_triangular(l, ones, lower=True)
    denom = li_1 @ li_1
    beta0 = (li_1 @ li_y) / denom
    res = li_y - beta0 * li_1
    logdet = 2.0 * np.log(np.diag(l)).sum()
    ll = -0.5 * (res @ res + logdet + n * np.log(2.0 * np.pi))
    return float(ll), beta0


@register_kind
class GPFit(EmulatorFit):
    kind = "gp"

    def __init__(self, x, ybar, hyper: GPHyper, noise_var=None, step=None,
                 mle_converged=True):
        self.x = np.atleast_2d(np.asarray(x, dtype=float))
        self.ybar = np.asarray(ybar, dtype=float)
        self.hyper = hyper
        self.noise_var = (
            None if noise_var is None else np.asarray(noise_var, dtype=float)
        )
        self.step = step
        self.mle_converged = bool(mle_converged)
        self._prepare()

    def _prepare(self):
        self._chol, self.jitter = _factorize(self.x, self.hyper, self.noise_var)
        n = len(self.ybar)
        ones = np.ones(n)
        li_y = scipy.linalg.solve_triangular(self._chol, self.ybar, lower=True)
        self._li_1 = scipy.linalg.solve_triangular(self._chol, ones, lower=True)
        self._trend_denom = float(self._li_1 @ self._li_1)
        self.beta0 = float((self._li_1 @ li_y) / self._trend_denom)
        resid = self.ybar - self.beta0
        self._alpha = scipy.linalg.cho_solve((self._chol, True), resid)

    @property
    def dim(self):
        return self.x.shape[1]

    @property
    def n_unique(self):
        return self.x.shape[0]

    def _cross(self, xq):
        return kernel_matrix(
            self.hyper.kernel, self.x, xq, self.hyper.lengthscales,
            self.hyper.variance,
        )

    def predict(self, xq):
        xq = self._check_query(xq, self.dim)
        return self.beta0 + self._cross(xq).T @ self._alpha

    def predict_sd(self, xq):
        # simple-kriging variance at the estimated trend: far from the data
        # it reverts exactly to the prior sd
        xq = self._check_query(xq, self.dim)
        ks = self._cross(xq)
        v = scipy.linalg.solve_triangular(self._chol, ks, lower=True)
        var = self.hyper.variance - (v**2).sum(axis=0)
        return np.sqrt(np.maximum(var, 0.0))

    def predict_with_sd(self, xq):
        xq = self._check_query(xq, self.dim)
        ks = self._cross(xq)
        mean = self.beta0 + ks.T @ self._alpha
        v = scipy.linalg.solve_triangular(self._chol, ks, lower=True)
        var = self.hyper.variance - (v**2).sum(axis=0)
        return mean, np.sqrt(np.maximum(var, 0.0))

    def log_likelihood(self):
        ll, _ = _profile_loglik(self.x, self.ybar, self.hyper, self.noise_var)
        return ll

    def to_state(self):
        return {
            "kind": self.kind,
            "version": STATE_VERSION,
            "x": self.x,
            "ybar": self.ybar,
            "kernel": self.hyper.kernel,
            "lengthscales": self.hyper.lengthscales,
            "variance": self.hyper.variance,
            "nugget": self.hyper.nugget,
            "noise_var": self.noise_var,
            "step": self.step,
            "mle_converged": self.mle_converged,
        }

    @classmethod
    def from_state(cls, state):
        hyper = GPHyper(
            kernel=state["kernel"],
            lengthscales=state["lengthscales"],
            variance=state["variance"],
            nugget=state["nugget"],
        )
        return cls(
            state["x"], state["ybar"], hyper, state["noise_var"],
            state.get("step"), state.get("mle_converged", True),
        )


def _mle_bounds(x, y, learn_nugget):
    span = np.maximum(x.max(axis=0) - x.min(axis=0), 1e-8)
    vy = max(float(np.var(y)), 1e-12)
    lo = np.concatenate([np.log(0.05 * span), [np.log(1e-4 * vy)]])
    hi = np.concatenate([np.log(5.0 * span), [np.log(1e2 * vy)]])
    if learn_nugget:
        lo = np.concatenate([lo, [np.log(1e-8 * vy)]])
        hi = np.concatenate([hi, [np.log(1.0 * vy)]])
    return lo, hi


def _unpack(z, d, kernel, learn_nugget):
    ls = np.exp(z[:d])
    var = float(np.exp(z[d]))
    nug = float(np.exp(z[d + 1])) if learn_nugget else 0.0
    return GPHyper(kernel=kernel, lengthscales=ls, variance=var, nugget=nug)


def _mle(x, y, noise_var, kernel, stream, restarts, maxfev, warm_start):
    d = x.shape[1]
    learn_nugget = noise_var is None
    lo, hi = _mle_bounds(x, y, learn_nugget)
    n_par = len(lo)

    def neg_ll(z):
        if np.any(z < lo - 1e-12) or np.any(z > hi + 1e-12):
            return 1e12
        hyper = _unpack(z, d, kernel, learn_nugget)
        ll, _ = _profile_loglik(x, y, hyper, noise_var)
        return 1e12 if not np.isfinite(ll) else -ll

    starts = [0.5 * (lo + hi)]
    if warm_start is not None:
        z0 = np.concatenate(
            [np.log(warm_start.lengthscales), [np.log(warm_start.variance)]]
        )
        if learn_nugget:
            z0 = np.concatenate([z0, [np.log(max(warm_start.nugget, 1e-12))]])
        starts.insert(0, np.clip(z0, lo, hi))
    if restarts > len(starts):
        stream = stream if stream is not None else RandomStream(1729)
        unit = lhs(restarts - len(starts), n_par, stream.child("mle-init"))
        starts.extend(lo + unit * (hi - lo))
    starts = starts[:restarts]

    best_z, best_val = None, np.inf
    converged = False
    for z0 in starts:
        val0 = neg_ll(z0)
        if val0 < best_val:
            best_z, best_val = np.asarray(z0, dtype=float), val0
        res = minimize(
            neg_ll, z0, method="Nelder-Mead",
            options={"maxfev": maxfev, "xatol": 1e-3, "fatol": 1e-4},
        )
        if res.fun < best_val:
            best_z, best_val = res.x, float(res.fun)
        converged = converged or bool(res.success)
    if not converged:
        import warnings

        warnings.warn(
            "GP hyperparameter search did not converge; returning best iterate",
            RuntimeWarning,
            stacklevel=3,
        )
    return _unpack(best_z, d, kernel, learn_nugget), converged


def fit_gp(
    x: np.ndarray,
    ybar: np.ndarray,
    noise_var: np.ndarray | None = None,
    hyper: GPHyper | str = "mle",
    kernel: str = "matern52",
    step=None,
    cap: int = GP_SITE_CAP,
    stream: RandomStream | None = None,
    restarts: int = MLE_RESTARTS,
    maxfev: int = MLE_MAXFEV,
    warm_start: GPHyper | None = None,
) -> GPFit:
    """Fit a constant-trend GP on batch-averaged responses.

    With ``noise_var`` the model is stochastic kriging: per-site variances
    of the batch means enter as a fixed diagonal.  Without it, hyper="mle"
    learns a homoskedastic nugget alongside lengthscales and variance.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    ybar = np.asarray(ybar, dtype=float)
    if x.shape[0] != len(ybar):
        raise ValueError("x and ybar disagree on the number of sites")
    if x.shape[0] > cap:
        raise ValueError(
            f"GP site count {x.shape[0]} exceeds cap {cap} (cubic cost guard)"
        )
    if noise_var is not None:
        noise_var = np.asarray(noise_var, dtype=float)
        if noise_var.shape != (x.shape[0],):
            raise ValueError("noise_var must have one entry per unique site")
        if np.any(np.isnan(noise_var)):
            raise ValueError(
                "noise_var contains NaN (variance flagged unavailable); "
                "replicate sites at least twice for stochastic kriging"
            )
    if isinstance(hyper, GPHyper):
        ls = np.broadcast_to(hyper.lengthscales, (x.shape[1],)).astype(float)
        h = GPHyper(hyper.kernel, ls, hyper.variance, hyper.nugget)
        return GPFit(x, ybar, h, noise_var, step=step)
    if hyper != "mle":
        raise ValueError("hyper must be a GPHyper or the string 'mle'")
    h, converged = _mle(
        x, ybar, noise_var, kernel, stream, restarts, maxfev, warm_start
    )
    return GPFit(x, ybar, h, noise_var, step=step, mle_converged=converged)
