"""Optimal stopping instances: state dynamics, payoff functions, discounting.

A :class:`ModelSpec` bundles everything that defines one problem: the
dynamics of the d-dimensional state, the intrinsic payoff, the exercise
grid (K steps of size dt up to T), and free-form tuning fields consumed by
designs and emulators.  Payoff functions return *intrinsic* (undiscounted)
rewards; the time value of money enters in exactly one place,
:func:`discounted_reward`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .sampling import RandomStream

__all__ = [
    "ModelSpec",
    "PathSet",
    "sim_step",
    "payoff",
    "discounted_reward",
    "simulate_paths",
    "DYNAMICS",
    "PAYOFFS",
]

DYNAMICS = ("gbm", "gbm_cor", "gbm_matrix", "expou_sv", "gbm_moving_ave")
PAYOFFS = ("put", "call", "maxi_call", "mini_put", "geom_put", "digital_put", "sv_put")

_GBM_FAMILY = ("gbm", "gbm_cor", "gbm_matrix", "gbm_moving_ave")

_GRID_TOL = 1e-9


@dataclass
class ModelSpec:
    """Full specification of one optimal stopping problem instance.

    Parameters
    ----------
    dim : int
        State dimension d.
    T, dt : float
        Horizon and step size in years; K = T/dt must be integral to 1e-9.
    r : float
        Risk-free rate (per year), also the discount rate.
    div : float or (d,) array
        Dividend yield(s); a scalar broadcasts to all coordinates.
    sigma : float, (d,) array or (d,d) matrix
        Volatility; a matrix is interpreted as the annualized covariance of
        log-returns (dynamics "gbm_matrix").
    rho : float, optional
        Constant cross-correlation for "gbm_cor" dynamics.
    x0 : (d,) array
        Initial state.
    strike : float
        Payoff strike.
    payoff : str
        One of put/call/maxi_call/mini_put/geom_put/digital_put/sv_put.
    dynamics : str
        One of gbm/gbm_cor/gbm_matrix/expou_sv/gbm_moving_ave.
    sv_params : dict, optional
        expou_sv parameters: svAlpha, svEpsY, svVol, svRho, svMean, eulerDt.
    extra : dict
        Free key/value tuning fields (emulator and design settings).
    """

    dim: int
    T: float
    dt: float
    r: float
    strike: float
    x0: np.ndarray
    sigma: float | np.ndarray = 0.2
    div: float | np.ndarray = 0.0
    rho: float | None = None
    payoff: str = "put"
    dynamics: str = "gbm"
    sv_params: dict | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.dt <= 0:
            raise ValueError("dt must be > 0")
        k = self.T / self.dt
        if abs(k - round(k)) > _GRID_TOL * max(1.0, abs(k)):
            raise ValueError(
                f"K = T/dt must be an integer: T={self.T}, dt={self.dt} gives {k}"
            )
        self.x0 = np.atleast_1d(np.asarray(self.x0, dtype=float))
        if self.x0.shape != (self.dim,):
            raise ValueError(f"x0 must have shape ({self.dim},), got {self.x0.shape}")
        if not np.all(np.isfinite(self.x0)):
            raise ValueError("x0 must be finite")
        if self.payoff not in PAYOFFS:
            raise ValueError(f"unknown payoff tag {self.payoff!r}; known: {PAYOFFS}")
        if self.dynamics not in DYNAMICS:
            raise ValueError(
                f"unknown dynamics tag {self.dynamics!r}; known: {DYNAMICS}"
            )
        sig = np.asarray(self.sigma, dtype=float)
        if sig.ndim == 2:
            if sig.shape != (self.dim, self.dim):
                raise ValueError("matrix sigma must be (d, d)")
            if np.any(np.diag(sig) <= 0):
                raise ValueError("sigma diagonal entries must be > 0")
        elif np.any(sig <= 0):
            raise ValueError("sigma entries must be > 0")
        if self.rho is not None and not -1.0 <= self.rho <= 1.0:
            raise ValueError("rho must lie in [-1, 1]")

    @property
    def n_steps(self) -> int:
        """Number of exercise steps K."""
        return int(round(self.T / self.dt))

    def sigma_vector(self) -> np.ndarray:
        """Per-coordinate volatilities as a (d,) vector."""
        sig = np.asarray(self.sigma, dtype=float)
        if sig.ndim == 2:
            return np.sqrt(np.diag(sig))
        return np.broadcast_to(np.atleast_1d(sig), (self.dim,)).astype(float)

    def div_vector(self) -> np.ndarray:
        return np.broadcast_to(
            np.atleast_1d(np.asarray(self.div, dtype=float)), (self.dim,)
        ).astype(float)

    def log_cov(self) -> np.ndarray:
        """Annualized covariance matrix of log-returns for the GBM family."""
        if self.dynamics == "gbm_matrix":
            return np.asarray(self.sigma, dtype=float)
        sig = self.sigma_vector()
        if self.dynamics == "gbm_cor":
            rho = 0.0 if self.rho is None else float(self.rho)
            cov = rho * np.outer(sig, sig)
            np.fill_diagonal(cov, sig**2)
            return cov
        return np.diag(sig**2)


def _check_states(states: np.ndarray, model: ModelSpec) -> np.ndarray:
    states = np.asarray(states, dtype=float)
    if states.ndim == 1:
        states = states[None, :]
    if states.shape[1] != model.dim:
        raise ValueError(
            f"state matrix has {states.shape[1]} columns, model.dim={model.dim}"
        )
    return states


def sim_step(
    states: np.ndarray, model: ModelSpec, dt: float, stream: RandomStream
) -> np.ndarray:
    """Advance every row of ``states`` by one exact step of size ``dt``.

    GBM-family dynamics use the exact log-normal transition; the stochastic
    volatility model advances by Euler substeps of size sv_params["eulerDt"].
    """
    states = _check_states(states, model)
    if dt <= 0:
        raise ValueError("dt must be > 0")
    n, d = states.shape
    dyn = model.dynamics

    if dyn in _GBM_FAMILY and np.any(states <= 0):
        # moving-average lag coordinates are bookkeeping, not prices
        cols = slice(0, 1) if dyn == "gbm_moving_ave" else slice(None)
        if np.any(states[:, cols] <= 0):
            raise ValueError(f"{dyn} requires strictly positive states")

    if dyn == "gbm":
        sig = model.sigma_vector()
        drift = (model.r - model.div_vector() - 0.5 * sig**2) * dt
        z = stream.normal_matrix(n, d)
        return states * np.exp(drift + sig * np.sqrt(dt) * z)

    if dyn in ("gbm_cor", "gbm_matrix"):
        cov = model.log_cov()
        var = np.diag(cov)
        drift = (model.r - model.div_vector() - 0.5 * var) * dt
        chol = np.linalg.cholesky(cov + 1e-14 * np.eye(d))
        z = stream.normal_matrix(n, d)
        return states * np.exp(drift + np.sqrt(dt) * z @ chol.T)

    if dyn == "gbm_moving_ave":
        sig = model.sigma_vector()[0]
        div = model.div_vector()[0]
        out = np.empty_like(states)
        z = stream.normals(n)
        out[:, 0] = states[:, 0] * np.exp(
            (model.r - div - 0.5 * sig**2) * dt + sig * np.sqrt(dt) * z
        )
        out[:, 1:] = states[:, :-1]
        return out

    if dyn == "expou_sv":
        return _sim_step_expou_sv(states, model, dt, stream)

    raise ValueError(f"unknown dynamics tag {dyn!r}")


def _sim_step_expou_sv(states, model, dt, stream):
    """Exponential-OU stochastic volatility: state (S, Y = log vol).

    dY = svAlpha (svMean - Y) dt + svEpsY svVol dW2 and the asset advances in
    log space at frozen spot vol e^Y, with corr(W1, W2) = svRho.  Substep size
    is sv_params["eulerDt"].
    """
    if model.dim != 2:
        raise ValueError("expou_sv requires dim=2 (price, log-vol)")
    p = model.sv_params or {}
    try:
        alpha, eps_y = p["svAlpha"], p.get("svEpsY", 1.0)
        vol, rho, mean = p["svVol"], p["svRho"], p["svMean"]
        euler_dt = p["eulerDt"]
    except KeyError as err:
        raise ValueError(f"expou_sv missing sv_params entry {err}") from None
    n_sub = max(1, int(round(dt / euler_dt)))
    h = dt / n_sub
    s = states[:, 0].copy()
    y = states[:, 1].copy()
    n = len(s)
    gen = stream.generator()
    for _ in range(n_sub):
        z1 = gen.standard_normal(n)
        z2 = rho * z1 + np.sqrt(max(0.0, 1.0 - rho**2)) * gen.standard_normal(n)
        spot_vol = np.exp(y)
        s *= np.exp((model.r - 0.5 * spot_vol**2) * h + spot_vol * np.sqrt(h) * z1)
        y += alpha * (mean - y) * h + eps_y * vol * np.sqrt(h) * z2
    return np.column_stack([s, y])


def payoff(states: np.ndarray, model: ModelSpec) -> np.ndarray:
    """Intrinsic (undiscounted) reward of each state row."""
    states = _check_states(states, model)
    k = model.strike
    tag = model.payoff
    if tag == "put":
        return np.maximum(k - states.mean(axis=1), 0.0)
    if tag == "call":
        return np.maximum(states.mean(axis=1) - k, 0.0)
    if tag == "maxi_call":
        return np.maximum(states.max(axis=1) - k, 0.0)
    if tag == "mini_put":
        return np.maximum(k - states.min(axis=1), 0.0)
    if tag == "geom_put":
        geo = np.exp(np.log(states).mean(axis=1))
        return np.maximum(k - geo, 0.0)
    if tag == "digital_put":
        geo = np.exp(np.log(states).mean(axis=1))
        return (geo < k).astype(float)
    if tag == "sv_put":
        return np.maximum(k - states[:, 0], 0.0)
    raise ValueError(f"unknown payoff tag {tag!r}")


def discounted_reward(k: int, states: np.ndarray, model: ModelSpec) -> np.ndarray:
    """h(k, x) = e^{-r k dt} * payoff(x), the reward used by every solver."""
    if not 0 <= k <= model.n_steps:
        raise ValueError(f"step k={k} outside 0..{model.n_steps}")
    return np.exp(-model.r * k * model.dt) * payoff(states, model)


def simulate_paths(
    model: ModelSpec, n: int, stream: RandomStream, n_steps: int | None = None
) -> np.ndarray:
    """Simulate ``n`` forward trajectories from x0.

    Returns a step-major array of shape (n_steps+1, n, d); index 0 holds x0.
    Each step consumes its own substream so the draw for (step, path) never
    depends on scheduling.
    """
    k_max = model.n_steps if n_steps is None else int(n_steps)
    out = np.empty((k_max + 1, n, model.dim))
    out[0] = np.broadcast_to(model.x0, (n, model.dim))
    for k in range(1, k_max + 1):
        out[k] = sim_step(out[k - 1], model, model.dt, stream.child("step", k))
    return out


@dataclass
class PathSet:
    """A step-major database of trajectories: states[k] is x^{1:N}(k)."""

    states: np.ndarray  # (K+1, N, d)
    instance: str | None = None
    seed: int | None = None

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=float)
        if self.states.ndim != 3:
            raise ValueError("PathSet.states must be (K+1, N, d)")

    @property
    def horizon(self) -> int:
        return self.states.shape[0] - 1

    @property
    def n_paths(self) -> int:
        return self.states.shape[1]

    @property
    def dim(self) -> int:
        return self.states.shape[2]

    def __getitem__(self, k: int) -> np.ndarray:
        return self.states[k]

    def save(self, path) -> None:
        """Persist as a self-describing .npz (bit-exact round trip)."""
        np.savez(
            path,
            states=self.states,
            instance=np.array(self.instance or "", dtype="U32"),
            seed=np.array(-1 if self.seed is None else self.seed, dtype=np.int64),
            n_steps=np.array(self.horizon, dtype=np.int64),
            n_paths=np.array(self.n_paths, dtype=np.int64),
            dim=np.array(self.dim, dtype=np.int64),
        )

    @classmethod
    def load(cls, path) -> "PathSet":
        with np.load(path) as data:
            inst = str(data["instance"]) or None
            seed = int(data["seed"])
            return cls(
                states=data["states"],
                instance=inst,
                seed=None if seed < 0 else seed,
            )


def make_path_set(
    model: ModelSpec,
    n: int,
    stream: RandomStream,
    instance: str | None = None,
) -> PathSet:
    return PathSet(
        states=simulate_paths(model, n, stream),
        instance=instance,
        seed=stream.seed,
    )
