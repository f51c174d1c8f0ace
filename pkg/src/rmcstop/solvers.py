"""Backward dynamic-emulation solvers for optimal stopping.

Every solver runs the same loop: for k = K-1, ..., 1 build a training
design, turn forward simulations into pathwise timing-value responses

    y = h(tau, X(tau)) - h(k, X(k)),   tau = first future step where the
                                       state is in-the-money and the fitted
                                       timing value is negative,

truncated at a lookahead cap where the plug-in value h + max(0, That) is
used, and fit an emulator That(k, .) on the responses.  Variants differ in
where the training inputs come from (re-used global paths, fresh paths from
a fixed design, sequentially grown GP designs, adaptively batched designs)
and in the regression module (method tag).
"""

from __future__ import annotations

import pickle
import time
from dataclasses import dataclass, field

import numpy as np

from . import emulators as em
from .designs import (
    Design,
    batch_stats,
    path_design,
    pilot_boxes,
    spacefill_design,
)
from .model import (
    ModelSpec,
    discounted_reward,
    payoff,
    sim_step,
    simulate_paths,
)
from .sampling import RandomStream, lhs

__all__ = [
    "PolicyFit",
    "SolverConfig",
    "pathwise_stop",
    "solve_ls",
    "solve_tvr",
    "solve_fixed",
    "solve_piecewise_bw",
    "solve_seq",
    "solve_seq_batch",
    "acquisition_smcu",
]

POLICY_FORMAT_VERSION = 1

SOLVERS = ("ls", "tvr", "fixed", "piecewise_bw", "seq", "seq_batch")
GP_METHODS = ("km", "trainkm")
METHODS = ("lm", "km", "trainkm", "kernel")

SEQ_FINAL_SIZE_CAP = 300  # sequential-round overhead guard


# ---------------------------------------------------------------------------
# policy container


@dataclass
class PolicyFit:
    """Ordered timing-value emulators for k = 1..K-1 plus diagnostics.

    ``fits[k]`` is the emulator for step k; index 0 stays None because the
    time-0 design is degenerate (all paths start at x0) and the time-0
    decision is the scalar comparison done at evaluation time.
    """

    model: ModelSpec
    fits: list
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        k_steps = self.model.n_steps
        if len(self.fits) != k_steps:
            raise ValueError(f"fits must have length K={k_steps} (index 0 unused)")

    def timing_value(self, k: int, states: np.ndarray) -> np.ndarray:
        fit = self.fits[k]
        if fit is None:
            raise ValueError(f"no emulator fitted at step {k}")
        return fit.predict(states)

    def to_state(self) -> dict:
        # wall-clock diagnostics stay out of the payload so identical
        # (config, seed) runs serialize to identical bytes
        diag = {k: v for k, v in self.diagnostics.items()
                if k not in ("fit_seconds",)}
        return {
            "format": "rmcstop-policy",
            "version": POLICY_FORMAT_VERSION,
            "model": _model_state(self.model),
            "fits": [None if f is None else em.serialize_fit(f) for f in self.fits],
            "diagnostics": diag,
        }

    @classmethod
    def from_state(cls, state: dict) -> "PolicyFit":
        if state.get("format") != "rmcstop-policy":
            raise ValueError("not a policy file")
        if state.get("version") != POLICY_FORMAT_VERSION:
            raise ValueError(
                f"policy file version {state.get('version')} not supported"
            )
        model = _model_from_state(state["model"])
        fits = [
            None if s is None else em.deserialize_fit(s) for s in state["fits"]
        ]
        for f in fits:
            _rebind_payoff_feature(f, model)
        return cls(model=model, fits=fits, diagnostics=state["diagnostics"])

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(pickle.dumps(self.to_state(), protocol=4))

    @classmethod
    def load(cls, path) -> "PolicyFit":
        with open(path, "rb") as fh:
            return cls.from_state(pickle.loads(fh.read()))

    def diagnostics_csv(self, path) -> None:
        """Per-step diagnostics as CSV: step, N_k, fit seconds, budget."""
        n_k = self.diagnostics.get("n_k", {})
        secs = self.diagnostics.get("fit_seconds", {})
        budget = self.diagnostics.get("budget", {})
        with open(path, "w") as fh:
            fh.write("step,n_k,fit_seconds,budget\n")
            for k in sorted(n_k):
                fh.write(
                    f"{k},{n_k[k]},{secs.get(k, float('nan')):.6f},"
                    f"{budget.get(k, '')}\n"
                )


def _model_state(model: ModelSpec) -> dict:
    return {
        "dim": model.dim,
        "T": model.T,
        "dt": model.dt,
        "r": model.r,
        "strike": model.strike,
        "x0": model.x0,
        "sigma": model.sigma,
        "div": model.div,
        "rho": model.rho,
        "payoff": model.payoff,
        "dynamics": model.dynamics,
        "sv_params": model.sv_params,
        "extra": model.extra,
    }


def _model_from_state(state: dict) -> ModelSpec:
    return ModelSpec(**state)


def _rebind_payoff_feature(fit, model: ModelSpec) -> None:
    if isinstance(fit, em.LinearFit) and getattr(fit.bases, "_payoff_feature", False):
        fit.bases.payoff_fn = lambda x: payoff(x, model)


@dataclass
class SolverConfig:
    """Declarative solver request (what the CLI and bench presets consume)."""

    solver: str
    method: str = "lm"
    n: int | list | None = None
    w: int | None = None
    seed: int = 0
    # design options
    nrep: int = 1
    box: np.ndarray | None = None
    sites: np.ndarray | None = None
    pilot_quantile: float | None = None
    pilot_nsims: int = 1000
    qmc: str = "sobol"
    constraints: list | None = None
    itm_filter: bool = True
    n_bins: int = 5
    # lm options
    degree: int | None = None
    sorted_bases: bool = False
    include_payoff: bool = False
    # kernel options
    kernel: str = "gaussian"
    bandwidth: object = "cv"
    # GP options
    kernel_family: str = "matern52"
    km_cov: float = 4.0
    km_var: float = 1.0
    # sequential options
    init_size: int = 30
    final_size: int = 100
    cand_len: int = 500
    update_freq: int = 5
    ucb_gamma: float = 1.0
    acquisition: str = "smcu"
    heuristic: str = "adsa"
    total_budget: int | None = None
    r0: int = 25

    def __post_init__(self):
        if self.solver not in SOLVERS:
            raise ValueError(f"unknown solver {self.solver!r}; known: {SOLVERS}")
        if self.solver in ("seq", "seq_batch") and self.method not in GP_METHODS:
            raise ValueError(
                f"solver {self.solver!r} needs a GP method, got {self.method!r}"
            )
        if self.solver == "tvr":
            self.w = 1
        if self.solver != "piecewise_bw" and self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; known: {METHODS}")


# ---------------------------------------------------------------------------
# method dispatch


def _default_bases(model: ModelSpec, degree=None, sorted_bases=False,
                   include_payoff=False):
    degree = degree if degree is not None else (3 if model.dim <= 2 else 2)
    payoff_fn = (lambda x: payoff(x, model)) if include_payoff else None
    bases = em.polynomial_bases(
        degree,
        model.dim,
        include_payoff=include_payoff,
        sorted_coords=sorted_bases,
        payoff_fn=payoff_fn,
    )
    bases._payoff_feature = include_payoff
    return bases


def _make_fitter(method, model, stream, bases=None, **opts):
    """Return fit(x, y, noise_var, step, warm) plus the row minimum."""
    if method == "lm":
        if bases is None:
            bases = _default_bases(
                model,
                opts.get("degree"),
                opts.get("sorted_bases", False),
                opts.get("include_payoff", False),
            )
        min_rows = bases.arity + 2

        def fit(x, y, noise_var=None, step=None, warm=None):
            const = em.degenerate_fit(x, y, step)
            return const if const is not None else em.fit_lm(bases, x, y, step=step)

        return fit, min_rows

    if method == "kernel":
        kern = opts.get("kernel", "gaussian")
        bandwidth = opts.get("bandwidth", "cv")
        min_rows = 20 if bandwidth == "cv" else 2

        def fit(x, y, noise_var=None, step=None, warm=None):
            const = em.degenerate_fit(x, y, step)
            if const is not None:
                return const
            return em.fit_kernel(x, y, kernel=kern, bandwidth=bandwidth, step=step)

        return fit, min_rows

    if method in GP_METHODS:
        family = opts.get("kernel_family", "matern52")
        restarts = opts.get("restarts", em.gp.MLE_RESTARTS)

        def fit(x, y, noise_var=None, step=None, warm=None):
            if len(np.atleast_1d(y)) == 1:
                # single-site design: the constant-trend GP is the constant
                x2 = np.atleast_2d(x)
                return em.ConstantFit(float(np.atleast_1d(y)[0]), x2.shape[1],
                                      step=step)
            const = em.degenerate_fit(x, y, step)
            if const is not None:
                return const
            if method == "km":
                hyper = em.GPHyper(
                    kernel=family,
                    lengthscales=np.full(model.dim, float(opts.get("km_cov", 4.0))),
                    variance=float(opts.get("km_var", 1.0)),
                )
                return em.fit_gp(x, y, noise_var, hyper=hyper, step=step)
            return em.fit_gp(
                x, y, noise_var,
                hyper="mle",
                kernel=family,
                step=step,
                stream=stream.child("mle", -1 if step is None else step),
                restarts=restarts if warm is None else max(2, restarts // 2),
                warm_start=warm,
            )

        return fit, 1

    raise ValueError(f"unknown method {method!r}; known: {METHODS}")


# ---------------------------------------------------------------------------
# pathwise responses


def _window_responses(k, w, h, itm, t_pred, k_steps):
    """Algorithm responses from stored per-step predictions on global paths.

    h, itm, t_pred are (K+1, N) arrays of discounted rewards, in-the-money
    flags and fitted timing values.  Stops strictly before the cap pay the
    realized reward; at the cap the plug-in value h + max(0, That) is used
    (the That term vanishes at maturity).
    """
    n = h.shape[1]
    cap = k_steps if w is None else min(k + w, k_steps)
    tau = np.full(n, cap)
    decided = np.zeros(n, dtype=bool)
    for s in range(k + 1, cap):
        stop = ~decided & itm[s] & (t_pred[s] < 0)
        tau[stop] = s
        decided |= stop
    y = h[tau, np.arange(n)] - h[k]
    if cap < k_steps:
        live = ~decided
        y[live] += np.maximum(t_pred[cap][live], 0.0)
    return y


def pathwise_stop(fits, path_states, k, model, w=None):
    """Stopping step and timing-value reward along given forward paths.

    ``path_states[j]`` holds X(k+j) for j = 0..cap-k (row-per-path), where
    cap = min(k+w, K).  Returns (tau, reward) vectors; reward is
    h(tau, X(tau)) - h(k, X(k)) with the plug-in value at the cap.
    """
    states = np.asarray(path_states, dtype=float)
    if states.ndim == 2:
        states = states[:, None, :]
    k_steps = model.n_steps
    cap = k_steps if w is None else min(k + w, k_steps)
    if states.shape[0] < cap - k + 1:
        raise ValueError(f"need states for steps {k}..{cap}")
    n = states.shape[1]
    h = np.stack(
        [discounted_reward(k + j, states[j], model) for j in range(cap - k + 1)]
    )
    tau = np.full(n, cap)
    decided = np.zeros(n, dtype=bool)
    for s in range(k + 1, cap):
        fit = fits[s] if s < len(fits) else None
        if fit is None:
            raise ValueError(f"missing emulator for step {s}")
        live = ~decided & (h[s - k] > 0)
        if live.any():
            stop = np.zeros(n, dtype=bool)
            stop[live] = fit.predict(states[s - k][live]) < 0
            tau[stop] = s
            decided |= stop
    reward = h[tau - k, np.arange(n)] - h[0]
    if cap < k_steps:
        fit = fits[cap] if cap < len(fits) else None
        if fit is None:
            raise ValueError(f"missing emulator for step {cap}")
        live = ~decided
        if live.any():
            reward[live] += np.maximum(fit.predict(states[cap - k][live]), 0.0)
    return tau, reward


def simulate_pathwise_responses(model, sites, k, fits, nrep, stream, w=None):
    """Fresh w-step paths from each site; returns an (n_sites, nrep) matrix.

    Paths follow the already-fitted rule: continue while out-of-the-money or
    That >= 0, stop otherwise; the lookahead cap uses the plug-in value.
    """
    sites = np.atleast_2d(np.asarray(sites, dtype=float))
    flat = _simulate_responses_flat(
        model, sites, np.full(sites.shape[0], int(nrep)), k, fits, stream, w
    )
    return flat.reshape(sites.shape[0], nrep)


def _simulate_responses_flat(model, sites, rep_counts, k, fits, stream, w=None):
    """Variable-replication response simulation, one vectorized walk.

    Site i contributes rep_counts[i] consecutive entries of the returned
    flat response vector.
    """
    sites = np.atleast_2d(np.asarray(sites, dtype=float))
    rep_counts = np.asarray(rep_counts, dtype=int)
    k_steps = model.n_steps
    cap = k_steps if w is None else min(k + w, k_steps)
    states = np.repeat(sites, rep_counts, axis=0)
    n = states.shape[0]
    h_k = np.repeat(discounted_reward(k, sites, model), rep_counts)
    y = np.empty(n)
    active = np.ones(n, dtype=bool)
    for s in range(k + 1, cap + 1):
        states[active] = sim_step(
            states[active], model, model.dt, stream.child("sim", s)
        )
        h_s = discounted_reward(s, states[active], model)
        idx = np.flatnonzero(active)
        if s < cap:
            itm = h_s > 0
            if itm.any():
                pred = fits[s].predict(states[idx[itm]])
                stop_local = np.flatnonzero(itm)[pred < 0]
                rows = idx[stop_local]
                y[rows] = h_s[stop_local] - h_k[rows]
                active[rows] = False
        else:
            plug = np.zeros(len(idx))
            if s < k_steps:
                plug = np.maximum(fits[s].predict(states[idx]), 0.0)
            y[idx] = h_s + plug - h_k[idx]
            active[idx] = False
    return y


# ---------------------------------------------------------------------------
# global-path solvers (LS, TvR, Bouchard-Warin)


def _global_path_tables(model, n_paths, stream):
    paths = simulate_paths(model, n_paths, stream.child("paths"))
    k_steps = model.n_steps
    h = np.stack(
        [discounted_reward(k, paths[k], model) for k in range(k_steps + 1)]
    )
    return paths, h, h > 0


def _in_sample_price(h, itm, t_pred, k_steps):
    n = h.shape[1]
    tau = np.full(n, k_steps)
    decided = np.zeros(n, dtype=bool)
    for s in range(1, k_steps):
        stop = ~decided & itm[s] & (t_pred[s] < 0)
        tau[stop] = s
        decided |= stop
    return float(h[tau, np.arange(n)].mean())


def _solve_global(model, n_paths, method, stream, w, itm_filter, bases,
                  solver_tag, **opts):
    paths, h, itm = _global_path_tables(model, n_paths, stream)
    k_steps = model.n_steps
    fitter, min_rows = _make_fitter(method, model, stream, bases=bases, **opts)
    t_pred = np.zeros((k_steps + 1, n_paths))
    fits = [None] * k_steps
    n_k, secs, budget = {}, {}, {}
    for k in range(k_steps - 1, 0, -1):
        y = _window_responses(k, w, h, itm, t_pred, k_steps)
        rows = itm[k] if itm_filter else np.ones(n_paths, dtype=bool)
        n_rows = int(rows.sum())
        t0 = time.perf_counter()
        if n_rows == 0:
            # nowhere in the money: out-of-the-money states always continue
            fit = em.ConstantFit(1.0, model.dim, step=k)
        elif n_rows < min_rows:
            raise ValueError(
                f"step {k}: only {n_rows} usable training rows "
                f"(method {method!r} needs >= {min_rows})"
            )
        else:
            fit = fitter(paths[k][rows], y[rows], step=k)
        secs[k] = time.perf_counter() - t0
        fits[k] = fit
        t_pred[k] = fit.predict(paths[k])
        n_k[k] = n_rows
        budget[k] = n_rows
    diag = {
        "solver": solver_tag,
        "method": method,
        "n_k": n_k,
        "fit_seconds": secs,
        "budget": budget,
        "in_sample_price": _in_sample_price(h, itm, t_pred, k_steps),
        "n_paths": n_paths,
        "seed": stream.seed,
    }
    return PolicyFit(model=model, fits=fits, diagnostics=diag)


def solve_ls(model, n_paths, method="lm", stream=None, w=None, itm_filter=True,
             bases=None, **opts):
    """Longstaff-Schwartz scheme: one global path simulation, re-used.

    The lookahead defaults to the full horizon; the in-sample price (mean
    realized reward on the training paths) lands in diagnostics.
    """
    stream = stream if stream is not None else RandomStream(0)
    return _solve_global(
        model, n_paths, method, stream, w, itm_filter, bases, "ls", **opts
    )


def solve_tvr(model, n_paths, method="lm", stream=None, itm_filter=True,
              bases=None, **opts):
    """Tsitsiklis-van Roy scheme: one-step lookahead (w = 1 forced).

    The response is the step-ahead value V(k+1) = h + max(0, That) minus the
    current reward, which is exactly the w=1 window response.
    """
    stream = stream if stream is not None else RandomStream(0)
    return _solve_global(
        model, n_paths, method, stream, 1, itm_filter, bases, "tvr", **opts
    )


def solve_piecewise_bw(model, n_paths, n_bins, stream=None, test_paths=None,
                       itm_filter=True, min_leaf=100):
    """Equi-probable piecewise-linear solver on global paths.

    The partition is equi-probable over the in-the-money path states at each
    step (the cells concentrate where the exercise decision lives); the
    per-step bin count shrinks below ``n_bins`` whenever the surviving row
    count cannot keep at least ``min_leaf`` rows per terminal cell.  When
    ``test_paths`` is supplied the out-of-sample price is computed alongside
    and returned with the in-sample one.
    """
    stream = stream if stream is not None else RandomStream(0)
    paths, h, itm = _global_path_tables(model, n_paths, stream)
    k_steps = model.n_steps
    t_pred = np.zeros((k_steps + 1, n_paths))
    fits = [None] * k_steps
    n_k, secs = {}, {}
    leaf = max(min_leaf, model.dim + 2)
    for k in range(k_steps - 1, 0, -1):
        y = _window_responses(k, None, h, itm, t_pred, k_steps)
        rows = itm[k] if itm_filter else np.ones(n_paths, dtype=bool)
        n_rows = int(rows.sum())
        t0 = time.perf_counter()
        if n_rows == 0:
            fit = em.ConstantFit(1.0, model.dim, step=k)
        else:
            bins_k = min(
                n_bins,
                max(1, int((n_rows / leaf) ** (1.0 / model.dim))),
            )
            const = em.degenerate_fit(paths[k][rows], y[rows], step=k)
            fit = const if const is not None else em.fit_piecewise_bw(
                paths[k][rows], y[rows], bins_k, step=k
            )
        secs[k] = time.perf_counter() - t0
        fits[k] = fit
        t_pred[k] = fit.predict(paths[k])
        n_k[k] = n_rows
    diag = {
        "solver": "piecewise_bw",
        "method": f"bw{n_bins}",
        "n_k": n_k,
        "fit_seconds": secs,
        "budget": dict(n_k),
        "in_sample_price": _in_sample_price(h, itm, t_pred, k_steps),
        "n_paths": n_paths,
        "seed": stream.seed,
    }
    policy = PolicyFit(model=model, fits=fits, diagnostics=diag)
    prices = {"in_sample": diag["in_sample_price"]}
    if test_paths is not None:
        from .policy import forward_eval

        result = forward_eval(test_paths, policy, model)
        prices["out_of_sample"] = result.price
        prices["out_of_sample_se"] = result.std_error
    return policy, prices


# ---------------------------------------------------------------------------
# fixed-design solver


def _n_schedule(n, k_steps, default):
    if n is None:
        n = default
    arr = np.atleast_1d(np.asarray(n, dtype=int))
    if arr.size == 1:
        return np.full(k_steps + 1, int(arr[0]))
    if arr.size == k_steps + 1:
        return arr.copy()
    if arr.size == k_steps:
        # per-step budgets for k = 0..K-1
        return np.concatenate([arr, arr[-1:]])
    raise ValueError(
        f"design budget must be a scalar or a length-{k_steps} vector"
    )


def _resolve_design(model, k, n_k, stream, sites=None, box=None, boxes=None,
                    pilot_paths=None, qmc="sobol", nrep=1, constraints=None,
                    itm_filter=True):
    if sites is not None:
        arr = np.atleast_2d(np.asarray(sites, dtype=float))
        return Design(
            sites=arr, rep_counts=np.full(len(arr), int(nrep)), step=k
        )
    if box is not None or boxes is not None:
        use_box = box if box is not None else boxes[k]
        return spacefill_design(
            use_box, n_k, qmc, model, k,
            itm_filter=itm_filter,
            stream=stream.child("fill", k),
            constraints=constraints,
            nrep=nrep,
        )
    if pilot_paths is not None:
        design = path_design(
            model, min(n_k, pilot_paths.shape[1]), k, pilot_paths,
            itm_filter=itm_filter,
        )
        return Design(
            sites=design.sites,
            rep_counts=np.full(design.n_unique, int(nrep)),
            step=k,
            source_rows=design.source_rows,
        )
    raise ValueError("no design source: give sites, a box, or pilot options")


def solve_fixed(model, method="km", stream=None, sites=None, box=None,
                pilot_quantile=None, qmc="sobol", n=None, nrep=1,
                pilot_nsims=1000, w=None, constraints=None, itm_filter=True,
                bases=None, **opts):
    """Dynamic emulation on user-specified simulation designs.

    The design source is, in order of precedence: explicit ``sites`` used
    as-is at every step; a fixed ``box`` space-filled with ``qmc``; a
    pilot-quantile box per step (``pilot_quantile`` in [0, 0.5) or -1 for
    the full range); otherwise the pilot paths themselves (path-based
    design).  Each unique site is replicated ``nrep`` times, fresh forward
    paths are simulated at every step, and responses are pre-averaged before
    fitting; GP methods receive the stochastic-kriging noise diagonal when
    nrep >= 2.
    """
    stream = stream if stream is not None else RandomStream(0)
    k_steps = model.n_steps
    fitter, min_rows = _make_fitter(method, model, stream, bases=bases, **opts)
    n_sched = _n_schedule(n, k_steps, default=100)

    boxes = None
    pilot_paths = None
    if sites is None and box is None:
        if pilot_quantile is not None:
            boxes = pilot_boxes(
                model, pilot_nsims, pilot_quantile, stream.child("pilot-box")
            )
        else:
            n_pilot = max(pilot_nsims, int(n_sched.max()))
            pilot_paths = simulate_paths(
                model, n_pilot, stream.child("pilot-paths")
            )

    fits = [None] * k_steps
    n_k, secs, budget = {}, {}, {}
    for k in range(k_steps - 1, 0, -1):
        design = _resolve_design(
            model, k, int(n_sched[k]), stream,
            sites=sites, box=box, boxes=boxes, pilot_paths=pilot_paths,
            qmc=qmc, nrep=nrep, constraints=constraints, itm_filter=itm_filter,
        )
        if design.n_unique < min_rows:
            raise ValueError(
                f"step {k}: design has {design.n_unique} sites, "
                f"method {method!r} needs >= {min_rows}"
            )
        y_mat = simulate_pathwise_responses(
            model, design.sites, k, fits, nrep, stream.child("resp", k), w=w
        )
        stats = batch_stats(y_mat)
        noise = None
        if method in GP_METHODS and nrep >= 2:
            noise = stats.noise_variances()
        t0 = time.perf_counter()
        fits[k] = fitter(design.sites, stats.ybar, noise_var=noise, step=k)
        secs[k] = time.perf_counter() - t0
        n_k[k] = design.n_unique
        budget[k] = design.budget
    diag = {
        "solver": "fixed",
        "method": method,
        "n_k": n_k,
        "fit_seconds": secs,
        "budget": budget,
        "in_sample_price": None,
        "seed": stream.seed,
    }
    return PolicyFit(model=model, fits=fits, diagnostics=diag)


# ---------------------------------------------------------------------------
# sequential designs


def acquisition_smcu(mean, sd, gamma):
    """Straddle score gamma*sd - |mean|: big near the zero contour, bigger
    when uncertain."""
    return gamma * np.asarray(sd) - np.abs(np.asarray(mean))


class _SiteAggregates:
    """Running per-site response statistics under growing replication."""

    def __init__(self):
        self.sites = None
        self.counts = np.zeros(0, dtype=int)
        self.sums = np.zeros(0)
        self.sumsq = np.zeros(0)

    def add_site(self, x, ys):
        x = np.atleast_2d(x)
        self.sites = x if self.sites is None else np.vstack([self.sites, x])
        self.counts = np.append(self.counts, len(ys))
        self.sums = np.append(self.sums, ys.sum())
        self.sumsq = np.append(self.sumsq, (ys**2).sum())

    def add_reps(self, i, ys):
        self.counts[i] += len(ys)
        self.sums[i] += ys.sum()
        self.sumsq[i] += (ys**2).sum()

    @property
    def n_unique(self):
        return 0 if self.sites is None else len(self.counts)

    def ybar(self):
        return self.sums / self.counts

    def replicate_variances(self):
        """Per-site sample variance of a single replicate."""
        ybar = self.ybar()
        ss = np.maximum(self.sumsq - self.counts * ybar**2, 0.0)
        return ss / np.maximum(self.counts - 1, 1)

    def noise_variances(self):
        return self.replicate_variances() / self.counts


def _init_sequential_design(model, k, box, init_size, stream):
    n_prop = max(2 * init_size, init_size + 8)
    for _ in range(6):
        design = spacefill_design(
            box, n_prop, "sobol", model, k, itm_filter=True, stream=stream
        )
        if design.n_unique >= init_size:
            return design.sites[:init_size]
        n_prop *= 2
    raise ValueError(
        f"step {k}: could not place {init_size} in-the-money initial sites"
    )


def _itm_candidates(model, box, cand_len, stream):
    unit = lhs(cand_len, model.dim, stream)
    lo, hi = box[:, 0], box[:, 1]
    cands = lo + unit * (hi - lo)
    cands = cands[payoff(cands, model) > 0]
    if len(cands) == 0:
        raise ValueError("empty candidate set after in-the-money filter")
    return cands


def _seq_gp_fit(method, model, agg, k, stream, family, hyper_state, refit_hyper,
                opts):
    noise = agg.noise_variances()
    const = em.degenerate_fit(agg.sites, agg.ybar(), step=k)
    if const is not None:
        return const, hyper_state
    if method == "km":
        hyper = em.GPHyper(
            kernel=family,
            lengthscales=np.full(model.dim, float(opts.get("km_cov", 4.0))),
            variance=float(opts.get("km_var", 1.0)),
        )
        return em.fit_gp(agg.sites, agg.ybar(), noise, hyper=hyper, step=k), hyper
    if refit_hyper or hyper_state is None:
        fit = em.fit_gp(
            agg.sites, agg.ybar(), noise,
            hyper="mle", kernel=family, step=k,
            stream=stream.child("mle", k, agg.n_unique),
            restarts=em.gp.MLE_RESTARTS if hyper_state is None else 2,
            warm_start=hyper_state,
        )
        return fit, fit.hyper
    return (
        em.fit_gp(agg.sites, agg.ybar(), noise, hyper=hyper_state, step=k),
        hyper_state,
    )


def solve_seq(model, method="trainkm", stream=None, init_size=30,
              final_size=100, nrep=25, cand_len=500, update_freq=5,
              ucb_gamma=1.0, acquisition="smcu", box=None, pilot_quantile=0.02,
              pilot_nsims=1000, w=None, **opts):
    """Sequential design: greedily grow each step's design one site at a time.

    Starts from ``init_size`` space-filled in-the-money sites, then adds the
    acquisition argmax over fresh candidate sets until ``final_size`` unique
    sites, with ``nrep`` replicates everywhere.  GP hyperparameters are
    re-optimized every ``update_freq`` rounds and reused in between.
    """
    stream = stream if stream is not None else RandomStream(0)
    if method not in GP_METHODS:
        raise ValueError("solve_seq requires a GP method (km or trainkm)")
    if acquisition != "smcu":
        raise ValueError(f"unknown acquisition {acquisition!r} (smcu available)")
    if final_size > SEQ_FINAL_SIZE_CAP:
        raise ValueError(
            f"final_size {final_size} exceeds {SEQ_FINAL_SIZE_CAP} "
            "(sequential-round overhead guard)"
        )
    if final_size < init_size:
        raise ValueError("final_size must be >= init_size")
    family = opts.get("kernel_family", "matern52")
    k_steps = model.n_steps
    boxes = (
        [box] * (k_steps + 1)
        if box is not None
        else pilot_boxes(model, pilot_nsims, pilot_quantile,
                         stream.child("pilot-box"))
    )
    fits = [None] * k_steps
    n_k, secs, budget = {}, {}, {}
    for k in range(k_steps - 1, 0, -1):
        t0 = time.perf_counter()
        agg = _SiteAggregates()
        sites0 = _init_sequential_design(
            model, k, boxes[k], init_size, stream.child("init", k)
        )
        y0 = simulate_pathwise_responses(
            model, sites0, k, fits, nrep, stream.child("resp", k, 0), w=w
        )
        for i in range(len(sites0)):
            agg.add_site(sites0[i], y0[i])
        fit, hyper_state = _seq_gp_fit(
            method, model, agg, k, stream, family, None, True, opts
        )
        rounds = 0
        while agg.n_unique < final_size:
            rounds += 1
            cands = _itm_candidates(
                model, boxes[k], cand_len, stream.child("cand", k, rounds)
            )
            mean, sd = fit.predict_with_sd(cands) if isinstance(fit, em.GPFit) \
                else (fit.predict(cands), np.zeros(len(cands)))
            scores = acquisition_smcu(mean, sd, ucb_gamma)
            x_new = cands[int(np.argmax(scores))]
            y_new = simulate_pathwise_responses(
                model, x_new[None, :], k, fits, nrep,
                stream.child("resp", k, rounds), w=w,
            )
            agg.add_site(x_new, y_new[0])
            fit, hyper_state = _seq_gp_fit(
                method, model, agg, k, stream, family, hyper_state,
                rounds % update_freq == 0, opts,
            )
        fits[k] = fit
        secs[k] = time.perf_counter() - t0
        n_k[k] = agg.n_unique
        budget[k] = int(agg.counts.sum())
    diag = {
        "solver": "seq",
        "method": method,
        "n_k": n_k,
        "fit_seconds": secs,
        "budget": budget,
        "in_sample_price": None,
        "seed": stream.seed,
    }
    return PolicyFit(model=model, fits=fits, diagnostics=diag)


def _adsa_gamma(sd):
    """Adaptive straddle width: 80th-percentile sd normalized by the max."""
    top = float(sd.max())
    if top <= 0:
        return 0.0
    return float(np.quantile(sd, 0.8)) / top


def solve_seq_batch(model, method="trainkm", stream=None, heuristic="adsa",
                    total_budget=3000, r0=25, init_size=30, cand_len=500,
                    update_freq=5, ucb_gamma=1.0, box=None,
                    pilot_quantile=0.02, pilot_nsims=1000, w=None, **opts):
    """Adaptive batching: spend each round's budget on a new site or on
    deeper replication of existing sites.

    ``fb`` (fixed batching) adds a new site every round and is the same
    engine as :func:`solve_seq`.  ``adsa`` compares the posterior-variance
    reduction of a fresh acquisition-argmax site against distributing the
    round budget across existing sites proportionally to their predictive
    sd, and executes the better branch; replication counts end up
    heterogeneous and sum exactly to ``total_budget``.
    """
    stream = stream if stream is not None else RandomStream(0)
    if method not in GP_METHODS:
        raise ValueError("solve_seq_batch requires a GP method (km or trainkm)")
    init_budget = init_size * r0
    if total_budget < init_budget:
        raise ValueError(
            f"total_budget {total_budget} below initial budget {init_budget}"
        )
    if heuristic == "fb":
        extra = total_budget - init_budget
        if extra % r0:
            raise ValueError(
                "fb heuristic needs total_budget - init_size*r0 divisible by r0"
            )
        policy = solve_seq(
            model, method, stream,
            init_size=init_size, final_size=init_size + extra // r0, nrep=r0,
            cand_len=cand_len, update_freq=update_freq, ucb_gamma=ucb_gamma,
            box=box, pilot_quantile=pilot_quantile, pilot_nsims=pilot_nsims,
            w=w, **opts,
        )
        policy.diagnostics["solver"] = "seq_batch"
        policy.diagnostics["heuristic"] = "fb"
        return policy
    if heuristic != "adsa":
        raise ValueError(f"unknown batching heuristic {heuristic!r}")

    family = opts.get("kernel_family", "matern52")
    k_steps = model.n_steps
    boxes = (
        [box] * (k_steps + 1)
        if box is not None
        else pilot_boxes(model, pilot_nsims, pilot_quantile,
                         stream.child("pilot-box"))
    )
    fits = [None] * k_steps
    n_k, secs, budget, rep_tables = {}, {}, {}, {}
    for k in range(k_steps - 1, 0, -1):
        t0 = time.perf_counter()
        agg = _SiteAggregates()
        sites0 = _init_sequential_design(
            model, k, boxes[k], init_size, stream.child("init", k)
        )
        y0 = simulate_pathwise_responses(
            model, sites0, k, fits, r0, stream.child("resp", k, 0), w=w
        )
        for i in range(len(sites0)):
            agg.add_site(sites0[i], y0[i])
        fit, hyper_state = _seq_gp_fit(
            method, model, agg, k, stream, family, None, True, opts
        )
        remaining = total_budget - init_budget
        rounds = 0
        while remaining > 0:
            rounds += 1
            spend = min(r0, remaining)
            cands = _itm_candidates(
                model, boxes[k], cand_len, stream.child("cand", k, rounds)
            )
            if isinstance(fit, em.GPFit):
                mean, sd = fit.predict_with_sd(cands)
                site_sd = fit.predict_sd(agg.sites)
            else:
                mean, sd = fit.predict(cands), np.zeros(len(cands))
                site_sd = np.zeros(agg.n_unique)
            gamma = _adsa_gamma(sd)
            scores = acquisition_smcu(mean, sd, gamma)
            j_new = int(np.argmax(scores))
            # variance-reduction proxy s^2 * r/(r + r_eff) per affected site:
            # a candidate's effective replication is what the GP already
            # carries there from its neighbors, tau^2 / s^2(x)
            tau2 = float(np.median(agg.replicate_variances()))
            s2_new = float(sd[j_new] ** 2)
            r_eff_new = tau2 / max(s2_new, 1e-12)
            gain_new = s2_new * spend / (spend + r_eff_new)
            alloc = _proportional_alloc(site_sd, spend)
            with np.errstate(invalid="ignore", divide="ignore"):
                shrink = alloc / (alloc + agg.counts)
            gain_re = float(np.nansum(site_sd**2 * shrink))
            if gain_new >= gain_re:
                x_new = cands[j_new]
                y_new = simulate_pathwise_responses(
                    model, x_new[None, :], k, fits, spend,
                    stream.child("resp", k, rounds), w=w,
                )
                agg.add_site(x_new, y_new[0])
            else:
                hit = np.flatnonzero(alloc)
                flat = _simulate_responses_flat(
                    model, agg.sites[hit], alloc[hit], k, fits,
                    stream.child("resp", k, rounds), w=w,
                )
                offsets = np.concatenate([[0], np.cumsum(alloc[hit])])
                for pos, i in enumerate(hit):
                    agg.add_reps(i, flat[offsets[pos]:offsets[pos + 1]])
            remaining -= spend
            fit, hyper_state = _seq_gp_fit(
                method, model, agg, k, stream, family, hyper_state,
                rounds % update_freq == 0, opts,
            )
        fits[k] = fit
        secs[k] = time.perf_counter() - t0
        n_k[k] = agg.n_unique
        budget[k] = int(agg.counts.sum())
        rep_tables[k] = agg.counts.copy()
    diag = {
        "solver": "seq_batch",
        "heuristic": "adsa",
        "method": method,
        "n_k": n_k,
        "fit_seconds": secs,
        "budget": budget,
        "rep_counts": rep_tables,
        "in_sample_price": None,
        "seed": stream.seed,
    }
    return PolicyFit(model=model, fits=fits, diagnostics=diag)


def _proportional_alloc(weights, total):
    """Integer apportionment of ``total`` proportional to ``weights``."""
    w = np.maximum(np.asarray(weights, dtype=float), 0.0)
    if w.sum() <= 0:
        w = np.ones_like(w)
    raw = total * w / w.sum()
    alloc = np.floor(raw).astype(int)
    short = total - alloc.sum()
    if short > 0:
        order = np.argsort(-(raw - alloc))
        alloc[order[:short]] += 1
    return alloc
