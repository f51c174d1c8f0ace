"""Swing options: multiple stopping with a refraction period.

A swing contract with I rights is valued by stacking timing-value emulators
That^(i)(k, .) over the number of remaining rights i.  The dynamic program
couples layers: the value of exercising one of i rights at step k is the
immediate reward plus the (i-1)-rights value after the refraction period,
so layer i at step k only needs layer i-1 at step k + k_delta, and the
whole stack is fitted inside one backward pass over k.
"""

from __future__ import annotations

import pickle
import time
from dataclasses import dataclass, field

import numpy as np

from . import emulators as em
from .model import ModelSpec, PathSet, discounted_reward, sim_step
from .policy import EvalResult
from .sampling import RandomStream
from .solvers import (
    POLICY_FORMAT_VERSION,
    PolicyFit,
    _make_fitter,
    _model_from_state,
    _model_state,
    _n_schedule,
    _rebind_payoff_feature,
    _resolve_design,
)
from .designs import batch_stats, pilot_boxes
from .model import simulate_paths

__all__ = ["SwingSpec", "SwingPolicyFit", "solve_swing_fixed", "swing_eval"]

_GRID_TOL = 1e-9


@dataclass
class SwingSpec:
    """A base model plus the swing contract terms: rights and refraction.

    ``terminal`` picks the settlement convention at expiry: "all" lets every
    remaining (unlocked) right collect the terminal payoff, which reproduces
    the classical multi-right benchmark values; "single" pays at most one
    terminal reward, the literal reading of the stacked objective.
    """

    model: ModelSpec
    n_swing: int
    refract: float
    terminal: str = "all"

    def __post_init__(self):
        if self.n_swing < 1:
            raise ValueError("n_swing must be >= 1")
        if self.terminal not in ("all", "single"):
            raise ValueError("terminal must be 'all' or 'single'")
        ratio = self.refract / self.model.dt
        if abs(ratio - round(ratio)) > _GRID_TOL * max(1.0, abs(ratio)):
            raise ValueError(
                f"refraction {self.refract} must be a multiple of dt={self.model.dt}"
            )
        if round(ratio) < 1:
            raise ValueError("refraction must be at least one time step")

    @property
    def k_delta(self) -> int:
        return int(round(self.refract / self.model.dt))


@dataclass
class SwingPolicyFit:
    """Emulators indexed by (remaining rights i = 1..I, step k)."""

    spec: SwingSpec
    fits: list  # fits[i-1][k]
    diagnostics: dict = field(default_factory=dict)

    def layer_policy(self, i: int = 1) -> PolicyFit:
        """Layer i as a plain single-stopping policy (layer 1 is exactly one)."""
        if not 1 <= i <= len(self.fits):
            raise ValueError(f"no layer {i}; fitted layers: 1..{len(self.fits)}")
        return PolicyFit(
            model=self.spec.model,
            fits=self.fits[i - 1],
            diagnostics={"solver": "swing_layer", "layer": i},
        )

    def to_state(self) -> dict:
        diag = {k: v for k, v in self.diagnostics.items()
                if k not in ("fit_seconds",)}
        return {
            "format": "rmcstop-swing-policy",
            "version": POLICY_FORMAT_VERSION,
            "model": _model_state(self.spec.model),
            "n_swing": self.spec.n_swing,
            "refract": self.spec.refract,
            "terminal": self.spec.terminal,
            "fits": [
                [None if f is None else em.serialize_fit(f) for f in layer]
                for layer in self.fits
            ],
            "diagnostics": diag,
        }

    @classmethod
    def from_state(cls, state: dict) -> "SwingPolicyFit":
        if state.get("format") != "rmcstop-swing-policy":
            raise ValueError("not a swing policy file")
        if state.get("version") != POLICY_FORMAT_VERSION:
            raise ValueError(
                f"swing policy version {state.get('version')} not supported"
            )
        model = _model_from_state(state["model"])
        spec = SwingSpec(model, state["n_swing"], state["refract"],
                         state.get("terminal", "all"))
        fits = [
            [None if s is None else em.deserialize_fit(s) for s in layer]
            for layer in state["fits"]
        ]
        for layer in fits:
            for f in layer:
                _rebind_payoff_feature(f, model)
        return cls(spec=spec, fits=fits, diagnostics=state["diagnostics"])

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(pickle.dumps(self.to_state(), protocol=4))

    @classmethod
    def load(cls, path) -> "SwingPolicyFit":
        with open(path, "rb") as fh:
            return cls.from_state(pickle.loads(fh.read()))


def _walk_payoff(traj, base_step, start_k, rights, fits, spec):
    """Total discounted payoff of the fitted multi-exercise rule.

    ``traj[j]`` holds X(base_step + j); the walk starts at ``start_k`` (>=
    base_step) with ``rights`` remaining and no active lockout, exercises
    whenever the state is in-the-money with That^(remaining) < 0, waits out
    k_delta steps after each exercise, and collects one terminal payoff at K
    if a right is left.
    """
    model = spec.model
    k_steps = model.n_steps
    n = traj.shape[1]
    total = np.zeros(n)
    if start_k > k_steps or rights < 1:
        return total
    rem = np.full(n, rights)
    allowed = np.full(n, start_k)  # first step at which exercise is allowed
    for s in range(start_k, k_steps):
        h_s = discounted_reward(s, traj[s - base_step], model)
        cand = (rem > 0) & (allowed <= s) & (h_s > 0)
        if not cand.any():
            continue
        for i in np.unique(rem[cand]):
            fit = fits[i - 1][s]
            if fit is None:
                raise ValueError(f"missing swing emulator (rights={i}, step={s})")
            rows = np.flatnonzero(cand & (rem == i))
            stop = fit.predict(traj[s - base_step][rows]) < 0
            hit = rows[stop]
            total[hit] += h_s[hit]
            rem[hit] -= 1
            allowed[hit] = s + spec.k_delta
    h_term = discounted_reward(k_steps, traj[k_steps - base_step], model)
    final = (rem > 0) & (allowed <= k_steps)
    if spec.terminal == "all":
        total[final] += h_term[final] * rem[final]
    else:
        total[final] += h_term[final]
    return total


def solve_swing_fixed(spec: SwingSpec, method="kernel", stream=None,
                      sites=None, box=None, pilot_quantile=0.02, qmc="sobol",
                      n=None, nrep=10, pilot_nsims=1000, constraints=None,
                      itm_filter=True, bases=None, **opts):
    """Fit the stacked swing policy on fixed per-step designs.

    At each step k and each rights layer i, every design site spawns fresh
    trajectories; a single trajectory is reused for both branches of the
    response (common random numbers): continue = follow the i-rights policy
    from k+1, exercise = immediate reward plus the (i-1)-rights policy from
    k + k_delta.  The regression target is their difference, the timing
    value of holding on to all i rights.
    """
    stream = stream if stream is not None else RandomStream(0)
    model = spec.model
    k_steps = model.n_steps
    n_rights = spec.n_swing
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
            pilot_paths = simulate_paths(
                model, max(pilot_nsims, int(n_sched.max())),
                stream.child("pilot-paths"),
            )

    fits = [[None] * k_steps for _ in range(n_rights)]
    n_k, secs = {}, {}
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
        x = design.sites
        n_rep_rows = design.n_unique * nrep
        h_here = np.repeat(discounted_reward(k, x, model), nrep)
        # one trajectory bundle per step, shared by every rights layer and
        # both response branches
        traj = np.empty((k_steps - k + 1, n_rep_rows, model.dim))
        traj[0] = np.repeat(x, nrep, axis=0)
        rs = stream.child("swing-traj", k)
        for s in range(k + 1, k_steps + 1):
            traj[s - k] = sim_step(traj[s - k - 1], model, model.dt,
                                   rs.child(s))
        t0 = time.perf_counter()
        for i in range(1, n_rights + 1):
            cont = _walk_payoff(traj, k, k + 1, i, fits, spec)
            ex = h_here.copy()
            if i > 1:
                ex += _walk_payoff(traj, k, k + spec.k_delta, i - 1, fits, spec)
            y = (cont - ex).reshape(design.n_unique, nrep)
            stats = batch_stats(y)
            noise = None
            if method in ("km", "trainkm") and nrep >= 2:
                noise = stats.noise_variances()
            fits[i - 1][k] = fitter(x, stats.ybar, noise_var=noise, step=k)
        secs[k] = time.perf_counter() - t0
        n_k[k] = design.n_unique
    diag = {
        "solver": "swing_fixed",
        "method": method,
        "n_k": n_k,
        "fit_seconds": secs,
        "n_swing": n_rights,
        "k_delta": spec.k_delta,
        "seed": stream.seed,
    }
    return SwingPolicyFit(spec=spec, fits=fits, diagnostics=diag)


def swing_eval(test, fits: SwingPolicyFit, n_rights: int,
               spec: SwingSpec | None = None, keep_paths: bool = False
               ) -> EvalResult:
    """Forward-evaluate the swing policy with ``n_rights`` starting rights.

    Walks each test path with a rights counter and refraction lockout,
    accumulating discounted rewards; at maturity one payoff is collected if
    any right remains.
    """
    spec = spec if spec is not None else fits.spec
    if not 1 <= n_rights <= len(fits.fits):
        raise ValueError(
            f"n_rights={n_rights} exceeds fitted layers 1..{len(fits.fits)}"
        )
    states = test.states if isinstance(test, PathSet) else np.asarray(test, float)
    model = spec.model
    k_steps = model.n_steps
    if states.shape[0] < k_steps + 1:
        raise ValueError("test paths shorter than the model horizon")
    totals = _walk_payoff(states, 0, 1, n_rights, fits.fits, spec)
    n = len(totals)
    price = float(totals.mean())
    se = float(totals.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return EvalResult(
        price=price,
        std_error=se,
        ci95=(price - 1.96 * se, price + 1.96 * se),
        n_paths=n,
        payoffs=totals if keep_paths else None,
    )
