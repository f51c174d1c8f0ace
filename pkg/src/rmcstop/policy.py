"""Out-of-sample policy evaluation on fresh test paths.

The fitted rule is: at each step k >= 1, exercise when the state is
in-the-money and the fitted timing value is strictly negative (ties
continue); paths that never exercise collect the terminal reward.  Averaging
the realized rewards over a fresh test set gives an unbiased estimate of the
policy value and hence a lower bound on the true price.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ModelSpec, PathSet, discounted_reward
from .solvers import PolicyFit

__all__ = ["EvalResult", "forward_eval", "european_value", "cv_adjust"]


@dataclass
class EvalResult:
    """Price estimate with sampling error; optionally per-path detail."""

    price: float
    std_error: float
    ci95: tuple
    n_paths: int
    european_estimate: float | None = None
    stop_steps: np.ndarray | None = None
    payoffs: np.ndarray | None = None
    immediate_exercise: bool = False

    def summary(self) -> dict:
        return {
            "price": self.price,
            "std_error": self.std_error,
            "ci95_lo": self.ci95[0],
            "ci95_hi": self.ci95[1],
            "n_paths": self.n_paths,
            "european_estimate": self.european_estimate,
            "immediate_exercise": self.immediate_exercise,
        }


def _states(test) -> np.ndarray:
    return test.states if isinstance(test, PathSet) else np.asarray(test, float)


def forward_eval(test, fits: PolicyFit, model: ModelSpec,
                 european: bool = False, keep_paths: bool = False) -> EvalResult:
    """Evaluate a fitted exercise rule on fresh test trajectories.

    Per path, tau is the first step k >= 1 that is in-the-money with
    That(k, .) < 0, else K, and the reward is the discounted payoff at tau.
    If immediate exercise at time 0 beats the continuation estimate the
    result is flagged and collapses to the deterministic h(0, x0).
    """
    states = _states(test)
    k_steps = model.n_steps
    if states.shape[0] < k_steps + 1:
        raise ValueError(
            f"test paths cover {states.shape[0] - 1} steps, model needs {k_steps}"
        )
    if states.shape[2] != model.dim:
        raise ValueError("test path dimension does not match the model")
    n = states.shape[1]
    tau = np.full(n, k_steps)
    rewards = discounted_reward(k_steps, states[k_steps], model)
    live = np.ones(n, dtype=bool)
    for k in range(1, k_steps):
        fit = fits.fits[k]
        if fit is None:
            raise ValueError(f"missing emulator for step {k}")
        h_k = discounted_reward(k, states[k], model)
        cand = live & (h_k > 0)
        if not cand.any():
            continue
        idx = np.flatnonzero(cand)
        stop = fit.predict(states[k][idx]) < 0
        rows = idx[stop]
        tau[rows] = k
        rewards[rows] = h_k[rows]
        live[rows] = False

    price = float(rewards.mean())
    sd = float(rewards.std(ddof=1)) if n > 1 else 0.0
    se = sd / np.sqrt(n)
    immediate = False
    h0 = float(discounted_reward(0, model.x0[None, :], model)[0])
    if h0 >= price and h0 > 0:
        # degenerate time-0 rule: stopping now beats the continuation estimate
        immediate = True
        rewards = np.full(n, h0)
        tau = np.zeros(n, dtype=int)
        price, se = h0, 0.0
    ci = (price - 1.96 * se, price + 1.96 * se)
    eu = european_value(states, model) if european else None
    return EvalResult(
        price=price,
        std_error=se,
        ci95=ci,
        n_paths=n,
        european_estimate=eu,
        stop_steps=tau if keep_paths else None,
        payoffs=rewards if keep_paths else None,
        immediate_exercise=immediate,
    )


def european_value(test, model: ModelSpec) -> float:
    """Discounted mean terminal payoff on the test set.

    The same paths price the European contract, so this serves as a control
    variate for the Bermudan estimate.
    """
    states = _states(test)
    k_steps = model.n_steps
    return float(discounted_reward(k_steps, states[k_steps], model).mean())


def cv_adjust(result: EvalResult, true_european: float) -> float:
    """Control-variate price: subtract the European estimation error."""
    if result.european_estimate is None:
        raise ValueError("EvalResult carries no european_estimate")
    return result.price - (result.european_estimate - true_european)
