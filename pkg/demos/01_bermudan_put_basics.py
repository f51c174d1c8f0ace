"""Walkthrough: price a 1D Bermudan put three ways.

The contract: strike-40 put on a single GBM asset, exercisable 25 times over
one year.  We fit a stopping rule with (a) Longstaff-Schwartz regression on
re-used global paths, (b) a Gaussian-process emulator on a fixed replicated
lattice, then evaluate both on a shared out-of-sample test set and use the
European price on the same paths as a control variate.
"""

import numpy as np

from rmcstop import (
    ModelSpec,
    RandomStream,
    cv_adjust,
    european_value,
    forward_eval,
    make_path_set,
    solve_fixed,
    solve_ls,
)

model = ModelSpec(
    dim=1, T=1.0, dt=0.04, r=0.06, strike=40.0, x0=[40.0], sigma=0.2,
    payoff="put", dynamics="gbm",
)
print(f"Bermudan put: K={model.strike}, x0={model.x0[0]}, "
      f"{model.n_steps} exercise dates")

# --- solver 1: Longstaff-Schwartz with a cubic polynomial ------------------
ls_policy = solve_ls(model, 40_000, "lm", RandomStream(1), degree=3)
print(f"\nLS cubic in-sample price (training paths, biased high): "
      f"{ls_policy.diagnostics['in_sample_price']:.4f}")

# --- solver 2: GP on a fixed lattice of 25 replicated sites ----------------
lattice = np.linspace(16, 40, 25)[:, None]
gp_policy = solve_fixed(
    model, "km", RandomStream(2), sites=lattice, nrep=200,
    km_cov=4.0, km_var=1.0, kernel_family="matern52",
)
print(f"GP lattice design: 25 sites x 200 replicates per exercise date")

# --- shared out-of-sample evaluation ---------------------------------------
test = make_path_set(model, 100_000, RandomStream(777))
r_ls = forward_eval(test, ls_policy, model, european=True)
r_gp = forward_eval(test, gp_policy, model)
print(f"\nout-of-sample prices on {test.n_paths} fresh paths:")
print(f"  LS cubic : {r_ls.price:.4f} +- {r_ls.std_error:.4f}")
print(f"  GP km    : {r_gp.price:.4f} +- {r_gp.std_error:.4f}")

# --- control variate against the known European value ----------------------
from scipy.stats import norm

d1 = (np.log(40 / 40) + (0.06 + 0.02)) / 0.2
d2 = d1 - 0.2
bs_put = 40 * np.exp(-0.06) * norm.cdf(-d2) - 40 * norm.cdf(-d1)
print(f"\nEuropean put: Black-Scholes {bs_put:.4f}, "
      f"test-set estimate {european_value(test, model):.4f}")
print(f"CV-adjusted LS price: {cv_adjust(r_ls, bs_put):.4f}")

# --- where does the fitted rule stop? --------------------------------------
r_detail = forward_eval(test, ls_policy, model, keep_paths=True)
stopped = r_detail.stop_steps < model.n_steps
print(f"\n{stopped.mean():.1%} of paths exercise before maturity; "
      f"mean exercise step {r_detail.stop_steps[stopped].mean():.1f}")
