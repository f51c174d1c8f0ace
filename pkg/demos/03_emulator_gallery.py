"""One regression problem, four emulators.

We freeze a single learning task from the middle of a Bermudan put solve
(timing values at step 10 of the 1D model) and fit the linear model, the
equi-probable piecewise-linear partition, Nadaraya-Watson kernel regression,
and a stochastic-kriging GP on the same data, then compare their predictions
and exercise thresholds.
"""

import numpy as np

from rmcstop import (
    ModelSpec,
    RandomStream,
    batch_stats,
    fit_gp,
    fit_kernel,
    fit_lm,
    fit_piecewise_bw,
    polynomial_bases,
    solve_ls,
)
from rmcstop.solvers import simulate_pathwise_responses

model = ModelSpec(
    dim=1, T=1.0, dt=0.04, r=0.06, strike=40.0, x0=[40.0], sigma=0.2,
    payoff="put", dynamics="gbm",
)
stream = RandomStream(7)

# a reference policy supplies the future stopping rule; then we generate
# fresh replicated responses at a fixed design for step k = 10
ref = solve_ls(model, 20_000, "lm", stream.child("ref"), degree=3)
k = 10
sites = np.linspace(20, 40, 41)[:, None]
raw = simulate_pathwise_responses(model, sites, k, ref.fits, 100,
                                  stream.child("resp"))
stats = batch_stats(raw)
print(f"training data: {len(sites)} sites x 100 replicates at step {k}")
print(f"batch means range [{stats.ybar.min():.3f}, {stats.ybar.max():.3f}], "
      f"per-site noise sd up to {np.sqrt(stats.svar.max()):.3f}")

fits = {
    "lm (cubic)": fit_lm(polynomial_bases(3, 1), sites, stats.ybar),
    "piecewise bw": fit_piecewise_bw(
        np.repeat(sites, 100, axis=0), raw.ravel(), 5
    ),
    "kernel (cv)": fit_kernel(sites, stats.ybar, bandwidth="cv"),
    "gp sk": fit_gp(sites, stats.ybar, noise_var=stats.noise_variances(),
                    hyper="mle", kernel="matern52",
                    stream=stream.child("mle")),
}

query = np.linspace(22, 40, 10)[:, None]
print(f"\npredicted timing values (negative = exercise) at x = "
      f"{query.ravel().round(0)}")
for name, fit in fits.items():
    pred = fit.predict(query)
    # the exercise threshold is where the timing value changes sign
    grid = np.linspace(20, 40, 2001)[:, None]
    sign = fit.predict(grid) < 0
    boundary = grid[sign.argmin() if sign[0] else sign.argmax(), 0] \
        if sign.any() else np.nan
    print(f"  {name:13s}: {np.array2string(pred, precision=2)}  "
          f"boundary ~ {boundary:.1f}")

gp = fits["gp sk"]
mean, sd = gp.predict_with_sd(query)
print("\nGP pointwise uncertainty (mean +- sd):")
for x, m, s in zip(query.ravel(), mean, sd):
    print(f"  x={x:5.1f}: {m:7.3f} +- {s:.3f}")
