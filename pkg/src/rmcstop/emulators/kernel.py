"""Nadaraya-Watson kernel regression with cross-validated bandwidth.

Local-constant estimate ghat(x) = sum K_h(x - x_n) y_n / sum K_h(x - x_n)
with a Gaussian or Epanechnikov product kernel.  The bandwidth is a single
multiplier of per-coordinate scales; "cv" picks it by leave-one-out squared
error over a log-spaced grid around the Silverman rule of thumb.
"""

from __future__ import annotations

import warnings

import numpy as np

from .base import EmulatorFit, STATE_VERSION, register_kind

__all__ = ["fit_kernel", "KernelFit", "silverman_bandwidth", "loo_cv_bandwidth"]

CV_GRID_SIZE = 25
CV_GRID_SPAN = (0.1, 10.0)


def _kernel_weights(u2: np.ndarray, kernel: str) -> np.ndarray:
    """Unnormalized product-kernel weight from squared scaled distances."""
    if kernel == "gaussian":
        return np.exp(-0.5 * u2)
    if kernel == "epanechnikov":
        return np.maximum(1.0 - u2, 0.0)
    raise ValueError(f"unknown kernel {kernel!r}")


def _scaled_sq_dists(xq, xt, scale, h):
    # (nq, nt, d) squared scaled differences, summed for gaussian but kept
    # per-coordinate for the product epanechnikov
    diff = (xq[:, None, :] - xt[None, :, :]) / (h * scale)[None, None, :]
    return diff**2


def silverman_bandwidth(n: int, d: int) -> float:
    """Rule-of-thumb multiplier for coordinates standardized to unit scale."""
    return (4.0 / (d + 2.0)) ** (1.0 / (d + 4.0)) * n ** (-1.0 / (d + 4.0))


@register_kind
class KernelFit(EmulatorFit):
    kind = "kernel"

    def __init__(self, x, y, kernel, h, scale, step=None):
        self.x = np.atleast_2d(np.asarray(x, dtype=float))
        self.y = np.asarray(y, dtype=float)
        self.kernel = kernel
        self.h = float(h)
        self.scale = np.asarray(scale, dtype=float)
        self.step = step
        self.fallback_count = 0

    @property
    def dim(self):
        return self.x.shape[1]

    def predict(self, xq):
        xq = self._check_query(xq, self.dim)
        out = np.empty(xq.shape[0])
        # block the query to bound the (nq, nt, d) intermediate
        block = max(1, int(2e6 / max(1, self.x.shape[0] * self.dim)))
        for start in range(0, xq.shape[0], block):
            sl = slice(start, start + block)
            u2 = _scaled_sq_dists(xq[sl], self.x, self.scale, self.h)
            if self.kernel == "gaussian":
                w = _kernel_weights(u2.sum(axis=2), "gaussian")
            else:
                w = _kernel_weights(u2, "epanechnikov").prod(axis=2)
            tot = w.sum(axis=1)
            dead = tot <= 0
            if dead.any():
                # query beyond the kernel support: nearest-neighbor fallback
                self.fallback_count += int(dead.sum())
                warnings.warn(
                    "kernel regression query outside training support; "
                    "falling back to nearest neighbor",
                    RuntimeWarning,
                    stacklevel=2,
                )
                nn = u2[dead].sum(axis=2).argmin(axis=1)
                w[dead] = 0.0
                w[dead, nn] = 1.0
                tot = w.sum(axis=1)
            out[sl] = (w @ self.y) / tot
        return out

    def to_state(self):
        return {
            "kind": self.kind,
            "version": STATE_VERSION,
            "x": self.x,
            "y": self.y,
            "kernel": self.kernel,
            "h": self.h,
            "scale": self.scale,
            "step": self.step,
        }

    @classmethod
    def from_state(cls, state):
        return cls(
            state["x"], state["y"], state["kernel"], state["h"], state["scale"],
            state.get("step"),
        )


def _loo_mse(x, y, scale, kernel, h):
    u2 = _scaled_sq_dists(x, x, scale, h)
    if kernel == "gaussian":
        w = _kernel_weights(u2.sum(axis=2), "gaussian")
    else:
        w = _kernel_weights(u2, "epanechnikov").prod(axis=2)
    np.fill_diagonal(w, 0.0)
    tot = w.sum(axis=1)
    ok = tot > 0
    if not ok.any():
        return np.inf
    pred = (w[ok] @ y) / tot[ok]
    return float(np.mean((pred - y[ok]) ** 2))


def loo_cv_bandwidth(x, y, scale, kernel):
    """Leave-one-out bandwidth over a log-spaced grid around Silverman."""
    n, d = x.shape
    h_rot = silverman_bandwidth(n, d)
    grid = h_rot * np.logspace(
        np.log10(CV_GRID_SPAN[0]), np.log10(CV_GRID_SPAN[1]), CV_GRID_SIZE
    )
    scores = [_loo_mse(x, y, scale, kernel, h) for h in grid]
    return float(grid[int(np.argmin(scores))])


def fit_kernel(
    x: np.ndarray,
    y: np.ndarray,
    kernel: str = "gaussian",
    bandwidth="cv",
    step=None,
) -> KernelFit:
    """Fit a local-constant kernel regression.

    ``bandwidth`` is either a fixed multiplier of the per-coordinate scales
    or "cv" for leave-one-out selection (requires N >= 20).
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float)
    if kernel not in ("gaussian", "epanechnikov"):
        raise ValueError(f"unknown kernel {kernel!r}")
    scale = x.std(axis=0, ddof=1) if x.shape[0] > 1 else np.ones(x.shape[1])
    scale = np.where(scale > 0, scale, 1.0)
    if bandwidth == "cv":
        if x.shape[0] < 20:
            raise ValueError("cross-validated bandwidth needs N >= 20")
        h = loo_cv_bandwidth(x, y, scale, kernel)
    else:
        h = float(bandwidth)
        if h <= 0:
            raise ValueError("bandwidth must be positive")
    return KernelFit(x, y, kernel, h, scale, step=step)
