"""Regression emulators sharing the fit/predict contract for timing values."""

from __future__ import annotations

import numpy as np

from .base import ConstantFit, EmulatorFit, deserialize_fit, serialize_fit
from .gp import GP_SITE_CAP, GPFit, GPHyper, fit_gp, kernel_matrix
from .kernel import KernelFit, fit_kernel
from .linear import (
    BasisSet,
    LinearFit,
    fit_lm,
    monomial_bases,
    monomial_exponents,
    polynomial_bases,
)
from .partition import PiecewiseBWFit, fit_piecewise_bw

__all__ = [
    "EmulatorFit",
    "ConstantFit",
    "BasisSet",
    "LinearFit",
    "PiecewiseBWFit",
    "KernelFit",
    "GPFit",
    "GPHyper",
    "fit_lm",
    "fit_piecewise_bw",
    "fit_kernel",
    "fit_gp",
    "polynomial_bases",
    "monomial_bases",
    "monomial_exponents",
    "kernel_matrix",
    "predict",
    "serialize_fit",
    "deserialize_fit",
    "GP_SITE_CAP",
]

DEGENERATE_TOL = 1e-12


def degenerate_fit(x, y, step=None) -> ConstantFit | None:
    """Constant fit when all responses coincide, else None."""
    y = np.asarray(y, dtype=float)
    if len(y) == 0:
        raise ValueError("cannot fit an emulator on zero responses")
    if np.ptp(y) <= DEGENERATE_TOL * max(1.0, abs(float(y[0]))):
        x = np.atleast_2d(np.asarray(x))
        return ConstantFit(float(y[0]), x.shape[1], step=step)
    return None


def predict(fit: EmulatorFit, x_query: np.ndarray):
    """Vectorized predictions: (mean, sd) with sd only for GP fits."""
    mean = fit.predict(x_query)
    sd = fit.predict_sd(x_query) if hasattr(fit, "predict_sd") else None
    return mean, sd
