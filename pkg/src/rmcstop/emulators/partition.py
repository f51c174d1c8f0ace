"""Piecewise-linear emulator on an equi-probable recursive partition.

The state space is split coordinate by coordinate into equal-count bins
(sort on coordinate 1, split, recurse on coordinate 2 within each bin, ...),
and a degree-1 least-squares plane is fitted inside each terminal cell.
Queries are routed through the stored split thresholds; points outside all
thresholds are clamped to the nearest boundary cell.
"""

from __future__ import annotations

import numpy as np

from .base import EmulatorFit, STATE_VERSION, register_kind

__all__ = ["fit_piecewise_bw", "PiecewiseBWFit"]


@register_kind
class PiecewiseBWFit(EmulatorFit):
    kind = "piecewise_bw"

    def __init__(self, thresholds, coefs, n_bins, dim, step=None, cell_counts=None):
        # thresholds[j] has shape (n_bins^j, n_bins - 1): split values used
        # when descending level j, one row per cell reached so far.
        self.thresholds = [np.asarray(t, dtype=float) for t in thresholds]
        self.coefs = np.asarray(coefs, dtype=float)  # (n_bins^d, d + 1)
        self.n_bins = int(n_bins)
        self.dim = int(dim)
        self.step = step
        self.cell_counts = (
            None if cell_counts is None else np.asarray(cell_counts, dtype=int)
        )

    def cell_index(self, x: np.ndarray) -> np.ndarray:
        x = self._check_query(x, self.dim)
        cell = np.zeros(x.shape[0], dtype=int)
        for j in range(self.dim):
            thr = self.thresholds[j][cell]  # (n, n_bins - 1)
            idx = (x[:, j : j + 1] > thr).sum(axis=1)
            cell = cell * self.n_bins + idx
        return cell

    def predict(self, x):
        x = self._check_query(x, self.dim)
        cell = self.cell_index(x)
        beta = self.coefs[cell]  # (n, d + 1)
        return beta[:, 0] + np.einsum("ij,ij->i", beta[:, 1:], x)

    def to_state(self):
        return {
            "kind": self.kind,
            "version": STATE_VERSION,
            "thresholds": [t for t in self.thresholds],
            "coefs": self.coefs,
            "n_bins": self.n_bins,
            "dim": self.dim,
            "step": self.step,
            "cell_counts": self.cell_counts,
        }

    @classmethod
    def from_state(cls, state):
        return cls(
            state["thresholds"],
            state["coefs"],
            state["n_bins"],
            state["dim"],
            state.get("step"),
            state.get("cell_counts"),
        )


def fit_piecewise_bw(
    x: np.ndarray, y: np.ndarray, n_bins: int, step=None
) -> PiecewiseBWFit:
    """Equi-probable recursive partition with a linear fit per cell.

    Needs at least n_bins^d * (d + 2) observations so every terminal cell
    can support an intercept plus d slopes.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float)
    n, d = x.shape
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    if n < n_bins**d * (d + 2):
        raise ValueError(
            f"insufficient points: need >= n_bins^d*(d+2) = {n_bins ** d * (d + 2)}, "
            f"got {n}"
        )

    thresholds = []
    groups = [np.arange(n)]
    for j in range(d):
        thr_level = np.empty((len(groups), max(n_bins - 1, 0)))
        new_groups = []
        for g_idx, rows in enumerate(groups):
            order = rows[np.argsort(x[rows, j], kind="stable")]
            pieces = np.array_split(order, n_bins)
            for b in range(n_bins - 1):
                left = x[pieces[b][-1], j]
                right = x[pieces[b + 1][0], j]
                thr_level[g_idx, b] = 0.5 * (left + right)
            new_groups.extend(pieces)
        thresholds.append(thr_level)
        groups = new_groups

    n_cells = n_bins**d
    coefs = np.zeros((n_cells, d + 1))
    counts = np.zeros(n_cells, dtype=int)
    for c, rows in enumerate(groups):
        counts[c] = len(rows)
        if len(rows) < d + 2:
            raise ValueError(
                f"insufficient points per cell: cell {c} has {len(rows)} rows"
            )
        f = np.column_stack([np.ones(len(rows)), x[rows]])
        beta, *_ = np.linalg.lstsq(f, y[rows], rcond=None)
        coefs[c] = beta
    return PiecewiseBWFit(thresholds, coefs, n_bins, d, step=step, cell_counts=counts)
