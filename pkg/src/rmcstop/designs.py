"""Per-step training designs: path-based, lattice, space-filling, replicated.

A :class:`Design` is the set of unique training inputs for one time step
together with replication counts.  Space-filling variants scale QMC or LHS
points into a bounding box (fixed, or pilot-adaptive via coordinate-wise
quantiles of forward simulations) and optionally keep only in-the-money
sites.  :func:`batch_stats` pre-averages replicated simulator outputs and
estimates per-site noise, which is what stochastic kriging consumes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ModelSpec, PathSet, payoff, simulate_paths
from .sampling import RandomStream, halton, lhs, sobol

__all__ = [
    "Design",
    "BatchedResponse",
    "pilot_bounding_box",
    "spacefill_design",
    "path_design",
    "batch_stats",
]


@dataclass
class Design:
    """Unique training sites for step ``step`` with replication counts."""

    sites: np.ndarray  # (n_unique, d)
    rep_counts: np.ndarray  # (n_unique,) ints >= 1
    step: int
    source_rows: np.ndarray | None = None  # rows into the origin PathSet, if any

    def __post_init__(self):
        self.sites = np.atleast_2d(np.asarray(self.sites, dtype=float))
        self.rep_counts = np.asarray(self.rep_counts, dtype=int)
        if self.rep_counts.shape != (self.sites.shape[0],):
            raise ValueError("rep_counts must have one entry per site")
        if np.any(self.rep_counts < 1):
            raise ValueError("rep_counts must be >= 1")

    @property
    def n_unique(self) -> int:
        return self.sites.shape[0]

    @property
    def budget(self) -> int:
        """Total simulation budget |D| = sum of replication counts."""
        return int(self.rep_counts.sum())

    def to_csv(self, path) -> None:
        """Export site coordinates + rep count + step for inspection."""
        d = self.sites.shape[1]
        header = ",".join([f"x{i+1}" for i in range(d)] + ["rep_count", "step"])
        body = np.column_stack(
            [self.sites, self.rep_counts, np.full(self.n_unique, self.step)]
        )
        np.savetxt(path, body, delimiter=",", header=header, comments="")


@dataclass
class BatchedResponse:
    """Batch means and (unbiased) per-site variances of replicated outputs.

    ``svar`` is NaN wherever the count is 1: the variance is flagged
    unavailable rather than invented.
    """

    ybar: np.ndarray
    svar: np.ndarray
    counts: np.ndarray

    def noise_variances(self) -> np.ndarray:
        """Per-site variance of the batch mean, sigma^2(x)/r, for SK."""
        if np.any(self.counts < 2):
            raise ValueError(
                "variance requested with count 1: stochastic kriging needs "
                "rep_counts >= 2 at every site"
            )
        return self.svar / self.counts


def pilot_bounding_box(
    model: ModelSpec,
    n_pilot: int,
    k: int,
    quantile_p: float,
    stream: RandomStream,
) -> np.ndarray:
    """Coordinate-wise quantile box [q_p, q_{1-p}] of pilot paths at step k.

    ``quantile_p == -1`` requests the full range [min, max].  Returns a
    (d, 2) array of per-coordinate lower/upper bounds.
    """
    if n_pilot < 10:
        raise ValueError("n_pilot must be >= 10")
    if quantile_p != -1 and not 0 <= quantile_p < 0.5:
        raise ValueError("quantile_p must be in [0, 0.5) or the sentinel -1")
    paths = simulate_paths(model, n_pilot, stream.child("pilot"), n_steps=k)
    x = paths[k]
    if quantile_p == -1:
        return np.column_stack([x.min(axis=0), x.max(axis=0)])
    lo = np.quantile(x, quantile_p, axis=0)
    hi = np.quantile(x, 1 - quantile_p, axis=0)
    return np.column_stack([lo, hi])


def pilot_boxes(
    model: ModelSpec,
    n_pilot: int,
    quantile_p: float,
    stream: RandomStream,
) -> list[np.ndarray]:
    """Quantile boxes for every step 0..K from a single pilot simulation."""
    if n_pilot < 10:
        raise ValueError("n_pilot must be >= 10")
    if quantile_p != -1 and not 0 <= quantile_p < 0.5:
        raise ValueError("quantile_p must be in [0, 0.5) or the sentinel -1")
    paths = simulate_paths(model, n_pilot, stream.child("pilot"))
    boxes = []
    for k in range(model.n_steps + 1):
        x = paths[k]
        if quantile_p == -1:
            boxes.append(np.column_stack([x.min(axis=0), x.max(axis=0)]))
        else:
            lo = np.quantile(x, quantile_p, axis=0)
            hi = np.quantile(x, 1 - quantile_p, axis=0)
            boxes.append(np.column_stack([lo, hi]))
    return boxes


def _lattice(box: np.ndarray, n_target: int) -> np.ndarray:
    """Tensor grid closest to n_target points: round(n^(1/d)) per axis."""
    d = box.shape[0]
    per_axis = max(2, int(round(n_target ** (1.0 / d))))
    axes = []
    for j in range(d):
        lo, hi = box[j]
        axes.append(np.linspace(lo, hi, per_axis) if hi > lo else np.array([lo]))
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([m.ravel() for m in mesh])


def spacefill_design(
    box: np.ndarray,
    n_target: int,
    method: str,
    model: ModelSpec,
    k: int,
    itm_filter: bool = True,
    stream: RandomStream | None = None,
    constraints: list[tuple[np.ndarray, float]] | None = None,
    nrep: int = 1,
) -> Design:
    """Space-fill ``box`` with ~n_target sites, then clip.

    method is one of sobol/halton/lhs/lattice; the lattice takes
    round(n_target^(1/d)) points per axis.  Linear constraints are rows
    (a, c) keeping a.x <= c (this covers triangular training regions).  With
    ``itm_filter`` sites with zero payoff are dropped, so the resulting size
    can be below n_target; no top-up resampling is performed.
    """
    box = np.atleast_2d(np.asarray(box, dtype=float))
    if box.shape[1] != 2 or box.shape[0] != model.dim:
        raise ValueError("box must be a (d, 2) array of [lo, hi] rows")
    d = model.dim
    if method == "lattice":
        sites = _lattice(box, n_target)
    else:
        if method == "sobol":
            unit = sobol(n_target, d)
        elif method == "halton":
            unit = halton(n_target, d)
        elif method == "lhs":
            if stream is None:
                raise ValueError("lhs space-filling needs a stream")
            unit = lhs(n_target, d, stream)
        else:
            raise ValueError(f"unknown space-filling method {method!r}")
        lo, hi = box[:, 0], box[:, 1]
        sites = lo + unit * (hi - lo)
    if constraints:
        keep = np.ones(len(sites), dtype=bool)
        for a, c in constraints:
            keep &= sites @ np.asarray(a, dtype=float) <= c + 1e-12
        sites = sites[keep]
    if itm_filter:
        sites = sites[payoff(sites, model) > 0]
    if len(sites) == 0:
        raise ValueError(
            f"empty design at step {k}: no sites survived the "
            f"{'in-the-money/' if itm_filter else ''}constraint filter"
        )
    return Design(
        sites=sites, rep_counts=np.full(len(sites), int(nrep)), step=k
    )


def path_design(
    model: ModelSpec,
    n: int,
    k: int,
    paths: PathSet | np.ndarray,
    itm_filter: bool = True,
) -> Design:
    """Use the step-k states of forward paths as the design (rep counts 1).

    The in-the-money filter drops zero-payoff rows for regression but the
    surviving row indices are kept for pathwise bookkeeping.
    """
    states = paths.states if isinstance(paths, PathSet) else np.asarray(paths)
    if k >= states.shape[0]:
        raise ValueError(f"step {k} beyond path horizon {states.shape[0] - 1}")
    if states.shape[1] < n:
        raise ValueError(f"need at least {n} paths, have {states.shape[1]}")
    x = states[k][:n]
    rows = np.arange(n)
    if itm_filter:
        keep = payoff(x, model) > 0
        x, rows = x[keep], rows[keep]
    if len(x) == 0:
        raise ValueError(f"empty design at step {k}: no in-the-money paths")
    return Design(
        sites=x,
        rep_counts=np.ones(len(x), dtype=int),
        step=k,
        source_rows=rows,
    )


def batch_stats(raw_outputs) -> BatchedResponse:
    """Per-site mean and unbiased sample variance of replicated outputs.

    ``raw_outputs`` is either an (n_sites, n_rep) matrix or a list of 1-D
    arrays of per-site outputs (ragged group sizes allowed).
    """
    if isinstance(raw_outputs, np.ndarray) and raw_outputs.ndim == 2:
        groups = list(raw_outputs)
    else:
        groups = [np.atleast_1d(np.asarray(g, dtype=float)) for g in raw_outputs]
    n = len(groups)
    ybar = np.empty(n)
    svar = np.empty(n)
    counts = np.empty(n, dtype=int)
    for i, g in enumerate(groups):
        counts[i] = len(g)
        ybar[i] = g.mean()
        svar[i] = g.var(ddof=1) if len(g) > 1 else np.nan
    return BatchedResponse(ybar=ybar, svar=svar, counts=counts)
