"""Linear-model emulator: OLS on user-specified basis functions.

Bases are arbitrary feature maps; helpers build total-degree polynomial
sets (optionally on coordinates sorted in decreasing order, the usual trick
for max-call payoffs) and can append the intrinsic payoff as an extra
regressor.  The constant term is always added by the fitter itself.
"""

from __future__ import annotations

from itertools import combinations_with_replacement

import numpy as np
import scipy.linalg

from .base import EmulatorFit, STATE_VERSION, register_kind

__all__ = ["BasisSet", "polynomial_bases", "monomial_bases", "fit_lm", "LinearFit"]


class BasisSet:
    """Feature map x -> (B_1(x), ..., B_{R-1}(x)).

    Parameters
    ----------
    exponents : list of (d,) integer tuples
        One monomial per feature; exponent (2, 1) means x1^2 * x2.
    sorted_coords : bool
        Sort each row in decreasing order before evaluating (order-statistic
        bases).
    payoff_fn : callable, optional
        Extra feature appended after the monomials, typically the intrinsic
        payoff x -> h(x).
    """

    def __init__(self, exponents, dim, sorted_coords=False, payoff_fn=None):
        self.exponents = [tuple(int(e) for e in exp) for exp in exponents]
        for exp in self.exponents:
            if len(exp) != dim:
                raise ValueError("every exponent tuple must have length dim")
        self.dim = int(dim)
        self.sorted_coords = bool(sorted_coords)
        self.payoff_fn = payoff_fn

    @property
    def arity(self) -> int:
        """Number of features R-1 (the constant term is implicit)."""
        return len(self.exponents) + (1 if self.payoff_fn is not None else 0)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.dim:
            raise ValueError(f"basis expects dim {self.dim}, got {x.shape[1]}")
        xs = -np.sort(-x, axis=1) if self.sorted_coords else x
        cols = []
        for exp in self.exponents:
            col = np.ones(xs.shape[0])
            for j, e in enumerate(exp):
                if e:
                    col = col * xs[:, j] ** e
            cols.append(col)
        if self.payoff_fn is not None:
            cols.append(np.asarray(self.payoff_fn(x), dtype=float))
        return np.column_stack(cols)


def monomial_exponents(degree: int, dim: int) -> list[tuple[int, ...]]:
    """All monomial exponents of total degree 1..degree (constant excluded)."""
    out = []
    for deg in range(1, degree + 1):
        for combo in combinations_with_replacement(range(dim), deg):
            exp = [0] * dim
            for j in combo:
                exp[j] += 1
            out.append(tuple(exp))
    return out


def polynomial_bases(
    degree: int,
    dim: int,
    include_payoff: bool = False,
    sorted_coords: bool = False,
    payoff_fn=None,
) -> BasisSet:
    """All monomials of total degree <= degree (degree 2 or 3).

    degree 2 in d=3 gives 9 features; degree 3 gives 19, plus one more when
    the payoff is appended (21 coefficients with the intercept).
    """
    if degree not in (2, 3):
        raise ValueError("polynomial_bases supports degree 2 or 3")
    if include_payoff and payoff_fn is None:
        raise ValueError("include_payoff requires a payoff_fn callable")
    return BasisSet(
        monomial_exponents(degree, dim),
        dim,
        sorted_coords=sorted_coords,
        payoff_fn=payoff_fn if include_payoff else None,
    )


def monomial_bases(exponents, dim, sorted_coords=False, payoff_fn=None) -> BasisSet:
    """Basis from an explicit monomial list, e.g. the sorted max-call set."""
    return BasisSet(exponents, dim, sorted_coords=sorted_coords, payoff_fn=payoff_fn)


@register_kind
class LinearFit(EmulatorFit):
    kind = "lm"

    def __init__(self, bases: BasisSet, coef: np.ndarray, step=None, n_train=0):
        self.bases = bases
        self.coef = np.asarray(coef, dtype=float)  # [intercept, beta_1, ...]
        self.step = step
        self.n_train = int(n_train)

    @property
    def dim(self):
        return self.bases.dim

    def predict(self, x):
        if self.bases.arity + 1 != len(self.coef):
            raise ValueError(
                "payoff feature not bound: load this fit through PolicyFit so "
                "the model payoff is re-attached"
            )
        x = self._check_query(x, self.dim)
        f = self.bases(x)
        return self.coef[0] + f @ self.coef[1:]

    def to_state(self):
        # the payoff feature is a model-bound callable: serialize it as a
        # flag and let the policy loader re-bind the model payoff
        return {
            "kind": self.kind,
            "version": STATE_VERSION,
            "coef": self.coef,
            "exponents": self.bases.exponents,
            "dim": self.bases.dim,
            "sorted_coords": self.bases.sorted_coords,
            "payoff_feature": self.bases.payoff_fn is not None,
            "step": self.step,
            "n_train": self.n_train,
        }

    @classmethod
    def from_state(cls, state):
        bases = BasisSet(
            state["exponents"], state["dim"], sorted_coords=state["sorted_coords"]
        )
        bases._payoff_feature = bool(state.get("payoff_feature", False))
        return cls(bases, state["coef"], state.get("step"), state.get("n_train", 0))


def fit_lm(bases: BasisSet, x: np.ndarray, y: np.ndarray, step=None) -> LinearFit:
    """Ordinary least squares via pivoted QR.

    Raises if there are not strictly more observations than coefficients, or
    if the design matrix is rank deficient (the error names the collinear
    columns; index 0 is the intercept, feature j is column j).
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float)
    n = x.shape[0]
    r_coef = bases.arity + 1
    if n <= r_coef:
        raise ValueError(
            f"need more observations than coefficients: N={n}, R={r_coef}"
        )
    f = np.column_stack([np.ones(n), bases(x)])
    # rank detection on unit-normalized columns, so genuinely collinear
    # features are caught regardless of the raw column scales
    norms = np.linalg.norm(f, axis=0)
    norms = np.where(norms > 0, norms, 1.0)
    q, r, piv = scipy.linalg.qr(f / norms, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    tol = diag.max() * max(f.shape) * np.finfo(float).eps
    rank = int((diag > tol).sum())
    if rank < r_coef:
        bad = sorted(int(j) for j in piv[rank:])
        raise ValueError(
            f"rank-deficient feature matrix (rank {rank} of {r_coef}); "
            f"collinear design-matrix columns: {bad} (0 is the intercept)"
        )
    coef = scipy.linalg.solve_triangular(r, q.T @ y)
    out = np.empty(r_coef)
    out[piv] = coef
    return LinearFit(bases, out / norms, step=step, n_train=n)
