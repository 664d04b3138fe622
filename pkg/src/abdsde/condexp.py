"""Conditional expectations given the time-t information field.

At node k the conditioning field joins the past of W (increments before k)
with the future of B (increments at and after k).  Two backends realize it:

* RegressionBackend -- ridge least squares of the target on polynomial
  features of the state (W_{t_k}, B_{t_{n_T}} - B_{t_k}), one independent
  fit per node.  This is the Monte Carlo workhorse.
* ExactTreeBackend -- exact per-atom averages on a finite two-point tree
  (see `tree.build_tree`); atoms agreeing on past-W and future-B increments
  form one information atom and share the conditional expectation.

Targets that are constant across paths are returned unchanged: a constant
is its own conditional expectation, and skipping the fit keeps
deterministic scenarios exact.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations_with_replacement

import numpy as np

from .errors import BackendMismatch, NonFinite, SingularDesign
from .paths import PathEnsemble


@dataclass(frozen=True)
class RegressionBasis:
    """Polynomial feature map of degree `degree` with ridge weight `ridge`.

    Features are the d coordinates of W_{t_k} and the l coordinates of
    B_{t_{n_T}} - B_{t_k}; all monomials up to the given total degree are
    used, intercept included.  The intercept is never penalized, so constant
    targets are reproduced exactly.
    """

    degree: int = 2
    ridge: float = 1e-8

    def __post_init__(self):
        if self.degree < 1:
            raise ValueError("degree must be >= 1")
        if self.ridge < 0:
            raise ValueError("ridge must be >= 0")


def _poly_features(state: np.ndarray, degree: int) -> np.ndarray:
    """All monomials of the state columns up to total degree, with intercept."""
    P, n_raw = state.shape
    cols = [np.ones(P)]
    for deg in range(1, degree + 1):
        for combo in combinations_with_replacement(range(n_raw), deg):
            col = state[:, combo[0]].copy()
            for j in combo[1:]:
                col *= state[:, j]
            cols.append(col)
    return np.column_stack(cols)


def _ridge_fit(X: np.ndarray, Y: np.ndarray, ridge: float):
    """Solve the (optionally ridged) normal equations; intercept unpenalized.

    Returns (fitted, coefficients).  With ridge == 0 a rank-deficient design
    raises SingularDesign.
    """
    XtX = X.T @ X
    XtY = X.T @ Y
    if ridge == 0.0:
        if np.linalg.matrix_rank(XtX) < XtX.shape[0]:
            raise SingularDesign(
                "normal equations are rank-deficient and ridge is 0")
        beta = np.linalg.solve(XtX, XtY)
    else:
        penalty = np.full(XtX.shape[0], ridge)
        penalty[0] = 0.0  # leave the intercept alone
        beta = np.linalg.solve(XtX + np.diag(penalty), XtY)
    return X @ beta, beta


class RegressionBackend:
    """Least-squares Monte Carlo conditional expectations."""

    def __init__(self, basis: RegressionBasis | None = None):
        self.basis = basis or RegressionBasis()

    def features(self, paths: PathEnsemble, k: int) -> np.ndarray:
        state = np.concatenate([paths.w_at(k), paths.b_tail(k)], axis=1)
        return _poly_features(state, self.basis.degree)

    def condexp(self, targets: np.ndarray, k: int, paths: PathEnsemble) -> np.ndarray:
        flat = targets.reshape(targets.shape[0], -1)
        X = self.features(paths, k)
        if flat.shape[0] < 10 * X.shape[1]:
            raise ValueError(
                f"{flat.shape[0]} paths is too few for {X.shape[1]} features "
                "(need at least 10x)")
        fitted, _ = _ridge_fit(X, flat, self.basis.ridge)
        return fitted.reshape(targets.shape)

    def describe(self) -> str:
        return f"regression(markov-poly, degree={self.basis.degree}, ridge={self.basis.ridge})"


class ExactTreeBackend:
    """Exact enumeration backend bound to one tree's atom ensemble."""

    def __init__(self, tree):
        self.tree = tree

    def _check(self, paths: PathEnsemble):
        if paths is not self.tree.ensemble:
            raise BackendMismatch(
                "exact backend only conditions on its own tree's atom ensemble")

    def condexp(self, targets: np.ndarray, k: int, paths: PathEnsemble) -> np.ndarray:
        self._check(paths)
        ids = self.tree.f_atom_ids(k)
        n_groups = ids.max() + 1
        flat = targets.reshape(targets.shape[0], -1)
        counts = np.bincount(ids, minlength=n_groups).astype(float)
        out = np.empty_like(flat)
        for j in range(flat.shape[1]):
            sums = np.bincount(ids, weights=flat[:, j], minlength=n_groups)
            out[:, j] = (sums / counts)[ids]
        return out.reshape(targets.shape)

    def describe(self) -> str:
        return f"exact(tree, steps={self.tree.n})"


def condexp(backend, targets: np.ndarray, k: int, paths: PathEnsemble) -> np.ndarray:
    """Estimate E[target | information at node k], per path.

    Constant targets short-circuit (they are their own conditional
    expectation); everything else goes through the backend.
    """
    targets = np.asarray(targets, dtype=float)
    if not np.all(np.isfinite(targets)):
        raise NonFinite("condexp received non-finite targets")
    flat = targets.reshape(targets.shape[0], -1)
    if np.all(np.ptp(flat, axis=0) == 0.0):
        return targets.copy()
    return backend.condexp(targets, k, paths)
