"""Duality between the linear anticipated equation and a delayed forward one.

The linear backward scenario with coefficients (mu, mu_bar, sigma,
sigma_bar, kappa, rho) and a single constant delay has a dual forward
equation for a process X started at 1 at time t0 and at 0 just before; the
backward solution at t0 equals a conditional expectation (given the future
of B) of a functional of X:

    Y_t = E[ X_T xi_T + int_t^T rho X_s ds | B-future ]
        + E[ int_T^{T+delta} ( mu_bar X_{s-delta} xi_s
                             + sigma_bar X_{s-delta} eta_s ) ds | B-future ],

for deterministic (xi, eta) profiles.  The harness evaluates the right-hand
side by nested Monte Carlo (outer B-paths, fresh inner W-paths), solves the
backward equation with the regression solver on the same B-drivers, and
reports the per-outer-path residual.

Discretization: the forward kappa term sits against the backward integral,
so it is evaluated at the right endpoint, which makes each forward step an
implicit (scalar) solve; time integrals use the trapezoid rule on the grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .condexp import RegressionBackend, _poly_features, _ridge_fit
from .errors import NonFinite, ValidationError
from .delays import constant_delay, DelaySpec
from .generators import builtin_generator
from .grids import TimeGrid, make_grid
from .paths import PathEnsemble, sample_paths
from .scenario import make_scenario, Scenario
from .solver import solve_backward_sweep, SolutionProcess
from .terminal import TerminalSpec


@dataclass(frozen=True)
class LinearDualityCoeffs:
    """Constants of the linear pair; sigma/sigma_bar are d-vectors, kappa an
    l-vector.  Terminal data must be deterministic for the representation
    (constant or affine profile)."""

    mu: float = 0.0
    mu_bar: float = 0.0
    sigma: tuple = (0.0,)
    sigma_bar: tuple = (0.0,)
    kappa: tuple = (0.0,)
    rho: float = 0.0
    delta: float = 0.25
    t0: float = 0.25
    terminal: TerminalSpec = field(
        default_factory=lambda: TerminalSpec(name="constant", params={"value": 1.0}))

    @property
    def d(self) -> int:
        return len(self.sigma)

    @property
    def l(self) -> int:
        return len(self.kappa)

    def __post_init__(self):
        if len(self.sigma_bar) != self.d:
            raise ValidationError("sigma and sigma_bar must share a dimension")
        if self.t0 < self.delta:
            raise ValidationError(
                f"need t0 >= delta > 0, got t0={self.t0}, delta={self.delta}")
        if self.delta <= 0:
            raise ValidationError("delta must be positive")

    def generator(self):
        return builtin_generator(
            "duality_linear", d=self.d, l=self.l, mu=self.mu, mu_bar=self.mu_bar,
            sigma=list(self.sigma), sigma_bar=list(self.sigma_bar),
            kappa=list(self.kappa), rho=self.rho)

    def scenario(self, grid: TimeGrid) -> Scenario:
        delay = DelaySpec(delta=constant_delay(self.delta),
                          zeta=constant_delay(self.delta), K=grid.K)
        return make_scenario(grid, self.generator(), self.terminal, delay=delay)

    def grid_for(self, T: float, h: float) -> TimeGrid:
        return make_grid(T, self.delta, h)

    def profiles(self, grid: TimeGrid):
        """Deterministic (xi, eta) values on terminal nodes n_T..n_end."""
        name, p = self.terminal.name, dict(self.terminal.params)
        k_nodes = grid.n_end - grid.n_T + 1
        t_rel = np.arange(k_nodes) * grid.h
        eta = np.full(k_nodes, float(p.get("eta", 0.0)))
        if name == "constant":
            xi = np.full(k_nodes, float(p.get("value", 1.0)))
        elif name == "affine":
            xi = float(p.get("value", 1.0)) + float(p.get("slope", 0.0)) * t_rel
        else:
            raise ValidationError(
                f"duality needs a deterministic terminal profile, got '{name}'")
        return xi, eta


@dataclass
class DelayedPath:
    """Forward solution values on nodes 0..n_T; zero before the start node."""

    grid: TimeGrid
    k0: int
    values: np.ndarray  # (P, n_T + 1)

    @property
    def n_paths(self) -> int:
        return self.values.shape[0]


def solve_delayed_dsde(coeffs: LinearDualityCoeffs, paths: PathEnsemble,
                       k0: int) -> DelayedPath:
    """Forward Euler for the delayed equation, X_{t_{k0}} = 1, X = 0 before.

    Per step, with dd = delta/h and right-endpoint kappa term:

      X_{k+1} (1 - kappa dB_k) = X_k + (mu X_k + mu_bar X_{k-dd}) h
                                 + (sigma X_k + sigma_bar X_{k-dd}) dW_k.
    """
    grid = paths.grid
    dd = grid.index_of(coeffs.delta)
    if k0 < dd:
        raise ValidationError(f"start node {k0} is before the delay window {dd}")
    sigma = np.asarray(coeffs.sigma)
    sigma_bar = np.asarray(coeffs.sigma_bar)
    kappa = np.asarray(coeffs.kappa)
    h = grid.h
    P = paths.n_paths
    X = np.zeros((P, grid.n_T + 1))
    X[:, k0] = 1.0
    for k in range(k0, grid.n_T):
        x = X[:, k]
        x_del = X[:, k - dd]
        drift = (coeffs.mu * x + coeffs.mu_bar * x_del) * h
        diff_w = (x[:, None] * sigma[None, :]
                  + x_del[:, None] * sigma_bar[None, :])
        denom = 1.0 - paths.dB[:, k] @ kappa
        if np.any(np.abs(denom) < 1e-8):
            raise NonFinite(f"implicit kappa step degenerate at node {k}")
        X[:, k + 1] = (x + drift
                       + np.einsum("pd,pd->p", diff_w, paths.dW[:, k])) / denom
        if not np.all(np.isfinite(X[:, k + 1])):
            raise NonFinite(f"delayed forward solve blew up at node {k}")
    return DelayedPath(grid=grid, k0=k0, values=X)


def _bracket(coeffs: LinearDualityCoeffs, X: DelayedPath, k0: int) -> np.ndarray:
    """Per-path value of the duality functional of one forward solution."""
    grid = X.grid
    dd = grid.index_of(coeffs.delta)
    xi, eta = coeffs.profiles(grid)
    vals = X.values
    out = vals[:, grid.n_T] * xi[0]
    if coeffs.rho != 0.0:
        out = out + coeffs.rho * np.trapezoid(vals[:, k0: grid.n_T + 1], dx=grid.h, axis=1)
    if coeffs.mu_bar != 0.0 or np.any(np.asarray(coeffs.sigma_bar) != 0.0):
        # int_T^{T+delta} (mu_bar X_{s-delta} xi_s + sigma_bar X_{s-delta} eta_s) ds;
        # eta has equal coordinates, so sigma_bar . eta_s = sum(sigma_bar) * eta
        x_del = vals[:, grid.n_T - dd: grid.n_T + 1]
        weights = coeffs.mu_bar * xi + float(np.sum(coeffs.sigma_bar)) * eta
        out = out + np.trapezoid(x_del * weights[None, :], dx=grid.h, axis=1)
    return out


def duality_rhs(coeffs: LinearDualityCoeffs, outer_dB: np.ndarray,
                grid: TimeGrid, k0: int, inner: int, seed) -> tuple:
    """Nested Monte Carlo estimate of the representation, per outer B-path.

    Returns (estimates, inner standard errors), each of shape (n_outer,).
    Inner W-paths are fresh per outer path; the outer B-increments are
    broadcast to every inner path, which realizes conditioning on the
    B-future.
    """
    n_outer = outer_dB.shape[0]
    est = np.empty(n_outer)
    stderr = np.empty(n_outer)
    for j in range(n_outer):
        fresh = sample_paths(grid, d=coeffs.d, l=coeffs.l, P=inner,
                             seed=(seed, j) if np.isscalar(seed) else tuple(seed) + (j,))
        inner_paths = PathEnsemble(
            grid=grid, dW=fresh.dW,
            dB=np.broadcast_to(outer_dB[j][None], (inner,) + outer_dB[j].shape).copy(),
            seed=None)
        X = solve_delayed_dsde(coeffs, inner_paths, k0)
        vals = _bracket(coeffs, X, k0)
        est[j] = vals.mean()
        stderr[j] = vals.std(ddof=1) / np.sqrt(inner) if inner > 1 else 0.0
    return est, stderr


@dataclass
class DualityReport:
    residuals: np.ndarray
    inner_stderr: np.ndarray
    tol_mean: float
    tol_max: float
    rate_constant: float
    solution: SolutionProcess
    rhs: np.ndarray

    @property
    def mean_residual(self) -> float:
        return float(self.residuals.mean())

    @property
    def max_residual(self) -> float:
        return float(self.residuals.max())

    @property
    def passed(self) -> bool:
        return self.mean_residual <= self.tol_mean and self.max_residual <= self.tol_max


def _commensurate(value: float, h: float) -> bool:
    return abs(value / h - round(value / h)) <= 1e-9


def _mean_residual_once(coeffs, grid, P, n_outer, inner, seed, backend):
    paths = sample_paths(grid, coeffs.d, coeffs.l, P, seed)
    scenario = coeffs.scenario(grid)
    sol = solve_backward_sweep(scenario, paths, backend)
    k0 = grid.index_of(coeffs.t0)
    rhs, stderr = duality_rhs(coeffs, paths.dB[:n_outer], grid, k0,
                              inner, (seed, 104729))
    resid = np.abs(sol.Y.values[:n_outer, k0, 0] - rhs)
    return resid, stderr, sol, rhs


def duality_check(coeffs: LinearDualityCoeffs, T: float, h: float,
                  P: int = 4096, n_outer: int = 64, inner: int = 2048,
                  seed: int = 11, backend: RegressionBackend | None = None,
                  tol_mean: float | None = None, tol_max: float | None = None,
                  calibration_factors: tuple = (2, 4)) -> DualityReport:
    """Residuals between the backward solve and the dual representation.

    With tolerances unset they are self-calibrated: the step-size constant C
    is estimated from the mean residual on coarser grids (residual/h along
    `calibration_factors`), then tol_mean = 3 (mean inner stderr + C h) and
    tol_max = 3 tol_mean.
    """
    backend = backend or RegressionBackend()
    grid = coeffs.grid_for(T, h)
    resid, stderr, sol, rhs = _mean_residual_once(
        coeffs, grid, P, n_outer, inner, seed, backend)

    rate_c = 0.0
    if tol_mean is None:
        for factor in calibration_factors:
            h_c = h * factor
            if not _commensurate(coeffs.delta, h_c) or not _commensurate(T, h_c) \
                    or not _commensurate(coeffs.t0, h_c):
                continue
            coarse_grid = coeffs.grid_for(T, h_c)
            r_c, _, _, _ = _mean_residual_once(
                coeffs, coarse_grid, P, n_outer, max(inner // 2, 64),
                seed + factor, backend)
            rate_c = max(rate_c, float(r_c.mean()) / h_c)
        tol_mean = 3.0 * (float(stderr.mean()) + rate_c * h)
        tol_max = 3.0 * tol_mean if tol_max is None else tol_max
    elif tol_max is None:
        tol_max = 3.0 * tol_mean

    return DualityReport(residuals=resid, inner_stderr=stderr,
                         tol_mean=float(tol_mean), tol_max=float(tol_max),
                         rate_constant=rate_c, solution=sol, rhs=rhs)


# ---------------------------------------------------------------------------
# measurability check: Z vanishes and Y is a function of the B-future
# ---------------------------------------------------------------------------

@dataclass
class MeasurabilityReport:
    z_norm: float
    min_r2: float
    tol_z: float
    tol_meas: float

    @property
    def passed(self) -> bool:
        return self.z_norm <= self.tol_z and 1.0 - self.min_r2 <= self.tol_meas


def _r2_on_b_features(Y_k: np.ndarray, paths: PathEnsemble, k: int,
                      degree: int = 2) -> float:
    scale = float(np.abs(Y_k).max())
    if np.ptp(Y_k) <= 1e-12 * max(1.0, scale):
        return 1.0  # constant target: nothing left to explain
    ss_tot = float(np.sum((Y_k - Y_k.mean()) ** 2))
    X = _poly_features(paths.b_tail(k), degree)
    fitted, _ = _ridge_fit(X, Y_k[:, None], 1e-10)
    ss_res = float(np.sum((Y_k - fitted[:, 0]) ** 2))
    return 1.0 - ss_res / ss_tot


def measurability_check(sol: SolutionProcess, paths: PathEnsemble, k0: int,
                        tol_z: float | None = None,
                        tol_meas: float = 1e-3) -> MeasurabilityReport:
    """Grid norm of Z on [t0, T] and worst R^2 of Y on B-features alone.

    For a solution of the linear duality scenario both should vanish: Z is
    regression noise shrinking with (h, P) refinement, and Y should be
    explained by the B-future.  tol_z defaults to sqrt(n_features/(h P)),
    the scale of that noise.
    """
    grid = sol.grid
    z = sol.Z.values[:, k0: grid.n_T]
    z_norm = float(np.sqrt(np.mean(np.sum(z ** 2, axis=(2, 3)).sum(axis=1) * grid.h)))
    if tol_z is None:
        n_features = _poly_features(
            np.concatenate([paths.w_at(0), paths.b_tail(0)], axis=1), 2).shape[1]
        tol_z = np.sqrt(n_features / (grid.h * paths.n_paths)) \
            * max(1.0, float(np.abs(sol.Y.values).max()))
    r2 = [
        _r2_on_b_features(sol.Y.values[:, k, 0], paths, k)
        for k in range(k0, grid.n_T)
    ]
    return MeasurabilityReport(z_norm=z_norm,
                               min_r2=float(min(r2)) if r2 else 1.0,
                               tol_z=float(tol_z), tol_meas=tol_meas)
