"""Backward solver for anticipated equations, and the contraction machinery.

The discrete scheme, one step from node k+1 to node k (h = step size):

    e-step   e_k   = condexp( phi(Y_{k+d_delta}, Z_{k+d_zeta}), k )
    g-step   G_{k+1} = g(t_{k+1}, Y_{k+1}, Z_{k+1}, raw anticipated values)
    Z-step   Z_k   = condexp( (Y_{k+1} + G_{k+1} dB_k) dW_k, k ) / h
    Y-step   Ybar_k = condexp( Y_{k+1} + G_{k+1} dB_k, k )
             Y_k   = Ybar_k + h f(t_k, Yhat, Z_k, e_k),  Yhat = Ybar_k,
             optionally refined by `implicit_iters` passes
             Yhat <- Ybar_k + h f(t_k, Yhat, Z_k, e_k).

Anticipated indices are strictly in the future (offsets >= 1), so one
backward sweep already produces the fixed point of the frozen-anticipation
map below.  The g integrand sits at the right endpoint, matching the
backward-integral convention of `paths`.  Because increments of W after
node k are independent of the node-k information field, E[c dW_k | .] = 0
for any path-constant c; the Z-step uses that identity directly when its
base target is constant, which keeps deterministic scenarios exact.

`picard_map` freezes a candidate process in the *anticipated* arguments
only and re-solves; iterating it is the constructive route to the solution,
and its distances contract in the exponentially weighted norm with the
factor bounded by `contraction_params`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .condexp import condexp
from .delays import segment_interval, Segmentation
from .errors import Infeasible, NoConvergence, NonFinite, ShapeMismatch
from .generators import LipschitzData
from .paths import PathEnsemble, PathProcess
from .scenario import Scenario

#: gamma would degenerate to 0 when c = 0; any positive value keeps the
#: weighted norm a norm without breaking the contraction inequality.
GAMMA_FLOOR = 1e-6


@dataclass
class SolutionProcess:
    """Grid-indexed (Y, Z) on [0, T+K] with run metadata."""

    Y: PathProcess
    Z: PathProcess
    metadata: dict = field(default_factory=dict)

    @property
    def grid(self):
        return self.Y.grid

    @property
    def n_paths(self) -> int:
        return self.Y.n_paths

    def copy(self) -> "SolutionProcess":
        return SolutionProcess(Y=self.Y.copy(), Z=self.Z.copy(),
                               metadata=dict(self.metadata))


@dataclass(frozen=True)
class ContractionParams:
    """Constants (lambda0, beta, gamma, cbar) of the weighted-norm contraction."""

    lam0: float
    beta: float
    gamma: float
    cbar: float


def contraction_params(lip: LipschitzData, M: float,
                       lam0: float | None = None) -> ContractionParams:
    """Contraction constants for Lipschitz data `lip` and substitution bound M.

    With the default lambda0 = 2c(1+M)/(1 - alpha1 - alpha2*M) the factor is
    cbar = (1 + alpha1 + alpha2*M)/2 < 1.  An explicit lambda0 must still
    yield cbar < 1.
    """
    load = lip.alpha1 + lip.alpha2 * M
    if load >= 1.0:
        raise Infeasible(f"alpha1 + alpha2*M = {load:.6g} >= 1")
    c = lip.c
    if lam0 is None:
        lam0 = 2.0 * c * (1.0 + M) / (1.0 - load) if c > 0 else 1.0
    if lam0 <= 0:
        raise Infeasible(f"lambda0 must be positive, got {lam0}")
    cbar = (c / lam0) * (1.0 + M) + load
    if cbar >= 1.0:
        raise Infeasible(
            f"lambda0={lam0:.6g} gives contraction factor {cbar:.6g} >= 1")
    if c > 0:
        gamma = c * (1.0 + lam0) * (1.0 + M) / (c * (1.0 + M) + lam0 * load)
    else:
        gamma = GAMMA_FLOOR
    return ContractionParams(lam0=lam0, beta=lam0 + gamma, gamma=gamma, cbar=cbar)


def weighted_norm(sol: SolutionProcess, params: ContractionParams) -> float:
    """Exponentially weighted grid norm over all nodes of [0, T+K]:

    ( mean over paths of sum_k e^{beta t_k} (gamma |Y_k|^2 + |Z_k|^2) h )^(1/2).
    """
    grid = sol.grid
    t = grid.times
    t_max = float(t[-1])
    w = np.exp(params.beta * (t - t_max))  # shifted to avoid overflow in the sum
    y2 = np.sum(sol.Y.values ** 2, axis=2)
    z2 = np.sum(sol.Z.values ** 2, axis=(2, 3))
    per_path = ((params.gamma * y2 + z2) * w[None, :]).sum(axis=1) * grid.h
    return math.exp(0.5 * params.beta * t_max) * math.sqrt(float(per_path.mean()))


def weighted_distance(a: SolutionProcess, b: SolutionProcess,
                      params: ContractionParams) -> float:
    diff = SolutionProcess(
        Y=PathProcess(grid=a.grid, values=a.Y.values - b.Y.values),
        Z=PathProcess(grid=a.grid, values=a.Z.values - b.Z.values))
    return weighted_norm(diff, params)


# ---------------------------------------------------------------------------
# the sweep
# ---------------------------------------------------------------------------

def _alloc(scenario: Scenario, paths: PathEnsemble):
    gen = scenario.generator
    grid = scenario.grid
    term = scenario.terminal_data(paths)
    P = paths.n_paths
    Y = np.zeros((P, grid.n_nodes, gen.m))
    Z = np.zeros((P, grid.n_nodes, gen.m, gen.d))
    for k in range(grid.n_T, grid.n_end + 1):
        Y[:, k] = term.xi_at(k)
        Z[:, k] = term.eta_at(k)
    return Y, Z


def _raw_functionals(scenario: Scenario, Y: np.ndarray, Z: np.ndarray, k: int):
    gen = scenario.generator
    if not gen.anticipates:
        return np.zeros((Y.shape[0], 0))
    off = scenario.offsets
    return gen.eval_functionals(Y[:, k + off.d_delta[k]], Z[:, k + off.d_zeta[k]])


def _sweep_nodes(scenario: Scenario, paths: PathEnsemble, backend,
                 Y: np.ndarray, Z: np.ndarray, k_hi: int, k_lo: int,
                 frozen: SolutionProcess | None, diagnostics: dict) -> None:
    """Fill nodes k_hi-1 down to k_lo in place; nodes >= k_hi must be set.

    Anticipated arguments are read from `frozen` when given (the
    frozen-anticipation map) and from the live arrays otherwise.
    """
    gen = scenario.generator
    grid = scenario.grid
    h = grid.h
    if frozen is None:
        ant_Y, ant_Z = Y, Z
    else:
        ant_Y, ant_Z = frozen.Y.values, frozen.Z.values
    resid = diagnostics.setdefault("ybar_residual_rms", {})

    for k in range(k_hi - 1, k_lo - 1, -1):
        t_k = grid.time(k)
        e_raw_next = _raw_functionals(scenario, ant_Y, ant_Z, k + 1)
        g_val = np.asarray(
            gen.g(grid.time(k + 1), Y[:, k + 1], Z[:, k + 1], e_raw_next))
        target = Y[:, k + 1] + np.einsum("pml,pl->pm", g_val, paths.dB[:, k])

        if np.all(np.ptp(target, axis=0) == 0.0):
            Z[:, k] = 0.0  # E[c dW_k | node-k field] = 0 for constant c
        else:
            z_target = target[:, :, None] * paths.dW[:, k][:, None, :]
            Z[:, k] = condexp(backend, z_target, k, paths) / h

        if gen.anticipates:
            e_k = condexp(backend, _raw_functionals(scenario, ant_Y, ant_Z, k),
                          k, paths)
        else:
            e_k = np.zeros((target.shape[0], 0))

        y_bar = condexp(backend, target, k, paths)
        resid[k] = float(np.sqrt(np.mean((target - y_bar) ** 2)))
        y_hat = y_bar
        for _ in range(scenario.implicit_iters):
            y_hat = y_bar + h * np.asarray(gen.f(t_k, y_hat, Z[:, k], e_k))
        Y[:, k] = y_hat

        if not (np.all(np.isfinite(Y[:, k])) and np.all(np.isfinite(Z[:, k]))):
            raise NonFinite(f"sweep produced non-finite values at node {k}")


def _finish(scenario: Scenario, backend, Y, Z, diagnostics: dict,
            extra: dict | None = None) -> SolutionProcess:
    grid = scenario.grid
    meta = {
        "backend": getattr(backend, "describe", lambda: str(backend))(),
        "implicit_iters": scenario.implicit_iters,
        "l2_Y": float(np.mean(np.sum(Y ** 2, axis=2).sum(axis=1)) * grid.h),
        "l2_Z": float(np.mean(np.sum(Z ** 2, axis=(2, 3)).sum(axis=1)) * grid.h),
    }
    meta.update(diagnostics)
    if extra:
        meta.update(extra)
    return SolutionProcess(Y=PathProcess(grid=grid, values=Y),
                           Z=PathProcess(grid=grid, values=Z), metadata=meta)


def solve_backward_sweep(scenario: Scenario, paths: PathEnsemble,
                         backend) -> SolutionProcess:
    """Solve the anticipated equation in a single backward sweep."""
    Y, Z = _alloc(scenario, paths)
    diagnostics: dict = {}
    _sweep_nodes(scenario, paths, backend, Y, Z, scenario.grid.n_T, 0,
                 frozen=None, diagnostics=diagnostics)
    return _finish(scenario, backend, Y, Z, diagnostics)


def solve_segmented(scenario: Scenario, paths: PathEnsemble,
                    backend) -> SolutionProcess:
    """Solve segment by segment, later segments first.

    Node-for-node this performs the same arithmetic as the global sweep
    (the per-node update only reads strictly later nodes), so the two
    agree bitwise; the segmentation is what justifies the equivalence.
    """
    grid = scenario.grid
    if scenario.delay is not None:
        seg = segment_interval(scenario.delay, grid)
    else:
        seg = Segmentation(points=(grid.T, 0.0))
    Y, Z = _alloc(scenario, paths)
    diagnostics: dict = {"segmentation": tuple(seg.points)}
    for i in range(1, seg.N + 1):
        k_hi = grid.index_of(seg.points[i - 1])
        k_lo = grid.index_of(seg.points[i])
        _sweep_nodes(scenario, paths, backend, Y, Z, k_hi, k_lo,
                     frozen=None, diagnostics=diagnostics)
    return _finish(scenario, backend, Y, Z, diagnostics)


# ---------------------------------------------------------------------------
# frozen-anticipation map and its fixed-point iteration
# ---------------------------------------------------------------------------

def picard_map(scenario: Scenario, frozen: SolutionProcess,
               paths: PathEnsemble, backend) -> SolutionProcess:
    """Apply the frozen-anticipation map: anticipated arguments read
    `frozen`, everything else is solved anew.

    The frozen process must live on the scenario grid with the terminal part
    equal to (xi, eta); the output again has that terminal part.
    """
    grid = scenario.grid
    if frozen.grid.n_nodes != grid.n_nodes:
        raise ShapeMismatch("frozen process lives on a different grid")
    if frozen.n_paths != paths.n_paths:
        raise ShapeMismatch("frozen process holds a different path count")
    Y, Z = _alloc(scenario, paths)
    diagnostics: dict = {}
    _sweep_nodes(scenario, paths, backend, Y, Z, grid.n_T, 0,
                 frozen=frozen, diagnostics=diagnostics)
    return _finish(scenario, backend, Y, Z, diagnostics)


def default_initial(scenario: Scenario, paths: PathEnsemble) -> SolutionProcess:
    """(y0, z0) = (xi_T extended constantly backward, 0), terminal part kept."""
    Y, Z = _alloc(scenario, paths)
    Y[:, : scenario.grid.n_T] = Y[:, scenario.grid.n_T][:, None, :]
    return SolutionProcess(Y=PathProcess(grid=scenario.grid, values=Y),
                           Z=PathProcess(grid=scenario.grid, values=Z),
                           metadata={"initial": "terminal-extension"})


def constant_initial(scenario: Scenario, paths: PathEnsemble,
                     value: float) -> SolutionProcess:
    """(y0, z0) = (constant, 0) on [0, T), terminal part kept."""
    Y, Z = _alloc(scenario, paths)
    Y[:, : scenario.grid.n_T] = value
    return SolutionProcess(Y=PathProcess(grid=scenario.grid, values=Y),
                           Z=PathProcess(grid=scenario.grid, values=Z),
                           metadata={"initial": f"constant({value})"})


def picard_iterate(scenario: Scenario, paths: PathEnsemble, backend,
                   tol: float = 1e-9, max_iter: int = 64,
                   init: SolutionProcess | None = None,
                   params: ContractionParams | None = None):
    """Iterate the frozen-anticipation map to its fixed point.

    Stops when the weighted distance between successive iterates drops
    below `tol`; returns (solution, list of successive distances).  Because
    anticipation reads strictly later nodes, the iteration terminates after
    at most one application per segment of the interval segmentation.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if params is None:
        params = contraction_params(scenario.generator.lip, scenario.M)
    current = init if init is not None else default_initial(scenario, paths)
    log: list[float] = []
    for _ in range(max_iter):
        nxt = picard_map(scenario, current, paths, backend)
        dist = weighted_distance(nxt, current, params)
        log.append(dist)
        current = nxt
        if dist < tol:
            current.metadata["picard_distances"] = tuple(log)
            current.metadata["iterations"] = len(log)
            return current, log
    raise NoConvergence(
        f"distance {log[-1]:.3g} >= tol {tol:.3g} after {max_iter} iterations")
