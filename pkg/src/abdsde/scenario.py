"""Runtime scenario: grid + generator + anticipation maps + terminal data.

A Scenario bundles everything the solvers need apart from the sampled paths
and the conditional-expectation backend.  `make_scenario` performs the
semantic validation: anticipation maps are validated against the grid and
converted to index offsets, the feasibility condition alpha1 + alpha2*M < 1
is enforced, and f(., 0, 0, 0) is checked finite on grid nodes.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .delays import DelaySpec, GridOffsets, to_grid_offsets, validate_delay
from .errors import NonFinite, ValidationError
from .generators import GeneratorSpec, check_feasible
from .grids import TimeGrid
from .paths import PathEnsemble
from .terminal import TerminalData, TerminalSpec


@dataclass
class Scenario:
    grid: TimeGrid
    generator: GeneratorSpec
    terminal: TerminalSpec | TerminalData
    delay: DelaySpec | None = None
    offsets: GridOffsets | None = None
    implicit_iters: int = 1
    feasibility_load: float = 0.0  # alpha1 + alpha2*M, checked < 1

    @property
    def M(self) -> float:
        return self.delay.M if self.delay is not None else 1.0

    def terminal_data(self, paths: PathEnsemble) -> TerminalData:
        if isinstance(self.terminal, TerminalData):
            if self.terminal.n_paths != paths.n_paths:
                raise ValidationError(
                    "terminal data was materialized for a different path count")
            return self.terminal
        return self.terminal.build(self.grid, paths, m=self.generator.m,
                                   d=self.generator.d)


def make_scenario(grid: TimeGrid, generator: GeneratorSpec,
                  terminal: TerminalSpec | TerminalData,
                  delay: DelaySpec | None = None,
                  implicit_iters: int = 1) -> Scenario:
    offsets = None
    M = 1.0
    if generator.anticipates and delay is None:
        raise ValidationError(
            f"generator '{generator.name}' anticipates but no delay "
            "spec was provided")
    if delay is not None:
        delay = validate_delay(delay, grid)
        offsets = to_grid_offsets(delay, grid)
        M = delay.M
        if offsets.max_snap_error > 1e-12:
            warnings.warn(
                f"anticipation times are off-grid; snapping to nearest "
                f"nodes with error up to {offsets.max_snap_error:.3g}",
                stacklevel=2)
    load = check_feasible(generator.lip, M)

    # f(., 0, 0, 0) must be finite on grid nodes (square-integrability proxy)
    y0 = np.zeros((1, generator.m))
    z0 = np.zeros((1, generator.m, generator.d))
    e0 = np.zeros((1, generator.q_total))
    for t in grid.times[: grid.n_T + 1]:
        val = np.asarray(generator.f(float(t), y0, z0, e0))
        if not np.all(np.isfinite(val)):
            raise NonFinite(f"f(t, 0, 0, 0) is non-finite at t={t}")

    if implicit_iters < 1:
        raise ValidationError("implicit_iters must be >= 1")
    return Scenario(grid=grid, generator=generator, terminal=terminal,
                    delay=delay, offsets=offsets,
                    implicit_iters=implicit_iters, feasibility_load=load)
