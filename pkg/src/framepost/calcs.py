"""Built-in calculations.

Displacements are measured from the first frame of the phase window. All
accumulation is in float64; sums across bricks use ``math.fsum`` so results
do not depend on brick order.
"""
from __future__ import annotations

import importlib
import math

import numpy as np

from . import kernels
from .engine import CalculationPlugin
from .errors import FramepostError, InvalidSelectorError
from .model import GridMeta, make_result
from .scheduler import CalculationRequirements, PhaseSpec


def _full(grid: GridMeta, positions=True, velocities=False) -> PhaseSpec:
    return PhaseSpec((0, grid.total_frames), positions, velocities)


class PeakDisplacement(CalculationPlugin):
    """Per-brick maximum Euclidean distance from the first-frame position."""

    id = "peak_displacement"

    def requirements(self, grid):
        return CalculationRequirements(self.id, (_full(grid),))

    def on_pass_start(self, phase):
        self._ref = None
        self._peak = None

    def on_frame(self, phase, frame, grid):
        if self._ref is None:
            self._ref = frame.positions.astype(np.float64)
            self._peak = np.zeros(grid.brick_count)
            self._grid = grid
        kernels.peak_update(frame.positions, self._ref, self._peak)

    def finalize(self):
        g = self._grid
        return [make_result("peak_displacement", "m", (g.nx, g.ny, g.nz, 1), self._peak)]


class ChannelDistortion(CalculationPlugin):
    """x and y offsets of one vertical column relative to the first frame."""

    id = "channel_distortion"

    def __init__(self, ix: int = 0, iy: int = 0, id: str | None = None):
        super().__init__(id)
        self.ix, self.iy = int(ix), int(iy)

    def config(self):
        return {"ix": self.ix, "iy": self.iy}

    def requirements(self, grid):
        if not (0 <= self.ix < grid.nx and 0 <= self.iy < grid.ny):
            raise InvalidSelectorError(
                f"channel ({self.ix}, {self.iy}) outside grid {grid.nx}x{grid.ny}"
            )
        return CalculationRequirements(self.id, (_full(grid),))

    def on_pass_start(self, phase):
        self._ref = None

    def on_frame(self, phase, frame, grid):
        if self._ref is None:
            bricks = np.array([grid.brick_index(self.ix, self.iy, iz) for iz in range(grid.nz)])
            self._xi = 3 * bricks
            self._ref = frame.positions[self._xi].astype(np.float64), frame.positions[self._xi + 1].astype(np.float64)
            self._start = frame.frame_index
            n_t = grid.total_frames
            # (t, z) in C order is already x-fastest storage, so finalize needs no reorder
            self._dx = np.zeros((n_t, grid.nz))
            self._dy = np.zeros((n_t, grid.nz))
            self._nz, self._nt = grid.nz, n_t
        t = frame.frame_index - self._start
        self._dx[t] = frame.positions[self._xi].astype(np.float64) - self._ref[0]
        self._dy[t] = frame.positions[self._xi + 1].astype(np.float64) - self._ref[1]

    def finalize(self):
        shape = (1, 1, self._nz, self._nt)
        dx = make_result("dx", "m", shape, self._dx.ravel())
        self._dx = None
        dy = make_result("dy", "m", shape, self._dy.ravel())
        self._dy = None
        return [dx, dy]


class RmsVelocity(CalculationPlugin):
    """Root-mean-square brick speed per frame."""

    id = "rms_velocity"

    def requirements(self, grid):
        return CalculationRequirements(self.id, (_full(grid, positions=False, velocities=True),))

    def on_pass_start(self, phase):
        self._values = None

    def on_frame(self, phase, frame, grid):
        if self._values is None:
            self._values = np.zeros(grid.total_frames)
            self._sq = np.empty(grid.brick_count)
            self._start = frame.frame_index
        kernels.sq_norms(frame.velocities, self._sq)
        self._values[frame.frame_index - self._start] = math.sqrt(
            math.fsum(self._sq) / self._sq.size
        )

    def finalize(self):
        return [make_result("rms_velocity", "m/s", (1, 1, 1, self._values.size), self._values)]


class NormalizedPeak(CalculationPlugin):
    """Peak displacement divided by its global maximum, in two passes.

    The first pass only finds the global maximum; the second recomputes the
    per-brick peaks and scales them. When nothing moves the output is all
    zeros.
    """

    id = "normalized_peak"

    def requirements(self, grid):
        return CalculationRequirements(self.id, (_full(grid), _full(grid)))

    def on_pass_start(self, phase):
        self._ref = None

    def on_frame(self, phase, frame, grid):
        if self._ref is None:
            self._ref = frame.positions.astype(np.float64)
            self._peak = np.zeros(grid.brick_count)
            self._grid = grid
        kernels.peak_update(frame.positions, self._ref, self._peak)

    def on_pass_end(self, phase):
        if phase == 0:
            self._dmax = float(self._peak.max())
            self._peak = None

    def finalize(self):
        g = self._grid
        if self._dmax > 0:
            values = self._peak / self._dmax
        else:
            values = np.zeros_like(self._peak)
        return [make_result("normalized_peak", "1", (g.nx, g.ny, g.nz, 1), values)]


class FaultInjection(CalculationPlugin):
    """Diagnostic calculation that raises on a chosen frame."""

    id = "fault_injection"

    def __init__(self, fail_at_frame: int = 0, id: str | None = None):
        super().__init__(id)
        self.fail_at_frame = int(fail_at_frame)

    def config(self):
        return {"fail_at_frame": self.fail_at_frame}

    def on_frame(self, phase, frame, grid):
        if frame.frame_index == self.fail_at_frame:
            raise RuntimeError(f"injected failure at frame {frame.frame_index}")


CALCULATIONS = {
    "peak_displacement": PeakDisplacement,
    "channel_distortion": ChannelDistortion,
    "rms_velocity": RmsVelocity,
    "normalized_peak": NormalizedPeak,
    "fault_injection": FaultInjection,
}


class UnknownCalculationError(FramepostError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


def build_calculation(kind: str, calc_id: str, params: dict | None = None) -> CalculationPlugin:
    """Instantiate a built-in calculation by name, or ``package.module:Class``."""
    params = dict(params or {})
    if kind in CALCULATIONS:
        cls = CALCULATIONS[kind]
    elif ":" in kind:
        mod_name, _, attr = kind.partition(":")
        try:
            cls = getattr(importlib.import_module(mod_name), attr)
        except (ImportError, AttributeError) as exc:
            raise UnknownCalculationError(f"cannot load calculation {kind!r}: {exc}") from exc
    else:
        raise UnknownCalculationError(
            f"unknown calculation {kind!r}; built-ins are {', '.join(sorted(CALCULATIONS))}"
        )
    try:
        return cls(id=calc_id, **params)
    except TypeError as exc:
        raise UnknownCalculationError(f"bad parameters for {kind!r}: {exc}") from exc
