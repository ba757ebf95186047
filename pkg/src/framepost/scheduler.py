"""Pass planning.

Every calculation is a sequence of phases, each of which needs one ordered
sweep over a frame window, and phase ``p + 1`` may only start after phase
``p`` has seen its whole window. Running phase ``k`` of every calculation
together in pass ``k`` therefore needs ``max(phase counts)`` passes, which
is also the lower bound set by the longest calculation.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .errors import InvalidWindowError
from .framearc import HEADER_SIZE, DatasetManifest, normalize_windows, record_size
from .model import GridMeta


@dataclass(frozen=True)
class PhaseSpec:
    window: tuple[int, int]
    needs_positions: bool = True
    needs_velocities: bool = False


@dataclass(frozen=True)
class CalculationRequirements:
    calc_id: str
    phases: tuple[PhaseSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "phases", tuple(self.phases))
        if not self.phases:
            raise ValueError(f"calculation {self.calc_id!r} declares no phases")


@dataclass(frozen=True)
class PassFile:
    path: Path
    first_frame: int
    stop_frame: int
    frames_needed: int


@dataclass(frozen=True)
class Pass:
    active: tuple[tuple[str, int], ...]
    files: tuple[PassFile, ...]
    frame_window_union: tuple[tuple[int, int], ...]

    @property
    def frame_count(self) -> int:
        return sum(b - a for a, b in self.frame_window_union)


@dataclass(frozen=True)
class PassPlan:
    passes: tuple[Pass, ...]

    def __len__(self):
        return len(self.passes)


def _overlap(a0, a1, b0, b1) -> int:
    return max(0, min(a1, b1) - max(a0, b0))


def plan_passes(reqs, manifest: DatasetManifest) -> PassPlan:
    total = manifest.grid.total_frames
    for req in reqs:
        for p, phase in enumerate(req.phases):
            start, stop = phase.window
            if not (0 <= start < stop <= total):
                raise InvalidWindowError(
                    f"calculation {req.calc_id!r} phase {p}: window [{start}, {stop}) "
                    f"is empty or outside [0, {total})"
                )

    n_passes = max((len(r.phases) for r in reqs), default=0)
    passes = []
    for k in range(n_passes):
        active = tuple((r.calc_id, k) for r in reqs if len(r.phases) > k)
        windows = [r.phases[k].window for r in reqs if len(r.phases) > k]
        union = tuple(normalize_windows(windows, total))
        files = []
        for arc in manifest.files:
            h = arc.header
            needed = sum(_overlap(a, b, h.first_frame, h.stop_frame) for a, b in union)
            if needed:
                files.append(PassFile(arc.path, h.first_frame, h.stop_frame, needed))
        passes.append(Pass(active, tuple(files), union))
    return PassPlan(tuple(passes))


def planned_bytes(plan: PassPlan, grid: GridMeta) -> int:
    rs = record_size(grid.brick_count)
    return sum(
        HEADER_SIZE + rs * f.frames_needed for p in plan.passes for f in p.files
    )


def format_plan(plan: PassPlan, grid: GridMeta) -> str:
    """Human-readable plan report, as printed by ``run --dry-run``."""
    lines = [f"{len(plan.passes)} pass(es), {planned_bytes(plan, grid)} bytes planned"]
    rs = record_size(grid.brick_count)
    for k, p in enumerate(plan.passes):
        windows = ", ".join(f"[{a}, {b})" for a, b in p.frame_window_union)
        lines.append(f"pass {k}: frames {windows} ({p.frame_count} frames)")
        for calc_id, phase in p.active:
            lines.append(f"  phase {phase} of {calc_id}")
        for f in p.files:
            nbytes = HEADER_SIZE + rs * f.frames_needed
            lines.append(
                f"  file {f.path} [{f.first_frame}, {f.stop_frame}): "
                f"{f.frames_needed} frames, {nbytes} bytes"
            )
    return "\n".join(lines)
