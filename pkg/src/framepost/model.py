"""Grid, frame and 4-axis result types shared across the package.

Result arrays always carry the axes ``(x, y, z, t)``. Values are stored as a
flat float64 vector in x-fastest order, which is exactly numpy's Fortran
ordering of the 4-d array, so ``values.reshape(shape, order="F")`` gives the
natural view.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import BoundsError, InvalidReductionError, SizeMismatchError

AXES = ("x", "y", "z", "t")


def axis_index(axis: str | int) -> int:
    if isinstance(axis, str):
        try:
            return AXES.index(axis.lower())
        except ValueError:
            raise ValueError(f"unknown axis {axis!r}, expected one of {AXES}") from None
    if not 0 <= axis < 4:
        raise ValueError(f"axis index {axis} outside 0..3")
    return int(axis)


@dataclass(frozen=True)
class GridMeta:
    nx: int
    ny: int
    nz: int
    total_frames: int
    dt: float

    def __post_init__(self):
        for name in ("nx", "ny", "nz", "total_frames"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if not self.dt > 0:
            raise ValueError(f"dt must be > 0, got {self.dt}")

    @property
    def brick_count(self) -> int:
        return self.nx * self.ny * self.nz

    def brick_index(self, ix: int, iy: int, iz: int) -> int:
        return ix + self.nx * (iy + self.ny * iz)

    def brick_coords(self) -> np.ndarray:
        """Integer (ix, iy, iz) for every brick, shape (N, 3), linear-index order."""
        iz, iy, ix = np.meshgrid(
            np.arange(self.nz), np.arange(self.ny), np.arange(self.nx), indexing="ij"
        )
        return np.stack([ix.ravel(), iy.ravel(), iz.ravel()], axis=1)


@dataclass(frozen=True)
class FrameView:
    """One decoded time step.

    ``positions`` and ``velocities`` are read-only float32 vectors of length
    3N laid out brick-major with components x, y, z.
    """

    frame_index: int
    time: float
    positions: np.ndarray
    velocities: np.ndarray

    def positions_xyz(self) -> np.ndarray:
        return self.positions.reshape(-1, 3)

    def velocities_xyz(self) -> np.ndarray:
        return self.velocities.reshape(-1, 3)


@dataclass(frozen=True, eq=False)
class ResultArray:
    name: str
    units: str
    shape: tuple[int, int, int, int]
    collapsed: tuple[bool, bool, bool, bool]
    values: np.ndarray = field(repr=False)

    @property
    def array(self) -> np.ndarray:
        """Read-only 4-d view indexed ``[x, y, z, t]``."""
        return self.values.reshape(self.shape, order="F")

    def __len__(self) -> int:
        return self.values.size

    def __eq__(self, other):
        if not isinstance(other, ResultArray):
            return NotImplemented
        return (
            self.name == other.name
            and self.units == other.units
            and self.shape == other.shape
            and self.collapsed == other.collapsed
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None


def _frozen(values) -> np.ndarray:
    out = np.array(values, dtype=np.float64).ravel()
    out.setflags(write=False)
    return out


def make_result(name: str, units: str, shape: Sequence[int], values) -> ResultArray:
    shape = tuple(int(s) for s in shape)
    if len(shape) != 4:
        raise SizeMismatchError(f"shape must have 4 entries (x, y, z, t), got {len(shape)}")
    if any(s < 1 for s in shape):
        raise SizeMismatchError(f"all shape entries must be >= 1, got {shape}")
    flat = _frozen(values)
    expected = int(np.prod(shape))
    if flat.size != expected:
        raise SizeMismatchError(
            f"shape {shape} holds {expected} values but {flat.size} were given"
        )
    collapsed = tuple(s == 1 for s in shape)
    return ResultArray(name, units, shape, collapsed, flat)


def from_array(name: str, units: str, arr: np.ndarray) -> ResultArray:
    """Build a result from a 4-d array indexed ``[x, y, z, t]``."""
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim != 4:
        raise SizeMismatchError(f"expected a 4-d array, got {arr.ndim} dimensions")
    return make_result(name, units, arr.shape, arr.ravel(order="F"))


def reduce_max(a: ResultArray, axes: Iterable[str | int]) -> ResultArray:
    idx = sorted({axis_index(ax) for ax in axes})
    if not idx:
        raise InvalidReductionError("no axes given to reduce")
    for i in idx:
        if a.collapsed[i]:
            raise InvalidReductionError(f"axis {AXES[i]} of {a.name!r} is already collapsed")
    out = a.array.max(axis=tuple(idx), keepdims=True)
    return from_array(a.name, a.units, out)


def slice_axis(a: ResultArray, axis: str | int, index: int) -> ResultArray:
    i = axis_index(axis)
    extent = a.shape[i]
    if not 0 <= index < extent:
        raise BoundsError(f"index {index} out of range for axis {AXES[i]} with extent {extent}")
    sel = [slice(None)] * 4
    sel[i] = slice(index, index + 1)
    return from_array(a.name, a.units, a.array[tuple(sel)])
