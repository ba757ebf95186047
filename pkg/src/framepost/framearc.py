"""Reader and writer for ``.faf`` frame archives.

Layout (all little-endian)::

    header  (84 bytes)
        magic          8s   b"FRAMEARC"
        version        u32  1
        nx, ny, nz     3 x u32
        total_frames   u64
        first_frame    u64
        frame_count    u64
        dt             f64
        reserved       28 zero bytes
    frame_count records of 16 + 24*N bytes each
        frame_index    u64
        time           f64
        positions      3N x f32   (brick-major, x/y/z)
        velocities     3N x f32

A dataset is a set of files whose frame ranges tile ``[0, total_frames)``.
Records have a fixed size so any frame is reachable with a single seek.
"""
from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import (
    CorruptionError,
    FormatConstructionError,
    InvalidWindowError,
    ManifestInvalidError,
    MixedDatasetError,
    NotAFrameArcError,
    TruncationError,
    UnsupportedVersionError,
)
from .model import FrameView, GridMeta

MAGIC = b"FRAMEARC"
VERSION = 1
EXTENSION = ".faf"
_HEADER = struct.Struct("<8sIIIIQQQd28x")
_RECORD_HEAD = struct.Struct("<Qd")
HEADER_SIZE = _HEADER.size
assert HEADER_SIZE == 84


def record_size(brick_count: int) -> int:
    return _RECORD_HEAD.size + 24 * brick_count


@dataclass(frozen=True)
class FileHeader:
    nx: int
    ny: int
    nz: int
    total_frames: int
    first_frame: int
    frame_count: int
    dt: float
    version: int = VERSION
    magic: bytes = MAGIC

    @property
    def brick_count(self) -> int:
        return self.nx * self.ny * self.nz

    @property
    def record_size(self) -> int:
        return record_size(self.brick_count)

    @property
    def stop_frame(self) -> int:
        return self.first_frame + self.frame_count

    @property
    def file_size(self) -> int:
        return HEADER_SIZE + self.frame_count * self.record_size

    def grid(self) -> GridMeta:
        return GridMeta(self.nx, self.ny, self.nz, self.total_frames, self.dt)

    def pack(self) -> bytes:
        return _HEADER.pack(
            self.magic, self.version, self.nx, self.ny, self.nz,
            self.total_frames, self.first_frame, self.frame_count, self.dt,
        )

    @classmethod
    def unpack(cls, raw: bytes, path="<bytes>") -> "FileHeader":
        if len(raw) < HEADER_SIZE:
            raise TruncationError(path, HEADER_SIZE, len(raw))
        magic, version, nx, ny, nz, total, first, count, dt = _HEADER.unpack_from(raw)
        if magic != MAGIC:
            raise NotAFrameArcError(f"{path}: bad magic {magic!r}, not a frame archive")
        if version != VERSION:
            raise UnsupportedVersionError(f"{path}: unsupported format version {version}")
        if min(nx, ny, nz) < 1 or count < 1 or first + count > total or not dt > 0:
            raise CorruptionError(
                f"{path}: inconsistent header (grid {nx}x{ny}x{nz}, frames "
                f"[{first}, {first + count}) of {total}, dt {dt})"
            )
        return cls(nx, ny, nz, total, first, count, dt, version, magic)


@dataclass(frozen=True)
class FrameRecord:
    frame_index: int
    time: float
    positions: np.ndarray
    velocities: np.ndarray


@dataclass(frozen=True)
class ArcFile:
    path: Path
    header: FileHeader


@dataclass(frozen=True)
class DatasetManifest:
    files: tuple[ArcFile, ...]
    grid: GridMeta

    @property
    def record_size(self) -> int:
        return record_size(self.grid.brick_count)

    @property
    def paths(self) -> list[Path]:
        return [f.path for f in self.files]


@dataclass
class IOStats:
    """Counters filled in by :func:`iter_frames`."""

    bytes_read: int = 0
    files_opened: int = 0
    frames_decoded: int = 0
    opened: list = field(default_factory=list)


class FrameArcWriter:
    """Streaming writer; records are appended one by one.

    >>> with FrameArcWriter(path, header) as w:     # doctest: +SKIP
    ...     for rec in records:
    ...         w.write(rec)
    """

    def __init__(self, path, header: FileHeader):
        if header.frame_count < 1:
            raise FormatConstructionError("frame_count must be >= 1")
        if header.first_frame + header.frame_count > header.total_frames:
            raise FormatConstructionError(
                f"frames [{header.first_frame}, {header.stop_frame}) exceed "
                f"total_frames {header.total_frames}"
            )
        self.path = Path(path)
        self.header = header
        self._n3 = 3 * header.brick_count
        self._next = header.first_frame
        self._fh = open(self.path, "wb")
        self._fh.write(header.pack())
        self.bytes_written = HEADER_SIZE

    def write(self, rec: FrameRecord) -> None:
        if self._next >= self.header.stop_frame:
            raise FormatConstructionError(
                f"more records than frame_count={self.header.frame_count}"
            )
        if rec.frame_index != self._next:
            raise FormatConstructionError(
                f"expected frame_index {self._next}, got {rec.frame_index}"
            )
        pos = np.ascontiguousarray(rec.positions, dtype="<f4").ravel()
        vel = np.ascontiguousarray(rec.velocities, dtype="<f4").ravel()
        if pos.size != self._n3 or vel.size != self._n3:
            raise FormatConstructionError(
                f"record {rec.frame_index}: expected {self._n3} position and velocity "
                f"values, got {pos.size} and {vel.size}"
            )
        self._fh.write(_RECORD_HEAD.pack(rec.frame_index, rec.time))
        self._fh.write(pos.tobytes())
        self._fh.write(vel.tobytes())
        self._next += 1
        self.bytes_written += self.header.record_size

    def close(self) -> int:
        if self._fh.closed:
            return self.bytes_written
        self._fh.close()
        if self._next != self.header.stop_frame:
            os.unlink(self.path)
            raise FormatConstructionError(
                f"header declares {self.header.frame_count} frames, "
                f"{self._next - self.header.first_frame} written"
            )
        return self.bytes_written

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            self.close()
        else:
            self._fh.close()
        return False


def write_file(path, header: FileHeader, frames: Iterable[FrameRecord]) -> int:
    """Write a complete archive and return its size in bytes."""
    with FrameArcWriter(path, header) as w:
        for rec in frames:
            w.write(rec)
    return w.bytes_written


def read_header(path) -> FileHeader:
    with open(path, "rb") as fh:
        raw = fh.read(HEADER_SIZE)
    return FileHeader.unpack(raw, path)


def _expand(paths: Sequence) -> list[Path]:
    out = []
    for p in paths:
        p = Path(p)
        if p.is_dir():
            out.extend(sorted(p.glob("*" + EXTENSION)))
        else:
            out.append(p)
    return out


def validate_manifest(paths) -> DatasetManifest:
    if isinstance(paths, (str, os.PathLike)):
        paths = [paths]
    files = _expand(paths)
    if not files:
        raise ManifestInvalidError(f"no frame archives found in {list(map(str, paths))}")

    entries = []
    for p in files:
        h = read_header(p)
        size = p.stat().st_size
        if size < h.file_size:
            raise TruncationError(p, h.file_size, size)
        if size > h.file_size:
            raise CorruptionError(f"{p}: {size - h.file_size} trailing bytes after last record")
        entries.append(ArcFile(p, h))

    ref = entries[0].header
    key = lambda h: (h.nx, h.ny, h.nz, h.total_frames, h.dt)
    for e in entries[1:]:
        if key(e.header) != key(ref):
            raise MixedDatasetError(
                f"{e.path} (grid {e.header.nx}x{e.header.ny}x{e.header.nz}, "
                f"{e.header.total_frames} frames, dt {e.header.dt}) does not match "
                f"{entries[0].path} (grid {ref.nx}x{ref.ny}x{ref.nz}, "
                f"{ref.total_frames} frames, dt {ref.dt})"
            )

    entries.sort(key=lambda e: (e.header.first_frame, str(e.path)))
    expected = 0
    for e in entries:
        first = e.header.first_frame
        if first > expected:
            raise ManifestInvalidError(f"gap in frame coverage at frame {expected} ({e.path} starts at {first})")
        if first < expected:
            raise ManifestInvalidError(f"overlapping frame coverage at frame {first} ({e.path})")
        expected = e.header.stop_frame
    if expected != ref.total_frames:
        raise ManifestInvalidError(
            f"gap in frame coverage at frame {expected} (total_frames is {ref.total_frames})"
        )
    return DatasetManifest(tuple(entries), ref.grid())


def normalize_windows(window, total_frames: int) -> list[tuple[int, int]]:
    """Merge one ``(start, stop)`` window or a list of them into sorted, disjoint intervals."""
    if len(window) == 2 and all(isinstance(v, (int, np.integer)) for v in window):
        window = [window]
    spans = []
    for start, stop in window:
        start, stop = int(start), int(stop)
        if not 0 <= start <= stop <= total_frames:
            raise InvalidWindowError(f"window [{start}, {stop}) outside [0, {total_frames})")
        if start < stop:
            spans.append((start, stop))
    spans.sort()
    merged: list[tuple[int, int]] = []
    for start, stop in spans:
        if merged and start <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], stop))
        else:
            merged.append((start, stop))
    return merged


def decode_record(raw: bytes, brick_count: int) -> FrameView:
    frame_index, time = _RECORD_HEAD.unpack_from(raw)
    n3 = 3 * brick_count
    pos = np.frombuffer(raw, dtype="<f4", count=n3, offset=_RECORD_HEAD.size)
    vel = np.frombuffer(raw, dtype="<f4", count=n3, offset=_RECORD_HEAD.size + 4 * n3)
    return FrameView(frame_index, time, pos, vel)


def iter_frames(
    manifest: DatasetManifest, window=None, stats: IOStats | None = None
) -> Iterator[FrameView]:
    """Yield frames of ``window`` in increasing order, one record in memory at a time.

    ``window`` is a half-open ``(start, stop)`` pair or a list of them; the
    default is the whole dataset. Files not touching the window are never
    opened; inside a file, unneeded records are skipped with a seek.
    """
    grid = manifest.grid
    if window is None:
        window = (0, grid.total_frames)
    spans = normalize_windows(window, grid.total_frames)
    if stats is None:
        stats = IOStats()
    rs = manifest.record_size
    n = grid.brick_count

    for arc in manifest.files:
        h = arc.header
        parts = [
            (max(a, h.first_frame), min(b, h.stop_frame))
            for a, b in spans
            if a < h.stop_frame and b > h.first_frame
        ]
        if not parts:
            continue
        with open(arc.path, "rb", buffering=0) as fh:
            stats.files_opened += 1
            stats.opened.append(arc.path)
            raw = fh.read(HEADER_SIZE)
            stats.bytes_read += len(raw)
            if FileHeader.unpack(raw, arc.path) != h:
                raise CorruptionError(f"{arc.path}: header changed since manifest validation")
            for lo, hi in parts:
                fh.seek(HEADER_SIZE + (lo - h.first_frame) * rs)
                for i in range(lo, hi):
                    rec = fh.read(rs)
                    stats.bytes_read += len(rec)
                    if len(rec) != rs:
                        expected = HEADER_SIZE + (i - h.first_frame + 1) * rs
                        raise TruncationError(arc.path, expected, expected - rs + len(rec))
                    frame = decode_record(rec, n)
                    if frame.frame_index != i:
                        raise CorruptionError(
                            f"{arc.path}: record for frame {i} carries frame_index {frame.frame_index}"
                        )
                    stats.frames_decoded += 1
                    yield frame
