"""Deterministic synthetic datasets with closed-form ground truth.

Brick ``(ix, iy, iz)`` rests at ``(ix, iy, iz)`` and oscillates along x::

    x(t) = ix + A * sin(2*pi*f*t) * (iz + 1) / nz
    vx(t) = A * 2*pi*f * cos(2*pi*f*t) * (iz + 1) / nz

with ``t = frame_index * dt``. Optional Gaussian noise comes from a
counter-based SplitMix64 stream: frame ``k`` uses normals
``[6Nk, 6N(k+1))``, positions first then velocities, each brick-major with
components x, y, z. Normal ``j`` is a Box-Muller cosine draw from uniforms
``2j`` and ``2j + 1``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .framearc import EXTENSION, FileHeader, FrameArcWriter, FrameRecord, validate_manifest
from .model import GridMeta

_2POW53 = 2.0 ** -53


@dataclass(frozen=True)
class SynthConfig:
    nx: int = 4
    ny: int = 4
    nz: int = 8
    frames: int = 64
    dt: float = 0.01
    amplitude: float = 0.05
    frequency: float = 2.0
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.amplitude < 0 or not self.frequency > 0 or self.noise_sigma < 0:
            raise ValueError("need amplitude >= 0, frequency > 0 and noise_sigma >= 0")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must fit in an unsigned 64-bit integer")
        GridMeta(self.nx, self.ny, self.nz, self.frames, self.dt)

    @property
    def grid(self) -> GridMeta:
        return GridMeta(self.nx, self.ny, self.nz, self.frames, self.dt)


def gaussians(seed: int, start: int, count: int) -> np.ndarray:
    """Standard normals ``start .. start+count-1`` of the stream for ``seed``."""
    raw = np.empty(2 * count, dtype=np.uint64)
    kernels.splitmix64(seed, 2 * start, raw)
    bits = raw >> np.uint64(11)
    u1 = (bits[0::2] + np.uint64(1)).astype(np.float64) * _2POW53
    u2 = bits[1::2].astype(np.float64) * _2POW53
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * math.pi * u2)


class Generator:
    """Produces frame records for a config; usable without touching disk."""

    def __init__(self, cfg: SynthConfig):
        self.cfg = cfg
        g = cfg.grid
        coords = g.brick_coords()
        self.rest = coords.astype(np.float64).ravel()
        self.profile = (coords[:, 2] + 1) / cfg.nz
        self.n = g.brick_count

    def displacement(self, frame_index: int) -> np.ndarray:
        cfg = self.cfg
        phase = 2.0 * math.pi * cfg.frequency * (frame_index * cfg.dt)
        return cfg.amplitude * math.sin(phase) * self.profile

    def record(self, frame_index: int) -> FrameRecord:
        cfg = self.cfg
        omega = 2.0 * math.pi * cfg.frequency
        phase = omega * (frame_index * cfg.dt)
        pos = self.rest.copy()
        pos[0::3] += cfg.amplitude * math.sin(phase) * self.profile
        vel = np.zeros(3 * self.n)
        vel[0::3] = cfg.amplitude * omega * math.cos(phase) * self.profile
        if cfg.noise_sigma > 0:
            noise = cfg.noise_sigma * gaussians(cfg.seed, 6 * self.n * frame_index, 6 * self.n)
            pos += noise[: 3 * self.n]
            vel += noise[3 * self.n:]
        return FrameRecord(
            frame_index, frame_index * cfg.dt, pos.astype(np.float32), vel.astype(np.float32)
        )


def generate(cfg: SynthConfig, out_dir, frames_per_file: int):
    if frames_per_file < 1:
        raise ValueError("frames_per_file must be >= 1")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    gen = Generator(cfg)
    paths = []
    for first in range(0, cfg.frames, frames_per_file):
        count = min(frames_per_file, cfg.frames - first)
        header = FileHeader(cfg.nx, cfg.ny, cfg.nz, cfg.frames, first, count, cfg.dt)
        path = out_dir / f"frames_{first:08d}{EXTENSION}"
        with FrameArcWriter(path, header) as w:
            for i in range(first, first + count):
                w.write(gen.record(i))
        paths.append(path)
    return validate_manifest(paths)
