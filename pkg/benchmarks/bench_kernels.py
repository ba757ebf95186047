"""Compare the compiled and numpy kernel backends.

    python benchmarks/bench_kernels.py [--bricks 1024 4096] [--repeat 5]

Prints per-call times for each kernel and the wall time of a full
single-pass run (peak, rms, channel) over a generated dataset.
"""
import argparse
import tempfile
import time
import timeit
from pathlib import Path

import numpy as np

from framepost import _kernels_py, kernels
from framepost.calcs import ChannelDistortion, PeakDisplacement, RmsVelocity
from framepost.engine import Engine
from framepost.synth import SynthConfig, generate

try:
    from framepost import _kernels as _kernels_c
except ImportError:
    _kernels_c = None

NAMES = ("peak_update", "sq_norms", "splitmix64")


def use(mod):
    for name in NAMES:
        setattr(kernels, name, getattr(mod, name))


def kernel_times(mod, n, repeat):
    rng = np.random.default_rng(0)
    pos = rng.standard_normal(3 * n).astype(np.float32)
    ref = rng.standard_normal(3 * n)
    peak = np.zeros(n)
    sq = np.empty(n)
    raw = np.empty(6 * n, dtype=np.uint64)
    calls = {
        "peak_update": lambda: mod.peak_update(pos, ref, peak),
        "sq_norms": lambda: mod.sq_norms(pos, sq),
        "splitmix64": lambda: mod.splitmix64(12345, 0, raw),
    }
    out = {}
    for name, fn in calls.items():
        number = max(1, 200_000 // n)
        out[name] = min(timeit.repeat(fn, number=number, repeat=repeat)) / number
    return out


def pipeline_time(mod, manifest, repeat):
    use(mod)
    best = float("inf")
    for _ in range(repeat):
        eng = Engine()
        for p in (PeakDisplacement(), RmsVelocity(), ChannelDistortion(0, 0)):
            eng.register(p)
        t0 = time.perf_counter()
        eng.run(manifest, created_utc="2024-01-01T00:00:00Z")
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--bricks", type=int, nargs="+", default=[64, 1024, 16384])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--frames", type=int, default=2000)
    args = ap.parse_args(argv)

    backends = [("python", _kernels_py)]
    if _kernels_c is None:
        print("compiled backend not built; showing the numpy backend only")
    else:
        backends.append(("cython", _kernels_c))
    original = {name: getattr(kernels, name) for name in NAMES}

    print(f"{'kernel':<12} {'bricks':>7} " + " ".join(f"{b:>12}" for b, _ in backends) + "   speedup")
    for n in args.bricks:
        times = [kernel_times(mod, n, args.repeat) for _, mod in backends]
        for name in NAMES:
            row = [t[name] for t in times]
            ratio = f"{row[0] / row[-1]:8.2f}x" if len(row) > 1 else ""
            print(f"{name:<12} {n:>7} " + " ".join(f"{v * 1e6:10.2f}us" for v in row) + f"  {ratio}")

    with tempfile.TemporaryDirectory() as tmp:
        cfg = SynthConfig(nx=16, ny=16, nz=4, frames=args.frames, noise_sigma=1e-3)
        manifest = generate(cfg, Path(tmp), 250)
        size = sum(p.stat().st_size for p in manifest.paths) / 1e6
        print(f"\nsingle-pass run over {args.frames} frames x {cfg.grid.brick_count} bricks ({size:.1f} MB)")
        for b, mod in backends:
            t = pipeline_time(mod, manifest, args.repeat)
            print(f"  {b:<8} {t:8.3f} s  {size / t:8.1f} MB/s")
    for name, fn in original.items():
        setattr(kernels, name, fn)


if __name__ == "__main__":
    main()
