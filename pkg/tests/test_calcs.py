import random

import numpy as np
import pytest

from framepost.calcs import (
    ChannelDistortion,
    NormalizedPeak,
    PeakDisplacement,
    RmsVelocity,
    UnknownCalculationError,
    build_calculation,
)
from framepost.engine import Engine
from framepost.errors import InvalidSelectorError
from framepost.framearc import FileHeader, FrameRecord, validate_manifest, write_file

from conftest import load_all
from oracles import (
    closed_dx,
    closed_peak,
    closed_rms,
    naive_channel,
    naive_normalized,
    naive_peak,
    naive_rms,
    random_closed_form_config,
)


def run(m, *plugins, threads=1):
    eng = Engine(threads)
    for p in plugins:
        eng.register(p)
    res = eng.run(m, created_utc="2024-01-01T00:00:00Z")
    assert res.ok, res.failures
    return res.results


def _manifest(tmp_path, pos_frames, vel_frames=None):
    """Hand-built single-file dataset: one row per brick."""
    pos_frames = np.asarray(pos_frames, np.float32)
    t, n, _ = pos_frames.shape
    vel_frames = np.zeros_like(pos_frames) if vel_frames is None else np.asarray(vel_frames, np.float32)
    tmp_path.mkdir(parents=True, exist_ok=True)
    p = tmp_path / "d.faf"
    write_file(p, FileHeader(n, 1, 1, t, 0, t, 1.0),
               [FrameRecord(i, float(i), pos_frames[i].ravel(), vel_frames[i].ravel()) for i in range(t)])
    return validate_manifest([p])


def test_three_four_five(tmp_path):
    m = _manifest(tmp_path, [[[0, 0, 0]], [[3, 4, 0]]])
    assert list(run(m, PeakDisplacement())["peak_displacement"][0].values) == [5.0]


def test_rms_arithmetic(tmp_path):
    m = _manifest(tmp_path, [[[0, 0, 0], [1, 0, 0]]], [[[3, 0, 0], [0, 4, 0]]])
    (r,) = run(m, RmsVelocity())["rms_velocity"]
    assert r.values[0] == np.sqrt(12.5) and r.units == "m/s" and r.shape == (1, 1, 1, 1)


def test_static_dataset_all_zero(make_dataset):
    _, m = make_dataset(nx=2, ny=2, nz=3, frames=6, amplitude=0.0)
    res = run(m, PeakDisplacement(), ChannelDistortion(1, 1), RmsVelocity(), NormalizedPeak())
    for arrays in res.values():
        for a in arrays:
            assert not a.values.any()


def test_selector_outside_grid(small_dataset):
    cfg, m = small_dataset
    eng = Engine()
    eng.register(ChannelDistortion(cfg.nx, 0))
    with pytest.raises(InvalidSelectorError):
        eng.run(m)


def test_shapes_and_units(small_dataset):
    cfg, m = small_dataset
    res = run(m, PeakDisplacement(), ChannelDistortion(1, 2), RmsVelocity(), NormalizedPeak())
    g = (cfg.nx, cfg.ny, cfg.nz)
    assert res["peak_displacement"][0].shape == (*g, 1)
    dx, dy = res["channel_distortion"]
    assert (dx.name, dy.name, dx.shape) == ("dx", "dy", (1, 1, cfg.nz, cfg.frames))
    assert res["rms_velocity"][0].shape == (1, 1, 1, cfg.frames)
    assert res["normalized_peak"][0].units == "1"


def _check_naive(cfg, m, sel):
    pos, vel = load_all(m)
    res = run(m, PeakDisplacement(), ChannelDistortion(*sel), RmsVelocity(), NormalizedPeak())
    assert list(res["peak_displacement"][0].values) == list(naive_peak(pos))
    assert list(res["rms_velocity"][0].values) == list(naive_rms(vel))
    assert list(res["normalized_peak"][0].values) == list(naive_normalized(pos))
    ndx, ndy = naive_channel(pos, m.grid, *sel)
    dx, dy = res["channel_distortion"]
    assert np.array_equal(dx.array[0, 0], ndx) and np.array_equal(dy.array[0, 0], ndy)
    return res


@pytest.mark.parametrize("seed", range(6))
def test_matches_naive_recomputation(make_dataset, backend, seed):
    rng = random.Random(seed)
    cfg, m = make_dataset(
        frames_per_file=rng.randint(1, 9), nx=rng.randint(1, 4), ny=rng.randint(1, 4),
        nz=rng.randint(1, 5), frames=rng.randint(1, 25), dt=rng.uniform(0.005, 0.1),
        amplitude=rng.uniform(0, 2), frequency=rng.uniform(0.2, 3), noise_sigma=rng.choice([0, 1e-3, 0.1]),
        seed=seed,
    )
    _check_naive(cfg, m, (rng.randrange(cfg.nx), rng.randrange(cfg.ny)))


def _ulp32(x):
    return float(np.spacing(np.float32(x)))


@pytest.mark.parametrize("seed", range(6))
def test_matches_closed_form(make_dataset, seed):
    cfg = random_closed_form_config(random.Random(seed))
    _, m = make_dataset(frames_per_file=5, **cfg.__dict__)
    res = run(m, PeakDisplacement(), ChannelDistortion(cfg.nx - 1, 0), RmsVelocity(), NormalizedPeak())
    np.testing.assert_allclose(res["peak_displacement"][0].values, closed_peak(cfg), rtol=1e-6, atol=0)
    np.testing.assert_allclose(res["normalized_peak"][0].values, closed_peak(cfg) / cfg.amplitude,
                               rtol=1e-6, atol=0)
    # rms: float32 velocities carry ~6e-8 relative error; near cos = 0 the value itself is tiny
    np.testing.assert_allclose(res["rms_velocity"][0].values, closed_rms(cfg), rtol=1e-6, atol=1e-12)
    dx = res["channel_distortion"][0].array[0, 0]
    np.testing.assert_allclose(dx, closed_dx(cfg), rtol=0, atol=2 * _ulp32(cfg.nx - 1 + cfg.amplitude))


def test_top_layer_attains_one(make_dataset):
    cfg, m = make_dataset(nx=2, ny=2, nz=4, frames=20, dt=0.05, amplitude=0.5, frequency=1.0)
    v = run(m, NormalizedPeak())["normalized_peak"][0].array[..., 0]
    assert np.all(v[:, :, -1] == 1.0)
    assert np.all(v[:, :, :-1] < 1.0) and v.min() >= 0.0


def test_peak_is_translation_invariant(tmp_path):
    rng = np.random.default_rng(0)
    # integer-valued motion keeps every float32 subtraction exact under the shift
    pos = rng.integers(-50, 50, size=(6, 5, 3)).astype(np.float64)
    a = run(_manifest(tmp_path / "a", pos), PeakDisplacement())
    b = run(_manifest(tmp_path / "b", pos + np.array([1024.0, -512.0, 7.0])), PeakDisplacement())
    assert a == b


def test_rms_is_permutation_invariant(tmp_path):
    rng = np.random.default_rng(1)
    vel = rng.normal(size=(4, 9, 3))
    pos = np.zeros_like(vel)
    perm = rng.permutation(9)
    a = run(_manifest(tmp_path / "a", pos, vel), RmsVelocity())["rms_velocity"][0]
    b = run(_manifest(tmp_path / "b", pos, vel[:, perm]), RmsVelocity())["rms_velocity"][0]
    assert a.values.tobytes() == b.values.tobytes()


def test_normalized_argmax_matches_peak(make_dataset):
    _, m = make_dataset(nx=3, ny=2, nz=2, frames=15, noise_sigma=0.2, seed=8)
    res = run(m, PeakDisplacement(), NormalizedPeak())
    peak, norm = res["peak_displacement"][0].values, res["normalized_peak"][0].values
    assert set(np.flatnonzero(peak == peak.max())) == set(np.flatnonzero(norm == 1.0))
    assert list(norm) == list(peak / peak.max())


def test_build_calculation():
    assert isinstance(build_calculation("rms_velocity", "r"), RmsVelocity)
    c = build_calculation("channel_distortion", "c", {"ix": "2", "iy": 1})
    assert (c.id, c.ix, c.iy) == ("c", 2, 1)
    assert isinstance(build_calculation("framepost.calcs:PeakDisplacement", "p"), PeakDisplacement)
    for kind in ("nope", "framepost.calcs:Nope"):
        with pytest.raises(UnknownCalculationError):
            build_calculation(kind, "x")
    with pytest.raises(UnknownCalculationError):
        build_calculation("rms_velocity", "x", {"bogus": 1})
