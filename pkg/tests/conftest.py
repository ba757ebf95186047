import numpy as np
import pytest

from framepost import _kernels_py
from framepost.synth import SynthConfig, generate

try:
    from framepost import _kernels as _kernels_c
except ImportError:  # extension not built
    _kernels_c = None

BACKENDS = [pytest.param(_kernels_py, id="python")]
if _kernels_c is not None:
    BACKENDS.append(pytest.param(_kernels_c, id="cython"))


@pytest.fixture(params=BACKENDS)
def backend(request, monkeypatch):
    """Run a test once per kernel backend by patching the selected module."""
    from framepost import kernels

    mod = request.param
    for name in ("peak_update", "sq_norms", "splitmix64"):
        monkeypatch.setattr(kernels, name, getattr(mod, name))
    return mod


@pytest.fixture
def make_dataset(tmp_path):
    counter = iter(range(10**6))

    def make(frames_per_file=4, **kw):
        cfg = SynthConfig(**kw)
        out = tmp_path / f"ds{next(counter)}"
        return cfg, generate(cfg, out, frames_per_file)

    return make


@pytest.fixture
def small_dataset(make_dataset):
    return make_dataset(
        frames_per_file=4, nx=2, ny=3, nz=4, frames=10, dt=0.05,
        amplitude=0.5, frequency=1.0,
    )


def load_all(manifest):
    """Every frame of a dataset as float64 arrays, shape (T, N, 3): the in-memory oracle input."""
    from framepost.framearc import iter_frames

    pos, vel = [], []
    for f in iter_frames(manifest):
        pos.append(f.positions.astype(np.float64).reshape(-1, 3))
        vel.append(f.velocities.astype(np.float64).reshape(-1, 3))
    return np.array(pos), np.array(vel)
