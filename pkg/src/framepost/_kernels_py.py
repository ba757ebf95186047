"""Pure numpy versions of the compiled kernels in ``_kernels.pyx``.

Operation order matches the compiled code exactly, so both backends give
bit-identical output.
"""
import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


def peak_update(pos, ref, peak):
    n = peak.shape[0]
    if pos.shape[0] != 3 * n or ref.shape[0] != 3 * n:
        raise ValueError("length mismatch between positions, reference and peak")
    d = pos.astype(np.float64)
    d -= ref
    d *= d
    s = d[0::3] + d[1::3]
    s += d[2::3]
    np.sqrt(s, out=s)
    np.fmax(peak, s, out=peak)


def sq_norms(vec, out):
    n = out.shape[0]
    if vec.shape[0] != 3 * n:
        raise ValueError("length mismatch between vectors and output")
    v = vec.astype(np.float64)
    v *= v
    np.add(v[0::3], v[1::3], out=out)
    out += v[2::3]


def splitmix64(seed, start, out):
    k = np.arange(1, out.shape[0] + 1, dtype=np.uint64)
    k += np.uint64(start)
    z = k * _GOLDEN
    z += np.uint64(seed)
    z ^= z >> np.uint64(30)
    z *= _MIX1
    z ^= z >> np.uint64(27)
    z *= _MIX2
    z ^= z >> np.uint64(31)
    out[:] = z
