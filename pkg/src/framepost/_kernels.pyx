# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled per-frame kernels. ``_kernels_py`` holds the numpy equivalents;
both must produce bit-identical results."""
from libc.math cimport sqrt
from libc.stdint cimport uint64_t

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL


def peak_update(const float[::1] pos, const double[::1] ref, double[::1] peak):
    cdef Py_ssize_t n = peak.shape[0]
    cdef Py_ssize_t b, k
    cdef double dx, dy, dz, d
    if pos.shape[0] != 3 * n or ref.shape[0] != 3 * n:
        raise ValueError("length mismatch between positions, reference and peak")
    with nogil:
        for b in range(n):
            k = 3 * b
            dx = <double>pos[k] - ref[k]
            dy = <double>pos[k + 1] - ref[k + 1]
            dz = <double>pos[k + 2] - ref[k + 2]
            d = sqrt((dx * dx + dy * dy) + dz * dz)
            if d > peak[b]:
                peak[b] = d


def sq_norms(const float[::1] vec, double[::1] out):
    cdef Py_ssize_t n = out.shape[0]
    cdef Py_ssize_t b, k
    cdef double x, y, z
    if vec.shape[0] != 3 * n:
        raise ValueError("length mismatch between vectors and output")
    with nogil:
        for b in range(n):
            k = 3 * b
            x = vec[k]
            y = vec[k + 1]
            z = vec[k + 2]
            out[b] = (x * x + y * y) + z * z


def splitmix64(uint64_t seed, uint64_t start, uint64_t[::1] out):
    cdef Py_ssize_t i
    cdef uint64_t z
    with nogil:
        for i in range(out.shape[0]):
            z = seed + (start + <uint64_t>i + 1) * GOLDEN
            z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
            z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
            out[i] = z ^ (z >> 31)
