# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled lane of the draw-stream scheme.

Single pass over the Philox bit stream, no intermediate arrays.  Shares the
cephes ``ndtri`` implementation with the numpy lane through scipy's Cython
API, so both lanes emit byte-identical floats.
"""

from cpython.pycapsule cimport PyCapsule_GetPointer, PyCapsule_IsValid
from numpy.random cimport bitgen_t
from scipy.special.cython_special cimport ndtri

import numpy as np
from numpy.random import Philox

cdef double _INV53 = 2.0 ** -53
cdef const char *_CAPSULE = "BitGenerator"


cdef bitgen_t *_acquire(object bit_generator) except NULL:
    capsule = bit_generator.capsule
    if not PyCapsule_IsValid(capsule, _CAPSULE):
        raise ValueError("invalid BitGenerator capsule")
    return <bitgen_t *> PyCapsule_GetPointer(capsule, _CAPSULE)


cdef inline double _word_to_normal(unsigned long long w) noexcept nogil:
    return ndtri(((<double> (w >> 11)) + 0.5) * _INV53)


def normal_rows_at(key, Py_ssize_t start, Py_ssize_t m, Py_ssize_t n):
    cdef Py_ssize_t b = (n + 3) // 4
    cdef Py_ssize_t pad = 4 * b - n
    out = np.empty((m, n), dtype=np.float64)
    cdef double[:, ::1] o = out
    bg = Philox(key=key, counter=start * b)
    cdef bitgen_t *rng = _acquire(bg)
    cdef Py_ssize_t i, t
    with bg.lock, nogil:
        for i in range(m):
            for t in range(n):
                o[i, t] = _word_to_normal(rng.next_uint64(rng.state))
            for t in range(pad):
                rng.next_uint64(rng.state)
    return out


def normal_rows(key, Py_ssize_t m, Py_ssize_t n):
    return normal_rows_at(key, 0, m, n)


def normal_mean(key, Py_ssize_t m, Py_ssize_t n):
    cdef Py_ssize_t b = (n + 3) // 4
    cdef Py_ssize_t pad = 4 * b - n
    acc = np.zeros(n, dtype=np.float64)
    cdef double[::1] a = acc
    bg = Philox(key=key)
    cdef bitgen_t *rng = _acquire(bg)
    cdef Py_ssize_t i, t
    with bg.lock, nogil:
        for i in range(m):
            for t in range(n):
                a[t] += _word_to_normal(rng.next_uint64(rng.state))
            for t in range(pad):
                rng.next_uint64(rng.state)
    # True division, not reciprocal multiply: must round like the numpy
    # lane's ``acc / m``.
    for t in range(n):
        a[t] /= (<double> m)
    return acc


def uniform_indices(key, Py_ssize_t m, Py_ssize_t n_choices):
    out = np.empty(m, dtype=np.int64)
    cdef long long[::1] o = out
    bg = Philox(key=key)
    cdef bitgen_t *rng = _acquire(bg)
    cdef Py_ssize_t i
    cdef double v
    cdef long long idx
    with bg.lock, nogil:
        for i in range(m):
            v = (<double> (rng.next_uint64(rng.state) >> 11)) * _INV53
            idx = <long long> (v * n_choices)
            if idx > n_choices - 1:
                idx = n_choices - 1
            o[i] = idx
    return out
