# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled propagation kernels.

Mirrors ``_kernels_py`` exactly; the selector in ``kernels`` picks one at import.
"""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def propagate(const double[:, :, ::1] table, const cnp.int32_t[::1] codes,
              const double[::1] vec):
    """Apply ``table[codes[0]]``, then ``table[codes[1]]``, ... to ``vec``."""
    cdef Py_ssize_t dim = vec.shape[0]
    cdef Py_ssize_t n = codes.shape[0]
    cdef Py_ssize_t i, r, c
    cdef int code
    cdef double acc
    out = np.array(vec, dtype=np.float64)
    tmp = np.empty(dim, dtype=np.float64)
    cdef double[::1] cur = out
    cdef double[::1] nxt = tmp
    cdef double[::1] swap
    for i in range(n):
        code = codes[i]
        if code < 0 or code >= table.shape[0]:
            raise IndexError("gate code %d out of range" % code)
        for r in range(dim):
            acc = 0.0
            for c in range(dim):
                acc = acc + table[code, r, c] * cur[c]
            nxt[r] = acc
        swap = cur
        cur = nxt
        nxt = swap
    return np.asarray(cur).copy()


def propagate_many(const double[:, :, ::1] table, const cnp.int32_t[:, ::1] codes,
                   const cnp.int64_t[::1] lengths, const double[::1] vec):
    """Row ``s`` of the result is ``propagate(table, codes[s, :lengths[s]], vec)``."""
    cdef Py_ssize_t dim = vec.shape[0]
    cdef Py_ssize_t nseq = codes.shape[0]
    cdef Py_ssize_t s, i, r, c
    cdef int code
    cdef double acc
    result = np.empty((nseq, dim), dtype=np.float64)
    cdef double[:, ::1] res = result
    cdef double[::1] cur = np.empty(dim, dtype=np.float64)
    cdef double[::1] nxt = np.empty(dim, dtype=np.float64)
    cdef double[::1] swap
    for s in range(nseq):
        if lengths[s] > codes.shape[1]:
            raise IndexError("sequence length exceeds code matrix width")
        for r in range(dim):
            cur[r] = vec[r]
        for i in range(lengths[s]):
            code = codes[s, i]
            if code < 0 or code >= table.shape[0]:
                raise IndexError("gate code %d out of range" % code)
            for r in range(dim):
                acc = 0.0
                for c in range(dim):
                    acc = acc + table[code, r, c] * cur[c]
                nxt[r] = acc
            swap = cur
            cur = nxt
            nxt = swap
        for r in range(dim):
            res[s, r] = cur[r]
    return result
