# cython: language_level=3, boundscheck=False, wraparound=False
"""Compiled equilibrium kernels. Same interface as _kernels_py."""

import numpy as np
cimport numpy as cnp

BACKEND = "cython"

ctypedef cnp.int64_t i64


cdef void _strides(const i64[:] radices, i64[:] out) noexcept:
    cdef Py_ssize_t i, m = radices.shape[0]
    if m == 0:
        return
    out[m - 1] = 1
    for i in range(m - 2, -1, -1):
        out[i] = out[i + 1] * radices[i + 1]


def reach_terminals(child_start, children, node_infoset, radices, Py_ssize_t start):
    cdef const i64[:] cs = np.ascontiguousarray(child_start, dtype=np.int64)
    cdef const i64[:] ch = np.ascontiguousarray(children, dtype=np.int64)
    cdef const i64[:] ni = np.ascontiguousarray(node_infoset, dtype=np.int64)
    cdef const i64[:] rad = np.ascontiguousarray(radices, dtype=np.int64)
    cdef Py_ssize_t m = rad.shape[0]
    cdef i64[:] st = np.zeros(max(m, 1), dtype=np.int64)
    _strides(rad, st)
    cdef Py_ssize_t n = 1, i
    for i in range(m):
        n *= rad[i]
    out = np.empty(n, dtype=np.int64)
    cdef i64[:] o = out
    cdef Py_ssize_t p
    cdef i64 node, iset, a
    for p in range(n):
        node = start
        iset = ni[node]
        while iset >= 0:
            a = (p // st[iset]) % rad[iset]
            node = ch[cs[node] + a]
            iset = ni[node]
        o[p] = node
    return out


def best_response_mask(values, radices, axes):
    cdef const i64[:] v = np.ascontiguousarray(values, dtype=np.int64)
    cdef const i64[:] rad = np.ascontiguousarray(radices, dtype=np.int64)
    cdef const i64[:] ax = np.ascontiguousarray(axes, dtype=np.int64)
    cdef Py_ssize_t m = rad.shape[0], n = v.shape[0], k = ax.shape[0]
    cdef i64[:] st = np.zeros(max(m, 1), dtype=np.int64)
    _strides(rad, st)
    mask = np.ones(n, dtype=np.uint8)
    if k == 0:
        return mask.view(bool)
    best = np.full(n, np.iinfo(np.int64).min, dtype=np.int64)
    cdef i64[:] b = best
    cdef cnp.uint8_t[:] mk = mask
    cdef Py_ssize_t p, j
    cdef i64 key, d
    for p in range(n):
        key = p
        for j in range(k):
            d = (p // st[ax[j]]) % rad[ax[j]]
            key -= d * st[ax[j]]
        if v[p] > b[key]:
            b[key] = v[p]
    for p in range(n):
        key = p
        for j in range(k):
            d = (p // st[ax[j]]) % rad[ax[j]]
            key -= d * st[ax[j]]
        mk[p] = v[p] >= b[key]
    return mask.view(bool)
