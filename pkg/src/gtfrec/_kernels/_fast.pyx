# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled edge-product kernels for the normalized incidence operator.

Each edge carries exactly two nonzeros (a user column and an item column),
so the forward product is a gather and the adjoint is a scatter-add.  The
scatter runs sequentially in edge order to keep results deterministic.
"""

import numpy as np

cimport numpy as cnp


def incidence_forward(cnp.intp_t[::1] col_u, cnp.intp_t[::1] col_i,
                      double[::1] w_u, double[::1] w_i,
                      double[:, ::1] M, double[:, ::1] out):
    """out[l, :] = w_u[l] * M[col_u[l], :] + w_i[l] * M[col_i[l], :]"""
    cdef Py_ssize_t n_edges = col_u.shape[0]
    cdef Py_ssize_t d = M.shape[1]
    cdef Py_ssize_t l, j, cu, ci
    cdef double wu, wi
    with nogil:
        for l in range(n_edges):
            cu = col_u[l]
            ci = col_i[l]
            wu = w_u[l]
            wi = w_i[l]
            for j in range(d):
                out[l, j] = wu * M[cu, j] + wi * M[ci, j]


def incidence_adjoint(cnp.intp_t[::1] col_u, cnp.intp_t[::1] col_i,
                      double[::1] w_u, double[::1] w_i,
                      double[:, ::1] Y, double[:, ::1] out):
    """out[col_u[l], :] += w_u[l] * Y[l, :]; out[col_i[l], :] += w_i[l] * Y[l, :]

    ``out`` must be zero-initialized by the caller.
    """
    cdef Py_ssize_t n_edges = col_u.shape[0]
    cdef Py_ssize_t d = Y.shape[1]
    cdef Py_ssize_t l, j, cu, ci
    cdef double wu, wi
    with nogil:
        for l in range(n_edges):
            cu = col_u[l]
            ci = col_i[l]
            wu = w_u[l]
            wi = w_i[l]
            for j in range(d):
                out[cu, j] += wu * Y[l, j]
                out[ci, j] += wi * Y[l, j]
