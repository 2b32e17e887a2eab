# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernels for the gated-attention aggregator.

Mirrors ``pure.py``; plain C loops keep the per-bag training step cheap
without pulling in BLAS. Results agree with the numpy backend up to
floating-point summation order.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log, tanh

cnp.import_array()

BACKEND = "cython"

KIND_CLASSIFICATION = 0
KIND_REGRESSION = 1


cdef void _forward_core(double[:, ::1] V, double[:, ::1] U, double[::1] w,
                        double[:, ::1] W_head, double[::1] b_head,
                        double[:, ::1] H,
                        double[:, ::1] T, double[:, ::1] S,
                        double[::1] att, double[::1] z, double[::1] out) noexcept nogil:
    cdef Py_ssize_t n = H.shape[0], d = H.shape[1]
    cdef Py_ssize_t h = V.shape[0], c = W_head.shape[0]
    cdef Py_ssize_t i, j, k
    cdef double a, b, s, smax, esum

    for i in range(n):
        for j in range(h):
            a = 0.0
            b = 0.0
            for k in range(d):
                a += V[j, k] * H[i, k]
                b += U[j, k] * H[i, k]
            T[i, j] = tanh(a)
            S[i, j] = 1.0 / (1.0 + exp(-b))

    smax = -1e308
    for i in range(n):
        s = 0.0
        for j in range(h):
            s += w[j] * T[i, j] * S[i, j]
        att[i] = s
        if s > smax:
            smax = s
    esum = 0.0
    for i in range(n):
        att[i] = exp(att[i] - smax)
        esum += att[i]
    for i in range(n):
        att[i] /= esum

    for k in range(d):
        s = 0.0
        for i in range(n):
            s += att[i] * H[i, k]
        z[k] = s
    for j in range(c):
        s = b_head[j]
        for k in range(d):
            s += W_head[j, k] * z[k]
        out[j] = s


def gma_forward(double[:, ::1] V, double[:, ::1] U, double[::1] w,
                double[:, ::1] W_head, double[::1] b_head, double[:, ::1] H):
    cdef Py_ssize_t n = H.shape[0], d = H.shape[1]
    cdef Py_ssize_t hh = V.shape[0], c = W_head.shape[0]
    T = np.empty((n, hh)); S = np.empty((n, hh))
    att = np.empty(n); z = np.empty(d); out = np.empty(c)
    _forward_core(V, U, w, W_head, b_head, H, T, S, att, z, out)
    return att, z, out


def gma_value_and_grad(double[:, ::1] V, double[:, ::1] U, double[::1] w,
                       double[:, ::1] W_head, double[::1] b_head,
                       double[:, ::1] H, target, int kind):
    cdef Py_ssize_t n = H.shape[0], d = H.shape[1]
    cdef Py_ssize_t h = V.shape[0], c = W_head.shape[0]
    cdef Py_ssize_t i, j, k
    cdef double loss, s, omax, lse, r, dot
    cdef int y
    cdef double tgt = 0.0

    T_a = np.empty((n, h)); S_a = np.empty((n, h))
    att_a = np.empty(n); z_a = np.empty(d); out_a = np.empty(c)
    dV_a = np.zeros((h, d)); dU_a = np.zeros((h, d)); dw_a = np.zeros(h)
    dWh_a = np.empty((c, d)); dbh_a = np.empty(c)
    dout_a = np.empty(c); dz_a = np.empty(d); dscore_a = np.empty(n)

    cdef double[:, ::1] T = T_a, S = S_a, dV = dV_a, dU = dU_a, dWh = dWh_a
    cdef double[::1] att = att_a, z = z_a, out = out_a
    cdef double[::1] dout = dout_a, dbh = dbh_a, dz = dz_a, dscore = dscore_a
    cdef double[::1] dw = dw_a
    cdef double dg, da, db, ts

    if kind == 0:
        y = int(target)
    else:
        tgt = float(target)

    with nogil:
        _forward_core(V, U, w, W_head, b_head, H, T, S, att, z, out)

        if kind == 0:
            omax = out[0]
            for j in range(1, c):
                if out[j] > omax:
                    omax = out[j]
            s = 0.0
            for j in range(c):
                s += exp(out[j] - omax)
            lse = log(s)
            loss = lse - (out[y] - omax)
            for j in range(c):
                dout[j] = exp(out[j] - omax - lse)
            dout[y] -= 1.0
        else:
            r = out[0] - tgt
            loss = 0.5 * r * r
            dout[0] = r

        # head
        for j in range(c):
            dbh[j] = dout[j]
            for k in range(d):
                dWh[j, k] = dout[j] * z[k]
        for k in range(d):
            s = 0.0
            for j in range(c):
                s += W_head[j, k] * dout[j]
            dz[k] = s

        # attention softmax
        dot = 0.0
        for i in range(n):
            s = 0.0
            for k in range(d):
                s += H[i, k] * dz[k]
            dscore[i] = s            # datt for now
            dot += att[i] * s
        for i in range(n):
            dscore[i] = att[i] * (dscore[i] - dot)

        # gate branches
        for i in range(n):
            for j in range(h):
                ts = T[i, j] * S[i, j]
                dw[j] += dscore[i] * ts
                dg = dscore[i] * w[j]
                da = dg * S[i, j] * (1.0 - T[i, j] * T[i, j])
                db = dg * T[i, j] * S[i, j] * (1.0 - S[i, j])
                for k in range(d):
                    dV[j, k] += da * H[i, k]
                    dU[j, k] += db * H[i, k]

    return loss, out_a, dV_a, dU_a, dw_a, dWh_a, dbh_a
