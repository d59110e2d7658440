# cython: language_level=3
"""Compiled hot loops: selective scan (forward/backward) and farthest point sampling."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp

cnp.import_array()


def scan_forward(const double[:, :, ::1] u,
                 const double[:, :, ::1] delta,
                 const double[:, ::1] A,
                 const double[:, :, ::1] Bm,
                 const double[:, :, ::1] C,
                 const double[::1] skip,
                 bint save_states,
                 decay=None):
    """``decay`` optionally holds precomputed exp(delta*A) of shape (batch, L, Din, S)."""
    cdef Py_ssize_t nb = u.shape[0], L = u.shape[1], D = u.shape[2], S = A.shape[1]
    cdef Py_ssize_t b, t, d, s
    cdef double a, uu, acc, h, dab
    cdef bint have_decay = decay is not None
    cdef const double[:, :, :, ::1] dec
    if have_decay:
        dec = decay
    cdef long bad = -1
    y_arr = np.empty((nb, L, D), dtype=np.float64)
    cdef double[:, :, ::1] y = y_arr
    cdef double[:, :, :, ::1] hs
    hs_arr = None
    if save_states:
        hs_arr = np.empty((nb, L, D, S), dtype=np.float64)
        hs = hs_arr
    state_arr = np.zeros(S, dtype=np.float64)
    cdef double[::1] state = state_arr

    with nogil:
        for b in range(nb):
            for d in range(D):
                for s in range(S):
                    state[s] = 0.0
                for t in range(L):
                    a = delta[b, t, d]
                    uu = u[b, t, d]
                    acc = 0.0
                    for s in range(S):
                        if have_decay:
                            dab = dec[b, t, d, s]
                        else:
                            dab = exp(a * A[d, s])
                        h = dab * state[s] + a * Bm[b, t, s] * uu
                        state[s] = h
                        acc = acc + C[b, t, s] * h
                        if h - h != 0.0 and (bad < 0 or t < bad):
                            bad = t
                    if save_states:
                        for s in range(S):
                            hs[b, t, d, s] = state[s]
                    y[b, t, d] = acc + skip[d] * uu
    return y_arr, hs_arr, bad


def scan_backward(const double[:, :, ::1] gy,
                  const double[:, :, ::1] u,
                  const double[:, :, ::1] delta,
                  const double[:, ::1] A,
                  const double[:, :, ::1] Bm,
                  const double[:, :, ::1] C,
                  const double[::1] skip,
                  const double[:, :, :, ::1] hs,
                  decay=None):
    cdef Py_ssize_t nb = u.shape[0], L = u.shape[1], D = u.shape[2], S = A.shape[1]
    cdef Py_ssize_t b, t, d, s
    cdef double a, uu, g, adj, hprev, dab, gdab, ddel, duu
    du_arr = np.zeros((nb, L, D), dtype=np.float64)
    ddelta_arr = np.zeros((nb, L, D), dtype=np.float64)
    dA_arr = np.zeros((D, S), dtype=np.float64)
    dB_arr = np.zeros((nb, L, S), dtype=np.float64)
    dC_arr = np.zeros((nb, L, S), dtype=np.float64)
    dskip_arr = np.zeros(D, dtype=np.float64)
    carry_arr = np.zeros(S, dtype=np.float64)
    cdef double[:, :, ::1] du = du_arr
    cdef double[:, :, ::1] ddelta = ddelta_arr
    cdef double[:, ::1] dA = dA_arr
    cdef double[:, :, ::1] dB = dB_arr
    cdef double[:, :, ::1] dC = dC_arr
    cdef double[::1] dskip = dskip_arr
    cdef double[::1] carry = carry_arr
    cdef bint have_decay = decay is not None
    cdef const double[:, :, :, ::1] dec
    if have_decay:
        dec = decay

    with nogil:
        for b in range(nb):
            for d in range(D):
                for s in range(S):
                    carry[s] = 0.0
                for t in range(L - 1, -1, -1):
                    a = delta[b, t, d]
                    uu = u[b, t, d]
                    g = gy[b, t, d]
                    ddel = 0.0
                    duu = 0.0
                    for s in range(S):
                        adj = C[b, t, s] * g + carry[s]
                        dC[b, t, s] += g * hs[b, t, d, s]
                        if t > 0:
                            hprev = hs[b, t - 1, d, s]
                        else:
                            hprev = 0.0
                        if have_decay:
                            dab = dec[b, t, d, s]
                        else:
                            dab = exp(a * A[d, s])
                        gdab = adj * hprev * dab
                        ddel = ddel + gdab * A[d, s] + adj * Bm[b, t, s] * uu
                        dA[d, s] += gdab * a
                        dB[b, t, s] += adj * a * uu
                        duu = duu + adj * a * Bm[b, t, s]
                        carry[s] = adj * dab
                    ddelta[b, t, d] = ddel
                    du[b, t, d] = duu + skip[d] * g
                    dskip[d] += g * uu
    return du_arr, ddelta_arr, dA_arr, dB_arr, dC_arr, dskip_arr


def fps(const double[:, ::1] points, Py_ssize_t n_samples, Py_ssize_t seed_index):
    cdef Py_ssize_t n = points.shape[0]
    cdef Py_ssize_t i, j, cur = seed_index, best
    cdef double dx, dy, dz, dist, best_d
    out_arr = np.empty(n_samples, dtype=np.int64)
    mind_arr = np.full(n, np.inf, dtype=np.float64)
    cdef long long[::1] out = out_arr
    cdef double[::1] mind = mind_arr
    with nogil:
        for i in range(n_samples):
            out[i] = cur
            best = -1
            best_d = -1.0
            for j in range(n):
                dx = points[j, 0] - points[cur, 0]
                dy = points[j, 1] - points[cur, 1]
                dz = points[j, 2] - points[cur, 2]
                dist = dx * dx + dy * dy + dz * dz
                if dist < mind[j]:
                    mind[j] = dist
                if mind[j] > best_d:
                    best_d = mind[j]
                    best = j
            cur = best
    return out_arr
