# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled wealth-lattice kernels; semantics mirror gcr._kernels_py exactly."""
import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY

cnp.import_array()


cdef inline Py_ssize_t _clip(Py_ssize_t i, Py_ssize_t n) nogil:
    if i < 0:
        return 0
    if i >= n:
        return n - 1
    return i


def accumulate_next(const double[:, ::1] v_next, const long long[:, :, ::1] next_state,
                    const long long[:, :, ::1] shift, const double[:, :, ::1] payoff,
                    const double[::1] probs, int rho):
    cdef Py_ssize_t S = next_state.shape[0], A = next_state.shape[1], X = next_state.shape[2]
    cdef Py_ssize_t W = v_next.shape[1]
    cdef Py_ssize_t s, a, x, w, f, d
    cdef double p, acc, r
    out = np.empty((S, A, W))
    cdef double[:, :, ::1] U = out
    with nogil:
        for s in range(S):
            for a in range(A):
                for w in range(W):
                    acc = 0.0
                    for x in range(X):
                        p = probs[x]
                        if p > 0:
                            f = next_state[s, a, x]
                            d = shift[s, a, x]
                            if rho:
                                r = payoff[s, a, x]
                                acc = acc + p * (v_next[f, _clip(w + d, W)] - r)
                            else:
                                acc = acc + p * v_next[f, _clip(w + d, W)]
                    U[s, a, w] = acc
    return out


def sweep(const double[:, :, ::1] U, const double[:, :, ::1] need,
          const unsigned char[:, :, ::1] allowed, const double[::1] zs, int kappa, int zcost,
          double tol):
    cdef Py_ssize_t S = U.shape[0], A = U.shape[1], W = U.shape[2], Z = zs.shape[0]
    cdef Py_ssize_t s, w, a, k, iz
    cdef double best, val, z, lim
    best_out = np.empty((S, W))
    act_out = np.full((S, W), -1, dtype=np.int64)
    z_out = np.full((S, W), -1, dtype=np.int64)
    cdef double[:, ::1] B = best_out
    cdef long long[:, ::1] BA = act_out
    cdef long long[:, ::1] BZ = z_out
    with nogil:
        for s in range(S):
            for w in range(W):
                best = INFINITY
                for a in range(A):
                    if not allowed[s, a, w]:
                        continue
                    lim = need[s, a, w] - tol
                    for k in range(Z):
                        z = zs[k]
                        if not z >= lim:
                            continue
                        if kappa:
                            val = U[s, a, _clip(w - <Py_ssize_t>z, W)]
                        else:
                            val = U[s, a, w]
                        if zcost:
                            val = z + val
                        if val < best:
                            best = val
                            BA[s, w] = a
                            BZ[s, w] = k
                        if not kappa:
                            break
                B[s, w] = best
    return best_out, act_out, z_out
