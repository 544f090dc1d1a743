"""Numpy reference implementation of the wealth-lattice kernels.

Each function performs the same floating-point operations in the same order as the
compiled module, so both produce bit-identical tables.
"""
from __future__ import annotations

import numpy as np


def accumulate_next(v_next, next_state, shift, payoff, probs, rho: int) -> np.ndarray:
    """U[s, a, w] = sum_x p_x (V'[f(s,a,x), clip(w + shift)] - rho * r), summed in x order."""
    S, A, X = next_state.shape
    W = v_next.shape[1]
    w = np.arange(W)
    out = np.zeros((S, A, W))
    for x in range(X):
        p = probs[x]
        if not p > 0:
            continue
        idx = np.clip(w[None, None, :] + shift[:, :, x, None], 0, W - 1)
        vals = v_next[next_state[:, :, x, None], idx]
        if rho:
            vals = vals - payoff[:, :, x, None]
        out = out + p * vals
    return out


def sweep(U, need, allowed, zs, kappa: int, zcost: int, tol: float):
    """Least value over (a, z) per (s, w), first minimiser in (a, z) order."""
    S, A, W = U.shape
    best = np.full((S, W), np.inf)
    act = np.full((S, W), -1, dtype=np.int64)
    zi = np.full((S, W), -1, dtype=np.int64)
    w = np.arange(W)
    for a in range(A):
        ok = allowed[:, a, :].astype(bool)
        lim = need[:, a, :] - tol
        if not kappa:
            k = np.searchsorted(zs, lim, side="left")
            feas = ok & (k < len(zs))
            kk = np.minimum(k, len(zs) - 1)
            val = U[:, a, :]
            if zcost:
                val = zs[kk] + val
            upd = feas & (val < best)
            best = np.where(upd, val, best)
            act[upd] = a
            zi[upd] = kk[upd]
            continue
        for k, z in enumerate(zs):
            feas = ok & (z >= lim)
            if not feas.any():
                continue
            val = U[:, a, np.clip(w - int(z), 0, W - 1)]
            if zcost:
                val = z + val
            upd = feas & (val < best)
            best = np.where(upd, val, best)
            act[upd] = a
            zi[upd] = k
    return best, act, zi
