"""Compiled inner loops for the fused selective scan.

The recurrence is sequential over the length axis, which defeats numpy
vectorization; these numba kernels run the whole sweep in one pass with no
temporaries. IEEE semantics are kept (no fastmath) so results agree with
the pure-numpy fallback to rounding error. If numba is unavailable the
caller falls back to the numpy implementation.
"""

import numpy as np

try:
    from numba import njit
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn
        return wrap


@njit(cache=True)
def scan_fwd(abar, dx, bt, ct):
    """abar (L,B,N,D), dx (L,B,D), bt/ct (L,B,N) -> hs (L+1,B,N,D), y (L,B,D)."""
    length, bs, n, d = abar.shape
    hs = np.zeros((length + 1, bs, n, d), dtype=abar.dtype)
    y = np.zeros((length, bs, d), dtype=abar.dtype)
    for t in range(length):
        for b in range(bs):
            for j in range(n):
                b_tn = bt[t, b, j]
                c_tn = ct[t, b, j]
                for i in range(d):
                    h = abar[t, b, j, i] * hs[t, b, j, i] + dx[t, b, i] * b_tn
                    hs[t + 1, b, j, i] = h
                    y[t, b, i] += c_tn * h
    return hs, y


@njit(cache=True)
def scan_bwd(got, abar, hs, dx, bt, ct, at, dt, xt):
    """Reverse sweep producing gradients for x, delta, a, b and c.

    got/dt/xt/dx (L,B,D), abar (L,B,N,D), hs (L+1,B,N,D), bt/ct (L,B,N),
    at (N,D). Returns gx, gdelta (L,B,D), gat (N,D), gb, gc (L,B,N).
    """
    length, bs, n, d = abar.shape
    gh = np.zeros((bs, n, d), dtype=abar.dtype)
    gx = np.zeros((length, bs, d), dtype=abar.dtype)
    gdelta = np.zeros((length, bs, d), dtype=abar.dtype)
    gat = np.zeros((n, d), dtype=abar.dtype)
    gb = np.zeros((length, bs, n), dtype=abar.dtype)
    gc = np.zeros((length, bs, n), dtype=abar.dtype)
    for t in range(length - 1, -1, -1):
        for b in range(bs):
            for j in range(n):
                b_tn = bt[t, b, j]
                c_tn = ct[t, b, j]
                acc_gb = 0.0
                acc_gc = 0.0
                for i in range(d):
                    g = gh[b, j, i] + got[t, b, i] * c_tn
                    acc_gc += hs[t + 1, b, j, i] * got[t, b, i]
                    acc_gb += g * dx[t, b, i]
                    w = g * hs[t, b, j, i] * abar[t, b, j, i]
                    gdelta[t, b, i] += w * at[j, i] + g * b_tn * xt[t, b, i]
                    gat[j, i] += w * dt[t, b, i]
                    gx[t, b, i] += g * b_tn * dt[t, b, i]
                    gh[b, j, i] = g * abar[t, b, j, i]
                gb[t, b, j] = acc_gb
                gc[t, b, j] = acc_gc
    return gx, gdelta, gat, gb, gc
