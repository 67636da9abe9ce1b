"""Compiled direct-sum kernels for the disc velocity coefficient."""
from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def btilde_direct(ty, sx, q, skip):
    """``sum_k q_k [1/(conj(y) - conj(s_k)) - s_k/(conj(y) s_k - 1)]`` per target.

    For the source ``skip[t]`` only the singular direct term is dropped; its
    image term is kept.

    Parameters
    ----------
    ty : complex128[:]
        Targets ``y``.
    sx : complex128[:]
        Sources ``s_k`` with ``|s_k| < 1``.
    q : float64[:]
        Source strengths.
    skip : int64[:]
        Source index to leave out for each target, or -1.

    The sum runs in source order with Kahan compensation on the real and
    imaginary parts separately, so results are bit-reproducible.
    """
    nt = ty.shape[0]
    ns = sx.shape[0]
    out = np.empty(nt, dtype=np.complex128)
    for t in range(nt):
        yb = np.conj(ty[t])
        sre = 0.0
        cre = 0.0
        sim = 0.0
        cim = 0.0
        sk = skip[t]
        for k in range(ns):
            s = sx[k]
            image = s / (yb * s - 1.0)
            d1 = yb - np.conj(s)
            if k == sk or d1 == 0:
                # The excluded source keeps its image term.
                term = -q[k] * image
            else:
                term = q[k] * (1.0 / d1 - image)
            yr = term.real - cre
            tr = sre + yr
            cre = (tr - sre) - yr
            sre = tr
            yi = term.imag - cim
            ti = sim + yi
            cim = (ti - sim) - yi
            sim = ti
        out[t] = complex(sre, sim)
    return out


@njit(cache=True)
def boundary_density(ty, sx, q, skip):
    """``sum_k q_k (1 - |s_k|^2) / |y - s_k|^2`` per target, Kahan summed."""
    nt = ty.shape[0]
    ns = sx.shape[0]
    out = np.empty(nt)
    for t in range(nt):
        y = ty[t]
        acc = 0.0
        comp = 0.0
        sk = skip[t]
        for k in range(ns):
            if k == sk:
                continue
            s = sx[k]
            d = y - s
            den = d.real * d.real + d.imag * d.imag
            if den == 0.0:
                continue
            term = q[k] * (1.0 - (s.real * s.real + s.imag * s.imag)) / den
            yk = term - comp
            tk = acc + yk
            comp = (tk - acc) - yk
            acc = tk
        out[t] = acc
    return out


@njit(cache=True)
def stream_direct(ty, sx, q, skip):
    """``sum_k q_k (ln|y - s_k| - ln|1 - conj(s_k) y|)`` per target, with the
    direct term of source ``skip[t]`` dropped."""
    nt = ty.shape[0]
    ns = sx.shape[0]
    out = np.empty(nt)
    for t in range(nt):
        y = ty[t]
        acc = 0.0
        comp = 0.0
        sk = skip[t]
        for k in range(ns):
            s = sx[k]
            d = abs(y - s)
            image = np.log(abs(1.0 - np.conj(s) * y))
            if k == sk or d == 0.0:
                term = -q[k] * image
            else:
                term = q[k] * (np.log(d) - image)
            yk = term - comp
            tk = acc + yk
            comp = (tk - acc) - yk
            acc = tk
        out[t] = acc
    return out
