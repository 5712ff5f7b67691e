"""Cell-walk kernels for time-changed flows.

Along one return cell the time-change density is alpha = 1 + A chi(u) with
a cell constant A = (eps/t_a) Re F(xi), so the V-time of a full cell is
t_a * G1(A) and the central stretch increment is t_a * B G2(A), where

    G1(A) = int_0^1 du / (1 + A chi(u)),
    G2(A) = int_0^1 chi(u) du / (1 + A chi(u))^2,

with partial-cell versions P1, P2.  The kernels walk cells advancing the
exact uint64 character phases per label, consume V-time through these
tables, and solve the final partial cell by a clamped Newton iteration.
Samples are independent prange slots, so results are thread-count
independent.
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange

from ._kernels import _sincos

_TWO_PI = 2.0 * np.pi


@njit(inline="always", cache=True)
def _lin1d(table, lo, hi, x):
    n = table.shape[0]
    pos = (x - lo) / (hi - lo) * (n - 1)
    if pos <= 0.0:
        return table[0]
    if pos >= n - 1:
        return table[n - 1]
    i = int(pos)
    w = pos - i
    return table[i] * (1.0 - w) + table[i + 1] * w


@njit(inline="always", cache=True)
def _bilin(table, alo, ahi, a, u):
    na, nu = table.shape
    pa = (a - alo) / (ahi - alo) * (na - 1)
    if pa <= 0.0:
        pa = 0.0
    if pa >= na - 1:
        pa = na - 1.0000000001
    pu = u * (nu - 1)
    if pu <= 0.0:
        pu = 0.0
    if pu >= nu - 1:
        pu = nu - 1.0000000001
    i = int(pa)
    j = int(pu)
    wa = pa - i
    wu = pu - j
    return (
        table[i, j] * (1 - wa) * (1 - wu)
        + table[i + 1, j] * wa * (1 - wu)
        + table[i, j + 1] * (1 - wa) * wu
        + table[i + 1, j + 1] * wa * wu
    )


@njit(inline="always", cache=True)
def _cell_AB(phi, psi, eps_ta, cA_re, cA_im, cB_re, cB_im):
    """Cell constants A (density) and B (stretch) from current phases."""
    fa = 0.0
    fb = 0.0
    for l in range(phi.shape[0]):
        c, s = _sincos(phi[l])
        fa += cA_re[l] * c - cA_im[l] * s
        fb += cB_re[l] * c - cB_im[l] * s
    return eps_ta * fa, eps_ta * fb


@njit(inline="always", cache=True)
def _advance(phi, psi, d2):
    for l in range(phi.shape[0]):
        phi[l] += psi[l]
        psi[l] += d2[l]


@njit(inline="always", cache=True)
def _solve_partial(P1, alo, ahi, A, chi_t, target):
    """u in [0,1] with int_0^u ds/(1+A chi) = target, clamped Newton."""
    u = target  # exact when A = 0
    if u > 1.0:
        u = 1.0
    for _ in range(24):
        f = _bilin(P1, alo, ahi, A, u) - target
        step = f * (1.0 + A * _lin1d(chi_t, 0.0, 1.0, u))
        u -= step
        if u < 0.0:
            u = 0.0
        elif u > 1.0:
            u = 1.0
        if abs(step) < 1e-12:
            break
    return u


@njit(cache=True, parallel=True)
def walk_cells(
    u0s,
    phi0,
    psi0,
    d2,
    t,
    t_a,
    eps_ta,
    cA_re,
    cA_im,
    cB_re,
    cB_im,
    ch_re,
    ch_im,
    chi_t,
    G1,
    G2,
    P1,
    P2,
    alo,
    ahi,
    out_h,
    out_D,
    out_alpha_end,
    out_cells,
):
    """Flow each sample for V-time t; record h at the endpoint, the stretch
    integral D_t, the density at the endpoint, and the cell count."""
    N = u0s.shape[0]
    L = d2.shape[0]
    for i in prange(N):
        phi = np.empty(L, dtype=np.uint64)
        psi = np.empty(L, dtype=np.uint64)
        for l in range(L):
            phi[l] = phi0[i, l]
            psi[l] = psi0[i, l]
        remaining = t
        D = 0.0
        cells = 0
        u_from = u0s[i]
        u_end = 0.0
        while True:
            A, B = _cell_AB(phi, psi, eps_ta, cA_re, cA_im, cB_re, cB_im)
            p_from = _bilin(P1, alo, ahi, A, u_from)
            seg = t_a * (_lin1d(G1, alo, ahi, A) - p_from)
            if seg >= remaining:
                u_end = _solve_partial(P1, alo, ahi, A, chi_t, p_from + remaining / t_a)
                D += t_a * B * (
                    _bilin(P2, alo, ahi, A, u_end) - _bilin(P2, alo, ahi, A, u_from)
                )
                break
            remaining -= seg
            D += t_a * B * (
                _lin1d(G2, alo, ahi, A) - _bilin(P2, alo, ahi, A, u_from)
            )
            _advance(phi, psi, d2)
            u_from = 0.0
            cells += 1
        hr = 0.0
        hi_ = 0.0
        for l in range(L):
            c, s = _sincos(phi[l])
            hr += ch_re[l] * c - ch_im[l] * s
            hi_ += ch_re[l] * s + ch_im[l] * c
        chi_u = _lin1d(chi_t, 0.0, 1.0, u_end)
        out_h[i] = complex(hr, hi_) * (chi_u / t_a)
        A_end, _ = _cell_AB(phi, psi, eps_ta, cA_re, cA_im, cB_re, cB_im)
        out_alpha_end[i] = 1.0 + A_end * chi_u
        out_D[i] = D
        out_cells[i] = cells
