"""Low-level quadratic-phase summation kernels.

Phases are held in units of cycles as uint64 fixed point (1 ulp = 2^-64 of a
cycle), so the second-order recurrence

    phi_{j+1} = phi_j + psi_j,   psi_{j+1} = psi_j + d2

reduces mod 1 by integer wraparound and is exact for every j: chunking is
purely a parallelization device, never an accuracy one.  Each chunk's start
phase comes from the closed form phi_j = phi0 + j*psi0 + C(j,2)*d2 evaluated
in wrapping uint64 arithmetic, each chunk accumulates with Kahan
compensation, and chunk partials are combined by a fixed pairwise tree, so
serial and parallel evaluation agree bit for bit for any thread count.

sin/cos are evaluated by a degree-12 Taylor pair about pi/4 after exact
quarter-circle folding on the top two phase bits (max error ~5e-12); libm
trig on this hardware cannot sustain the required terms/second.
"""

from __future__ import annotations

import os

os.environ.setdefault("NUMBA_NUM_THREADS", str(max(8, os.cpu_count() or 1)))

import numba
import numpy as np
from numba import njit, prange

CHUNK = 1 << 14

_TWO64 = 2.0**64
_INV64 = 2.0**-64
_TWO_PI = 2.0 * np.pi
_SQRT2_HALF = np.sqrt(2.0) / 2.0
_PI_4 = np.pi / 4.0
_QUARTER_MASK = np.uint64(0x3FFFFFFFFFFFFFFF)
_HALF_PI_SCALE = _INV64 * _TWO_PI  # quarter-remainder quanta -> radians


def set_threads(n: int | None) -> int:
    """Clamp and apply the numba thread count; returns the value in force."""
    limit = numba.config.NUMBA_NUM_THREADS
    if n is None:
        n = limit
    n = max(1, min(int(n), limit))
    numba.set_num_threads(n)
    return n


def quantize_frac(x: float) -> np.uint64:
    """Fractional part of x as uint64 cycles (floor to the 2^-64 grid)."""
    return np.uint64(int((float(x) % 1.0) * _TWO64))


def quantize_frac_array(x: np.ndarray) -> np.ndarray:
    return (np.mod(x.astype(np.float64), 1.0) * _TWO64).astype(np.uint64)


@njit(inline="always", cache=True)
def _sincos(phi):
    """cos/sin of 2*pi*phi for a uint64 phase in cycles."""
    q = phi >> np.uint64(62)
    x = np.float64(phi & _QUARTER_MASK) * _HALF_PI_SCALE
    y = x - _PI_4
    y2 = y * y
    s = y * (1.0 + y2 * (-1.0 / 6 + y2 * (1.0 / 120 + y2 * (-1.0 / 5040
        + y2 * (1.0 / 362880 + y2 * (-1.0 / 39916800 + y2 * (1.0 / 6227020800)))))))
    c = 1.0 + y2 * (-0.5 + y2 * (1.0 / 24 + y2 * (-1.0 / 720
        + y2 * (1.0 / 40320 + y2 * (-1.0 / 3628800 + y2 * (1.0 / 479001600
        + y2 * (-1.0 / 87178291200)))))))
    cq = _SQRT2_HALF * (c - s)
    sq = _SQRT2_HALF * (c + s)
    if q == np.uint64(0):
        return cq, sq
    elif q == np.uint64(1):
        return -sq, cq
    elif q == np.uint64(2):
        return -cq, -sq
    else:
        return sq, -cq


@njit(inline="always", cache=True)
def _tri_u64(j):
    """j*(j-1)/2 mod 2^64 (divide the even factor before wrapping)."""
    if j & np.uint64(1):
        return j * ((j - np.uint64(1)) >> np.uint64(1))
    return (j >> np.uint64(1)) * (j - np.uint64(1))


@njit(inline="always", cache=True)
def _phase_at(phi0, psi0, d2, j):
    return phi0 + j * psi0 + _tri_u64(j) * d2


@njit(cache=True)
def _chunk_sum(phi0, psi0, d2, j0, length):
    """Kahan-compensated sum of e(phi_j) over j in [j0, j0+length)."""
    phi = _phase_at(phi0, psi0, d2, j0)
    psi = psi0 + j0 * d2
    sre = 0.0
    cre = 0.0
    sim = 0.0
    cim = 0.0
    for _ in range(length):
        c, s = _sincos(phi)
        yv = c - cre
        t = sre + yv
        cre = (t - sre) - yv
        sre = t
        yv = s - cim
        t = sim + yv
        cim = (t - sim) - yv
        sim = t
        phi += psi
        psi += d2
    return sre, sim


@njit(cache=True)
def _tree_reduce(re, im):
    n = re.shape[0]
    while n > 1:
        half = n // 2
        for i in range(half):
            re[i] = re[2 * i] + re[2 * i + 1]
            im[i] = im[2 * i] + im[2 * i + 1]
        if n & 1:
            re[half] = re[n - 1]
            im[half] = im[n - 1]
            n = half + 1
        else:
            n = half
    return re[0], im[0]


@njit(cache=True)
def _sum_serial(phi0, psi0, d2, J):
    if J <= 0:
        return 0.0, 0.0
    nchunks = (J + CHUNK - 1) // CHUNK
    re = np.empty(nchunks)
    im = np.empty(nchunks)
    for c in range(nchunks):
        j0 = c * CHUNK
        ln = min(CHUNK, J - j0)
        re[c], im[c] = _chunk_sum(phi0, psi0, d2, np.uint64(j0), ln)
    return _tree_reduce(re, im)


@njit(cache=True, parallel=True)
def _sum_parallel(phi0, psi0, d2, J):
    if J <= 0:
        return 0.0, 0.0
    nchunks = (J + CHUNK - 1) // CHUNK
    re = np.empty(nchunks)
    im = np.empty(nchunks)
    for c in prange(nchunks):
        j0 = c * CHUNK
        ln = min(CHUNK, J - j0)
        re[c], im[c] = _chunk_sum(phi0, psi0, d2, np.uint64(j0), ln)
    return _tree_reduce(re, im)


def phase_sum(phi0, psi0, d2, J: int, parallel: bool = True) -> complex:
    """Sum of e(phi_j) for j < J; bit-identical for either parallel flag."""
    if parallel:
        re, im = _sum_parallel(phi0, psi0, d2, J)
    else:
        re, im = _sum_serial(phi0, psi0, d2, J)
    return complex(re, im)


@njit(cache=True)
def term_at(phi0, psi0, d2, j):
    """Single term e(phi_j)."""
    c, s = _sincos(_phase_at(phi0, psi0, d2, np.uint64(j)))
    return complex(c, s)


@njit(cache=True, parallel=True)
def _prefix_parallel(phi0, psi0, d2, J, out):
    """out[k] = sum_{j<k} e(phi_j) for k = 1..J; out has length J."""
    nchunks = (J + CHUNK - 1) // CHUNK
    for c in prange(nchunks):
        j0 = c * CHUNK
        ln = min(CHUNK, J - j0)
        phi = _phase_at(phi0, psi0, d2, np.uint64(j0))
        psi = psi0 + np.uint64(j0) * d2
        sre = 0.0
        cre = 0.0
        sim = 0.0
        cim = 0.0
        for k in range(ln):
            cc, ss = _sincos(phi)
            yv = cc - cre
            t = sre + yv
            cre = (t - sre) - yv
            sre = t
            yv = ss - cim
            t = sim + yv
            cim = (t - sim) - yv
            sim = t
            out[j0 + k] = complex(sre, sim)
            phi += psi
            psi += d2
    # serial carry of chunk offsets, fixed order
    for c in range(1, nchunks):
        j0 = c * CHUNK
        ln = min(CHUNK, J - j0)
        off = out[j0 - 1]
        for k in range(ln):
            out[j0 + k] += off


def phase_prefix(phi0, psi0, d2, J: int) -> np.ndarray:
    """Cumulative sums S_k = sum_{j<k} e(phi_j), k = 1..J."""
    out = np.empty(J, dtype=np.complex128)
    if J > 0:
        _prefix_parallel(phi0, psi0, d2, J, out)
    return out


@njit(cache=True, parallel=True)
def _batch_sums(phi0s, psi0s, d2s, Js, out, end_terms):
    n = phi0s.shape[0]
    for i in prange(n):
        re, im = _sum_serial(phi0s[i], psi0s[i], d2s[i], Js[i])
        out[i] = complex(re, im)
        c, s = _sincos(_phase_at(phi0s[i], psi0s[i], d2s[i], np.uint64(Js[i])))
        end_terms[i] = complex(c, s)


def batch_phase_sums(phi0s, psi0s, d2s, Js):
    """Per-sample sums over j < Js[i] plus the term at j = Js[i].

    Samples are independent slots, so results do not depend on the thread
    count or schedule.
    """
    n = len(phi0s)
    out = np.empty(n, dtype=np.complex128)
    end_terms = np.empty(n, dtype=np.complex128)
    if n:
        _batch_sums(
            np.ascontiguousarray(phi0s, dtype=np.uint64),
            np.ascontiguousarray(psi0s, dtype=np.uint64),
            np.ascontiguousarray(d2s, dtype=np.uint64),
            np.ascontiguousarray(Js, dtype=np.int64),
            out,
            end_terms,
        )
    return out, end_terms


def warmup() -> None:
    """Trigger JIT compilation of all kernels on tiny inputs."""
    z = np.uint64(1)
    phase_sum(z, z, z, 3, parallel=False)
    phase_sum(z, z, z, 3, parallel=True)
    phase_prefix(z, z, z, 3)
    batch_phase_sums(
        np.array([z]), np.array([z]), np.array([z]), np.array([2], dtype=np.int64)
    )
    term_at(z, z, z, 2)
