"""Quadratic Weyl sums and exact ergodic integrals along nilflows.

The Birkhoff sum of a torus character under the skew-shift return map is a
quadratic exponential sum; `weyl_sum` evaluates it with the exact fixed
point phase recurrence from `_kernels`, and `weyl_sum_direct` is the
independent oracle (closed-form big-integer phases, libm trig, fsum).

Ergodic integrals of bump-lifted observables are computed by exact
reduction: a partial bump integral on the incoming orbit segment, one
character value per complete return, and a partial bump integral on the
outgoing segment.  This makes cocycle additivity and central equivariance
hold to rounding error and costs O(number of returns).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels, moduli
from .errors import GridTooCoarse, LabelMismatch
from .heis import Frame, GroupElement, SkewShiftParams, flow_Y, reduce, return_params
from .spectral import CharLabel, Observable, locate_in_tower, sobolev_surrogate

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class WeylSumSpec:
    label: CharLabel
    K: int
    ssp: SkewShiftParams
    y: float
    z: float
    J: int

    def __post_init__(self):
        if self.J < 0:
            raise ValueError("J must be nonnegative")


def phase_params(m: int, n: int, K: int, ssp: SkewShiftParams, y: float, z: float):
    """uint64 phase data (phi0, psi0, d2) of the character Birkhoff sum.

    phi_j = m(y + j rho) + nK(z + y_sign(j y + rho C(j,2)) + j sigma0)
    in cycles, organized as phi0 + j psi0 + C(j,2) d2.
    """
    phi0 = m * y + n * K * z
    psi0 = m * ssp.rho + n * K * (ssp.y_sign * y + ssp.sigma0)
    d2 = ssp.y_sign * n * K * ssp.rho
    return (
        _kernels.quantize_frac(phi0),
        _kernels.quantize_frac(psi0),
        _kernels.quantize_frac(d2),
    )


def phase_params_batch(m: int, n: int, K: int, ssp: SkewShiftParams, y, z):
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    phi0 = _kernels.quantize_frac_array(m * y + n * K * z)
    psi0 = _kernels.quantize_frac_array(
        m * ssp.rho + n * K * (ssp.y_sign * y + ssp.sigma0)
    )
    d2 = np.full(y.shape, _kernels.quantize_frac(ssp.y_sign * n * K * ssp.rho))
    return phi0, psi0, d2


def weyl_sum(spec: WeylSumSpec, threads: int | None = None, parallel: bool = True) -> complex:
    """Sum of e_{m,n} over the first J skew-shift iterates of (y, z)."""
    if threads is not None:
        _kernels.set_threads(threads)
    ph = phase_params(spec.label.m, spec.label.n, spec.K, spec.ssp, spec.y, spec.z)
    return _kernels.phase_sum(*ph, spec.J, parallel=parallel)


def weyl_sum_direct(spec: WeylSumSpec) -> complex:
    """Independent oracle: exact integer phases, libm trig, fsum.

    Shares only the parameter quantization with the fast kernel; phases are
    evaluated in closed form with Python integers, so any recurrence or
    summation defect in the kernel shows up as a mismatch.
    """
    phi0, psi0, d2 = (
        int(v)
        for v in phase_params(spec.label.m, spec.label.n, spec.K, spec.ssp, spec.y, spec.z)
    )
    mod = 1 << 64
    res, ims = [], []
    for j in range(spec.J):
        tri = j * (j - 1) // 2
        ph = (phi0 + psi0 * j + d2 * tri) % mod
        ang = TWO_PI * (ph / mod)
        res.append(math.cos(ang))
        ims.append(math.sin(ang))
    return complex(math.fsum(res), math.fsum(ims))


def _grid_sums(label: CharLabel, K: int, ssp: SkewShiftParams, z: float, J: int, Q: int):
    if Q <= 2 * K * abs(label.n) * J:
        raise GridTooCoarse(
            f"Q = {Q} cannot separate frequencies (need > {2 * K * abs(label.n) * J})"
        )
    y = np.arange(Q) / Q
    phi0, psi0, d2 = phase_params_batch(label.m, label.n, K, ssp, y, z)
    sums, _ = _kernels.batch_phase_sums(phi0, psi0, d2, np.full(Q, J, dtype=np.int64))
    return sums


def weyl_sum_l2_over_y(
    label: CharLabel, K: int, ssp: SkewShiftParams, z: float, J: int, Q: int,
    threads: int | None = None,
) -> float:
    """Grid L^2 norm (1/Q) sum_q |S_J(q/Q, z)|^2; equals J exactly."""
    if threads is not None:
        _kernels.set_threads(threads)
    sums = _grid_sums(label, K, ssp, z, J, Q)
    return float(np.mean(np.abs(sums) ** 2))


def weyl_mean_over_y(
    label: CharLabel, K: int, ssp: SkewShiftParams, z: float, J: int, Q: int,
    threads: int | None = None,
) -> complex:
    """Grid mean (1/Q) sum_q S_J(q/Q, z); modulus 0 or 1."""
    if threads is not None:
        _kernels.set_threads(threads)
    sums = _grid_sums(label, K, ssp, z, J, Q)
    return complex(np.mean(sums))


@dataclass(frozen=True)
class ErgodicIntegral:
    value: complex
    T: float
    frame: Frame
    observable: Observable
    x: GroupElement


def ergodic_integral(
    obs: Observable,
    a: Frame,
    x: GroupElement,
    T: float,
    threads: int | None = None,
    parallel: bool = True,
) -> ErgodicIntegral:
    """Integral of the lifted observable along the nilflow from x for time T."""
    if T < 0:
        raise ValueError("T must be nonnegative")
    if threads is not None:
        _kernels.set_threads(threads)
    ssp = return_params(a)
    xr = reduce(x, a.K)
    t0, y0, z0 = locate_in_tower(a, ssp, xr)
    u0 = t0 / ssp.t_a
    F0 = obs.torus_value(y0, z0)
    cdf = obs.bump.cdf
    delta0 = ssp.t_a - t0
    if T < delta0:
        value = F0 * (cdf(u0 + T / ssp.t_a) - cdf(u0))
        return ErgodicIntegral(complex(value), T, a, obs, xr)
    J = int(math.floor((T - delta0) / ssp.t_a))
    tau = T - delta0 - J * ssp.t_a
    y1, z1 = ssp.apply(y0, z0)
    total = F0 * (1.0 - cdf(u0))
    outgoing = 0.0 + 0.0j
    for label, c in obs.coeffs.items():
        ph = phase_params(label.m, label.n, obs.K, ssp, y1, z1)
        total += c * _kernels.phase_sum(*ph, J, parallel=parallel)
        outgoing += c * _kernels.term_at(*ph, J)
    total += outgoing * cdf(tau / ssp.t_a)
    return ErgodicIntegral(complex(total), T, a, obs, xr)


def batch_ergodic_integrals(
    obs: Observable,
    a: Frame,
    xs: np.ndarray,
    T: float,
    threads: int | None = None,
) -> np.ndarray:
    """Ergodic integrals for many starting points (rows of xs = (x, y, z)).

    Same exact-reduction scheme as `ergodic_integral`, vectorized over
    samples; each sample is an independent slot so the result is
    deterministic for any thread count.
    """
    if threads is not None:
        _kernels.set_threads(threads)
    ssp = return_params(a)
    K = a.K
    xs = np.asarray(xs, dtype=float)
    x, y, z = xs[:, 0] % 1.0, xs[:, 1] % 1.0, xs[:, 2] % (1.0 / K)
    if a.a > 0:
        t0 = x / a.a
    else:
        t0 = np.where(x == 0.0, 0.0, (x - 1.0) / a.a)
    # one backward group step to the transverse torus
    y0 = np.mod(y - t0 * a.b, 1.0)
    z0 = np.mod(z + (-t0 * a.v + 0.5 * t0 * t0 * a.a * a.b) + x * (-t0 * a.b), 1.0 / K)
    u0 = t0 / ssp.t_a
    F0 = obs.torus_value(y0, z0)
    cdf = obs.bump.cdf
    delta0 = ssp.t_a - t0
    out = np.zeros(len(xs), dtype=np.complex128)

    partial_only = T < delta0
    if np.any(partial_only):
        m = partial_only
        out[m] = F0[m] * (cdf(u0[m] + T / ssp.t_a) - cdf(u0[m]))
    full = ~partial_only
    if np.any(full):
        J = np.floor((T - delta0[full]) / ssp.t_a).astype(np.int64)
        tau = T - delta0[full] - J * ssp.t_a
        y1 = np.mod(y0[full] + ssp.rho, 1.0)
        z1 = np.mod(z0[full] + ssp.y_sign * y0[full] + ssp.sigma0, 1.0 / K)
        total = F0[full] * (1.0 - cdf(u0[full]))
        outgoing = np.zeros(full.sum(), dtype=np.complex128)
        for label, c in obs.coeffs.items():
            phi0, psi0, d2 = phase_params_batch(label.m, label.n, K, ssp, y1, z1)
            sums, ends = _kernels.batch_phase_sums(phi0, psi0, d2, J)
            total = total + c * sums
            outgoing += c * ends
        total = total + outgoing * cdf(tau / ssp.t_a)
        out[full] = total
    return out


class IntegralTrajectory:
    """Partial ergodic integrals s -> I_s(f)(x) on the return-time grid.

    Stores one prefix value per complete return plus the cell profile, so
    I_at evaluates the exact integral at arbitrary s in [0, T]; used by the
    central-twist identity and the transverse holomorphic extension.
    """

    def __init__(self, obs: Observable, a: Frame, x: GroupElement, T: float):
        if T <= 0:
            raise ValueError("trajectory needs T > 0")
        ssp = return_params(a)
        xr = reduce(x, a.K)
        t0, y0, z0 = locate_in_tower(a, ssp, xr)
        self.obs, self.frame, self.ssp, self.x = obs, a, ssp, xr
        self.T = T
        self.t_a = ssp.t_a
        self.u0 = t0 / ssp.t_a
        self.delta0 = ssp.t_a - t0
        self.F0 = complex(obs.torus_value(y0, z0))
        cdf = obs.bump.cdf
        self._cdf = cdf
        if T < self.delta0:
            self.J = -1  # never reaches the torus
            self.value = self.F0 * (cdf(self.u0 + T / ssp.t_a) - cdf(self.u0))
            return
        self.J = int(math.floor((T - self.delta0) / ssp.t_a))
        self.tau = T - self.delta0 - self.J * ssp.t_a
        self.base = self.F0 * (1.0 - cdf(self.u0))
        y1, z1 = ssp.apply(y0, z0)
        J = self.J
        prefix = np.zeros(J + 1, dtype=np.complex128)
        last_term = 0.0 + 0.0j
        for label, c in obs.coeffs.items():
            ph = phase_params(label.m, label.n, obs.K, ssp, y1, z1)
            if J > 0:
                prefix[1:] += c * _kernels.phase_prefix(*ph, J)
            last_term += c * _kernels.term_at(*ph, J)
        self.prefix = prefix
        terms = np.empty(J + 1, dtype=np.complex128)
        terms[:J] = np.diff(prefix)
        terms[J] = last_term
        self.terms = terms  # terms[k] = F(xi_{k+1}), cell k of the return tower
        self.value = complex(self.base + prefix[J] + last_term * cdf(self.tau / ssp.t_a))

    def I_at(self, s):
        """Vectorized exact partial integral at times s in [0, T]."""
        s = np.asarray(s, dtype=float)
        out = np.empty(s.shape, dtype=np.complex128)
        early = s < self.delta0
        if np.any(early):
            out[early] = self.F0 * (
                self._cdf(self.u0 + s[early] / self.t_a) - self._cdf(self.u0)
            )
        late = ~early
        if np.any(late):
            k = np.floor((s[late] - self.delta0) / self.t_a).astype(np.int64)
            np.clip(k, 0, self.J, out=k)
            tau = s[late] - self.delta0 - k * self.t_a
            out[late] = (
                self.base
                + self.prefix[k]
                + self.terms[k] * self._cdf(tau / self.t_a)
            )
        return out if out.ndim else complex(out)

    def twisted_integral(self, omega: complex, subsamples: int = 8) -> complex:
        """Trapezoid of e^{-i omega s} I_s over [0, T] on the refined grid.

        The grid is every return time plus `subsamples` interior points per
        cell; evaluation streams over cell blocks to bound memory.  omega
        may be complex (the transverse holomorphic extension evaluates off
        the real line).
        """
        su = subsamples
        uz = np.arange(su + 1) / su
        cdf_u = self._cdf(uz)
        total = 0.0 + 0.0j
        # incoming segment [0, delta0]
        s_in = (self.delta0 if self.J >= 0 else self.T) * uz
        vals = self.I_at(s_in) * np.exp(-1j * omega * s_in)
        total += complex(np.trapezoid(vals, s_in))
        if self.J < 0:
            return total
        # complete cells, blockwise
        block = 1 << 15
        for k0 in range(0, self.J, block):
            k = np.arange(k0, min(self.J, k0 + block))
            s0 = self.delta0 + k * self.t_a
            ivals = (
                (self.base + self.prefix[k])[:, None]
                + np.outer(self.terms[k], cdf_u)
            )
            phases = np.exp(-1j * omega * s0)[:, None] * np.exp(
                -1j * omega * self.t_a * uz
            )[None, :]
            cell_ints = np.trapezoid(ivals * phases, dx=self.t_a / su, axis=1)
            total += complex(cell_ints.sum())
        # outgoing partial cell
        if self.tau > 0:
            s_out = self.delta0 + self.J * self.t_a + self.tau * uz
            vals = self.I_at(s_out) * np.exp(-1j * omega * s_out)
            total += complex(np.trapezoid(vals, s_out))
        return total


def twisted_integral_batch(
    traj: IntegralTrajectory, omegas: np.ndarray, subsamples: int = 8
) -> np.ndarray:
    """int_0^T e^{-i w s} I_s ds for many (possibly complex) w at once.

    Within cell k the integrand is e^{-i w s} (A_k + B_k cdf(u)), so the
    cell sum collapses to two geometric power sums sum_k q^k A_k and
    sum_k q^k B_k with q = e^{-i w t_a}; those are evaluated as one matrix
    product per block of evaluation points.
    """
    omegas = np.asarray(omegas, dtype=np.complex128)
    shape = omegas.shape
    om = np.atleast_1d(omegas).ravel()
    su = subsamples
    u = np.arange(su + 1) / su
    cdf_u = np.asarray(traj._cdf(u))
    tw = np.full(su + 1, 1.0 / su)
    tw[0] = tw[-1] = 0.5 / su
    out = np.zeros(om.shape, dtype=np.complex128)

    # incoming segment [0, delta0] (or [0, T] if the torus is never reached)
    end_in = traj.delta0 if traj.J >= 0 else traj.T
    s_in = end_in * u
    v_in = traj.I_at(s_in)
    out += (np.exp(-1j * np.outer(om, s_in)) * (tw * end_in * v_in)).sum(axis=1)
    if traj.J < 0:
        return out.reshape(shape)

    t_a = traj.t_a
    phase_u = np.exp(-1j * t_a * np.outer(om, u))
    P_w = phase_u @ (tw * t_a)
    Q_w = phase_u @ (tw * t_a * cdf_u)
    J = traj.J
    if J > 0:
        A = traj.base + traj.prefix[:J]
        B = traj.terms[:J]
        q = np.exp(-1j * om * t_a)
        pref = np.exp(-1j * om * traj.delta0)
        block = max(1, (1 << 22) // max(J, 1))
        for lo in range(0, om.size, block):
            qb = q[lo : lo + block]
            M = np.ones((qb.size, J), dtype=np.complex128)
            M[:, 1:] = qb[:, None]
            np.cumprod(M, axis=1, out=M)
            out[lo : lo + block] += pref[lo : lo + block] * (
                P_w[lo : lo + block] * (M @ A) + Q_w[lo : lo + block] * (M @ B)
            )
    # outgoing partial cell
    if traj.tau > 0:
        s_out = traj.delta0 + J * t_a + traj.tau * u
        v_out = traj.I_at(s_out)
        out += (np.exp(-1j * np.outer(om, s_out)) * (tw * traj.tau * v_out)).sum(axis=1)
    return out.reshape(shape)


def _single_label(obs: Observable) -> CharLabel:
    if len(obs.coeffs) != 1:
        raise LabelMismatch("this identity is per-component; pass a single-label observable")
    return next(iter(obs.coeffs))


def z_equivariance_check(
    obs: Observable, a: Frame, x: GroupElement, T: float, t_z: float
) -> float:
    """|I_T(f)(phi^Z_{t_z} x) - e(K n t_z) I_T(f)(x)|, exact termwise."""
    label = _single_label(obs)
    xr = reduce(x, a.K)
    shifted = reduce(GroupElement(xr.x, xr.y, xr.z + t_z), a.K)
    lhs = ergodic_integral(obs, a, shifted, T).value
    rhs = (
        np.exp(2j * np.pi * obs.K * label.n * t_z)
        * ergodic_integral(obs, a, xr, T).value
    )
    return abs(lhs - rhs)


def ytwist_residual(
    obs: Observable,
    a: Frame,
    x: GroupElement,
    T: float,
    t_y: float,
    subsamples: int = 8,
) -> tuple[complex, complex, float]:
    """Both sides of the transverse-twist identity with I_s in place of the
    cocycle: LHS = I_T(f)(phi^Y_{t_y} x), RHS = e^{-i w T} I_T(f)(x) +
    i w int_0^T e^{-i w s} I_s(f)(x) ds with w = 2 pi t_y n K."""
    label = _single_label(obs)
    lhs = ergodic_integral(obs, a, flow_Y(a, x, t_y), T).value
    traj = IntegralTrajectory(obs, a, x, T)
    omega = TWO_PI * t_y * label.n * obs.K
    rhs = np.exp(-1j * omega * T) * traj.value + 1j * omega * traj.twisted_integral(
        omega, subsamples
    )
    rhs = complex(rhs)
    return lhs, rhs, abs(lhs - rhs)


@dataclass(frozen=True)
class BufetovEstimate:
    value: complex
    t: float
    T_ref: float
    renorm_depth: float
    error_budget: float


def bufetov_estimate(
    obs: Observable,
    a: Frame,
    x: GroupElement,
    t: float,
    T_ref: float,
    s: float = 4.0,
    L: float | None = None,
    calibration: float = 1.0,
) -> BufetovEstimate:
    """Renormalized ergodic-integral estimate of the additive cocycle at
    time t: T_ref^{-1/2} I(f, g_{-log T_ref}(a), x, T_ref t).

    The budget is the asymptotic-theorem surrogate C (1+L) |f|_{a,s} at the
    base frame, with L the Diophantine integral of the backward orbit.
    """
    if t <= 0 or T_ref < 1:
        raise ValueError("need t > 0 and T_ref >= 1")
    frame_minus = moduli.renorm(a, -math.log(T_ref))
    val = ergodic_integral(obs, frame_minus, x, T_ref * t).value / math.sqrt(T_ref)
    if L is None:
        L = moduli.dc_integral(a, horizon=30.0, step=0.25).dc_value
    budget = calibration * (1.0 + L) * sobolev_surrogate(obs, a, s)
    return BufetovEstimate(val, t, T_ref, math.log(T_ref), budget)


def scaling_check(
    obs: Observable,
    a: Frame,
    x: GroupElement,
    t: float,
    T: float,
    T_ref: float,
    s: float = 4.0,
    L: float | None = None,
) -> tuple[float, BufetovEstimate, BufetovEstimate]:
    """Residual of the exact renormalization scaling at matched total depth:

        beta(a, x, T t)  vs  sqrt(T) beta(g_{log T}(a), x, t),

    both estimated at the same total renormalization depth T_ref * T.
    """
    if t <= 0 or T <= 0:
        raise ValueError("need positive t and T")
    lhs = bufetov_estimate(obs, a, x, T * t, T_ref, s=s, L=L)
    rhs = bufetov_estimate(obs, moduli.renorm(a, math.log(T)), x, t, T * T_ref, s=s, L=L)
    residual = abs(lhs.value - math.sqrt(T) * rhs.value)
    return residual, lhs, rhs


def holder_ratio_scan(
    obs: Observable,
    a: Frame,
    N: int,
    T_grid,
    seed: int = 0,
    sampling: str = "volume",
    threads: int | None = None,
) -> dict[float, float]:
    """max over N sampled points of |I_T| / sqrt(T), per T in the grid.

    sampling: "volume" draws x uniformly in the fundamental domain,
    "torus" on the transverse torus (x = 0), "circle" on the central
    circle x = y = 0 (the resonant slice for rational rotation number).
    """
    rng = np.random.default_rng(np.random.Philox(key=seed))
    K = a.K
    xs = np.zeros((N, 3))
    if sampling == "volume":
        xs[:, 0] = rng.random(N)
        xs[:, 1] = rng.random(N)
    elif sampling == "torus":
        xs[:, 1] = rng.random(N)
    elif sampling != "circle":
        raise ValueError(f"unknown sampling {sampling!r}")
    xs[:, 2] = rng.random(N) / K
    out = {}
    for T in T_grid:
        vals = batch_ergodic_integrals(obs, a, xs, float(T), threads=threads)
        out[float(T)] = float(np.abs(vals).max() / math.sqrt(T))
    return out


def kernel_benchmark(J: int = 1 << 27, threads: int | None = None) -> dict:
    """Throughput and serial/parallel bit-identity of the Weyl-sum kernel."""
    import time

    from .heis import named_frame

    nthreads = _kernels.set_threads(threads)
    frame = named_frame("golden")
    ssp = return_params(frame)
    spec = WeylSumSpec(CharLabel(0, 1), 1, ssp, 0.2137, 0.5811, J)
    _kernels.warmup()
    t0 = time.perf_counter()
    s_par = weyl_sum(spec, parallel=True)
    wall = time.perf_counter() - t0
    s_ser = weyl_sum(spec, parallel=False)
    return {
        "J": J,
        "threads": nthreads,
        "terms_per_second": J / wall,
        "wall_s": wall,
        "bit_identical": s_par == s_ser,
        "value_re": s_par.real,
        "value_im": s_par.imag,
    }
