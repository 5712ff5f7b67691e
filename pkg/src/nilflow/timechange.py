"""Smooth time-changes of nilflows and correlation-decay experiments.

A time change is alpha = 1 + eps * Re(p) for a finite character combination
p lifted with the bump; the reparametrized field is V = alpha X.  The flow
`flow_V` inverts the V-time integral with per-cell adaptive quadrature; the
Monte-Carlo paths for correlations and the central stretch D_t use the
table-driven cell-walk kernel, cross-validated against the precise path.

The stretch integral D_t = int_0^t (Z alpha / alpha) o phi^V is computed in
X-time as int_0^s (Z alpha / alpha^2) o phi^X with s the X-time of the
endpoint; Z differentiation acts on characters as multiplication by
2 pi i n K.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_simpson, quad
from scipy.stats import theilslopes

from . import _kernels, _tc_kernels
from .birkhoff import phase_params_batch
from .errors import InsufficientSignal, NonPositiveAlpha
from .heis import Frame, GroupElement, nilflow, reduce, return_params
from .spectral import CharLabel, LadderFunction, Observable, canonical_label, invariant_distribution, locate_in_tower

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class TimeChange:
    """alpha = 1 + eps * Re(lift of p) for a frame; validated positive.

    Positivity is checked on a 64^3 grid of the fundamental domain with a
    margin covering the gradient bound of the lift.
    """

    p: Observable
    eps: float
    frame: Frame
    alpha_min: float = field(init=False)
    alpha_max: float = field(init=False)

    def __post_init__(self):
        ssp = return_params(self.frame)
        grid = np.linspace(0.0, 1.0, 64, endpoint=False) + 0.5 / 64
        xg, yg, zg = np.meshgrid(grid, grid, grid / self.frame.K, indexing="ij")
        pts = np.column_stack([xg.ravel(), yg.ravel(), zg.ravel()])
        vals = self.alpha_batch(pts)
        # gradient bound of the lift over one grid cell
        sup_dchi = self.p.bump.derivative_bound(1)
        max_freq = max(
            (abs(m) + abs(n) * self.p.K for (m, n) in self.p.coeffs), default=0
        )
        lip = (
            abs(self.eps)
            * self.p.l1()
            / ssp.t_a
            * (sup_dchi / ssp.t_a * (1.0 + abs(self.frame.b)) + TWO_PI * max_freq * self.p.bump.sup)
        )
        margin = lip * math.sqrt(3.0) / 64
        amin = float(vals.min()) - margin
        object.__setattr__(self, "alpha_min", float(vals.min()))
        object.__setattr__(self, "alpha_max", float(vals.max()))
        if amin <= 0.0:
            raise NonPositiveAlpha(
                f"alpha_min - margin = {amin:.3g} (grid min {vals.min():.3g})"
            )

    def alpha(self, x: GroupElement) -> float:
        from .spectral import lift_eval

        return 1.0 + self.eps * lift_eval(self.p, self.frame, reduce(x, self.frame.K)).real

    def alpha_batch(self, xs: np.ndarray) -> np.ndarray:
        a = self.frame
        ssp = return_params(a)
        xs = np.asarray(xs, dtype=float)
        x = xs[:, 0] % 1.0
        y = xs[:, 1] % 1.0
        z = xs[:, 2] % (1.0 / a.K)
        if a.a > 0:
            t0 = x / a.a
        else:
            t0 = np.where(x == 0.0, 0.0, (x - 1.0) / a.a)
        y0 = np.mod(y - t0 * a.b, 1.0)
        z0 = np.mod(z + (-t0 * a.v + 0.5 * t0 * t0 * a.a * a.b) + x * (-t0 * a.b), 1.0 / a.K)
        F = self.p.torus_value(y0, z0)
        chi = self.p.bump.chi(t0 / ssp.t_a)
        return 1.0 + self.eps * F.real * chi / ssp.t_a

    # -- cell profile data -------------------------------------------------

    def cell_A(self, Fval: complex) -> float:
        """Density-profile constant of a cell with torus value F(xi)."""
        return self.eps * Fval.real / return_params(self.frame).t_a

    def amax(self) -> float:
        return abs(self.eps) * self.p.l1() / return_params(self.frame).t_a


def _cell_time(tc: TimeChange, A: float, u_from: float, u_to: float) -> float:
    """X-cell V-time: t_a int_{u_from}^{u_to} du/(1 + A chi(u)), adaptive."""
    t_a = return_params(tc.frame).t_a
    chi = tc.p.bump.chi
    val, _ = quad(lambda u: 1.0 / (1.0 + A * chi(u)), u_from, u_to, epsabs=1e-13, limit=200)
    return t_a * val


def _cell_stretch(tc: TimeChange, A: float, B: float, u_from: float, u_to: float) -> float:
    """t_a B int chi/(1 + A chi)^2 over the cell section."""
    t_a = return_params(tc.frame).t_a
    chi = tc.p.bump.chi
    val, _ = quad(
        lambda u: chi(u) / (1.0 + A * chi(u)) ** 2, u_from, u_to, epsabs=1e-13, limit=200
    )
    return t_a * B * val


def _cell_constants(tc: TimeChange, y: float, z: float) -> tuple[float, float]:
    ssp = return_params(tc.frame)
    F = complex(tc.p.torus_value(y, z))
    Zf = sum(
        TWO_PI * 1j * n * tc.p.K * c * np.exp(2j * np.pi * (m * y + n * tc.p.K * z))
        for (m, n), c in tc.p.coeffs.items()
    )
    A = tc.eps * F.real / ssp.t_a
    B = tc.eps * complex(Zf).real / ssp.t_a
    return A, B


def _walk_precise(tc: TimeChange, x: GroupElement, t: float):
    """X-time s with int_0^s alpha^{-1} = t, plus the stretch integral.

    Walks return cells with adaptive quadrature; the final partial cell is
    solved by bisection + Newton to 1e-12 relative.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    a = tc.frame
    ssp = return_params(a)
    xr = reduce(x, a.K)
    t0, y0, z0 = locate_in_tower(a, ssp, xr)
    u_from = t0 / ssp.t_a
    y, z = y0, z0
    remaining = t
    s = 0.0
    D = 0.0
    guard = int(t / (ssp.t_a * 0.2) + 16) * 4 + 64
    for _ in range(guard):
        A, B = _cell_constants(tc, y, z)
        seg = _cell_time(tc, A, u_from, 1.0)
        if seg >= remaining:
            chi = tc.p.bump.chi
            lo, hi = u_from, 1.0
            u = u_from + (1.0 - u_from) * remaining / max(seg, 1e-300)
            target = remaining / ssp.t_a
            for _ in range(80):
                fval = _cell_time(tc, A, u_from, u) / ssp.t_a - target
                if fval > 0:
                    hi = u
                else:
                    lo = u
                step = fval * (1.0 + A * chi(u))
                u_new = u - step
                if not (lo < u_new < hi):
                    u_new = 0.5 * (lo + hi)
                if abs(u_new - u) < 1e-14:
                    u = u_new
                    break
                u = u_new
            D += _cell_stretch(tc, A, B, u_from, u)
            s += (u - u_from) * ssp.t_a
            return s, D
        remaining -= seg
        s += (1.0 - u_from) * ssp.t_a
        D += _cell_stretch(tc, A, B, u_from, 1.0)
        y, z = ssp.apply(y, z)
        u_from = 0.0
    raise RuntimeError("cell walk exceeded its bound")


def flow_V(tc: TimeChange, x: GroupElement, t: float) -> GroupElement:
    """Time-t point of the reparametrized flow V = alpha X."""
    s, _ = _walk_precise(tc, x, t)
    return nilflow(tc.frame, reduce(x, tc.frame.K), s)


def flow_V_xtime(tc: TimeChange, x: GroupElement, t: float) -> float:
    """X-time elapsed after V-time t (the inverse of tau_V)."""
    return _walk_precise(tc, x, t)[0]


def tau_V(tc: TimeChange, x: GroupElement, s: float, n_cells_hint: int = 0) -> float:
    """V-time elapsed along the X-orbit after X-time s (direct quadrature)."""
    a = tc.frame
    ssp = return_params(a)
    xr = reduce(x, a.K)
    t0, y, z = locate_in_tower(a, ssp, xr)
    u_from = t0 / ssp.t_a
    total = 0.0
    left = s
    while True:
        A, _ = _cell_constants(tc, y, z)
        span = (1.0 - u_from) * ssp.t_a
        if span >= left:
            total += _cell_time(tc, A, u_from, u_from + left / ssp.t_a)
            return total
        total += _cell_time(tc, A, u_from, 1.0)
        left -= span
        y, z = ssp.apply(y, z)
        u_from = 0.0


def stretch_D(tc: TimeChange, x: GroupElement, t: float) -> float:
    """Central stretch D_t(x) of the time-changed flow."""
    return _walk_precise(tc, x, t)[1]


def coboundary_obstructions(f: Observable, ssp) -> list[tuple[CharLabel, complex]]:
    """Invariant-distribution values of the transverse data, per component.

    Characters sharing a minimal return-map ladder (frequency m mod K|n|)
    are grouped into one ladder function; an all-zero output flags a
    coboundary candidate.
    """
    K = f.K
    groups: dict[CharLabel, dict[int, complex]] = {}
    for (m, n), c in f.coeffs.items():
        comp = canonical_label(m, n, K)
        j = (m - comp.m) // n
        groups.setdefault(comp, {})
        groups[comp][j] = groups[comp].get(j, 0.0) + c
    out = []
    for comp in sorted(groups):
        val = invariant_distribution(comp, K, ssp, LadderFunction(comp, groups[comp]))
        out.append((comp, val))
    return out


# -- fast batch paths -------------------------------------------------------


class _Tables:
    """Profile tables G1, G2 (full cell) and P1, P2 (partial cell)."""

    def __init__(self, tc: TimeChange, n_full: int = 1 << 15, n_a: int = 513, n_u: int = 513):
        am = max(tc.amax() * 1.0000001, 1e-12)
        bump = tc.p.bump
        self.alo, self.ahi = -am, am
        u_fine = np.linspace(0.0, 1.0, n_u)
        chi_u = bump.chi(u_fine)
        # G1/G2 via Simpson on the u grid, vectorized over A in blocks
        w = np.ones(n_u)
        w[1:-1:2], w[2:-1:2] = 4.0, 2.0
        w *= (u_fine[1] - u_fine[0]) / 3.0
        A_full = np.linspace(-am, am, n_full + 1)
        self.G1 = np.empty(n_full + 1)
        self.G2 = np.empty(n_full + 1)
        for lo in range(0, n_full + 1, 4096):
            block = A_full[lo : lo + 4096]
            denom = 1.0 + np.outer(block, chi_u)
            self.G1[lo : lo + 4096] = (1.0 / denom) @ w
            self.G2[lo : lo + 4096] = (chi_u / denom**2) @ w
        A_part = np.linspace(-am, am, n_a)
        u_part = np.linspace(0.0, 1.0, 2049)
        chi_p = bump.chi(u_part)
        denom_p = 1.0 + np.outer(A_part, chi_p)
        self.P1 = cumulative_simpson(1.0 / denom_p, x=u_part, initial=0.0, axis=1)
        self.P2 = cumulative_simpson(chi_p / denom_p**2, x=u_part, initial=0.0, axis=1)
        self.chi_table = bump.chi(np.linspace(0.0, 1.0, (1 << 14) + 1))


def _prepare_batch(tc: TimeChange, h: Observable, xs: np.ndarray):
    """Starting data and label tables for the cell-walk kernel."""
    a = tc.frame
    ssp = return_params(a)
    K = a.K
    xs = np.asarray(xs, dtype=float)
    x = xs[:, 0] % 1.0
    y = xs[:, 1] % 1.0
    z = xs[:, 2] % (1.0 / K)
    if a.a > 0:
        t0 = x / a.a
    else:
        t0 = np.where(x == 0.0, 0.0, (x - 1.0) / a.a)
    y0 = np.mod(y - t0 * a.b, 1.0)
    z0 = np.mod(z + (-t0 * a.v + 0.5 * t0 * t0 * a.a * a.b) + x * (-t0 * a.b), 1.0 / K)
    u0 = t0 / ssp.t_a

    labels = sorted(set(tc.p.coeffs) | set(h.coeffs))
    L = len(labels)
    N = len(xs)
    phi0 = np.empty((N, L), dtype=np.uint64)
    psi0 = np.empty((N, L), dtype=np.uint64)
    d2 = np.empty(L, dtype=np.uint64)
    cA = np.array([tc.p.coeffs.get(lab, 0.0) for lab in labels], dtype=complex)
    cB = np.array(
        [TWO_PI * 1j * lab.n * K * tc.p.coeffs.get(lab, 0.0) for lab in labels],
        dtype=complex,
    )
    ch = np.array([h.coeffs.get(lab, 0.0) for lab in labels], dtype=complex)
    for l, (m, n) in enumerate(labels):
        p0, s0, dd = phase_params_batch(m, n, K, ssp, y0, z0)
        phi0[:, l] = p0
        psi0[:, l] = s0
        d2[l] = dd[0]
    eps_ta = tc.eps / ssp.t_a
    F0 = tc.p.torus_value(y0, z0)
    chi0 = tc.p.bump.chi(u0)
    alpha0 = 1.0 + tc.eps * F0.real * chi0 / ssp.t_a
    h0 = h.torus_value(y0, z0) * chi0 / ssp.t_a
    return u0, phi0, psi0, d2, cA, cB, ch, eps_ta, ssp.t_a, alpha0, h0


def batch_flow_values(
    tc: TimeChange,
    h: Observable,
    xs: np.ndarray,
    t: float,
    tables: _Tables | None = None,
    threads: int | None = None,
):
    """h at the V-time-t endpoints plus (D_t, alpha at endpoint) per sample."""
    if threads is not None:
        _kernels.set_threads(threads)
    tables = tables or _Tables(tc)
    u0, phi0, psi0, d2, cA, cB, ch, eps_ta, t_a, alpha0, h0 = _prepare_batch(tc, h, xs)
    N = len(u0)
    out_h = np.empty(N, dtype=np.complex128)
    out_D = np.empty(N)
    out_alpha = np.empty(N)
    out_cells = np.empty(N, dtype=np.int64)
    _tc_kernels.walk_cells(
        u0, phi0, psi0, d2, float(t), t_a, eps_ta,
        np.ascontiguousarray(cA.real), np.ascontiguousarray(cA.imag),
        np.ascontiguousarray(cB.real), np.ascontiguousarray(cB.imag),
        np.ascontiguousarray(ch.real), np.ascontiguousarray(ch.imag),
        tables.chi_table, tables.G1, tables.G2, tables.P1, tables.P2,
        tables.alo, tables.ahi, out_h, out_D, out_alpha, out_cells,
    )
    return out_h, out_D, out_alpha, alpha0, h0


@dataclass
class CorrelationSeries:
    ts: np.ndarray
    values: np.ndarray
    stderrs: np.ndarray
    N: int
    seed: int
    h_id: str
    g_id: str


def correlation(
    h: Observable,
    g: Observable,
    tc: TimeChange,
    t_grid,
    N: int,
    seed: int = 0,
    threads: int | None = None,
) -> CorrelationSeries:
    """Weighted correlations <h o phi^V_t, g>_{L^2(omega_V)} by Monte Carlo.

    omega_V = alpha^{-1} dvol, so the estimator is the self-normalized
    weighted average of h(phi^V_t x) conj(g(x)) / alpha(x); the weighted
    means of h and g are subtracted first.
    """
    rng = np.random.default_rng(np.random.Philox(key=seed))
    K = tc.frame.K
    xs = np.column_stack([rng.random(N), rng.random(N), rng.random(N) / K])
    tables = _Tables(tc)
    # time-zero data for weights and mean subtraction
    _, _, _, alpha0, h0 = batch_flow_values(tc, h, xs, 0.0, tables, threads)
    g0 = _start_values(tc, g, xs)
    w = 1.0 / alpha0
    wsum = w.sum()
    mu_h = (h0 * w).sum() / wsum
    mu_g = (g0 * w).sum() / wsum
    ts = np.asarray(list(t_grid), dtype=float)
    vals = np.empty(len(ts), dtype=np.complex128)
    errs = np.empty(len(ts))
    for i, t in enumerate(ts):
        ht, _, _, _, _ = batch_flow_values(tc, h, xs, float(t), tables, threads)
        prod = (ht - mu_h) * np.conj(g0 - mu_g) * w
        vals[i] = prod.sum() / wsum
        errs[i] = float(np.std(prod - prod.mean()) / math.sqrt(N) / (wsum / N))
    return CorrelationSeries(ts, vals, errs, N, seed, repr(sorted(h.coeffs)), repr(sorted(g.coeffs)))


def _start_values(tc: TimeChange, obs: Observable, xs: np.ndarray) -> np.ndarray:
    a = tc.frame
    ssp = return_params(a)
    xs = np.asarray(xs, dtype=float)
    x = xs[:, 0] % 1.0
    y = xs[:, 1] % 1.0
    z = xs[:, 2] % (1.0 / a.K)
    if a.a > 0:
        t0 = x / a.a
    else:
        t0 = np.where(x == 0.0, 0.0, (x - 1.0) / a.a)
    y0 = np.mod(y - t0 * a.b, 1.0)
    z0 = np.mod(z + (-t0 * a.v + 0.5 * t0 * t0 * a.a * a.b) + x * (-t0 * a.b), 1.0 / a.K)
    return obs.torus_value(y0, z0) * obs.bump.chi(t0 / ssp.t_a) / ssp.t_a


def batch_stretch(
    tc: TimeChange, t: float, N: int, seed: int = 0, threads: int | None = None
) -> np.ndarray:
    """D_t over N uniform samples via the cell-walk kernel."""
    rng = np.random.default_rng(np.random.Philox(key=seed))
    xs = np.column_stack([rng.random(N), rng.random(N), rng.random(N) / tc.frame.K])
    _, D, _, _, _ = batch_flow_values(tc, tc.p, xs, float(t), None, threads)
    return D


@dataclass
class DecayFit:
    slope: float
    ci_lo: float
    ci_hi: float
    power_rss: float
    stretched_rss: float
    power_params: tuple[float, float]
    stretched_params: tuple[float, float]
    n_used: int


def decay_fit(series: CorrelationSeries, bootstrap: int = 2000, seed: int = 1) -> DecayFit:
    """Theil-Sen slope of log|corr| against log t, with bootstrap CI, plus
    least-squares residuals of the two decay templates

        |corr| = C / (1+t)^delta        (power law)
        |corr| = C (1+t)^{-1/(1+log^delta(1+t))}   (stretched)
    """
    mask = (np.abs(series.values) > 3.0 * series.stderrs) & (series.ts > 0)
    if mask.sum() < 8:
        raise InsufficientSignal(f"only {int(mask.sum())} points above 3 sigma")
    t = series.ts[mask]
    yv = np.log(np.abs(series.values[mask]))
    x = np.log(t)
    slope, intercept, _, _ = theilslopes(yv, x)
    rng = np.random.default_rng(seed)
    n = len(x)
    slopes = np.empty(bootstrap)
    for b in range(bootstrap):
        idx = rng.integers(0, n, n)
        if np.unique(x[idx]).size < 2:
            slopes[b] = slope
            continue
        slopes[b] = theilslopes(yv[idx], x[idx])[0]
    lo, hi = np.percentile(slopes, [2.5, 97.5])

    lt1 = np.log1p(t)
    # template 1: log|corr| = logC - delta log(1+t)
    A = np.column_stack([np.ones(n), -lt1])
    coef1, res1, *_ = np.linalg.lstsq(A, yv, rcond=None)
    rss1 = float(((A @ coef1 - yv) ** 2).sum())
    # template 2: grid over delta, LSQ in logC
    best = (math.inf, 0.0, 0.0)
    for delta in np.linspace(0.05, 0.95, 37):
        shape = -lt1 / (1.0 + lt1**delta)
        c0 = float(np.mean(yv - shape))
        rss = float(((c0 + shape - yv) ** 2).sum())
        if rss < best[0]:
            best = (rss, c0, float(delta))
    return DecayFit(
        float(slope), float(lo), float(hi),
        rss1, best[0],
        (float(math.exp(coef1[0])), float(coef1[1])),
        (float(math.exp(best[1])), best[2]),
        int(n),
    )
