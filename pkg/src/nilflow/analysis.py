"""Monte-Carlo distribution experiments and analytic-function diagnostics.

Normalized ergodic integrals T^{-1/2} I_T(f)(x) over random starting points
give empirical limit distributions, second moments, and sublevel-measure
estimates with power-law fits.  The transverse holomorphic extension of the
partial-integral trajectory supplies leaf functions of one complex variable
whose sublevel geometry is controlled by Remez-type inequalities and a
valency bound; both are implemented as checkable inequalities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .birkhoff import (
    IntegralTrajectory,
    batch_ergodic_integrals,
    ergodic_integral,
    twisted_integral_batch,
    _single_label,
)
from .errors import DomainExceeded, InsufficientSamples, NonAnalytic
from .heis import Frame, GroupElement, return_params
from .spectral import Observable

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class Ecdf:
    """Empirical distribution of a real sample, sorted."""

    samples: np.ndarray
    seed: int

    def __post_init__(self):
        if len(self.samples) < 100:
            raise ValueError("need at least 100 samples")
        object.__setattr__(self, "samples", np.sort(np.asarray(self.samples, dtype=float)))

    @property
    def N(self) -> int:
        return len(self.samples)

    def cdf(self, x) -> np.ndarray:
        return np.searchsorted(self.samples, np.asarray(x), side="right") / self.N

    def quantile(self, q: float) -> float:
        return float(np.quantile(self.samples, q))


def ks_distance(e1: Ecdf, e2: Ecdf) -> float:
    """Two-sample Kolmogorov-Smirnov sup distance of the step functions."""
    grid = np.concatenate([e1.samples, e2.samples])
    return float(np.abs(e1.cdf(grid) - e2.cdf(grid)).max())


def _draw_points(N: int, K: int, seed: int, sampling: str, stratify_z: bool = False) -> np.ndarray:
    rng = np.random.default_rng(np.random.Philox(key=seed))
    xs = np.zeros((N, 3))
    if sampling == "volume":
        xs[:, 0] = rng.random(N)
        xs[:, 1] = rng.random(N)
    elif sampling == "torus":
        xs[:, 1] = rng.random(N)
    else:
        raise ValueError(f"unknown sampling {sampling!r}")
    if stratify_z:
        xs[:, 2] = (np.arange(N) + rng.random(N)) / N / K
    else:
        xs[:, 2] = rng.random(N) / K
    return xs


@dataclass(frozen=True)
class EmpiricalDistribution:
    real_part: Ecdf
    modulus: Ecdf
    T: float
    seed: int


def empirical_distribution(
    obs: Observable,
    a: Frame,
    T: float,
    N: int,
    seed: int = 0,
    sampling: str = "volume",
    threads: int | None = None,
) -> EmpiricalDistribution:
    """ECDFs of Re and |.| of T^{-1/2} I_T(f) over N independent points."""
    if N < 100:
        raise ValueError("need N >= 100")
    xs = _draw_points(N, a.K, seed, sampling)
    vals = batch_ergodic_integrals(obs, a, xs, float(T), threads) / math.sqrt(T)
    return EmpiricalDistribution(Ecdf(vals.real, seed), Ecdf(np.abs(vals), seed), T, seed)


def second_moment_track(
    obs: Observable,
    a: Frame,
    T_grid,
    N: int,
    seed: int = 0,
    sampling: str = "volume",
    threads: int | None = None,
) -> list[tuple[float, float]]:
    """Monte-Carlo E |T^{-1/2} I_T|^2 along a grid of times."""
    xs = _draw_points(N, a.K, seed, sampling)
    out = []
    for T in T_grid:
        vals = batch_ergodic_integrals(obs, a, xs, float(T), threads)
        out.append((float(T), float(np.mean(np.abs(vals) ** 2) / T)))
    return out


def second_moment_torus_exact(obs: Observable, a: Frame, J: int, threads: int | None = None) -> float:
    """E |T^{-1/2} I_T|^2 for torus starts at T = J t_a, by exact grid average.

    Requires the observable's labels to lie in distinct minimal components
    (one ladder each), so cross terms vanish under the double grid average
    and the value is exactly sum |c|^2 / t_a.
    """
    ssp = return_params(a)
    K = a.K
    nmax = max(abs(n) for (_, n) in obs.coeffs)
    mmax = max(abs(m) for (m, _) in obs.coeffs)
    Qy = 1 << math.ceil(math.log2(4 * (K * nmax * J + mmax + 1)))
    Qz = 1 << math.ceil(math.log2(4 * K * nmax + 2))
    total = 0.0
    for qz in range(Qz):
        xs = np.zeros((Qy, 3))
        xs[:, 1] = np.arange(Qy) / Qy
        xs[:, 2] = qz / Qz / K
        vals = batch_ergodic_integrals(obs, a, xs, J * ssp.t_a, threads)
        total += float(np.mean(np.abs(vals) ** 2))
    return total / Qz / (J * ssp.t_a)


@dataclass(frozen=True)
class SublevelReport:
    epsilons: np.ndarray
    measures: np.ndarray
    ci_lo: np.ndarray
    ci_hi: np.ndarray
    delta_hat: float
    delta_ci: tuple[float, float]
    r2: float
    theil_sen: float
    regime: str
    threshold_scale: float
    n_fit: int


def _wilson(k: np.ndarray, n: int, z: float = 1.96):
    p = k / n
    den = 1.0 + z * z / n
    center = (p + z * z / (2 * n)) / den
    half = z * np.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    return np.clip(center - half, 0, 1), np.clip(center + half, 0, 1)


def sublevel_measure(
    obs: Observable,
    a: Frame,
    T: float,
    eps_grid,
    N: int,
    seed: int = 0,
    regime: str = "compact",
    zeta: float = 0.5,
    c_zeta: float = 1.0,
    stratify_z: bool = False,
    threads: int | None = None,
) -> SublevelReport:
    """Measure of {x : |I_T(f)(x)| <= eps T^{1/2}} with a power-law fit.

    In the generic regime the threshold carries the log^{1/4+zeta} T
    correction.  The exponent is fitted by least squares on log measure vs
    log eps over the band where the measure is between 10/N and 1/2, with a
    Theil-Sen slope reported alongside.
    """
    eps_grid = np.sort(np.asarray(list(eps_grid), dtype=float))
    if np.any((eps_grid <= 0) | (eps_grid >= 1)):
        raise ValueError("eps grid must lie in (0, 1)")
    if N < 10**4:
        raise ValueError("need N >= 1e4 samples")
    if regime not in ("compact", "generic"):
        raise ValueError(f"unknown regime {regime!r}")
    scale = 1.0 if regime == "compact" else 1.0 / (c_zeta * math.log(T) ** (0.25 + zeta))
    xs = _draw_points(N, a.K, seed, "volume", stratify_z)
    u = np.abs(batch_ergodic_integrals(obs, a, xs, float(T), threads)) / math.sqrt(T)
    counts = np.array([(u <= e * scale).sum() for e in eps_grid])
    meas = counts / N
    lo, hi = _wilson(counts, N)
    band = (meas > 10.0 / N) & (meas < 0.5)
    if band.sum() < 3:
        raise InsufficientSamples(
            f"only {int(band.sum())} grid points in the fittable band"
        )
    lx = np.log(eps_grid[band])
    ly = np.log(meas[band])
    A = np.column_stack([np.ones(band.sum()), lx])
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    fitted = A @ coef
    ss_res = float(((ly - fitted) ** 2).sum())
    ss_tot = float(((ly - ly.mean()) ** 2).sum())
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    dof = max(int(band.sum()) - 2, 1)
    sigma2 = ss_res / dof
    cov = sigma2 * np.linalg.inv(A.T @ A)
    se = math.sqrt(cov[1, 1])
    from scipy.stats import theilslopes

    ts = float(theilslopes(ly, lx)[0]) if band.sum() >= 2 else float("nan")
    return SublevelReport(
        eps_grid, meas, lo, hi,
        float(coef[1]), (float(coef[1] - 1.96 * se), float(coef[1] + 1.96 * se)),
        float(r2), ts, regime, scale, int(band.sum()),
    )


def complex_extension_eval(
    obs: Observable,
    a: Frame,
    x: GroupElement,
    T: float,
    y: complex,
    z: complex,
    traj: IntegralTrajectory | None = None,
    budget: float = 500.0,
) -> complex:
    """Holomorphic extension of the partial-integral trajectory transverse
    to the flow:

        E(y, z) = e(nK(z - yT)) I_T + 2 pi i nK y e(nK z) *
                  int_0^T e^{-2 pi i nK y s} I_s ds,

    which restricts on real (y, z) to I_T at the Y- and Z-translated point
    up to the cocycle-substitution error."""
    label = _single_label(obs)
    nK = label.n * obs.K
    expo = TWO_PI * abs(nK) * (abs(y.imag) * T + abs(z.imag))
    if expo > budget:
        raise DomainExceeded(f"exponential factor exp({expo:.1f}) exceeds the budget")
    traj = traj or IntegralTrajectory(obs, a, x, T)
    omega = TWO_PI * nK * y
    tw = twisted_integral_batch(traj, np.array([omega]))[0]
    return complex(
        np.exp(2j * np.pi * nK * (z - y * T)) * traj.value
        + 2j * np.pi * nK * y * np.exp(2j * np.pi * nK * z) * tw
    )


@dataclass(frozen=True)
class LeafFunction:
    """One-complex-variable restriction w -> E(scale * w, z0) of the
    transverse extension, rescaled so the evaluation disk keeps the
    exponential factor within budget."""

    traj: IntegralTrajectory
    scale: float
    z0: float

    @property
    def label(self):
        return _single_label(self.traj.obs)

    def __call__(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=np.complex128)
        nK = self.label.n * self.traj.obs.K
        y = self.scale * w
        omega = TWO_PI * nK * y
        tw = twisted_integral_batch(self.traj, omega)
        return (
            np.exp(2j * np.pi * nK * (self.z0 - y * self.traj.T)) * self.traj.value
            + 2j * np.pi * nK * y * np.exp(2j * np.pi * nK * self.z0) * tw
        )


def leaf_function(
    obs: Observable,
    a: Frame,
    x: GroupElement,
    T: float,
    z0: float = 0.0,
    radius: float = 27.0,
    log_budget: float = 20.0,
) -> LeafFunction:
    """Leaf through x with |Im y| <= log_budget/(2 pi nK T) on |w| <= radius."""
    label = _single_label(obs)
    nK = abs(label.n * obs.K)
    scale = log_budget / (TWO_PI * nK * T * radius)
    return LeafFunction(IntegralTrajectory(obs, a, x, T), scale, z0)


@dataclass(frozen=True)
class RemezReport:
    d_min: float
    sup_D: float
    sup_omega: float
    leb_D: float
    leb_omega: float

    def holds_for(self, d: float) -> bool:
        return self.sup_D <= (4.0 * self.leb_D / self.leb_omega) ** d * self.sup_omega * (
            1.0 + 1e-12
        )


def remez_check(values: np.ndarray, points: np.ndarray, omega_intervals) -> RemezReport:
    """Empirical Chebyshev degree: the least d with
    sup_D |f| <= (4 Leb(D)/Leb(omega))^d sup_omega |f| (dimension one).

    `values` are |f| samples (or complex f) on `points` covering D; omega is
    a finite union of subintervals of D.
    """
    points = np.asarray(points, dtype=float)
    if len(points) < (1 << 10):
        raise ValueError("need at least 2^10 sample points")
    mag = np.abs(np.asarray(values))
    leb_D = float(points.max() - points.min())
    mask = np.zeros(len(points), dtype=bool)
    leb_omega = 0.0
    for lo, hi in omega_intervals:
        if lo < points.min() - 1e-12 or hi > points.max() + 1e-12:
            raise ValueError("omega must be contained in D")
        mask |= (points >= lo) & (points <= hi)
        leb_omega += hi - lo
    if not mask.any():
        raise ValueError("omega contains no sample points")
    sup_D = float(mag.max())
    sup_omega = float(mag[mask].max())
    base = 4.0 * leb_D / leb_omega
    if sup_omega <= 0.0:
        d_min = math.inf if sup_D > 0 else 0.0
    elif sup_D <= sup_omega:
        d_min = 0.0
    else:
        d_min = math.log(sup_D / sup_omega) / math.log(base)
    return RemezReport(float(d_min), sup_D, sup_omega, leb_D, leb_omega)


@dataclass(frozen=True)
class ValencyReport:
    r: float
    t: float
    M_r: float
    osc_t: float
    bound: float
    observed: int


def valency_bound(
    fn,
    r: float = 27.0,
    t: float = 3.0,
    boundary_samples: int = 1 << 12,
    probe_levels: int = 32,
) -> ValencyReport:
    """Checkable valency estimate for a holomorphic function of one variable.

    The maximum modulus M(r) is sampled on |z| = r, the oscillation O(t) on
    the real segment [-t, t], and the bound follows the maximum-principle
    chain: nu_f(t) <= log(4 M(r)/O(t)) / log((r - 2t)/(3t) - 1), which
    requires r > 8t.  The observed valency is the maximum over probe levels
    of half the sign changes of Re f - w around |z| = t.
    """
    if not (t > 1.0 and r > 8.0 * t):
        raise ValueError("need r > 8t > 8 for a positive log in the bound")
    theta = TWO_PI * np.arange(boundary_samples) / boundary_samples
    circle_r = r * np.exp(1j * theta)
    vals_r = np.asarray(fn(circle_r))
    if not np.all(np.isfinite(vals_r)):
        raise NonAnalytic("non-finite boundary values")
    M_r = float(np.abs(vals_r).max())
    M_inner = float(np.abs(np.asarray(fn(0.9 * circle_r))).max())
    if M_r > 1e10 * max(M_inner, 1e-300):
        raise NonAnalytic("boundary maxima explode under radius refinement")
    xs = np.linspace(-t, t, 1 << 10)
    vals_t = np.asarray(fn(xs.astype(complex)))
    sub = vals_t[:: max(1, len(vals_t) // 256)]
    osc = float(np.abs(sub[:, None] - sub[None, :]).max())
    if osc <= 0.0:
        return ValencyReport(r, t, M_r, 0.0, math.inf, 0)
    bound = math.log(4.0 * M_r / osc) / math.log((r - 2.0 * t) / (3.0 * t) - 1.0)
    circle_t = t * np.exp(1j * theta)
    re_vals = np.asarray(fn(circle_t)).real
    lo, hi = re_vals.min(), re_vals.max()
    observed = 0
    for w in np.linspace(lo, hi, probe_levels + 2)[1:-1]:
        sgn = np.sign(re_vals - w)
        sgn = sgn[sgn != 0]
        changes = int((sgn[1:] != sgn[:-1]).sum()) + int(sgn[0] != sgn[-1])
        observed = max(observed, changes // 2)
    return ValencyReport(r, t, M_r, osc, float(bound), observed)
