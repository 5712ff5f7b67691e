"""Characters on the transverse torus and their lifts to the nilmanifold.

The transverse model of an irreducible component with central parameter
n != 0 is the ladder of characters e_{m+jn,n}(y, z) = e(my + nKz) on
R/Z x R/(K^-1 Z).  The skew-shift return map permutes each ladder up to a
phase, which pins the invariant distribution D_{(m,n)} on it; observables on
the nilmanifold are built by spreading torus data along the flow with a
fixed bump profile (the right inverse of the return-time integral).

The phase of D_{(m,n)} is derived here from exact invariance under the
return map in this package's sign convention: writing
d_j = e(-(A j + B C(j,2))), invariance forces

    y_sign = +1:  B = n rho / K,   A = (m rho + n K sigma0 - B C(K,2)) / K
    y_sign = -1:  B = -n rho / K,  A = (-(m + Kn) rho - n K sigma0 - B C(K,2)) / K

which for K = 1, y_sign = +1 is the classical formula
d_j = e(-[(rho m + sigma n) j + rho n C(j,2)]).
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import NamedTuple

import numpy as np
from scipy.integrate import cumulative_simpson, quad
from scipy.interpolate import PchipInterpolator

from .errors import LabelMismatch, NonTransversal
from .heis import Frame, GroupElement, SkewShiftParams, exp_lie, mul, return_params

TWO_PI = 2.0 * math.pi


class CharLabel(NamedTuple):
    """Component label (m, n), n != 0; canonical m lies in {0..K|n|-1}."""

    m: int
    n: int


def canonical_label(m: int, n: int, K: int = 1) -> CharLabel:
    if n == 0:
        raise ValueError("central parameter n must be nonzero")
    return CharLabel(m % (K * abs(n)), n)


def eval_character(label: CharLabel, K: int, y: float, z: float) -> complex:
    return cmath.exp(2j * math.pi * (label.m * y + label.n * K * z))


@dataclass(frozen=True)
class LadderFunction:
    """Finite Fourier data F = sum_j F_j e_{m+jn,n} on one ladder."""

    label: CharLabel
    coeffs: dict[int, complex]

    def eval(self, K: int, y: float, z: float) -> complex:
        m, n = self.label
        return sum(
            fj * cmath.exp(2j * math.pi * ((m + j * n) * y + n * K * z))
            for j, fj in self.coeffs.items()
        )

    def pullback(self, ssp: SkewShiftParams, K: int) -> "LadderFunction":
        """F o T, again supported on the same ladder.

        e_{m+jn,n} o T = e((m+jn) rho + nK sigma0) * e_{m+(j+K*y_sign)n, n}.
        """
        m, n = self.label
        out: dict[int, complex] = {}
        for j, fj in self.coeffs.items():
            phase = cmath.exp(2j * math.pi * ((m + j * n) * ssp.rho + n * K * ssp.sigma0))
            jp = j + K * ssp.y_sign
            out[jp] = out.get(jp, 0.0) + fj * phase
        return LadderFunction(self.label, out)


def invariant_distribution(
    label: CharLabel, K: int, ssp: SkewShiftParams, F: LadderFunction
) -> complex:
    """Value of the return-map-invariant distribution D_{(m,n)} on F."""
    if F.label != label:
        raise LabelMismatch(f"ladder data for {F.label} fed to D_{label}")
    m, n = label
    rho, sig = ssp.rho, ssp.sigma0
    ck2 = K * (K - 1) / 2.0
    if ssp.y_sign == +1:
        B = n * rho / K
        A = (m * rho + n * K * sig - B * ck2) / K
    else:
        B = -n * rho / K
        A = (-(m + K * n) * rho - n * K * sig - B * ck2) / K
    total = 0.0 + 0.0j
    for j, fj in F.coeffs.items():
        tri = j * (j - 1) / 2.0
        total += fj * cmath.exp(-2j * math.pi * ((A * j) % 1.0 + (B * tri) % 1.0))
    return total


class BumpProfile:
    """Smooth bump chi on (0,1) with unit integral, plus its CDF table.

    chi(u) is proportional to exp(-1/(u(1-u))); the cumulative table has
    `resolution` intervals and is interpolated monotone-cubically.
    """

    def __init__(self, resolution: int = 1 << 14):
        if resolution < 16 or resolution & (resolution - 1):
            raise ValueError("resolution must be a power of two >= 16")
        self.resolution = resolution
        u = np.linspace(0.0, 1.0, resolution + 1)
        raw = np.zeros_like(u)
        inner = u[1:-1]
        raw[1:-1] = np.exp(-1.0 / (inner * (1.0 - inner)))
        table = cumulative_simpson(raw, x=u, initial=0.0)
        # Simpson increments can dip below zero at denormal scale where the
        # bump is flat; enforce monotonicity before interpolating.
        table = np.maximum.accumulate(np.clip(table, 0.0, None))
        self._norm = table[-1]
        self.u = u
        self.values = raw / self._norm
        self.cdf_table = table / self._norm
        self._cdf = PchipInterpolator(u, self.cdf_table)
        self.sup = float(self.values.max())

    def chi(self, u):
        """Pointwise bump value (direct formula, not interpolation)."""
        u = np.asarray(u, dtype=float)
        out = np.zeros_like(u)
        mask = (u > 0.0) & (u < 1.0)
        ui = u[mask]
        out[mask] = np.exp(-1.0 / (ui * (1.0 - ui))) / self._norm
        return out if out.ndim else float(out)

    def cdf(self, u):
        u = np.asarray(u, dtype=float)
        out = self._cdf(np.clip(u, 0.0, 1.0))
        return out if out.ndim else float(out)

    def integral_check(self) -> float:
        """Independent quadrature of the normalized bump."""
        val, _ = quad(lambda t: math.exp(-1.0 / (t * (1.0 - t))) / self._norm, 0.0, 1.0)
        return val

    @lru_cache(maxsize=16)
    def derivative_bound(self, order: int) -> float:
        """sup |chi^(order)| estimated by repeated differencing."""
        if order <= 0:
            return self.sup
        m = 1 << 12
        u = np.linspace(0.0, 1.0, m + 1)
        vals = self.chi(u)
        for _ in range(order):
            vals = np.gradient(vals, u)
        return float(np.abs(vals).max())


_DEFAULT_BUMP: BumpProfile | None = None


def default_bump() -> BumpProfile:
    global _DEFAULT_BUMP
    if _DEFAULT_BUMP is None:
        _DEFAULT_BUMP = BumpProfile()
    return _DEFAULT_BUMP


@dataclass(frozen=True)
class Observable:
    """Finite character combination f = sum c_{m,n} R^chi(e_{m,n}).

    The coefficients live on the transverse torus; evaluation on the
    nilmanifold happens relative to a frame via the bump lift.
    """

    K: int = 1
    coeffs: dict[CharLabel, complex] = field(default_factory=dict)
    bump: BumpProfile = field(default_factory=default_bump)

    def __post_init__(self):
        merged: dict[CharLabel, complex] = {}
        for label, c in self.coeffs.items():
            if label[1] == 0:
                raise ValueError("central parameter n must be nonzero")
            lab = CharLabel(int(label[0]), int(label[1]))
            merged[lab] = merged.get(lab, 0.0) + complex(c)
        object.__setattr__(self, "coeffs", merged)

    @staticmethod
    def single(m: int, n: int, K: int = 1, c: complex = 1.0,
               bump: BumpProfile | None = None) -> "Observable":
        return Observable(K, {CharLabel(m, n): c}, bump or default_bump())

    @property
    def labels(self) -> list[CharLabel]:
        return sorted(self.coeffs)

    def torus_value(self, y, z) -> complex:
        """F(y, z) = sum over labels of c * e_{m,n}(y,z); broadcasts."""
        y = np.asarray(y, dtype=float)
        z = np.asarray(z, dtype=float)
        out = np.zeros(np.broadcast(y, z).shape, dtype=complex)
        for (m, n), c in self.coeffs.items():
            out += c * np.exp(2j * np.pi * (m * y + n * self.K * z))
        return out if out.ndim else complex(out)

    def l1(self) -> float:
        return sum(abs(c) for c in self.coeffs.values())

    def sup_bound(self) -> float:
        """sup |R^chi f| <= sup(chi) / t_a * |c|_1 for t_a = 1 frames."""
        return self.bump.sup * self.l1()

    def to_dict(self) -> dict:
        return {
            "K": self.K,
            "bump_resolution": self.bump.resolution,
            "coefficients": [
                [m, n, c.real, c.imag] for (m, n), c in sorted(self.coeffs.items())
            ],
        }

    @staticmethod
    def from_dict(d: dict) -> "Observable":
        bump = (
            default_bump()
            if d.get("bump_resolution", 1 << 14) == 1 << 14
            else BumpProfile(d["bump_resolution"])
        )
        coeffs = {
            CharLabel(int(m), int(n)): complex(re, im)
            for m, n, re, im in d["coefficients"]
        }
        return Observable(int(d.get("K", 1)), coeffs, bump)


def locate_in_tower(a: Frame, ssp: SkewShiftParams, g: GroupElement):
    """Represent a reduced point as phi^X_t(xi), xi on the torus, t in [0,t_a).

    Returns (t, y0, z0).
    """
    if a.a > 0:
        t = g.x / a.a
    elif a.a < 0:
        t = 0.0 if g.x == 0.0 else (g.x - 1.0) / a.a
    else:
        raise NonTransversal("frame has <X, X0> = 0")
    back = mul(g, exp_lie(a.a, a.b, a.v, -t))
    return t, back.y % 1.0, back.z % (1.0 / a.K)


def lift_eval(obs: Observable, a: Frame, g: GroupElement) -> complex:
    """Evaluate R^chi-lifted observable at a reduced nilmanifold point."""
    ssp = return_params(a)
    t, y0, z0 = locate_in_tower(a, ssp, g)
    return obs.torus_value(y0, z0) * obs.bump.chi(t / ssp.t_a) / ssp.t_a


@dataclass(frozen=True)
class CoeffNorms:
    s: float
    R: float
    sobolev: float
    analytic: float


def coeff_norms(coeffs: dict[CharLabel, complex], s: float, R: float, K: int = 1) -> CoeffNorms:
    """|c|_s = (sum (1+K^2 n^2)^s |c|^2)^(1/2) and ||c||_{w,R} = sum e^{|n|R}|c|."""
    sob = 0.0
    ana = 0.0
    for (m, n), c in coeffs.items():
        sob += (1.0 + (K * n) ** 2) ** s * abs(c) ** 2
        ana += math.exp(abs(n) * R) * abs(c)
    return CoeffNorms(s, R, math.sqrt(sob), ana)


@dataclass(frozen=True)
class OmegaEtaReport:
    eta: float
    c_eta: float
    passed: bool
    ratios: tuple[float, ...]


def omega_eta_check(
    coeffs: dict[CharLabel, complex], eta: float, R_grid, K: int = 1
) -> OmegaEtaReport:
    """Minimal C making sum |n||c| e^{|n|R} <= C e^{R^(2-eta)} on the grid."""
    if not 0.0 < eta < 1.0:
        raise ValueError("eta must lie in (0,1)")
    ratios = []
    for R in R_grid:
        v = sum(abs(n) * abs(c) * math.exp(abs(n) * R) for (m, n), c in coeffs.items())
        ratios.append(v / math.exp(R ** (2.0 - eta)))
    c_eta = max(ratios, default=0.0)
    return OmegaEtaReport(eta, c_eta, math.isfinite(c_eta), tuple(ratios))


def sobolev_surrogate(obs: Observable, a: Frame, s: float) -> float:
    """Upper-bound surrogate for |f|_{a,s}; enters error budgets only."""
    ssp = return_params(a)
    c_bump = obs.bump.derivative_bound(math.ceil(s))
    yn = a.y_norm
    total = 0.0
    for (m, n), c in obs.coeffs.items():
        total += (
            abs(c)
            / ssp.t_a
            * (1.0 + yn / ssp.t_a) ** s
            * (1.0 + (obs.K * n) ** 2) ** (s / 2.0)
        )
    return c_bump * total
