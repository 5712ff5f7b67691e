"""Translation flow on the line: the model of every irreducible component.

Normalized ergodic integrals of the translation flow converge in L^2 to a
multiple of the function with Fourier transform chi(u) = (e^{iu} - 1)/(iu);
the renormalized family has transform T^{1/2} chi(T u), whose L^2 norm is
T-independent (the dilation is unitary).  Everything here is checked on a
uniform grid in the Fourier picture, where the convergence statement reads

    || sqrt(T) chi(T u) (fhat(u) - fhat(0)) ||_{L^2(du)} -> 0.

The Fourier transform is the unitary one, so grid Plancherel is exact up to
FFT rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .errors import GridOverflow

_SQRT_2PI = math.sqrt(2.0 * math.pi)


def chi(u):
    """(e^{iu} - 1)/(iu), series branch below 1e-4 for the removable zero."""
    u = np.asarray(u, dtype=np.complex128)
    out = np.empty_like(u)
    small = np.abs(u) < 1e-4
    us = u[small]
    # sum_{k>=0} (iu)^k/(k+1)!
    iu = 1j * us
    out[small] = 1.0 + iu / 2 + iu**2 / 6 + iu**3 / 24 + iu**4 / 120 + iu**5 / 720
    ub = u[~small]
    out[~small] = (np.exp(1j * ub) - 1.0) / (1j * ub)
    return out if out.ndim else complex(out)


def _chi2_tail(V: float) -> float:
    """int_V^inf (2 - 2cos v)/v^2 dv by two integrations by parts.

    Remainder after the explicit terms is bounded by 4/V^3.
    """
    return 2.0 / V + 2.0 * math.sin(V) / V**2 - 4.0 * math.cos(V) / V**3


def chi_abs2_integral(V: float = 1000.0) -> float:
    """int |chi|^2 du over R, adaptive quadrature plus tail bound."""
    def f(v):
        if abs(v) < 1e-6:
            return 1.0 - v * v / 12.0
        return (2.0 - 2.0 * math.cos(v)) / (v * v)

    body, _ = quad(f, 0.0, V, limit=2000)
    return 2.0 * (body + _chi2_tail(V))


def c_constant(V: float = 1000.0) -> float:
    """L^2 norm of chi; the numerical value is sqrt(2 pi)."""
    return math.sqrt(chi_abs2_integral(V))


def theta_hat_scaled(T: float, u):
    """Fourier transform of the renormalized theta vector: sqrt(T) chi(Tu)."""
    if T <= 0:
        raise ValueError("T must be positive")
    return math.sqrt(T) * chi(np.asarray(u) * T)


def theta_scaled_l2_norm(T: float, V: float = 1000.0) -> float:
    """||theta_hat_scaled(T, .)||_{L^2(du)} by direct quadrature per T."""
    if T <= 0:
        raise ValueError("T must be positive")

    def g(u):
        v = T * u
        if abs(v) < 1e-6:
            return T * (1.0 - v * v / 12.0)
        return (2.0 - 2.0 * math.cos(v)) / (T * u * u)

    body, _ = quad(g, 0.0, V / T, limit=2000)
    return math.sqrt(2.0 * (body + _chi2_tail(V)))


@dataclass(frozen=True)
class LineGrid:
    """Uniform grid of N samples on [-W, W), N a power of two >= 2^8."""

    N: int
    W: float

    def __post_init__(self):
        if self.N < (1 << 8) or self.N & (self.N - 1):
            raise ValueError("N must be a power of two >= 256")
        if self.W <= 0:
            raise ValueError("W must be positive")

    @property
    def spacing(self) -> float:
        return 2.0 * self.W / self.N

    @property
    def u(self) -> np.ndarray:
        return -self.W + self.spacing * np.arange(self.N)

    @property
    def freq(self) -> np.ndarray:
        """Angular frequencies of the unitary grid transform."""
        return 2.0 * np.pi * np.fft.fftfreq(self.N, d=self.spacing)


@dataclass(frozen=True)
class LineFunction:
    grid: LineGrid
    samples: np.ndarray

    def __post_init__(self):
        if self.samples.shape != (self.grid.N,):
            raise ValueError("samples must match the grid")

    @staticmethod
    def gaussian(grid: LineGrid, sigma: float = 1.0, center: float = 0.0) -> "LineFunction":
        u = grid.u
        return LineFunction(grid, np.exp(-((u - center) ** 2) / (2.0 * sigma**2)).astype(complex))

    @staticmethod
    def from_callable(grid: LineGrid, fn) -> "LineFunction":
        return LineFunction(grid, np.asarray(fn(grid.u), dtype=complex))

    def norm(self) -> float:
        return math.sqrt(self.grid.spacing * float(np.sum(np.abs(self.samples) ** 2)))

    def leb(self) -> complex:
        """int f du on the grid (endpoint terms are negligible by decay)."""
        return complex(self.grid.spacing * self.samples.sum())

    def edge_decay(self) -> float:
        n = self.grid.N
        k = max(4, n // 1024)
        return float(
            max(np.abs(self.samples[:k]).max(), np.abs(self.samples[-k:]).max())
        )

    def ft(self) -> np.ndarray:
        """Unitary Fourier transform sampled on grid.freq."""
        g = self.grid
        phase = np.exp(1j * g.freq * g.W)
        return g.spacing / _SQRT_2PI * phase * np.fft.fft(self.samples)

    def ft_norm(self) -> float:
        dfreq = 2.0 * np.pi / (self.grid.N * self.grid.spacing)
        return math.sqrt(dfreq * float(np.sum(np.abs(self.ft()) ** 2)))


def l2_convergence_residual(f: LineFunction, T: float) -> float:
    """|| sqrt(T) chi(T u)(fhat(u) - fhat(0)) ||_{L^2(du)} on the grid.

    This is the exact Fourier-side form of the distance between the
    normalized ergodic integral and its theta-vector limit.
    """
    if T <= 0:
        raise ValueError("T must be positive")
    if T > f.grid.W / 4.0:
        raise GridOverflow(f"T = {T} exceeds W/4 = {f.grid.W / 4}")
    if f.edge_decay() > 1e-12:
        raise GridOverflow("test function does not decay below 1e-12 at the edges")
    fhat = f.ft()
    f0 = fhat[0]  # zero frequency
    vals = np.abs(theta_hat_scaled(T, f.grid.freq) / math.sqrt(T) * T) ** 2 * np.abs(
        fhat - f0
    ) ** 2 / T
    dfreq = 2.0 * np.pi / (f.grid.N * f.grid.spacing)
    return math.sqrt(dfreq * float(vals.sum()))


def dilate(f: LineFunction, t: float) -> LineFunction:
    """U_t f (u) = e^{t/2} f(e^t u) by cubic interpolation on the grid."""
    from scipy.interpolate import CubicSpline

    if f.edge_decay() > 1e-12:
        raise GridOverflow("function does not decay at the grid edges")
    et = math.exp(t)
    spline = CubicSpline(f.grid.u, f.samples)
    u = f.grid.u
    target = et * u
    inside = np.abs(target) <= f.grid.u[-1]
    vals = np.zeros(f.grid.N, dtype=complex)
    vals[inside] = spline(target[inside])
    out = LineFunction(f.grid, math.exp(t / 2.0) * vals)
    if out.edge_decay() > 1e-12:
        raise GridOverflow("dilated support exits the resolved grid")
    return out


def intertwine_check(f: LineFunction, t: float) -> float:
    """max of the unitarity and Lebesgue-scaling residuals of U_t.

    ||U_t f|| = ||f|| and Leb(U_t f) = e^{-t/2} Leb(f): the second is the
    scaling law of the normalized invariant distribution.
    """
    g = dilate(f, t)
    r1 = abs(g.norm() - f.norm())
    r2 = abs(g.leb() - math.exp(-t / 2.0) * f.leb())
    return max(r1, r2)
