"""Renormalization flow on frames and geodesic excursion diagnostics.

renorm scales the X row of a frame by e^t and the Y row by e^-t.  Frames
project to the upper half-plane through the Moebius action of the *inverse*
SL(2) matrix, z(F) = F^{-1}.i = (d i - b)/(-c i + a): with lattice
equivalence acting on frames by right matrix multiplication, this is the
unique choice (up to bounded distortion) under which renormalization moves
the projected point along a hyperbolic geodesic (at speed 2) and reduction
mod SL(2,Z) is meaningful.  The Moebius action of the frame matrix itself
would turn renorm orbits into horocycle-like curves that escape to the cusp
for every frame, emptying the Diophantine condition; see the geodesic
boundedness tests.

The Diophantine integrand exp(delta(g_{-t})/4 - t/2) and the excursion
function integrate this distance along backward and forward renormalization
orbits respectively.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import DegenerateFrame
from .heis import Frame

_MAX_GAUSS_ITER = 10_000


def renorm(a: Frame, t: float) -> Frame:
    """One-parameter renormalization: (X, Y) -> (e^t X, e^-t Y)."""
    et, emt = math.exp(t), math.exp(-t)
    return Frame(a.a * et, a.b * et, a.c * emt, a.d * emt, a.v * et, a.w * emt, a.K)


@dataclass(frozen=True, slots=True)
class ModularPoint:
    re: float
    im: float

    def __post_init__(self):
        if not self.im > 0:
            raise DegenerateFrame(f"modular point needs im > 0, got {self.im}")

    @property
    def as_complex(self) -> complex:
        return complex(self.re, self.im)


def to_modular_point(a: Frame) -> ModularPoint:
    """Project a frame to H by the inverse-matrix Moebius action."""
    denom = complex(a.a, -a.c)
    if abs(denom) < 1e-300:
        raise DegenerateFrame("frame projects to the boundary of H")
    z = complex(-a.b, a.d) / denom
    if z.imag <= 0:
        raise DegenerateFrame(f"projection landed at im = {z.imag}")
    return ModularPoint(z.real, z.imag)


def reduce_fundamental(z: ModularPoint) -> ModularPoint:
    """Gauss reduction to |re| <= 1/2, |z| >= 1 (up to 1e-12 slack)."""
    w = z.as_complex
    for _ in range(_MAX_GAUSS_ITER):
        w = complex(w.real - round(w.real), w.imag)
        if abs(w) * abs(w) >= 1.0 - 1e-12:
            return ModularPoint(w.real, w.imag)
        w = -1.0 / w
    raise DegenerateFrame("Gauss reduction failed to terminate")


def hyp_dist(z: ModularPoint, w: ModularPoint) -> float:
    d2 = (z.re - w.re) ** 2 + (z.im - w.im) ** 2
    return math.acosh(1.0 + d2 / (2.0 * z.im * w.im))


_BASE_POINT = ModularPoint(0.0, 1.0)


def delta_M(a: Frame) -> float:
    """Distance from the base point to the reduced projection of a frame."""
    return hyp_dist(_BASE_POINT, reduce_fundamental(to_modular_point(a)))


@dataclass
class ExcursionRecord:
    frame: Frame
    horizon: float
    step: float
    samples: list[tuple[float, float]]
    dc_value: float
    e_value: float

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "delta", "integrand"])
            for t, d in self.samples:
                writer.writerow(
                    [format(t, ".17g"), format(d, ".17g"),
                     format(math.exp(d / 4.0 - t / 2.0), ".17g")]
                )


def _trapezoid(values: np.ndarray, step: float) -> float:
    if len(values) < 2:
        return 0.0
    return float(np.trapezoid(values, dx=step))


def dc_integral(a: Frame, horizon: float, step: float = 1.0 / 64) -> ExcursionRecord:
    """Composite-trapezoid Diophantine integral along the backward orbit.

    Integrand exp(delta(g_{-t})/4 - t/2) on the grid t = 0, step, ...,
    horizon; also evaluates the forward excursion at T = e^horizon.
    """
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    if horizon > 0 and step > horizon:
        raise ValueError("step must not exceed horizon")
    n = int(round(horizon / step)) if horizon > 0 else 0
    ts = np.arange(n + 1) * step
    deltas = np.array([delta_M(renorm(a, -t)) for t in ts])
    integrand = np.exp(deltas / 4.0 - ts / 2.0)
    dc = _trapezoid(integrand, step)
    ev = excursion_E(a, math.exp(horizon), step) if horizon > 0 else 0.0
    return ExcursionRecord(a, horizon, step, list(zip(ts.tolist(), deltas.tolist())), dc, ev)


def excursion_E(a: Frame, T: float, step: float = 1.0 / 64) -> float:
    """Forward excursion integral over [0, log T] by composite trapezoid."""
    if T < 1.0:
        raise ValueError("T must be >= 1")
    logT = math.log(T)
    if logT == 0.0:
        return 0.0
    n = max(1, int(round(logT / step)))
    ts = np.linspace(0.0, logT, n + 1)
    deltas = np.array([delta_M(renorm(a, logT - t)) for t in ts])
    integrand = np.exp(deltas / 4.0 - ts / 2.0)
    return float(np.trapezoid(integrand, ts))


def cf_partial_quotients(rho, k: int) -> list[int]:
    """First k continued-fraction partial quotients of frac(rho).

    Accepts floats or Fractions; floats are converted to their exact dyadic
    value, so quotients beyond the precision of the input are those of the
    dyadic approximation (pass a Fraction for high-precision diagnostics).
    Terminates early on rationals.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    x = Fraction(rho) % 1
    out: list[int] = []
    for _ in range(k):
        if x == 0:
            break
        x = 1 / x
        q = int(x)
        out.append(q)
        x = x - q
    return out
