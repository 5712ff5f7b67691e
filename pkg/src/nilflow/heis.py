"""Exact arithmetic of the 3-dimensional Heisenberg group and its nilflows.

Points live in matrix-entry coordinates: (x, y, z) stands for the upper
triangular matrix with first row (1, x, z) and second row (0, 1, y).  In
these coordinates the group law is polynomial,

    (x1, y1, z1) * (x2, y2, z2) = (x1 + x2, y1 + y2, z1 + z2 + x1*y2),

and reduction modulo the lattice Gamma_K (integer x, y and z in K^-1 Z) is
exact floor arithmetic.  A frame is a triple (X, Y, Z0) of left-invariant
fields with [X, Y] = Z0; flowing along X and reducing yields a linear skew
shift of the transverse 2-torus, whose parameters `return_params` extracts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import NonTransversal

# Values within SNAP of an integer are treated as that integer during
# reduction, so orbits that graze a face of the fundamental domain do not
# flap between equivalent representatives.
SNAP = 1e-14


@dataclass(frozen=True, slots=True)
class GroupElement:
    x: float
    y: float
    z: float

    def __iter__(self):
        return iter((self.x, self.y, self.z))


IDENTITY = GroupElement(0.0, 0.0, 0.0)


@dataclass(frozen=True, slots=True)
class LatticeSpec:
    """Lattice Gamma_K: integer x, y and central coordinate in K^-1 Z."""

    K: int = 1

    def __post_init__(self):
        if self.K < 1 or self.K != int(self.K):
            raise ValueError(f"K must be a positive integer, got {self.K}")


@dataclass(frozen=True, slots=True)
class Frame:
    """Heisenberg triple X = a X0 + b Y0 + v Z0, Y = c X0 + d Y0 + w Z0.

    The SL(2) part (a, b; c, d) must have unit determinant so that
    [X, Y] = Z0 exactly.
    """

    a: float
    b: float
    c: float
    d: float
    v: float = 0.0
    w: float = 0.0
    K: int = 1

    def __post_init__(self):
        det = self.a * self.d - self.b * self.c
        if abs(det - 1.0) > 1e-12:
            raise ValueError(f"frame determinant {det!r} != 1 beyond 1e-12")

    @property
    def lattice(self) -> LatticeSpec:
        return LatticeSpec(self.K)

    @property
    def y_norm(self) -> float:
        """Euclidean size of the Y generator, used in norm surrogates."""
        return math.sqrt(self.c * self.c + self.d * self.d + self.w * self.w)


@dataclass(frozen=True, slots=True)
class SkewShiftParams:
    """Return map T(y, z) = (y + rho, z + y_sign*y + sigma0) of a frame.

    rho is taken mod 1, sigma0 mod 1/K; t_a is the return time to the
    transverse torus {x = 0}.
    """

    rho: float
    sigma0: float
    t_a: float
    y_sign: int
    K: int = 1

    def apply(self, y: float, z: float) -> tuple[float, float]:
        y2 = (y + self.rho) % 1.0
        z2 = (z + self.y_sign * y + self.sigma0) % (1.0 / self.K)
        return y2, z2


def identity_frame(K: int = 1) -> Frame:
    return Frame(1.0, 0.0, 0.0, 1.0, 0.0, 0.0, K)


_GOLDEN_RHO = (math.sqrt(5.0) - 1.0) / 2.0
_SQRT2_RHO = math.sqrt(2.0) - 1.0


def named_frame(name: str, K: int = 1) -> Frame:
    """Construct one of the standard experiment frames.

    "golden" and "sqrt2" are bounded-type frames: both endpoints of the
    projected geodesic have bounded partial quotients, so forward and
    backward renormalization orbits stay in a compact part of moduli space.
    An upper-triangular matrix cannot achieve that (one endpoint is forced
    to a cusp), hence the non-trivial lower row: for rotation number rho the
    frame is (1, rho; c, 1 + rho*...) chosen with determinant one and second
    geodesic endpoint of the same continued-fraction type.

    "rational:p/q" gives the resonant control frame (1, p/q; 0, 1).
    """
    if name == "golden":
        rho = _GOLDEN_RHO
        phi = rho + 1.0
        s5 = math.sqrt(5.0)
        # axis of the golden closed geodesic: endpoints -rho and phi
        return Frame(1.0, rho, -1.0 / s5, phi / s5, 0.0, 0.0, K)
    if name == "sqrt2":
        rho = _SQRT2_RHO
        # endpoints -rho and 1+rho; rows (1, rho; -c, (1+rho) c) with det = c(1+2rho) = 1
        c = 1.0 / (1.0 + 2.0 * rho)
        return Frame(1.0, rho, -c, (1.0 + rho) * c, 0.0, 0.0, K)
    if name.startswith("rational:"):
        frac = name.split(":", 1)[1]
        p, q = frac.split("/") if "/" in frac else (frac, "1")
        rho = int(p) / int(q)
        return Frame(1.0, rho, 0.0, 1.0, 0.0, 0.0, K)
    raise ValueError(f"unknown frame name {name!r}")


def mul(g1: GroupElement, g2: GroupElement) -> GroupElement:
    return GroupElement(g1.x + g2.x, g1.y + g2.y, g1.z + g2.z + g1.x * g2.y)


def inverse(g: GroupElement) -> GroupElement:
    return GroupElement(-g.x, -g.y, g.x * g.y - g.z)


def exp_lie(p: float, q: float, r: float, t: float) -> GroupElement:
    """exp of t*(p N_X + q N_Y + r N_Z); nilpotency truncates the series."""
    return GroupElement(t * p, t * q, t * r + 0.5 * t * t * p * q)


def _snap_floor(x: float) -> int:
    n = math.floor(x)
    if x - n > 1.0 - SNAP:
        return n + 1
    return n


def reduce(g: GroupElement, lattice: LatticeSpec | int = 1) -> GroupElement:
    """Canonical representative of Gamma_K * g in [0,1) x [0,1) x [0,1/K).

    Left-multiplies by (m,0,0) with m = -floor(x) (shifting z by m*y), then
    by (0,n,0), then reduces z mod 1/K.
    """
    K = lattice.K if isinstance(lattice, LatticeSpec) else int(lattice)
    m = -_snap_floor(g.x)
    x = g.x + m
    if x < 0.0 or x >= 1.0:  # snapped across the face
        x = 0.0
    z = g.z + m * g.y
    n = -_snap_floor(g.y)
    y = g.y + n
    if y < 0.0 or y >= 1.0:
        y = 0.0
    zK = z * K
    p = -_snap_floor(zK)
    zf = zK + p
    if zf < 0.0 or zf >= 1.0:
        zf = 0.0
    return GroupElement(x, y, zf / K)


def lattice_element(m: int, n: int, p: int, K: int = 1) -> GroupElement:
    return GroupElement(float(m), float(n), p / K)


def nilflow(a: Frame, g: GroupElement, t: float) -> GroupElement:
    """Time-t nilflow of g along the frame's X field, lattice-reduced."""
    return reduce(mul(g, exp_lie(a.a, a.b, a.v, t)), a.K)


def nilflow_raw(a: Frame, g: GroupElement, t: float) -> GroupElement:
    """Nilflow without reduction (for short-segment bookkeeping)."""
    return mul(g, exp_lie(a.a, a.b, a.v, t))


def flow_Y(a: Frame, g: GroupElement, t: float) -> GroupElement:
    """Time-t flow along the frame's Y field, lattice-reduced."""
    return reduce(mul(g, exp_lie(a.c, a.d, a.w, t)), a.K)


def flow_Z(a: Frame, g: GroupElement, t: float) -> GroupElement:
    """Central flow: shifts z by t."""
    return reduce(GroupElement(g.x, g.y, g.z + t), a.K)


def return_params(a: Frame) -> SkewShiftParams:
    """Skew-shift data of the first-return map to the transverse torus.

    Derived by flowing xi = (0, y, z) for one return time and left-reducing;
    the orientation of the z-update depends on the sign of <X, X0>:

      a > 0:  T(y,z) = (y + b/a,  z - y + v/a - b/(2a))      y_sign = -1
      a < 0:  T(y,z) = (y - b/a,  z + y - v/a - b/(2a))      y_sign = +1
    """
    if a.a == 0.0:
        raise NonTransversal("frame has <X, X0> = 0")
    t_a = 1.0 / abs(a.a)
    invK = 1.0 / a.K
    if a.a > 0:
        rho = (a.b / a.a) % 1.0
        sigma0 = (a.v / a.a - a.b / (2.0 * a.a)) % invK
        y_sign = -1
    else:
        rho = (-a.b / a.a) % 1.0
        sigma0 = (-a.v / a.a - a.b / (2.0 * a.a)) % invK
        y_sign = +1
    return SkewShiftParams(rho, sigma0, t_a, y_sign, a.K)
