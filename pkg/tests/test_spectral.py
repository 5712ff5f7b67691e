import cmath
import math

import numpy as np
import pytest
from scipy.integrate import quad

from nilflow.errors import LabelMismatch
from nilflow.heis import GroupElement, SkewShiftParams, named_frame, nilflow, return_params
from nilflow.spectral import (
    BumpProfile,
    CharLabel,
    LadderFunction,
    Observable,
    canonical_label,
    coeff_norms,
    default_bump,
    eval_character,
    invariant_distribution,
    lift_eval,
    omega_eta_check,
    sobolev_surrogate,
)


def test_eval_character_examples():
    assert eval_character(CharLabel(0, 1), 1, 0.0, 0.0) == 1.0
    assert eval_character(CharLabel(0, 1), 1, 0.0, 0.5) == pytest.approx(-1.0)
    assert eval_character(CharLabel(1, 1), 2, 0.25, 0.125) == pytest.approx(-1.0)


def test_canonical_label():
    assert canonical_label(5, 2, 1) == CharLabel(1, 2)
    assert canonical_label(-1, 3, 2) == CharLabel(5, 3)
    with pytest.raises(ValueError):
        canonical_label(0, 0)


def test_bump_profile():
    bump = default_bump()
    assert abs(bump.integral_check() - 1.0) < 1e-10
    assert bump.chi(0.0) == 0.0 and bump.chi(1.0) == 0.0
    assert bump.cdf(0.0) == 0.0 and bump.cdf(1.0) == 1.0
    u = np.linspace(0, 1, 999)
    assert np.all(np.diff(bump.cdf(u)) >= 0)
    # cdf derivative matches chi
    h = 1e-5
    mid = np.linspace(0.1, 0.9, 33)
    approx = (bump.cdf(mid + h) - bump.cdf(mid - h)) / (2 * h)
    assert np.abs(approx - bump.chi(mid)).max() < 1e-6
    with pytest.raises(ValueError):
        BumpProfile(100)  # not a power of two


@pytest.mark.parametrize("K", [1, 2, 3])
@pytest.mark.parametrize("y_sign", [-1, +1])
def test_invariant_distribution_is_T_invariant(K, y_sign):
    ssp = SkewShiftParams(0.37241, 0.1413 % (1 / K), 1.0, y_sign, K)
    rng = np.random.default_rng(5)
    for _ in range(25):
        n = int(rng.integers(-3, 4)) or 1
        label = CharLabel(int(rng.integers(0, K * abs(n))), n)
        coeffs = {int(j): complex(*rng.normal(size=2)) for j in rng.integers(-6, 7, size=5)}
        F = LadderFunction(label, coeffs)
        lhs = invariant_distribution(label, K, ssp, F.pullback(ssp, K))
        rhs = invariant_distribution(label, K, ssp, F)
        assert abs(lhs - rhs) < 1e-10


def test_invariant_distribution_paper_phase():
    """K = 1, y_sign = +1 recovers e^{-2 pi i[(rho m + sigma K n) j + rho K n C(j,2)]}."""
    ssp = SkewShiftParams(0.37241, 0.1413, 1.0, +1, 1)
    m, n = 2, 3
    label = CharLabel(m, n)
    for j in (0, 1, 2, 5, -3):
        got = invariant_distribution(label, 1, ssp, LadderFunction(label, {j: 1.0}))
        want = cmath.exp(
            -2j * math.pi * ((ssp.rho * m + ssp.sigma0 * n) * j + ssp.rho * n * j * (j - 1) / 2)
        )
        assert abs(got - want) < 1e-12


def test_invariant_distribution_linearity_and_mismatch():
    ssp = SkewShiftParams(0.618, 0.31, 1.0, -1, 1)
    label = CharLabel(0, 1)
    F1 = LadderFunction(label, {0: 1.0, 2: -0.5j})
    F2 = LadderFunction(label, {1: 0.7})
    a, b = 1.3 - 0.2j, -0.8j
    lhs = invariant_distribution(
        label, 1, ssp,
        LadderFunction(label, {0: a * 1.0, 2: a * -0.5j, 1: b * 0.7}),
    )
    rhs = a * invariant_distribution(label, 1, ssp, F1) + b * invariant_distribution(
        label, 1, ssp, F2
    )
    assert abs(lhs - rhs) < 1e-12
    with pytest.raises(LabelMismatch):
        invariant_distribution(CharLabel(0, 2), 1, ssp, F1)


def test_unimodularity():
    ssp = SkewShiftParams(0.618, 0.31, 1.0, -1, 1)
    label = CharLabel(0, 1)
    for j in range(-4, 5):
        d = invariant_distribution(label, 1, ssp, LadderFunction(label, {j: 1.0}))
        assert abs(abs(d) - 1.0) < 1e-12


def test_lift_defining_identity():
    """int_0^{t_a} f(phi^X_t xi) dt = F(xi), checked by quadrature."""
    frame = named_frame("golden")
    ssp = return_params(frame)
    obs = Observable(1, {CharLabel(0, 1): 1.0, CharLabel(1, 2): 0.5 - 0.25j})
    rng = np.random.default_rng(11)
    for _ in range(10):
        y, z = rng.random(), rng.random()
        xi = GroupElement(0.0, y, z)
        want = obs.torus_value(y, z)
        re = quad(lambda t: lift_eval(obs, frame, nilflow(frame, xi, t)).real, 0, ssp.t_a)[0]
        im = quad(lambda t: lift_eval(obs, frame, nilflow(frame, xi, t)).imag, 0, ssp.t_a)[0]
        assert abs(complex(re, im) - want) < 1e-8


def test_observable_gamma_invariance():
    """Evaluation is well defined on the quotient: gamma * g and g agree."""
    from nilflow.heis import lattice_element, mul

    frame = named_frame("golden")
    obs = Observable(1, {CharLabel(0, 1): 1.0, CharLabel(2, -1): 0.3j})
    rng = np.random.default_rng(13)
    for _ in range(30):
        g = GroupElement(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2))
        gamma = lattice_element(*rng.integers(-3, 4, size=3))
        from nilflow.heis import reduce

        v1 = lift_eval(obs, frame, reduce(mul(gamma, g)))
        v2 = lift_eval(obs, frame, reduce(g))
        assert abs(v1 - v2) < 1e-10


def test_observable_roundtrip():
    obs = Observable(2, {CharLabel(1, 2): 0.5 - 0.25j, CharLabel(0, -1): 2.0})
    again = Observable.from_dict(obs.to_dict())
    assert again.K == obs.K and again.coeffs == obs.coeffs


def test_coeff_norms():
    c = {CharLabel(0, 1): 1.0}
    cn = coeff_norms(c, s=4, R=1.0, K=1)
    assert cn.sobolev == pytest.approx(4.0)
    assert cn.analytic == pytest.approx(math.e)
    assert coeff_norms({}, 2.0, 1.0).sobolev == 0.0
    # monotonicity in s and R
    c = {CharLabel(0, 1): 1.0, CharLabel(1, 2): 0.3, CharLabel(0, -3): 0.1j}
    for s1, s2 in [(0.0, 1.0), (1.0, 3.5)]:
        assert coeff_norms(c, s1, 1.0).sobolev <= coeff_norms(c, s2, 1.0).sobolev
    for r1, r2 in [(0.1, 0.5), (0.5, 2.0)]:
        assert coeff_norms(c, 2.0, r1).analytic <= coeff_norms(c, 2.0, r2).analytic
    assert coeff_norms(c, 0.0, 1.0).sobolev <= coeff_norms(c, 4.0, 1.0).sobolev


def test_omega_eta_check():
    grid = [0.5, 1.0, 2.0, 4.0, 8.0]
    rep = omega_eta_check({CharLabel(0, 1): 1.0, CharLabel(1, 3): 0.2}, 0.5, grid)
    assert rep.passed and rep.c_eta > 0
    assert omega_eta_check({}, 0.5, grid).c_eta == 0.0
    gauss = {CharLabel(0, n): math.exp(-(n**2)) for n in range(1, 9)}
    rep = omega_eta_check(gauss, 0.5, grid)
    assert rep.passed and rep.c_eta < 10.0
    with pytest.raises(ValueError):
        omega_eta_check({}, 1.5, grid)


def test_sobolev_surrogate():
    frame = named_frame("golden")
    assert sobolev_surrogate(Observable(1, {}), frame, 4.0) == 0.0
    obs = Observable.single(0, 1)
    v0 = sobolev_surrogate(obs, frame, 0.0)
    assert v0 == pytest.approx(default_bump().sup / return_params(frame).t_a * 2 ** 0.0, rel=1e-12)
    # halving t_a (doubling <X, X0>) increases the surrogate
    from nilflow.heis import Frame

    tighter = Frame(2.0, 2 * frame.b, frame.c / 2, frame.d / 2)
    assert sobolev_surrogate(obs, tighter, 2.0) > sobolev_surrogate(obs, frame, 2.0)


def test_birkhoff_sum_ladder_support():
    """y-Fourier support of the Birkhoff sum lies on {m + j n K y_sign}."""
    frame = named_frame("golden")
    ssp = return_params(frame)
    K, m, n, J = 1, 0, 1, 8
    Q = 256
    y = np.arange(Q) / Q
    z = 0.31
    total = np.zeros(Q, dtype=complex)
    yy, zz = y.copy(), np.full(Q, z)
    for _ in range(J):
        total += np.exp(2j * np.pi * (m * yy + n * K * zz))
        yy, zz = (yy + ssp.rho) % 1.0, (zz + ssp.y_sign * yy + ssp.sigma0) % 1.0
    spec = np.fft.fft(total) / Q
    support = {f % Q for f in range(-Q // 2, Q // 2) if abs(spec[f % Q]) > 1e-9}
    expected = {(m + j * n * K * ssp.y_sign) % Q for j in range(J)}
    assert support == expected
