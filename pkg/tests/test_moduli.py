import math
from fractions import Fraction

import numpy as np
import pytest

from nilflow.heis import Frame, identity_frame, named_frame
from nilflow.moduli import (
    ModularPoint,
    cf_partial_quotients,
    dc_integral,
    delta_M,
    excursion_E,
    hyp_dist,
    reduce_fundamental,
    renorm,
    to_modular_point,
)

GOLDEN = named_frame("golden")
RATIONAL = named_frame("rational:0/1")


def test_renorm_scales_rows():
    a = renorm(identity_frame(), math.log(2.0))
    assert (a.a, a.d) == (2.0, 0.5)
    assert a.b == a.c == 0.0


def test_renorm_group_property():
    a = Frame(1.0, 0.37, 0.2, (1 + 0.37 * 0.2), v=0.1, w=-0.7)
    lhs = renorm(renorm(a, 0.31), 0.57)
    rhs = renorm(a, 0.88)
    for f in ("a", "b", "c", "d", "v", "w"):
        assert getattr(lhs, f) == pytest.approx(getattr(rhs, f), abs=1e-12)


def test_projection_examples():
    assert to_modular_point(identity_frame()).as_complex == 1j
    z = to_modular_point(renorm(identity_frame(), 0.5))
    assert z.as_complex == pytest.approx(math.exp(-1.0) * 1j)


def test_reduce_fundamental():
    assert reduce_fundamental(ModularPoint(0.0, 1.0)).as_complex == 1j
    r = reduce_fundamental(ModularPoint(1.0, 1.0))
    assert r.as_complex == pytest.approx(1j, abs=1e-12)
    # generator invariance: z + 1 and -1/z reduce to the same point
    rng = np.random.default_rng(1)
    for _ in range(50):
        z = complex(rng.uniform(-2, 2), rng.uniform(0.05, 2.0))
        base = reduce_fundamental(ModularPoint(z.real, z.imag)).as_complex
        for w in (z + 1.0, -1.0 / z):
            r = reduce_fundamental(ModularPoint(w.real, w.imag)).as_complex
            assert abs(r - base) < 1e-10 or abs(abs(r) - 1) < 1e-9
        assert abs(base.real) <= 0.5 + 1e-12 and abs(base) >= 1 - 1e-12


def test_hyp_dist():
    i, i2 = ModularPoint(0, 1), ModularPoint(0, 2)
    assert hyp_dist(i, i2) == pytest.approx(math.log(2.0), abs=1e-12)
    z = ModularPoint(0.3, 0.9)
    assert hyp_dist(z, z) == 0.0
    w = ModularPoint(-0.2, 1.7)
    assert hyp_dist(z, w) == hyp_dist(w, z)


def test_delta_examples():
    assert delta_M(identity_frame()) == 0.0
    for t in (0.25, 1.0, 2.5):
        assert delta_M(renorm(identity_frame(), t)) == pytest.approx(2 * t, abs=1e-9)


def test_delta_golden_bounded_both_directions():
    ts = np.linspace(0.0, 30.0, 301)
    fwd = max(delta_M(renorm(GOLDEN, t)) for t in ts)
    bwd = max(delta_M(renorm(GOLDEN, -t)) for t in ts)
    assert fwd < 5.0 and bwd < 5.0


def test_delta_lipschitz():
    ts = np.linspace(-8.0, 8.0, 801)
    ds = np.array([delta_M(renorm(GOLDEN, t)) for t in ts])
    rates = np.abs(np.diff(ds)) / np.diff(ts)
    assert rates.max() <= 2.0 + 1e-9


def test_dc_integral_golden_stabilizes():
    v40 = dc_integral(GOLDEN, 40.0).dc_value
    v80 = dc_integral(GOLDEN, 80.0).dc_value
    assert abs(v80 - v40) / v40 < 0.01


def test_dc_integral_rational_grows():
    v40 = dc_integral(RATIONAL, 40.0).dc_value
    v80 = dc_integral(RATIONAL, 80.0).dc_value
    assert v80 > 1.9 * v40
    # escape at full speed: delta(g_{-t}) ~ 2t
    rec = dc_integral(RATIONAL, 20.0)
    t, d = rec.samples[-1]
    assert d == pytest.approx(2 * t, rel=1e-6)


def test_dc_horizon_zero():
    rec = dc_integral(GOLDEN, 0.0)
    assert rec.dc_value == 0.0 and rec.e_value == 0.0


def test_excursion_golden_bounded():
    vals = [excursion_E(GOLDEN, T) for T in (1e2, 1e4, 1e6, 1e8)]
    assert max(vals) < 3.0
    assert excursion_E(GOLDEN, 1.0) == 0.0


def test_quadrature_step_refinement():
    v1 = dc_integral(GOLDEN, 40.0, step=1 / 64).dc_value
    v2 = dc_integral(GOLDEN, 40.0, step=1 / 128).dc_value
    assert abs(v2 - v1) / v1 < 0.01
    e1 = excursion_E(GOLDEN, 1e6, step=1 / 64)
    e2 = excursion_E(GOLDEN, 1e6, step=1 / 128)
    assert abs(e2 - e1) / e1 < 0.01


def test_excursion_record_monotone_and_csv(tmp_path):
    recs = [dc_integral(GOLDEN, h) for h in (5.0, 10.0, 20.0)]
    dc = [r.dc_value for r in recs]
    ev = [r.e_value for r in recs]
    assert all(b >= a - 1e-12 for a, b in zip(dc, dc[1:]))
    assert all(v >= 0 for v in dc + ev)
    path = tmp_path / "exc.csv"
    recs[0].to_csv(path)
    rows = path.read_text().strip().splitlines()
    assert rows[0] == "t,delta,integrand"
    assert len(rows) == len(recs[0].samples) + 1


def test_cf_partial_quotients():
    golden = Fraction(
        "0.618033988749894848204586834365638117720309179805762862135448622705261"
    )
    assert cf_partial_quotients(golden, 50) == [1] * 50
    assert cf_partial_quotients(Fraction(1, 3), 5) == [3]
    sqrt2m1 = Fraction(
        "0.414213562373095048801688724209698078569671875376948073176679737990732"
    )
    assert cf_partial_quotients(sqrt2m1, 40) == [2] * 40
    assert cf_partial_quotients(1.5, 3) == [2]  # frac(1.5) = 0.5
