import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from absalloc.gp import GpError, Monomial, Posynomial, condense, solve_gp_program

M = Monomial.of


def test_x_plus_inverse():
    res = solve_gp_program(["x"], Posynomial.of(M(1.0, x=1), M(1.0, x=-1)))
    assert res.values["x"] == pytest.approx(1.0, abs=1e-6)
    assert res.objective == pytest.approx(2.0, rel=1e-9)


def test_monomial_equality_elimination():
    # min x + 16 y^2 s.t. x y^-4 = 1  ->  x = y^4, min y^4 + 16 y^2 ... bounded below by y >= 2
    obj = Posynomial.of(M(1.0, x=1), M(4.0, y=2))
    res = solve_gp_program(["x", "y"], obj, [Posynomial.of(M(2.0, y=-1))], [M(1.0, x=1, y=-4)],
                           start={"x": 100.0, "y": 3.0})
    assert res.values["y"] == pytest.approx(2.0, rel=1e-6)
    assert res.values["x"] == pytest.approx(16.0, rel=1e-6)
    assert res.objective == pytest.approx(32.0, rel=1e-6)


def test_phase_one_from_infeasible_start():
    # min x s.t. 6/x <= 1, start x = 1 violates the row
    res = solve_gp_program(["x"], Posynomial.of(M(1.0, x=1)), [Posynomial.of(M(6.0, x=-1))],
                           start={"x": 1.0})
    assert res.values["x"] == pytest.approx(6.0, rel=1e-6)
    assert res.max_constraint <= 0


def test_infeasible_program_raises():
    with pytest.raises(GpError):
        solve_gp_program(["x"], Posynomial.of(M(1.0, x=1)),
                         [Posynomial.of(M(2.0, x=1)), Posynomial.of(M(2.0, x=-1))])


@settings(max_examples=50, deadline=None)
@given(a=st.floats(0.01, 100), b=st.floats(0.01, 100), x=st.floats(0.05, 20), y=st.floats(0.05, 20))
def test_condense_is_lower_bound_exact_at_point(a, b, x, y):
    p = Posynomial.of(M(a, x=1), M(b, x=-0.5, y=2))
    m = condense(p, {"x": x, "y": y})
    assert m.value({"x": x, "y": y}) == pytest.approx(p.value({"x": x, "y": y}), rel=1e-10)
    for s in (0.3, 0.9, 1.7, 4.0):
        pt = {"x": x * s, "y": y / s}
        assert m.value(pt) <= p.value(pt) * (1 + 1e-12)


def test_monomial_algebra():
    m = M(2.0, x=1, y=-2)
    assert (m * m.inv()).exps == ()
    assert (m ** 2).value({"x": 3.0, "y": 1.5}) == pytest.approx((2 * 3 / 1.5 ** 2) ** 2)
    with pytest.raises(GpError):
        M(-1.0, x=1)
