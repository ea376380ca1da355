import math

import numpy as np
import pytest

from absalloc.model import GENERALIZED, Assignment, ChannelParams, ModelError, Scenario, modulation_constants, total_power
from absalloc.gp_placement import (
    FitError,
    assemble_gp,
    fit_arcsin_monomial,
    generalized_weights,
    nlp_cross_check,
    solve_gp,
    true_objective,
    true_objective_grad,
)

from conftest import make_scenario, nearest_assignment, one_per_user


def test_fit_recovers_monomial():
    fit = fit_arcsin_monomial(1.0, 20.0, func=lambda f: 2.0 / f)
    assert fit.mu == pytest.approx(2.0, rel=1e-12)
    assert fit.omega == pytest.approx(-1.0, abs=1e-12)
    assert fit.max_log_residual < 1e-12


def test_fit_arcsin_ranges():
    with pytest.raises(FitError):
        fit_arcsin_monomial(1.0, 20.0)  # the near-vertical end bends too much
    fit = fit_arcsin_monomial(1.5, 3.0)
    assert abs(math.log(math.asin(0.5) / fit(2.0))) <= 0.05
    assert fit.omega < 0
    with pytest.raises(FitError):
        fit_arcsin_monomial(0.5, 3.0)
    with pytest.raises(FitError):
        fit_arcsin_monomial(1.5, 3.0, n_points=10)


def test_variable_count_single_link():
    sc = make_scenario(I=1, seed=2)
    prog = assemble_gp(sc, one_per_user(1))
    assert prog.n_variables == 8


def test_monomial_offset_equality():
    sc = make_scenario(I=2, seed=5)
    prog = assemble_gp(sc, one_per_user(2), offsets="monomial")
    eq = prog.blocks[0].equalities[0]
    xj, ux = 640.0, float(sc.users[0, 0])
    t0 = xj ** 2 / (4 * ux)
    assert eq.value({"x": xj, "t0_0": t0}) == pytest.approx(1.0, rel=1e-12)


def test_phi_guard():
    sc = make_scenario(I=2)
    with pytest.raises(ModelError):
        assemble_gp(sc, one_per_user(2), phi=5.0)


def test_start_is_feasible_and_objective_finite():
    sc = make_scenario(I=2, seed=1)
    prog = assemble_gp(sc, one_per_user(2))
    b = prog.blocks[0]
    assert all(p.value(b.start) <= 1.0 for p in b.inequalities)
    assert math.isfinite(b.objective.value(b.start))


def test_gp_matches_nlp_two_users():
    sc = make_scenario(I=2, seed=8)
    a = one_per_user(2)
    g = solve_gp(assemble_gp(sc, a), sc, a)
    n = nlp_cross_check(sc, a, seed=0)
    assert g.true_objective <= 1.10 * n.objective
    assert g.true_objective == pytest.approx(total_power(sc, g.placement, a, GENERALIZED), rel=1e-10)


def test_single_user_sits_overhead_at_h_min():
    # directly overhead the link is already LoS, so lower is cheaper
    sc = Scenario(users=[[300, 700]], J=1, M=1, L=1, tau=500e3)
    a = one_per_user(1)
    n = nlp_cross_check(sc, a, seed=0)
    assert np.allclose(n.placement.positions[0], [300, 700, sc.h_min], atol=1e-3)
    flat = sc.with_(channel=ChannelParams.urban(xi_nlos=1.6))
    n0 = nlp_cross_check(flat, a, seed=0)
    assert n0.placement.positions[0, 2] == pytest.approx(sc.h_min, abs=1e-3)


def test_spread_users_interior_altitude():
    sc = Scenario(users=[[101, 101], [901, 901], [101, 901], [901, 101]], J=1, M=1, L=4, tau=500e3)
    n = nlp_cross_check(sc, one_per_user(4), seed=0)
    assert sc.h_min + 1 < n.placement.positions[0, 2] < sc.h_max


def test_gradient_matches_central_differences():
    rng = np.random.default_rng(0)
    for k in range(10):
        sc = make_scenario(I=6, J=2, seed=k)
        a = nearest_assignment(sc, rng.uniform(0, 1000, (2, 2)))
        W = generalized_weights(sc, a, modulation_constants(sc.channel, 1))
        pos = np.c_[rng.uniform(1, 1001, (2, 2)), rng.uniform(100, 2000, 2)]
        g = true_objective_grad(sc, pos, W)
        for idx in np.ndindex(pos.shape):
            e = np.zeros_like(pos)
            e[idx] = 1e-3
            fd = (true_objective(sc, pos + e, W) - true_objective(sc, pos - e, W)) / 2e-3
            scale = max(abs(fd), 1e-3 * np.abs(g).max())
            assert abs(g[idx] - fd) <= 1e-5 * scale
