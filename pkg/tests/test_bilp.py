import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from absalloc.bilp import (
    INFEASIBLE,
    NODE_LIMIT,
    OPTIMAL,
    build_costs,
    greedy_initial_assignment,
    grid_positions,
    striped_positions,
    solve_bilp,
)
from absalloc.model import (
    GENERALIZED,
    GLOBAL,
    LOS,
    PER_ABS,
    ChannelParams,
    ModelError,
    Placement,
    Scenario,
    modulation_constants,
    transmit_power,
)
from absalloc.oracle import Infeasible, check_constraints, enumerate_assignments, total_power_direct

from conftest import make_scenario


def _random_case(seed):
    rng = np.random.default_rng(seed)
    I, J, M, L = (int(rng.integers(1, 4)), int(rng.integers(1, 3)), int(rng.integers(1, 3)), int(rng.integers(1, 4)))
    mode = (GLOBAL, PER_ABS)[seed % 2]
    scheme = (LOS, GENERALIZED)[(seed // 2) % 2]
    tau = rng.choice([250e3, 500e3, 600e3, 750e3, 1000e3], I)
    sc = Scenario(users=1 + rng.uniform(0, 1000, (I, 2)), J=J, M=M, L=L, tau=tau, subcarrier_mode=mode)
    pl = Placement(np.c_[rng.uniform(1, 1001, (J, 2)), rng.uniform(100, 1000, J)])
    return sc, pl, scheme


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 100_000))
def test_matches_enumeration(seed):
    sc, pl, scheme = _random_case(seed)
    sol = solve_bilp(build_costs(sc, pl, scheme=scheme), sc)
    try:
        _, best = enumerate_assignments(sc, pl, scheme)
    except Infeasible:
        assert sol.status == INFEASIBLE
        return
    assert sol.status == OPTIMAL
    assert sol.objective == pytest.approx(best, rel=1e-12)
    assert check_constraints(sc, pl, sol.assignment, scheme) == []
    assert total_power_direct(sc, pl, sol.assignment, scheme) == pytest.approx(sol.objective, rel=1e-12)


def test_costs_independent_of_subcarrier_and_model_consistent():
    sc = make_scenario(I=2, J=2, M=2, L=3)
    pl = Placement([[300, 300, 400], [700, 700, 500]])
    inst = build_costs(sc, pl, scheme=GENERALIZED)
    c = inst.cost_tensor()
    assert np.all(c == c[..., :1])
    t = modulation_constants(sc.channel, 2)
    assert inst.cost[1, 1, 0] == pytest.approx(
        transmit_power(sc.users[1], 2, pl.positions[0], sc.channel, t, sc.symbol_rate, GENERALIZED), rel=1e-14)


def test_generalized_cost_equals_los_when_link_is_certain():
    ch = ChannelParams.urban(beta=60.0)
    sc = Scenario(users=[[500, 500]], J=1, M=2, L=1, tau=500e3, channel=ch)
    pl = Placement([[500, 500, 300]])
    assert np.allclose(build_costs(sc, pl, scheme=GENERALIZED).cost, build_costs(sc, pl, scheme=LOS).cost, rtol=1e-12)


def test_trivial_and_pigeonhole():
    sc = Scenario(users=[[10, 10]], J=1, M=1, L=1, tau=500e3)
    pl = Placement([[10, 10, 200]])
    sol = solve_bilp(build_costs(sc, pl), sc)
    assert sol.status == OPTIMAL and set(sol.assignment.entries) == {(0, 1, 0, 0)}
    sc2 = Scenario(users=[[10, 10], [20, 20]], J=1, M=1, L=1, tau=500e3)
    sol2 = solve_bilp(build_costs(sc2, pl), sc2)
    assert sol2.status == INFEASIBLE and sol2.reason.startswith("subcarrier")


def test_los_exclusion_reason():
    sc = Scenario(users=[[10, 10]], J=1, M=1, L=1, tau=500e3)
    sol = solve_bilp(build_costs(sc, Placement([[900, 900, 100]])), sc)
    assert sol.status == INFEASIBLE and sol.reason.startswith("los")


def test_node_limit_status():
    sc = make_scenario(I=12, J=3, M=2, L=14, seed=1)
    pl = Placement(np.c_[grid_positions(sc, 800.0)])
    sol = solve_bilp(build_costs(sc, pl, scheme=GENERALIZED), sc, node_limit=3)
    assert sol.status in (NODE_LIMIT, OPTIMAL)
    if sol.status == NODE_LIMIT:
        assert sol.nodes >= 3


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 100_000), mode=st.sampled_from([GLOBAL, PER_ABS]))
def test_larger_modulation_set_never_costs_more(seed, mode):
    rng = np.random.default_rng(seed)
    I = int(rng.integers(2, 7))
    users = 1 + rng.uniform(0, 1000, (I, 2))
    tau = rng.choice([500e3, 750e3, 1000e3], I)
    pl = Placement(np.c_[rng.uniform(1, 1001, (2, 2)), rng.uniform(300, 1500, 2)])
    s1 = Scenario(users=users, J=2, M=1, L=2 * I, tau=tau, subcarrier_mode=mode)
    s2 = s1.with_(M=2)
    a = solve_bilp(build_costs(s1, pl, scheme=GENERALIZED), s1)
    b = solve_bilp(build_costs(s2, pl, scheme=GENERALIZED), s2)
    if a.status == OPTIMAL:
        assert b.status == OPTIMAL and b.objective <= a.objective * (1 + 1e-12)


def test_grid_positions():
    sc = make_scenario(I=3, J=1)
    assert np.allclose(grid_positions(sc, 550.0), [[501, 501, 550]])
    p5 = grid_positions(make_scenario(I=3, J=5), 550.0)
    assert p5.shape == (5, 3)
    assert np.allclose(p5[:3, 1], p5[0, 1]) and np.allclose(p5[3:, 1], p5[3, 1])


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 100_000), J=st.integers(1, 5), mode=st.sampled_from([GLOBAL, PER_ABS]))
def test_greedy_is_feasible_and_deterministic(seed, J, mode):
    sc = make_scenario(I=8, J=J, M=2, seed=seed, subcarrier_mode=mode)
    a1, p1 = greedy_initial_assignment(sc, 0)
    a2, p2 = greedy_initial_assignment(sc, 0)
    assert a1 == a2 and np.array_equal(p1.positions, p2.positions)
    assert a1.structural_violations(sc) == []
    assert check_constraints(sc, p1, a1, GENERALIZED) == []
    if mode == GLOBAL:
        assert len(a1) == sc.L


def test_striped_positions_cover_every_stripe():
    p = striped_positions(make_scenario(I=3, J=5), 1050.0)
    assert p.shape == (5, 3)
    assert sorted(np.unique(p[:, 1]).tolist()) == [251.0, 751.0]
    assert np.allclose(sorted(p[p[:, 1] == 251.0, 0]), [1 + 1000 / 6, 501, 1 + 5000 / 6])
    assert np.allclose(striped_positions(make_scenario(I=3, J=1), 10.0), [[501, 501, 10]])


def test_greedy_reports_short_budget():
    sc = make_scenario(I=4, L=3)
    with pytest.raises(ModelError, match="subcarrier"):
        greedy_initial_assignment(sc)
