"""Brute-force reference computations.

Nothing here is meant to be fast. These routines are used by the tests to
produce expected values independently of the production solvers.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

from .model import (
    GENERALIZED,
    GLOBAL,
    LOS,
    Assignment,
    ModelError,
    ModulationTable,
    Placement,
    Scenario,
    modulation_constants,
)


class OracleError(RuntimeError):
    pass


class Infeasible(OracleError):
    pass


def q_function(x: float) -> float:
    return 0.5 * float(erfc(x / math.sqrt(2.0)))


def q_inverse(p: float, tol: float = 1e-15) -> float:
    """Inverse Q-function by bisection on the erfc-based Q."""
    if not 0.0 < p <= 0.5:
        raise ModelError("Q^-1 oracle needs p in (0, 0.5]")
    if p == 0.5:
        return 0.0
    lo, hi = 0.0, 1.0
    while q_function(hi) > p:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if q_function(mid) > p:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol * max(1.0, hi):
            break
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class GridSpec:
    xy_step: float = 10.0
    h_step: float = 10.0

    def __post_init__(self):
        if self.xy_step <= 0 or self.h_step <= 0:
            raise ModelError("grid steps must be positive")

    def axes(self, scenario: Scenario):
        x_lo, x_hi, y_lo, y_hi = scenario.area

        def axis(lo, hi, step):
            return np.linspace(lo, hi, int(math.ceil((hi - lo) / step - 1e-9)) + 1)

        return (axis(x_lo, x_hi, self.xy_step), axis(y_lo, y_hi, self.xy_step),
                axis(scenario.h_min, scenario.h_max, self.h_step))


def _user_weights(scenario: Scenario, assignment: Assignment, table: ModulationTable, scheme: str):
    """w[i, j] = sum over active (m, l) of the per-bit constant times the bit rate."""
    const = table.A if scheme == LOS else table.B
    rates = scenario.bit_rates()
    w = np.zeros((scenario.I, scenario.J))
    for i, m, j, _ in assignment:
        w[i, j] += const[m - 1] * rates[m - 1]
    return w


def _abs_cost_on_grid(users, weights, X, Y, h, ch, scheme):
    """Objective of one ABS over an (nx, ny) horizontal grid at altitude h."""
    total = np.zeros_like(X)
    feasible = np.ones(X.shape, dtype=bool)
    s = ch.los_sine
    for (ux, uy), w in zip(users, weights):
        rho2 = (X - ux) ** 2 + (Y - uy) ** 2
        d2 = rho2 + h * h
        if scheme == LOS:
            total += w * d2
            feasible &= np.sqrt(d2) <= h / s
        else:
            theta = np.degrees(np.arcsin(h / np.sqrt(d2)))
            p = 1.0 / (1.0 + ch.alpha * np.exp(-ch.beta * (theta - ch.alpha)))
            total += w * d2 * 10.0 ** (ch.eta * p)
    return total, feasible


def grid_search_placement(scenario: Scenario, assignment: Assignment, scheme: str,
                          grid: GridSpec, table: ModulationTable | None = None,
                          fallback: Placement | None = None, max_points: float = 1e8):
    """Exhaustive grid minimization of the placement objective for a fixed assignment.

    The objective is a sum of independent per-ABS terms, so each ABS is gridded
    on its own; ``max_points`` guards the total number of evaluated points.
    ABSs serving nobody keep their ``fallback`` position (area center at h_min
    when absent). Raises ``Infeasible`` when no grid point meets the LoS
    conditions of some ABS.
    """
    if table is None:
        table = modulation_constants(scenario.channel, scenario.M)
    xs, ys, hs = grid.axes(scenario)
    n_pts = len(xs) * len(ys) * len(hs)
    active = [j for j in range(scenario.J) if assignment.users_of(j)]
    if n_pts * max(1, len(active)) > max_points:
        raise OracleError("grid too large")
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    w = _user_weights(scenario, assignment, table, scheme)
    ch = scenario.channel
    if fallback is not None:
        pos = np.array(fallback.positions, dtype=float)
    else:
        x_lo, x_hi, y_lo, y_hi = scenario.area
        pos = np.tile([(x_lo + x_hi) / 2, (y_lo + y_hi) / 2, scenario.h_min], (scenario.J, 1))
    total = 0.0
    for j in active:
        idx = assignment.users_of(j)
        best = (math.inf, None)
        for h in hs:
            cost, ok = _abs_cost_on_grid(scenario.users[idx], w[idx, j], X, Y, h, ch, scheme)
            cost = np.where(ok, cost, np.inf)
            k = int(np.argmin(cost))
            if cost.flat[k] < best[0]:
                best = (float(cost.flat[k]), (X.flat[k], Y.flat[k], h))
        if best[1] is None:
            raise Infeasible(f"no LoS-feasible grid point for ABS {j}")
        pos[j] = best[1]
        total += best[0]
    return Placement(pos), total


def check_constraints(scenario: Scenario, placement: Placement, assignment: Assignment,
                      scheme: str) -> list:
    """Names of violated constraints, evaluated on the dense binary tensor."""
    I, M, J, L = scenario.I, scenario.M, scenario.J, scenario.L
    try:
        rho = assignment.tensor(I, M, J, L).astype(int)
    except IndexError:
        return ["binary"]
    bad = []
    rates = scenario.bit_rates()
    if np.any(np.einsum("imjl,m->i", rho, rates) < scenario.tau - 1e-9):
        bad.append("rate")
    if np.any((rho.sum(axis=(1, 3)) > 0).sum(axis=1) > 1):
        bad.append("single-abs")
    if np.any(rho.sum(axis=1) > 1):
        bad.append("one-modulation")
    if scenario.subcarrier_mode == GLOBAL:
        if np.any(rho.sum(axis=(0, 1, 2)) != 1):
            bad.append("subcarrier")
    elif np.any(rho.sum(axis=(0, 1)) > 1):
        bad.append("subcarrier")
    if scheme == LOS:
        s = scenario.channel.los_sine
        for i, j in zip(*np.nonzero(rho.sum(axis=(1, 3)))):
            dx = placement.positions[j, 0] - scenario.users[i, 0]
            dy = placement.positions[j, 1] - scenario.users[i, 1]
            h = placement.positions[j, 2]
            if math.sqrt(dx * dx + dy * dy + h * h) > h / s:
                bad.append("los")
                break
    return bad


def _direct_power(scenario, placement, table, scheme):
    """(I, M, J) powers written out from the link formulas, one link at a time."""
    ch = scenario.channel
    out = np.empty((scenario.I, scenario.M, scenario.J))
    for i, (ux, uy) in enumerate(scenario.users):
        for j, (x, y, h) in enumerate(placement.positions):
            d = math.sqrt((x - ux) ** 2 + (y - uy) ** 2 + h * h)
            theta = math.degrees(math.asin(h / d))
            p_los = 1.0 / (1.0 + ch.alpha * math.exp(-ch.beta * (theta - ch.alpha)))
            for m in range(1, scenario.M + 1):
                r = scenario.symbol_rate * (m + 1)
                if scheme == LOS:
                    out[i, m - 1, j] = table.A[m - 1] * r * d ** 2
                else:
                    out[i, m - 1, j] = table.B[m - 1] * r * d ** 2 * 10 ** (ch.eta * p_los)
    return out


def enumerate_assignments(scenario: Scenario, placement: Placement, scheme: str,
                          table: ModulationTable | None = None, guard: float = 1e7):
    """Exhaustive search for the minimum-power feasible assignment.

    Global mode enumerates one (i, m, j) choice per subcarrier. Per-ABS mode
    enumerates, for every ABS, the multiset of (user, modulation) fillings of
    its L interchangeable subcarriers (an empty slot is allowed). Returns
    ``(assignment, cost)``; raises ``Infeasible`` when nothing is feasible.
    """
    if table is None:
        table = modulation_constants(scenario.channel, scenario.M)
    I, M, J, L = scenario.I, scenario.M, scenario.J, scenario.L
    power = _direct_power(scenario, placement, table, scheme)
    best_cost, best = math.inf, None

    def consider(entries):
        nonlocal best_cost, best
        a = Assignment(frozenset(entries))
        if check_constraints(scenario, placement, a, scheme):
            return
        cost = sum(power[i, m - 1, j] for (i, m, j, _) in sorted(a.entries))
        if cost < best_cost:
            best_cost, best = cost, a

    if scenario.subcarrier_mode == GLOBAL:
        choices = [(i, m, j) for i in range(I) for m in range(1, M + 1) for j in range(J)]
        if float(len(choices)) ** L > guard:
            raise OracleError("enumeration guard exceeded")
        for combo in itertools.product(choices, repeat=L):
            consider((i, m, j, l) for l, (i, m, j) in enumerate(combo))
    else:
        fill = [None] + [(i, m) for i in range(I) for m in range(1, M + 1)]
        per_abs = list(itertools.combinations_with_replacement(fill, L))
        if float(len(per_abs)) ** J > guard:
            raise OracleError("enumeration guard exceeded")
        for combo in itertools.product(per_abs, repeat=J):
            entries = []
            for j, slots in enumerate(combo):
                for l, slot in enumerate(slots):
                    if slot is not None:
                        entries.append((slot[0], slot[1], j, l))
            consider(entries)
    if best is None:
        raise Infeasible("no feasible assignment")
    return best, best_cost


def total_power_direct(scenario: Scenario, placement: Placement, assignment: Assignment,
                       scheme: str, table: ModulationTable | None = None) -> float:
    """Total power recomputed link by link (independent of the vectorized model path)."""
    if table is None:
        table = modulation_constants(scenario.channel, scenario.M)
    power = _direct_power(scenario, placement, table, scheme)
    return float(sum(power[i, m - 1, j] for (i, m, j, _) in sorted(assignment.entries)))


__all__ = [
    "GENERALIZED",
    "GridSpec",
    "Infeasible",
    "OracleError",
    "check_constraints",
    "enumerate_assignments",
    "grid_search_placement",
    "q_function",
    "q_inverse",
    "total_power_direct",
]
