"""Exact subcarrier / modulation / association assignment for a fixed placement.

Costs do not depend on the subcarrier index, so a user's share of an
assignment is fully described by its serving ABS and the multiset of
modulations on its subcarriers. For every (user, ABS) pair the cheapest
multiset of exactly ``k`` subcarriers meeting the rate threshold is
tabulated by a small dynamic program (rates are integer multiples of the
symbol rate). A depth-first branch and bound over users then picks one
(ABS, k) option per user:

* global mode: every subcarrier is used exactly once network-wide, so
  ``sum k_i = L``; the bound is the exact suffix minimum over the remaining
  users and remaining subcarriers;
* per-ABS mode: each ABS owns ``L`` subcarriers, at most one user each;
  the bound is the sum of the remaining users' cheapest options that still
  fit, with capacity-feasibility pruning.

Subcarrier indices are materialized afterwards in a fixed order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import (
    GLOBAL,
    LOS,
    Assignment,
    ModelError,
    ModulationTable,
    Placement,
    Scenario,
    los_feasible,
    modulation_constants,
    power_tensor,
)

__all__ = [
    "BilpInstance",
    "BilpSolution",
    "OPTIMAL",
    "INFEASIBLE",
    "NODE_LIMIT",
    "build_costs",
    "greedy_initial_assignment",
    "grid_positions",
    "striped_positions",
    "solve_bilp",
]

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
NODE_LIMIT = "node-limit"


@dataclass(frozen=True)
class BilpInstance:
    """Per-subcarrier costs ``cost[i, m-1, j]`` (identical for every l).

    ``allowed[i, j]`` is False for links excluded by the LoS condition.
    """

    cost: np.ndarray
    allowed: np.ndarray
    L: int
    subcarrier_mode: str
    scheme: str

    @property
    def shape(self):
        return self.cost.shape

    def cost_tensor(self) -> np.ndarray:
        """Dense (I, M, J, L) cost tensor, with excluded links at +inf."""
        c = np.where(self.allowed[:, None, :], self.cost, np.inf)
        return np.broadcast_to(c[..., None], c.shape + (self.L,))


@dataclass
class BilpSolution:
    assignment: Assignment | None
    objective: float
    nodes: int
    status: str
    reason: str = ""


def build_costs(scenario: Scenario, placement: Placement, table: ModulationTable | None = None,
                scheme: str = LOS) -> BilpInstance:
    if table is None:
        table = modulation_constants(scenario.channel, scenario.M)
    cost = power_tensor(scenario, placement, table, scheme)
    if scheme == LOS:
        allowed = los_feasible(scenario.users[:, None, :], placement.positions[None, :, :], scenario.channel)
    else:
        allowed = np.ones((scenario.I, scenario.J), dtype=bool)
    return BilpInstance(cost=cost, allowed=np.asarray(allowed, dtype=bool), L=scenario.L,
                        subcarrier_mode=scenario.subcarrier_mode, scheme=scheme)


def _rate_units(scenario: Scenario) -> np.ndarray:
    """Per-user demand in units of the symbol rate (modulation m carries m + 1 units)."""
    q = scenario.tau / scenario.symbol_rate
    return np.maximum(np.ceil(q - 1e-9 * np.maximum(q, 1.0)), 1).astype(int)


def _option_table(c: np.ndarray, need: int, kmax: int):
    """Cheapest multiset of exactly k subcarriers reaching ``need`` rate units, k = 0..kmax.

    ``c[m-1]`` is the per-subcarrier cost of modulation m. Returns costs
    (kmax+1,) and the chosen modulation lists.
    """
    M = len(c)
    INF = math.inf
    # g[u] = (cost, mods) with rate units capped at need
    g = [(INF, None)] * (need + 1)
    g[0] = (0.0, ())
    costs = [INF] * (kmax + 1)
    mods = [None] * (kmax + 1)
    for k in range(1, kmax + 1):
        ng = [(INF, None)] * (need + 1)
        for u in range(need + 1):
            base, seq = g[u]
            if seq is None:
                continue
            for m in range(1, M + 1):
                v = min(need, u + m + 1)
                cand = base + c[m - 1]
                # ties: keep the lexicographically smaller (sorted) modulation list
                if cand < ng[v][0] or (cand == ng[v][0] and ng[v][1] is not None
                                       and tuple(sorted(seq + (m,))) < ng[v][1]):
                    ng[v] = (cand, tuple(sorted(seq + (m,))))
        g = ng
        costs[k], mods[k] = g[need]
    return costs, mods


def _user_options(inst: BilpInstance, need: np.ndarray):
    """Per user: list of (cost, j, k, mods) sorted by (cost, j, k)."""
    I, M, J = inst.cost.shape
    kmax = inst.L
    out = []
    for i in range(I):
        opts = []
        for j in range(J):
            if not inst.allowed[i, j] or not np.all(np.isfinite(inst.cost[i, :, j])):
                continue
            costs, mods = _option_table(inst.cost[i, :, j], int(need[i]), kmax)
            for k in range(1, kmax + 1):
                if math.isfinite(costs[k]):
                    opts.append((costs[k], j, k, mods[k]))
        opts.sort(key=lambda o: (o[0], o[1], o[2]))
        out.append(opts)
    return out


def _pareto(opts):
    """Keep options not dominated in (cost, k) for the same ABS."""
    kept = []
    best_k = {}
    for o in sorted(opts, key=lambda o: (o[0], o[2], o[1])):
        c, j, k, _ = o
        if j in best_k and best_k[j] <= k:
            continue
        best_k[j] = k
        kept.append(o)
    kept.sort(key=lambda o: (o[0], o[1], o[2]))
    return kept


def solve_bilp(inst: BilpInstance, scenario: Scenario, node_limit: int = 2_000_000) -> BilpSolution:
    """Provably optimal assignment, or an infeasibility report naming the constraint class."""
    I, M, J = inst.cost.shape
    L = inst.L
    need = _rate_units(scenario)
    opts = _user_options(inst, need)
    for i, o in enumerate(opts):
        if not o:
            why = "los" if inst.scheme == LOS else "rate"
            return BilpSolution(None, math.inf, 0, INFEASIBLE, f"{why}: user {i} has no admissible link")
    if inst.subcarrier_mode == GLOBAL:
        return _solve_global(inst, scenario, opts, node_limit)
    return _solve_per_abs(inst, scenario, opts, node_limit)


def _solve_global(inst, scenario, opts, node_limit):
    I = len(opts)
    L = inst.L
    # F[i][k]: cheapest option of user i with exactly k subcarriers
    F = np.full((I, L + 1), np.inf)
    for i, o in enumerate(opts):
        for c, j, k, _ in o:
            F[i, k] = min(F[i, k], c)
    # suffix[i][r]: min cost for users i.. using exactly r subcarriers
    suffix = np.full((I + 1, L + 1), np.inf)
    suffix[I, 0] = 0.0
    for i in range(I - 1, -1, -1):
        for r in range(L + 1):
            best = np.inf
            for k in range(1, r + 1):
                v = F[i, k] + suffix[i + 1, r - k]
                if v < best:
                    best = v
            suffix[i, r] = best
    if not math.isfinite(suffix[0, L]):
        return BilpSolution(None, math.inf, 0, INFEASIBLE,
                            f"subcarrier: {L} subcarriers cannot serve {I} users exactly once each")

    best_cost = math.inf
    best_choice = None
    nodes = 0
    choice = [None] * I
    status = OPTIMAL

    def dfs(i, used, acc):
        nonlocal best_cost, best_choice, nodes, status
        nodes += 1
        if nodes > node_limit:
            status = NODE_LIMIT
            return
        if i == I:
            if used == L and acc < best_cost:
                best_cost, best_choice = acc, list(choice)
            return
        rem = L - used
        for o in opts[i]:
            c, j, k, _ = o
            if k > rem:
                continue
            if acc + c + suffix[i + 1, rem - k] >= best_cost:
                continue
            choice[i] = o
            dfs(i + 1, used + k, acc + c)
            if status == NODE_LIMIT:
                return

    dfs(0, 0, 0.0)
    if best_choice is None:
        return BilpSolution(None, math.inf, nodes, INFEASIBLE if status == OPTIMAL else status,
                            "subcarrier: no exact cover found")
    return _solution(inst, _materialize(best_choice, inst.subcarrier_mode, inst.cost.shape[2]), nodes, status)


def _solve_per_abs(inst, scenario, opts, node_limit):
    I = len(opts)
    J = inst.cost.shape[2]
    L = inst.L
    opts = [_pareto(o) for o in opts]
    kmin = np.array([min(k for _, _, k, _ in o) for o in opts])
    if kmin.sum() > J * L:
        return BilpSolution(None, math.inf, 0, INFEASIBLE,
                            "subcarrier: total minimum demand exceeds J*L subcarriers")
    # branch on users with the largest regret first
    def regret(o):
        return (o[1][0] - o[0][0]) if len(o) > 1 else math.inf

    order = sorted(range(I), key=lambda i: (-regret(opts[i]), i))
    cap = [L] * J
    best_cost = math.inf
    best_choice = None
    nodes = 0
    status = OPTIMAL
    choice = [None] * I
    suffix_kmin = np.r_[np.cumsum(kmin[order][::-1])[::-1], 0]

    def bound(pos):
        total = 0.0
        for i in order[pos:]:
            for c, j, k, _ in opts[i]:
                if k <= cap[j]:
                    total += c
                    break
            else:
                return math.inf
        return total

    def dfs(pos, acc):
        nonlocal best_cost, best_choice, nodes, status
        nodes += 1
        if nodes > node_limit:
            status = NODE_LIMIT
            return
        if pos == I:
            if acc < best_cost:
                best_cost, best_choice = acc, list(choice)
            return
        if suffix_kmin[pos] > sum(cap):
            return
        if acc + bound(pos) >= best_cost:
            return
        i = order[pos]
        for o in opts[i]:
            c, j, k, _ = o
            if k > cap[j] or acc + c >= best_cost:
                continue
            cap[j] -= k
            choice[i] = o
            dfs(pos + 1, acc + c)
            cap[j] += k
            if status == NODE_LIMIT:
                return

    dfs(0, 0.0)
    if best_choice is None:
        return BilpSolution(None, math.inf, nodes, INFEASIBLE if status == OPTIMAL else status,
                            "subcarrier: per-ABS capacity cannot host every user")
    return _solution(inst, _materialize(best_choice, inst.subcarrier_mode, J), nodes, status)


def _solution(inst, assignment, nodes, status):
    # fsum over sorted entries: equal assignments report bit-identical objectives
    obj = math.fsum(float(inst.cost[i, m - 1, j]) for (i, m, j, _) in assignment)
    return BilpSolution(assignment, obj, nodes, status)


def _materialize(choice, mode, J):
    """Turn per-user (cost, j, k, mods) options into (i, m, j, l) tuples."""
    entries = []
    if mode == GLOBAL:
        l = 0
        for i, (_, j, _, mods) in enumerate(choice):
            for m in mods:
                entries.append((i, m, j, l))
                l += 1
    else:
        nxt = [0] * J
        for i, (_, j, _, mods) in enumerate(choice):
            for m in mods:
                entries.append((i, m, j, nxt[j]))
                nxt[j] += 1
    return Assignment(frozenset(entries))


def grid_positions(scenario: Scenario, h: float) -> np.ndarray:
    """J positions on the row-major filled ceil(sqrt J) x ceil(sqrt J) grid of cell centers."""
    J = scenario.J
    n = int(math.ceil(math.sqrt(J) - 1e-12))
    x_lo, x_hi, y_lo, y_hi = scenario.area
    xs = x_lo + (np.arange(n) + 0.5) * (x_hi - x_lo) / n
    ys = y_lo + (np.arange(n) + 0.5) * (y_hi - y_lo) / n
    pts = [(xs[c], ys[r], h) for r in range(n) for c in range(n)]
    return np.array(pts[:J])


def striped_positions(scenario: Scenario, h: float) -> np.ndarray:
    """J positions in round(sqrt J) horizontal stripes, evenly spaced inside each stripe.

    Unlike the row-major square grid this leaves no empty cells, so every
    part of the area has a nearby ABS whatever J is.
    """
    J = scenario.J
    rows = max(1, int(round(math.sqrt(J))))
    counts = [J // rows + (k < J % rows) for k in range(rows)]
    x_lo, x_hi, y_lo, y_hi = scenario.area
    pts = []
    for r, n in enumerate(counts):
        y = y_lo + (r + 0.5) * (y_hi - y_lo) / rows
        pts += [(x_lo + (c + 0.5) * (x_hi - x_lo) / n, y, h) for c in range(n)]
    return np.array(pts)


def greedy_initial_assignment(scenario: Scenario, seed: int = 0):
    """Feasible starting point: striped placement, nearest ABS, round-robin subcarriers.

    ABSs sit on the striped layout of ``striped_positions`` at
    (h_min + h_max)/2. Each user takes its
    nearest ABS and the lowest modulation whose rate meets its threshold on
    one subcarrier (or enough top-modulation subcarriers otherwise). In
    global mode leftover subcarriers are handed out round-robin on QPSK so
    every subcarrier is used. The construction is deterministic; ``seed``
    is accepted for interface symmetry and does not change the result.

    Returns ``(assignment, placement)``; raises ``ModelError`` when the
    subcarrier budget cannot cover the demand.
    """
    del seed
    h = 0.5 * (scenario.h_min + scenario.h_max)
    pos = striped_positions(scenario, h)
    d2 = ((scenario.users[:, None, :] - pos[None, :, :2]) ** 2).sum(axis=2)
    nearest = np.argmin(d2, axis=1)
    rates = scenario.bit_rates()
    mods = []
    for i in range(scenario.I):
        ok = np.flatnonzero(rates >= scenario.tau[i] * (1 - 1e-12))
        if len(ok):
            mods.append([int(ok[0]) + 1])
        else:
            k = int(math.ceil(scenario.tau[i] / rates[-1] * (1 - 1e-12)))
            mods.append([scenario.M] * k)
    entries = []
    if scenario.subcarrier_mode == GLOBAL:
        total = sum(len(m) for m in mods)
        if total > scenario.L:
            raise ModelError(f"subcarrier: demand needs {total} subcarriers, only {scenario.L} exist")
        extra = scenario.L - total
        i = 0
        while extra:
            mods[i % scenario.I].append(1)
            i += 1
            extra -= 1
        l = 0
        for i in range(scenario.I):
            for m in sorted(mods[i]):
                entries.append((i, m, int(nearest[i]), l))
                l += 1
    else:
        nxt = [0] * scenario.J
        for i in range(scenario.I):
            j = int(nearest[i])
            for m in sorted(mods[i]):
                if nxt[j] >= scenario.L:
                    raise ModelError(f"subcarrier: ABS {j} runs out of its {scenario.L} subcarriers")
                entries.append((i, m, j, nxt[j]))
                nxt[j] += 1
    return Assignment(frozenset(entries)), Placement(pos)
