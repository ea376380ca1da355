"""Alternating placement / assignment optimization, fixed-grid baseline and complexity figures."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .bilp import OPTIMAL, build_costs, greedy_initial_assignment, grid_positions, solve_bilp
from .gp import GpError
from .gp_placement import FitError, assemble_gp, nlp_cross_check, solve_gp
from .model import (
    GENERALIZED,
    LOS,
    SCHEMES,
    Assignment,
    ModelError,
    ModulationTable,
    Placement,
    Scenario,
    los_violations,
    modulation_constants,
    total_power,
)
from .sdr import RepairError, solve_los_placement

__all__ = [
    "AlternatingConfig",
    "BaselineResult",
    "IterationRecord",
    "OptimizerError",
    "RunResult",
    "RunTrace",
    "complexity_estimate",
    "fixed_abs_baseline",
    "run_alternating",
    "solve_placement",
]


class OptimizerError(ModelError):
    pass


@dataclass(frozen=True)
class AlternatingConfig:
    """Outer-loop settings.

    The loop stops once a full iteration lowers the objective by less than
    ``sigma + rtol * objective`` (watts), or after ``T`` iterations.
    """

    scheme: str = LOS
    T: int = 30
    sigma: float = 1e-9
    rtol: float = 1e-6
    G: int = 100
    psi: float = 100.0
    phi: float = 100.0
    seed: int = 0
    multistart: int = 4
    sdp_tol: float = 1e-7
    use_gp: bool = True
    use_nlp: bool = True

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise OptimizerError(f"unknown scheme {self.scheme!r}")
        if self.T < 1:
            raise OptimizerError("T must be >= 1")
        if not self.sigma > 0:
            raise OptimizerError("sigma must be positive")
        if self.rtol < 0:
            raise OptimizerError("rtol must be >= 0")
        if self.scheme == GENERALIZED and not (self.use_gp or self.use_nlp):
            raise OptimizerError("enable at least one generalized placement solver")


@dataclass(frozen=True)
class IterationRecord:
    t: int
    objective_jru: float
    objective_3dp: float
    accepted_3dp: bool
    positions: tuple
    note: str = ""
    wall_ms: float = field(default=0.0, compare=False)


@dataclass
class RunTrace:
    initial_objective: float
    records: list = field(default_factory=list)
    status: str = "running"

    def accepted_objectives(self) -> list:
        """Objective after every accepted step, in order."""
        out = [self.initial_objective]
        for r in self.records:
            out.append(r.objective_jru)
            out.append(r.objective_3dp)
        return out

    @property
    def iterations(self) -> int:
        return len(self.records)


@dataclass
class RunResult:
    placement: Placement
    assignment: Assignment
    objective: float
    trace: RunTrace


def solve_placement(scenario: Scenario, assignment: Assignment, config: AlternatingConfig,
                    table: ModulationTable, previous: Placement, seed: int):
    """Placement subproblem for either scheme; returns (placement, note)."""
    if config.scheme == LOS:
        res = solve_los_placement(scenario, assignment, table, G=config.G, seed=seed,
                                  previous=previous, tol=config.sdp_tol)
        return res.placement, "sdr:" + res.source
    best, best_obj, note = None, math.inf, ""
    if config.use_gp:
        try:
            prog = assemble_gp(scenario, assignment, table, reference=previous,
                               psi=config.psi, phi=config.phi)
            g = solve_gp(prog, scenario, assignment, table, previous=previous)
            best, best_obj, note = g.placement, g.true_objective, "gp"
        except (GpError, FitError) as exc:
            note = f"gp-failed({exc})"
    if config.use_nlp:
        n = nlp_cross_check(scenario, assignment, table, multistart=config.multistart, seed=seed,
                            initial=previous, previous=previous)
        if n.objective < best_obj:
            best, best_obj = n.placement, n.objective
            note = (note + "," if note else "") + "nlp"
    if best is None:
        raise OptimizerError("generalized placement failed: " + note)
    return best, note


def run_alternating(scenario: Scenario, config: AlternatingConfig | None = None,
                    table: ModulationTable | None = None, timing: bool = False) -> RunResult:
    """Alternate between the assignment and placement subproblems.

    Starts from the greedy assignment and its placement; each outer
    iteration solves the assignment exactly for the current placement and
    then the placement for the new assignment. A placement candidate is
    accepted only if it strictly lowers the objective, so the accepted
    objective sequence never increases.
    """
    config = config or AlternatingConfig()
    if table is None:
        table = modulation_constants(scenario.channel, scenario.M)
    scheme = config.scheme
    clock = time.perf_counter if timing else (lambda: 0.0)

    assignment, grid = greedy_initial_assignment(scenario, config.seed)
    try:
        placement, _ = solve_placement(scenario, assignment, config, table, grid, config.seed)
    except (RepairError, GpError, FitError) as exc:
        raise OptimizerError(f"initial placement failed: {exc}") from exc
    objective = total_power(scenario, placement, assignment, scheme, table)
    trace = RunTrace(initial_objective=objective)

    for t in range(1, config.T + 1):
        t0 = clock()
        sol = solve_bilp(build_costs(scenario, placement, table, scheme), scenario)
        if sol.status != OPTIMAL or sol.assignment is None:
            raise OptimizerError(f"assignment step failed at iteration {t}: {sol.status} {sol.reason}")
        obj_jru = total_power(scenario, placement, sol.assignment, scheme, table)
        if obj_jru <= objective:
            assignment, objective = sol.assignment, obj_jru
        else:
            obj_jru = objective
        start = objective
        note = ""
        accepted = False
        try:
            cand, note = solve_placement(scenario, assignment, config, table, placement, config.seed + t)
            obj_cand = total_power(scenario, cand, assignment, scheme, table)
            feasible = scheme != LOS or not los_violations(scenario, cand, assignment)
            if feasible and obj_cand < objective:
                placement, objective, accepted = cand, obj_cand, True
        except (RepairError, GpError, FitError, OptimizerError) as exc:
            note = f"3dp-skipped({exc})"
        trace.records.append(IterationRecord(
            t=t, objective_jru=obj_jru, objective_3dp=objective, accepted_3dp=accepted,
            positions=tuple(map(tuple, placement.positions)), note=note,
            wall_ms=(clock() - t0) * 1e3,
        ))
        prev = trace.records[-2].objective_3dp if len(trace.records) > 1 else trace.initial_objective
        if prev - objective < config.sigma + config.rtol * abs(objective) and start - objective < config.sigma + config.rtol * abs(objective):
            trace.status = "converged"
            break
    else:
        trace.status = "max-iter"
    return RunResult(placement=placement, assignment=assignment, objective=objective, trace=trace)


@dataclass
class BaselineResult:
    placement: Placement
    assignment: Assignment
    objective: float
    feasible: bool
    scheme: str


def fixed_abs_baseline(scenario: Scenario, scheme: str = LOS, table: ModulationTable | None = None,
                       altitude: float = 550.0) -> BaselineResult:
    """Grid placement at a fixed altitude with nearest-ABS association.

    Only the subcarrier/modulation allocation is optimized. Under the LoS
    scheme, if some user's nearest ABS fails the LoS test the baseline is
    not a feasible point; it is then evaluated under the generalized scheme
    and flagged ``feasible=False``.
    """
    if table is None:
        table = modulation_constants(scenario.channel, scenario.M)
    placement = Placement(grid_positions(scenario, altitude))
    d2 = ((scenario.users[:, None, :] - placement.positions[None, :, :2]) ** 2).sum(axis=2)
    nearest = np.argmin(d2, axis=1)
    mask = np.zeros((scenario.I, scenario.J), dtype=bool)
    mask[np.arange(scenario.I), nearest] = True
    inst = build_costs(scenario, placement, table, scheme)
    feasible = True
    used = scheme
    if scheme == LOS and not np.all(inst.allowed[np.arange(scenario.I), nearest]):
        feasible = False
        used = GENERALIZED
        inst = build_costs(scenario, placement, table, GENERALIZED)
    inst = type(inst)(cost=inst.cost, allowed=mask, L=inst.L,
                      subcarrier_mode=inst.subcarrier_mode, scheme=used)
    sol = solve_bilp(inst, scenario)
    if sol.status != OPTIMAL:
        raise OptimizerError(f"baseline allocation failed: {sol.status} {sol.reason}")
    return BaselineResult(placement=placement, assignment=sol.assignment,
                          objective=total_power(scenario, placement, sol.assignment, used, table),
                          feasible=feasible, scheme=used)


def complexity_estimate(I: int, J: int, M: int, L: int, mu: float = 1e-3, t: float = 1e-3,
                        xi: float = 10.0) -> dict:
    """Iteration-count surrogates of the four subproblem solvers (natural logarithms).

    ``mu`` is the interior-point accuracy, ``t`` the initial barrier
    parameter and ``xi`` its growth factor.
    """
    for name, v in (("I", I), ("J", J), ("M", M), ("L", L)):
        if int(v) != v or v < 1:
            raise OptimizerError(f"{name} must be a positive integer")
    if not (0 < mu < 1 and t > 0 and xi > 1):
        raise OptimizerError("need 0 < mu < 1, t > 0 and xi > 1")
    n = 3 * J + 1
    sdr = max(n, I + 1) ** 3 * math.sqrt(n) * math.log(1.0 / mu)
    jru = math.log((4 * I * M * J * L + I + L) / (t * mu)) / math.log(xi)
    gp = math.log(5 * I * J / (t * mu)) / math.log(xi)
    return {"sdr_3dp": sdr, "jru_los": jru, "jru_generalized": jru, "gp_3dp": gp}
