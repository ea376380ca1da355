"""LoS-scheme placement by semidefinite relaxation.

For a fixed assignment the placement subproblem is a QCQP in the stacked
vector ``v = (x_0, y_0, h_0, ..., x_{J-1}, y_{J-1}, h_{J-1})``::

    minimize    1/2 v' W0 v + Q0' v + r0
    subject to  1/2 v' Wk v + Qk' v + rk <= 0

with one LoS row per served (user, ABS) pair and box rows. The QCQP is
homogenized with ``u = (v, a)``, lifted to ``U = u u'`` and relaxed by
dropping rank(U) = 1. Candidates are drawn from N(0, U*), rescaled to
``a = 1`` and repaired onto the feasible set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .model import (
    Assignment,
    ModelError,
    ModulationTable,
    Placement,
    Scenario,
    los_feasible,
    modulation_constants,
)
from .sdp import INFEASIBLE, MAX_ITER, OPTIMAL, solve_conic

__all__ = [
    "HomogeneousSdp",
    "LosPlacementResult",
    "QcqpProblem",
    "RepairError",
    "SdpSolution",
    "assemble_qcqp",
    "gaussian_randomization",
    "homogenize",
    "link_weights",
    "los_objective",
    "rank1_shortcut",
    "repair_placement",
    "solve_los_placement",
    "solve_sdp",
]


class RepairError(ModelError):
    """No placement inside the altitude box satisfies the LoS rows."""


def link_weights(scenario: Scenario, assignment: Assignment, table: ModulationTable) -> np.ndarray:
    """(I, J) matrix of summed A_m * r_m over the active tuples of each link."""
    rates = scenario.bit_rates()
    w = np.zeros((scenario.I, scenario.J))
    for i, m, j, _ in assignment:
        w[i, j] += table.A[m - 1] * rates[m - 1]
    return w


def los_objective(scenario: Scenario, positions: np.ndarray, weights: np.ndarray) -> float:
    """Sum of w_ij * d_ij^2 for ``positions`` of shape (J, 3)."""
    positions = np.asarray(positions, dtype=float).reshape(-1, 3)
    dx = positions[None, :, 0] - scenario.users[:, 0, None]
    dy = positions[None, :, 1] - scenario.users[:, 1, None]
    d2 = dx * dx + dy * dy + positions[None, :, 2] ** 2
    return float(np.sum(weights * d2))


@dataclass
class QcqpProblem:
    """Matrix form of the LoS placement subproblem.

    Row ``k`` of ``W``/``Q``/``r`` is the constraint
    ``1/2 v' W[k] v + Q[k]' v + r[k] <= 0``; ``labels[k]`` names it.
    """

    W0: np.ndarray
    Q0: np.ndarray
    r0: float
    W: np.ndarray
    Q: np.ndarray
    r: np.ndarray
    labels: list
    kappa: float
    omega: list
    length_unit: float = 1.0
    cost_unit: float = 1.0

    @property
    def dim(self) -> int:
        return len(self.Q0)

    def objective(self, v) -> float:
        v = np.asarray(v, dtype=float)
        return float(0.5 * v @ self.W0 @ v + self.Q0 @ v + self.r0)

    def constraints(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        return 0.5 * np.einsum("i,kij,j->k", v, self.W, v) + self.Q @ v + self.r

    def rescaled(self, length: float, cost: float) -> "QcqpProblem":
        """Same problem with lengths in units of ``length`` and the objective in units of ``cost``.

        Every constraint row is also divided by its own magnitude so that all
        rows are O(1).
        """
        L2 = length * length
        W = self.W * L2
        Q = self.Q * length
        r = self.r.copy()
        norms = np.maximum.reduce([np.abs(W).reshape(len(W), -1).max(axis=1, initial=0.0),
                                   np.abs(Q).max(axis=1, initial=0.0), np.abs(r)]) if len(W) else np.ones(0)
        norms = np.where(norms > 0, norms, 1.0)
        return QcqpProblem(
            W0=self.W0 * L2 / cost, Q0=self.Q0 * length / cost, r0=self.r0 / cost,
            W=W / norms[:, None, None], Q=Q / norms[:, None], r=r / norms,
            labels=list(self.labels), kappa=self.kappa, omega=list(self.omega),
            length_unit=self.length_unit * length, cost_unit=self.cost_unit * cost,
        )


def assemble_qcqp(scenario: Scenario, assignment: Assignment,
                  table: ModulationTable | None = None, interval_rows: bool = True) -> QcqpProblem:
    """Build the QCQP for a fixed assignment.

    Rows, in order: one LoS row per (i, j) in the served set, the linear
    altitude rows ``h_min <= h_j <= h_max`` and, with ``interval_rows``,
    the quadratic box rows ``(z - lo)(z - hi) <= 0`` for every coordinate.
    The quadratic rows are implied by the box, so they leave the QCQP
    unchanged but keep its relaxation bounded.
    """
    ch = scenario.channel
    if ch.n != 2:
        raise ModelError("the QCQP form needs path-loss exponent n = 2")
    if table is None:
        table = modulation_constants(ch, scenario.M)
    omega = assignment.omega()
    if not omega:
        raise ModelError("assignment serves nobody; the placement is undefined")
    J = scenario.J
    n = 3 * J
    w = link_weights(scenario, assignment, table)
    users = scenario.users
    kappa = ch.kappa

    W0 = np.zeros((n, n))
    Q0 = np.zeros(n)
    for j in range(J):
        b = 3 * j
        W0[b:b + 3, b:b + 3] = 2.0 * w[:, j].sum() * np.eye(3)
        Q0[b] = -2.0 * w[:, j] @ users[:, 0]
        Q0[b + 1] = -2.0 * w[:, j] @ users[:, 1]
    r0 = float(np.sum(w * (users[:, 0, None] ** 2 + users[:, 1, None] ** 2)))

    Ws, Qs, rs, labels = [], [], [], []

    def row(Wk, Qk, rk, label):
        Ws.append(Wk)
        Qs.append(Qk)
        rs.append(rk)
        labels.append(label)

    for i, j in omega:
        b = 3 * j
        Wk = np.zeros((n, n))
        Wk[b, b] = Wk[b + 1, b + 1] = 2.0
        Wk[b + 2, b + 2] = 2.0 * kappa
        Qk = np.zeros(n)
        Qk[b], Qk[b + 1] = -2.0 * users[i, 0], -2.0 * users[i, 1]
        row(Wk, Qk, float(users[i, 0] ** 2 + users[i, 1] ** 2), ("los", i, j))
    for j in range(J):
        e = np.zeros(n)
        e[3 * j + 2] = 1.0
        row(np.zeros((n, n)), e, -scenario.h_max, ("h_max", j))
        row(np.zeros((n, n)), -e, scenario.h_min, ("h_min", j))
    if interval_rows:
        x_lo, x_hi, y_lo, y_hi = scenario.area
        bounds = ((x_lo, x_hi), (y_lo, y_hi), (scenario.h_min, scenario.h_max))
        for j in range(J):
            for c, (lo, hi) in enumerate(bounds):
                k = 3 * j + c
                Wk = np.zeros((n, n))
                Wk[k, k] = 2.0
                Qk = np.zeros(n)
                Qk[k] = -(lo + hi)
                row(Wk, Qk, lo * hi, ("box", "xyh"[c], j))

    return QcqpProblem(W0=W0, Q0=Q0, r0=r0, W=np.array(Ws), Q=np.array(Qs), r=np.array(rs),
                       labels=labels, kappa=kappa, omega=omega)


@dataclass
class HomogeneousSdp:
    T0: np.ndarray
    T: np.ndarray
    H: np.ndarray
    r0: float
    r: np.ndarray
    qcqp: QcqpProblem = field(repr=False)

    @property
    def dim(self) -> int:
        return self.T0.shape[0]

    def objective(self, U) -> float:
        return float(0.5 * np.vdot(self.T0, U) + self.r0)


def _homogeneous(W, Q):
    n = len(Q)
    T = np.zeros((n + 1, n + 1))
    T[:n, :n] = W
    T[:n, n] = Q
    T[n, :n] = Q
    return T


def homogenize(q: QcqpProblem) -> HomogeneousSdp:
    n = q.dim
    H = np.zeros((n + 1, n + 1))
    H[n, n] = 1.0
    T = np.array([_homogeneous(Wk, Qk) for Wk, Qk in zip(q.W, q.Q)]).reshape(-1, n + 1, n + 1)
    return HomogeneousSdp(T0=_homogeneous(q.W0, q.Q0), T=T, H=H, r0=q.r0, r=q.r.copy(), qcqp=q)


@dataclass
class SdpSolution:
    U_star: np.ndarray
    objective: float
    gap: float
    status: str
    max_violation: float
    iterations: int
    lower_bound: float = -math.inf


def solve_sdp(s: HomogeneousSdp, tol: float = 1e-7, max_iter: int = 200) -> SdpSolution:
    """Solve min 1/2 <T0, U> + r0 s.t. 1/2 <Tk, U> + rk <= 0, <H, U> = 1, U PSD."""
    A = [0.5 * Tk for Tk in s.T] + [s.H]
    b = np.concatenate([-s.r, [1.0]])
    res = solve_conic(0.5 * s.T0, A, b, n_ineq=len(s.T), tol=tol, max_iter=max_iter)
    U = res.X
    viol = 0.5 * np.einsum("kij,ij->k", s.T, U) + s.r if len(s.T) else np.zeros(0)
    return SdpSolution(
        U_star=U, objective=res.primal_objective + s.r0, gap=res.gap, status=res.status,
        max_violation=float(max(viol.max(initial=0.0), abs(U[-1, -1] - 1.0))),
        iterations=res.iterations, lower_bound=res.dual_objective + s.r0,
    )


def rank1_shortcut(U_star, tol: float = 1e-6):
    """Principal-eigenvector solution scaled to a = 1 when U* is numerically rank one."""
    lam, V = np.linalg.eigh(0.5 * (U_star + U_star.T))
    if lam[-1] <= 0:
        return None
    if len(lam) > 1 and lam[-2] / lam[-1] > tol:
        return None
    u = math.sqrt(lam[-1]) * V[:, -1]
    if u[-1] == 0:
        return None
    return u / u[-1]


def repair_placement(v, scenario: Scenario, assignment: Assignment,
                     previous: Placement | None = None) -> Placement:
    """Project a candidate onto the feasible set of the LoS subproblem.

    Horizontal coordinates are clamped to the area. Each serving ABS is then
    raised to the lowest altitude at which its farthest user passes the LoS
    test; ABSs serving nobody keep ``previous`` (or the clamped candidate).
    """
    v = np.asarray(v, dtype=float).reshape(-1, 3)
    if v.shape[0] != scenario.J or not np.all(np.isfinite(v)):
        raise RepairError("candidate must hold J finite (x, y, h) triples")
    ch = scenario.channel
    s = ch.los_sine
    x_lo, x_hi, y_lo, y_hi = scenario.area
    pos = v.copy()
    pos[:, 0] = np.clip(pos[:, 0], x_lo, x_hi)
    pos[:, 1] = np.clip(pos[:, 1], y_lo, y_hi)
    pos[:, 2] = np.clip(pos[:, 2], scenario.h_min, scenario.h_max)
    for j in range(scenario.J):
        idx = assignment.users_of(j)
        if not idx:
            if previous is not None:
                pos[j] = previous.positions[j]
            continue
        users = scenario.users[idx]
        r_max = float(np.max(np.hypot(users[:, 0] - pos[j, 0], users[:, 1] - pos[j, 1])))
        h = max(scenario.h_min, pos[j, 2], r_max * s / math.sqrt(1.0 - s * s))
        for _ in range(64):
            if h > scenario.h_max:
                raise RepairError(f"ABS {j} would need h = {h:.6g} m > h_max")
            if np.all(los_feasible(users, np.array([pos[j, 0], pos[j, 1], h]), ch)):
                break
            h = float(np.nextafter(h, np.inf))
        else:
            raise RepairError(f"ABS {j}: LoS rows still violated after rounding fix-up")
        pos[j, 2] = h
    return Placement(pos)


def gaussian_randomization(U_star, G: int, rng_seed: int, extra=()):
    """Draw ``G`` samples from N(0, U*) and rescale each to a = 1.

    Returns the list of inhomogeneous candidates ``v`` (in the units of U*),
    ``extra`` candidates first. Samples with a negligible homogenizing
    coordinate are dropped.
    """
    if G < 1:
        raise ValueError("G must be >= 1")
    U = 0.5 * (U_star + U_star.T)
    lam, V = np.linalg.eigh(U)
    root = V * np.sqrt(np.clip(lam, 0.0, None))
    rng = np.random.default_rng(rng_seed)
    z = rng.standard_normal((G, len(U)))
    samples = z @ root.T
    out = [np.asarray(e, dtype=float) for e in extra]
    scale = math.sqrt(max(U[-1, -1], 0.0))
    for k in samples:
        a = k[-1]
        if abs(a) <= 1e-12 * max(scale, 1e-300):
            continue
        out.append(k[:-1] / a)
    return out


@dataclass
class LosPlacementResult:
    placement: Placement
    objective: float
    sdp_value: float
    sdp: SdpSolution
    n_candidates: int
    n_repaired: int
    source: str


def solve_los_placement(scenario: Scenario, assignment: Assignment,
                        table: ModulationTable | None = None, G: int = 100, seed: int = 0,
                        previous: Placement | None = None, tol: float = 1e-7) -> LosPlacementResult:
    """SDR + Gaussian randomization + repair for the LoS placement subproblem.

    The candidate pool is the rank-one shortcut (when it applies), the first
    moment of U* and ``G`` Gaussian samples; each is repaired and the one
    with the lowest true objective is returned.
    """
    if table is None:
        table = modulation_constants(scenario.channel, scenario.M)
    q = assemble_qcqp(scenario, assignment, table)
    x_lo, x_hi, y_lo, y_hi = scenario.area
    length = max(x_hi, y_hi, scenario.h_max)
    scale_cost = max(q.r0, np.abs(q.W0).max() * length ** 2, 1e-300)
    qs = q.rescaled(length, scale_cost)
    sol = solve_sdp(homogenize(qs), tol=tol)
    if sol.status == INFEASIBLE:
        raise RepairError("relaxed placement problem reported infeasible")
    U = sol.U_star
    first = [U[:-1, -1] / U[-1, -1]] if U[-1, -1] > 0 else []
    r1 = rank1_shortcut(U)
    extra = ([r1[:-1]] if r1 is not None else []) + first
    cands = gaussian_randomization(U, G, seed, extra=extra)

    w = link_weights(scenario, assignment, table)
    best, best_obj, best_k = None, math.inf, -1
    n_ok = 0
    for k, v in enumerate(cands):
        try:
            p = repair_placement(v * length, scenario, assignment, previous)
        except RepairError:
            continue
        n_ok += 1
        obj = los_objective(scenario, p.positions, w)
        if obj < best_obj:
            best, best_obj, best_k = p, obj, k
    if best is None:
        raise RepairError("no randomized candidate could be repaired")
    source = "rank1" if (r1 is not None and best_k == 0) else (
        "first-moment" if best_k < len(extra) else "sample")
    polished = _polish(scenario, assignment, best, w, length)
    if polished is not None:
        obj = los_objective(scenario, polished.positions, w)
        if obj < best_obj:
            best, best_obj, source = polished, obj, source + "+polish"
    return LosPlacementResult(
        placement=best, objective=best_obj, sdp_value=sol.lower_bound * scale_cost, sdp=sol,
        n_candidates=len(cands), n_repaired=n_ok, source=source,
    )


def _polish(scenario: Scenario, assignment: Assignment, start: Placement, w, length: float):
    """Local SLSQP refinement of every serving ABS, followed by the usual repair.

    Each LoS row is a second-order cone in (x, y, h), so the per-ABS problem
    is convex and a local solver started from a good candidate converges to
    its optimum. Returns None if the refinement cannot be repaired.
    """
    s = scenario.channel.los_sine
    c2 = 1.0 / (s * s) - 1.0
    x_lo, x_hi, y_lo, y_hi = scenario.area
    bounds = [(x_lo / length, x_hi / length), (y_lo / length, y_hi / length),
              (scenario.h_min / length, scenario.h_max / length)]
    pos = np.array(start.positions, dtype=float)
    for j in range(scenario.J):
        idx = np.flatnonzero(w[:, j])
        if not len(idx):
            continue
        u = scenario.users[idx] / length
        wj = w[idx, j] / w[idx, j].sum()

        def fun(z):
            dx, dy = z[0] - u[:, 0], z[1] - u[:, 1]
            f = wj @ (dx * dx + dy * dy) + z[2] * z[2]
            return f, np.array([2 * wj @ dx, 2 * wj @ dy, 2 * z[2]])

        def cons(z):
            return c2 * z[2] ** 2 - (z[0] - u[:, 0]) ** 2 - (z[1] - u[:, 1]) ** 2

        def cons_jac(z):
            return np.column_stack([-2 * (z[0] - u[:, 0]), -2 * (z[1] - u[:, 1]), np.full(len(u), 2 * c2 * z[2])])

        res = minimize(fun, pos[j] / length, jac=True, method="SLSQP", bounds=bounds,
                       constraints=[{"type": "ineq", "fun": cons, "jac": cons_jac}],
                       options={"ftol": 1e-15, "maxiter": 200})
        if np.all(np.isfinite(res.x)):
            pos[j] = res.x * length
    try:
        return repair_placement(pos, scenario, assignment, start)
    except RepairError:
        return None


# keep the status names importable from here
SDP_STATUSES = (OPTIMAL, MAX_ITER, INFEASIBLE)
