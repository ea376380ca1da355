"""Generalized-scheme placement: GP restriction and a direct multistart check.

The per-ABS objective is ``sum_i w_i d_i^2 10^(eta P(theta_i))`` with
``w_i = sum B_m r_m`` over the user's active tuples. Because ``B_m 10^eta =
A_m`` it can be written as ``sum_i w_i 10^eta d_i^2 exp(c (1 - P_i))`` with
``c = |eta| ln 10`` and ``1 - P = K / (exp(beta theta) + K)``,
``K = alpha exp(alpha beta)``. Every approximation below replaces a factor
by a bound on the pessimistic side, condensed at a reference placement, so
the reference is feasible for the GP and the GP optimum can only improve on
it (up to the final ``(1 + x/phi)^phi ~ exp(x)`` step, which is reported).

Per served pair (i, j) the GP carries

* ``t0, t1``: horizontal offsets, ``t0 >= |x_j - x_i|`` and ``t1 >= |y_j - y_i|``;
* ``f0 >= d/h``, kept inside the range of its arcsine fit;
* ``f1^psi <= exp(beta theta)`` via the monomial fit of ``asin(1/f0)``;
* ``f2 >= 1 + (c/phi) K / (f1^psi + K)``, the objective factor being ``f2^phi``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .gp import GpError, Monomial, Posynomial, condense, solve_gp_program
from .model import (
    Assignment,
    ModelError,
    ModulationTable,
    Placement,
    Scenario,
    modulation_constants,
)

__all__ = [
    "FitError",
    "GpBlock",
    "GpPlacementResult",
    "GpProgram",
    "MonomialFit",
    "assemble_gp",
    "fit_arcsin_monomial",
    "generalized_weights",
    "nlp_cross_check",
    "reference_placement",
    "solve_gp",
    "true_objective",
    "true_objective_grad",
]

DEG = 180.0 / math.pi
FIT_LADDER = (4.0, 2.0, 1.5, 1.25, 1.12, 1.06, 1.03, 1.015, 1.007)


class FitError(ModelError):
    pass


@dataclass(frozen=True)
class MonomialFit:
    mu: float
    omega: float
    fit_range: tuple
    max_log_residual: float

    def __call__(self, f):
        return self.mu * np.asarray(f, dtype=float) ** self.omega


def _arcsin_inv(f):
    return np.arcsin(1.0 / np.asarray(f, dtype=float))


def fit_arcsin_monomial(lo: float, hi: float, n_points: int = 64, func=None,
                        max_residual: float = 0.05) -> MonomialFit:
    """Least-squares fit of ``log func(f)`` against ``log f`` on ``n_points`` log-spaced points.

    ``func`` defaults to ``asin(1/f)``, which needs ``lo >= 1``; any other
    function must be positive on the range. Fits whose worst absolute
    log-residual exceeds ``max_residual`` raise ``FitError``.
    """
    if func is None:
        func = _arcsin_inv
        if lo < 1.0:
            raise FitError("asin(1/f) is only defined for f >= 1")
    if not (0.2 <= lo < hi):
        raise FitError("fit range must satisfy 0.2 <= lo < hi")
    if n_points < 50:
        raise FitError("use at least 50 fit points")
    f = np.geomspace(lo, hi, n_points)
    g = np.asarray(func(f), dtype=float)
    if np.any(g <= 0):
        raise FitError("function must be positive on the fit range")
    X = np.column_stack([np.ones_like(f), np.log(f)])
    coef, *_ = np.linalg.lstsq(X, np.log(g), rcond=None)
    resid = float(np.max(np.abs(X @ coef - np.log(g))))
    if resid > max_residual:
        raise FitError(f"log-residual {resid:.4f} on [{lo}, {hi}] exceeds {max_residual}")
    return MonomialFit(mu=float(math.exp(coef[0])), omega=float(coef[1]), fit_range=(lo, hi),
                       max_log_residual=resid)


def _local_arcsin_fit(f_ref: float):
    """Widest ladder range around ``f_ref`` with an accepted fit, shifted to a lower bound."""
    for q in FIT_LADDER:
        lo, hi = max(1.0, f_ref / q), f_ref * q
        try:
            fit = fit_arcsin_monomial(lo, hi)
        except FitError:
            continue
        f = np.geomspace(lo, hi, 256)
        shift = float(np.min(np.log(_arcsin_inv(f)) - np.log(fit(f))))
        lower = MonomialFit(fit.mu * math.exp(min(shift, 0.0)), fit.omega, (lo, hi), fit.max_log_residual)
        return fit, lower
    raise FitError(f"no accepted arcsine fit around f = {f_ref}")


# ----------------------------------------------------------------------------
# True objective
# ----------------------------------------------------------------------------

def generalized_weights(scenario: Scenario, assignment: Assignment, table: ModulationTable) -> np.ndarray:
    """(I, J) matrix of summed B_m * r_m over the active tuples of each link."""
    rates = scenario.bit_rates()
    w = np.zeros((scenario.I, scenario.J))
    for i, m, j, _ in assignment:
        w[i, j] += table.B[m - 1] * rates[m - 1]
    return w


def _abs_terms(users, w, pos, ch, with_grad=True):
    dx = pos[0] - users[:, 0]
    dy = pos[1] - users[:, 1]
    h = pos[2]
    rho2 = dx * dx + dy * dy
    d2 = rho2 + h * h
    rho = np.sqrt(rho2)
    theta = DEG * np.arctan2(h, rho)
    P = 1.0 / (1.0 + ch.alpha * np.exp(-ch.beta * (theta - ch.alpha)))
    pen = 10.0 ** (ch.eta * P)
    f = float(np.sum(w * d2 * pen))
    if not with_grad:
        return f, None
    # d pen / d theta = pen * ln10 * eta * beta * P (1 - P)
    dpen = pen * math.log(10.0) * ch.eta * ch.beta * P * (1.0 - P)
    safe = np.where(rho > 0, rho, 1.0)
    ux = np.where(rho > 0, dx / safe, 0.0)
    uy = np.where(rho > 0, dy / safe, 0.0)
    dth_drho = -DEG * h / d2
    dth_dh = DEG * rho / d2
    gx = w * (2.0 * dx * pen + d2 * dpen * dth_drho * ux)
    gy = w * (2.0 * dy * pen + d2 * dpen * dth_drho * uy)
    gh = w * (2.0 * h * pen + d2 * dpen * dth_dh)
    return f, np.array([gx.sum(), gy.sum(), gh.sum()])


def true_objective(scenario: Scenario, positions, weights) -> float:
    """Generalized-scheme objective of ``positions`` (J, 3) under link weights (I, J)."""
    pos = np.asarray(positions, dtype=float).reshape(-1, 3)
    total = 0.0
    for j in range(len(pos)):
        idx = np.flatnonzero(weights[:, j])
        if len(idx):
            total += _abs_terms(scenario.users[idx], weights[idx, j], pos[j], scenario.channel, False)[0]
    return total


def true_objective_grad(scenario: Scenario, positions, weights) -> np.ndarray:
    """Analytic gradient of ``true_objective`` with respect to ``positions``, shape (J, 3)."""
    pos = np.asarray(positions, dtype=float).reshape(-1, 3)
    g = np.zeros_like(pos)
    for j in range(len(pos)):
        idx = np.flatnonzero(weights[:, j])
        if len(idx):
            g[j] = _abs_terms(scenario.users[idx], weights[idx, j], pos[j], scenario.channel)[1]
    return g


def reference_placement(scenario: Scenario, weights, previous: Placement | None = None,
                        n_alt: int = 96) -> Placement:
    """Cheap starting placement for the GP condensation.

    Horizontal candidates per ABS are the cost-weighted centroid of its
    users, one re-weighting of that centroid by the per-link penalty factor,
    and every user position; each is paired with the best of ``n_alt``
    altitudes and the overall best is kept. ABSs serving nobody keep
    ``previous`` (or sit at the area center, h_min).
    """
    x_lo, x_hi, y_lo, y_hi = scenario.area
    ch = scenario.channel
    if previous is not None:
        pos = np.array(previous.positions, dtype=float)
    else:
        pos = np.tile([(x_lo + x_hi) / 2, (y_lo + y_hi) / 2, scenario.h_min], (scenario.J, 1))
    alts = np.linspace(scenario.h_min, scenario.h_max, n_alt)

    def scan(users, w, c):
        # objective on every altitude at once: (n_alt, n_users)
        dx = c[0] - users[:, 0]
        dy = c[1] - users[:, 1]
        rho = np.hypot(dx, dy)[None, :]
        h = alts[:, None]
        theta = DEG * np.arctan2(h, rho)
        P = 1.0 / (1.0 + ch.alpha * np.exp(-ch.beta * (theta - ch.alpha)))
        pen = 10.0 ** (ch.eta * P)
        vals = ((rho * rho + h * h) * pen) @ w
        k = int(np.argmin(vals))
        return float(vals[k]), alts[k], pen[k]

    for j in range(scenario.J):
        idx = np.flatnonzero(weights[:, j])
        if not len(idx):
            continue
        w = weights[idx, j]
        users = scenario.users[idx]
        c = (w @ users) / w.sum()
        best = (*scan(users, w, c), c)
        wp = w * best[2]
        cands = [(wp @ users) / wp.sum()] + list(users)
        for cand in cands:
            val, h, pen = scan(users, w, cand)
            if val < best[0]:
                best = (val, h, pen, cand)
        pos[j] = (best[3][0], best[3][1], best[1])
    return Placement(pos)


# ----------------------------------------------------------------------------
# GP assembly
# ----------------------------------------------------------------------------

@dataclass
class GpBlock:
    """Independent GP of one ABS."""

    j: int
    users: list
    variables: list
    objective: Posynomial
    inequalities: list
    equalities: list
    start: dict
    fits: dict


@dataclass
class GpProgram:
    blocks: list
    psi: float
    phi: float
    eta: float
    offsets: str

    @property
    def variables(self) -> list:
        return [f"{v}_{b.j}" if v in ("x", "y", "h") else v for b in self.blocks for v in b.variables]

    @property
    def n_variables(self) -> int:
        return sum(len(b.variables) for b in self.blocks)


def _offset_rows(v: str, t: str, c: float, v_ref: float, t_ref: float):
    """Condensed rows for ``t >= |v - c|``: v <= c + t and c <= v + t."""
    M = Monomial.of
    pt = {v: v_ref, t: t_ref}
    upper = condense(Posynomial.of(M(c), M(1.0, **{t: 1})), pt)
    lower = condense(Posynomial.of(M(1.0, **{v: 1}), M(1.0, **{t: 1})), pt)
    return [Posynomial.of(M(1.0, **{v: 1}) * upper.inv()), Posynomial.of(M(c) * lower.inv())]


def assemble_gp(scenario: Scenario, assignment: Assignment, table: ModulationTable | None = None,
                reference: Placement | None = None, psi: float = 100.0, phi: float = 100.0,
                offsets: str = "two-sided") -> GpProgram:
    """Build the per-ABS GPs for a fixed assignment, condensed at ``reference``.

    ``offsets="monomial"`` replaces the two-sided offset rows with the monomial
    equalities ``x_j = 2 sqrt(x_i t0)`` (and the y analogue); it is offered
    for comparison only, since it ties ``t0`` to ``x_j^2 / (4 x_i)``.
    """
    ch = scenario.channel
    if ch.n != 2:
        raise ModelError("the GP form needs path-loss exponent n = 2")
    if np.any(scenario.users <= 0):
        raise ModelError("GP variables need strictly positive user coordinates")
    if offsets not in ("two-sided", "monomial"):
        raise ModelError(f"unknown offset form {offsets!r}")
    c = abs(ch.eta) * math.log(10.0)
    if ch.eta < 0 and not phi > 2.0 * c:
        raise ModelError(f"phi = {phi} is too small for eta = {ch.eta}; need phi > {2.0 * c:.4g}")
    if table is None:
        table = modulation_constants(ch, scenario.M)
    if not assignment.omega():
        raise ModelError("assignment serves nobody; the placement is undefined")
    W = generalized_weights(scenario, assignment, table)
    if reference is None:
        reference = reference_placement(scenario, W)
    K = ch.alpha * math.exp(ch.alpha * ch.beta)
    k2 = DEG * ch.beta / psi
    M = Monomial.of
    x_lo, x_hi, y_lo, y_hi = scenario.area
    scale = 10.0 ** ch.eta if ch.eta < 0 else 1.0

    blocks = []
    for j in range(scenario.J):
        idx = assignment.users_of(j)
        if not idx:
            continue
        xr, yr, hr = (float(v) for v in reference.positions[j])
        # strictly inside the box so the start is an interior point
        xr = min(max(xr, x_lo * (1 + 1e-7)), x_hi * (1 - 1e-7))
        yr = min(max(yr, y_lo * (1 + 1e-7)), y_hi * (1 - 1e-7))
        hr = min(max(hr, scenario.h_min * (1 + 1e-7)), scenario.h_max * (1 - 1e-7))
        floor = max(1.0, 0.02 * hr)
        variables = ["x", "y", "h"]
        start = {"x": xr, "y": yr, "h": hr}
        ineq = [
            Posynomial.of(M(1.0 / x_hi, x=1)), Posynomial.of(M(x_lo, x=-1)),
            Posynomial.of(M(1.0 / y_hi, y=1)), Posynomial.of(M(y_lo, y=-1)),
            Posynomial.of(M(1.0 / scenario.h_max, h=1)), Posynomial.of(M(scenario.h_min, h=-1)),
        ]
        eq = []
        obj_terms = []
        fits = {}
        for i in idx:
            ux, uy = (float(v) for v in scenario.users[i])
            t0, t1, f0, f1, f2 = (f"{s}_{i}" for s in ("t0", "t1", "f0", "f1", "f2"))
            variables += [t0, t1, f0, f1, f2]
            if offsets == "monomial":
                eq.append(M(0.5 / math.sqrt(ux), x=1, **{t0: -0.5}))
                eq.append(M(0.5 / math.sqrt(uy), y=1, **{t1: -0.5}))
                t0r, t1r = xr * xr / (4 * ux), yr * yr / (4 * uy)
            else:
                t0r = max(abs(xr - ux), floor) * (1 + 1e-6)
                t1r = max(abs(yr - uy), floor) * (1 + 1e-6)
                ineq += _offset_rows("x", t0, ux, xr, t0r)
                ineq += _offset_rows("y", t1, uy, yr, t1r)
            f0r = math.sqrt(t0r ** 2 + t1r ** 2 + hr ** 2) / hr * (1 + 1e-6)
            fit, lower = _local_arcsin_fit(f0r)
            lo, hi = lower.fit_range
            ineq.append(Posynomial.of(M(1.0, **{f0: -2, t0: 2}, h=-2), M(1.0, **{f0: -2, t1: 2}, h=-2),
                                      M(1.0, **{f0: -2})))
            ineq.append(Posynomial.of(M(1.0 / hi, **{f0: 1})))
            if lo > 1.0:
                ineq.append(Posynomial.of(M(lo, **{f0: -1})))
            cap = condense(Posynomial.of(M(1.0), M(k2 * lower.mu, **{f0: lower.omega})), {f0: f0r})
            ineq.append(Posynomial.of(M(1.0, **{f1: 1}) * cap.inv()))
            f1r = cap.value({f0: f0r}) * (1 - 1e-6)
            den = condense(Posynomial.of(M(1.0, **{f1: psi}), M(K)), {f1: f1r})
            ineq.append(Posynomial.of(M(1.0, **{f2: -1}), M(c * K / phi, **{f2: -1}) * den.inv()))
            f2r = (1.0 + c * K / phi / den.value({f1: f1r})) * (1 + 1e-6)
            start.update({t0: t0r, t1: t1r, f0: f0r, f1: f1r, f2: f2r})
            w = W[i, j] * scale
            for v in (t0, t1, "h"):
                obj_terms.append(M(w, **{v: 2, f2: phi}))
            omega3 = dict(den.exps).get(f1, 0.0)
            fits[i] = {"arcsin": fit, "arcsin_lower": lower,
                       "mu3": den.coef, "omega3": omega3}
        blocks.append(GpBlock(j=j, users=list(idx), variables=variables,
                              objective=Posynomial(tuple(obj_terms)), inequalities=ineq,
                              equalities=eq, start=start, fits=fits))
    return GpProgram(blocks=blocks, psi=psi, phi=phi, eta=ch.eta, offsets=offsets)


# ----------------------------------------------------------------------------
# Solving
# ----------------------------------------------------------------------------

@dataclass
class GpPlacementResult:
    placement: Placement
    surrogate_objective: float
    true_objective: float
    psi_ratio: float
    phi_ratio: float
    newton_steps: int
    details: dict = field(default_factory=dict)


def _cond_ratio(x, n):
    """exp(x) / (1 + x/n)^n."""
    x = np.asarray(x, dtype=float)
    return np.exp(x - n * np.log1p(x / n))


def solve_gp(program: GpProgram, scenario: Scenario, assignment: Assignment,
             table: ModulationTable | None = None, previous: Placement | None = None,
             tol: float = 1e-9) -> GpPlacementResult:
    """Solve every ABS block and report the true objective of the result.

    ``psi_ratio`` and ``phi_ratio`` are the largest ``exp(x)/(1 + x/n)^n``
    over the realized arguments of the two exponential condensations.
    """
    if table is None:
        table = modulation_constants(scenario.channel, scenario.M)
    ch = scenario.channel
    x_lo, x_hi, y_lo, y_hi = scenario.area
    if previous is not None:
        pos = np.array(previous.positions, dtype=float)
    else:
        pos = np.tile([(x_lo + x_hi) / 2, (y_lo + y_hi) / 2, scenario.h_min], (scenario.J, 1))
    surrogate = 0.0
    steps = 0
    psi_r, phi_r = 1.0, 1.0
    c = abs(ch.eta) * math.log(10.0)
    K = ch.alpha * math.exp(ch.alpha * ch.beta)
    for b in program.blocks:
        res = solve_gp_program(b.variables, b.objective, b.inequalities, b.equalities,
                               start=b.start, tol=tol)
        steps += res.newton_steps
        surrogate += res.objective
        v = res.values
        pos[b.j] = (min(max(v["x"], x_lo), x_hi), min(max(v["y"], y_lo), y_hi),
                    min(max(v["h"], scenario.h_min), scenario.h_max))
        for i in b.users:
            low = b.fits[i]["arcsin_lower"]
            xpsi = DEG * ch.beta * low(v[f"f0_{i}"])
            psi_r = max(psi_r, float(_cond_ratio(xpsi, program.psi)))
            xphi = c * K / (b.fits[i]["mu3"] * v[f"f1_{i}"] ** b.fits[i]["omega3"])
            phi_r = max(phi_r, float(_cond_ratio(xphi, program.phi)))
    placement = Placement(pos)
    W = generalized_weights(scenario, assignment, table)
    return GpPlacementResult(placement=placement, surrogate_objective=surrogate,
                             true_objective=true_objective(scenario, placement.positions, W),
                             psi_ratio=psi_r, phi_ratio=phi_r, newton_steps=steps)


@dataclass
class NlpResult:
    placement: Placement
    objective: float
    starts: int


def nlp_cross_check(scenario: Scenario, assignment: Assignment, table: ModulationTable | None = None,
                    multistart: int = 8, seed: int = 0, initial: Placement | None = None,
                    previous: Placement | None = None) -> NlpResult:
    """Box-constrained multistart L-BFGS-B on the exact generalized objective.

    Starts per ABS: ``initial`` (when given), the reference heuristic, then
    ``multistart`` uniform draws from a generator seeded by ``seed``.
    """
    if table is None:
        table = modulation_constants(scenario.channel, scenario.M)
    ch = scenario.channel
    W = generalized_weights(scenario, assignment, table)
    ref = reference_placement(scenario, W, previous)
    pos = np.array(ref.positions)
    x_lo, x_hi, y_lo, y_hi = scenario.area
    lo = np.array([x_lo, y_lo, scenario.h_min])
    hi = np.array([x_hi, y_hi, scenario.h_max])
    L = float(max(hi))
    rng = np.random.default_rng(seed)
    n_starts = 0
    for j in range(scenario.J):
        idx = np.flatnonzero(W[:, j])
        draws = rng.uniform(lo, hi, size=(multistart, 3))
        if not len(idx):
            continue
        users, w = scenario.users[idx], W[idx, j]
        starts = ([initial.positions[j]] if initial is not None else []) + [ref.positions[j]] + list(draws)
        f_ref = _abs_terms(users, w, ref.positions[j], ch, False)[0]

        def fun(z):
            f, g = _abs_terms(users, w, z * L, ch)
            return f / f_ref, g * L / f_ref

        best, best_f = None, math.inf
        for s in starts:
            s = np.clip(np.asarray(s, dtype=float), lo, hi)
            r = minimize(fun, s / L, jac=True, method="L-BFGS-B",
                         bounds=list(zip(lo / L, hi / L)), options={"maxiter": 500, "ftol": 1e-13, "gtol": 1e-10})
            n_starts += 1
            z = np.clip(r.x * L, lo, hi)
            f = _abs_terms(users, w, z, ch, False)[0]
            if f < best_f:
                best, best_f = z, f
        pos[j] = best
    placement = Placement(pos)
    return NlpResult(placement=placement, objective=true_objective(scenario, placement.positions, W),
                     starts=n_starts)


__all__ += ["NlpResult", "GpError"]
