"""Small dense geometric-programming solver.

A GP in standard form::

    minimize    f_0(z)
    subject to  f_k(z) <= 1      (posynomials)
                g_e(z)  = 1      (monomials)

becomes convex under ``z = exp(u)``: every posynomial turns into a
log-sum-exp of affine functions of ``u`` and every monomial into an affine
function. The convex problem is solved with a log-barrier method (phase I
for a strictly feasible start, equality-constrained Newton steps with
backtracking), following the textbook barrier algorithm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "GpError",
    "GpResult",
    "Monomial",
    "Posynomial",
    "condense",
    "solve_gp_program",
]


class GpError(RuntimeError):
    pass


@dataclass(frozen=True)
class Monomial:
    """``coef * prod(var ** exps[var])`` with ``coef > 0``."""

    coef: float
    exps: tuple = ()

    @classmethod
    def of(cls, coef: float, **exps) -> "Monomial":
        return cls(float(coef), tuple(sorted(exps.items())))

    def __post_init__(self):
        if not (self.coef > 0 and math.isfinite(self.coef)):
            raise GpError(f"monomial coefficient must be positive and finite, got {self.coef}")

    def __mul__(self, other: "Monomial") -> "Monomial":
        e = dict(self.exps)
        for k, v in other.exps:
            e[k] = e.get(k, 0.0) + v
        return Monomial(self.coef * other.coef, tuple(sorted((k, v) for k, v in e.items() if v != 0)))

    def __pow__(self, p: float) -> "Monomial":
        return Monomial(self.coef ** p, tuple((k, v * p) for k, v in self.exps))

    def inv(self) -> "Monomial":
        return self ** -1.0

    def value(self, point: dict) -> float:
        return self.coef * math.prod(point[k] ** v for k, v in self.exps)


@dataclass(frozen=True)
class Posynomial:
    terms: tuple

    @classmethod
    def of(cls, *terms: Monomial) -> "Posynomial":
        if not terms:
            raise GpError("empty posynomial")
        return cls(tuple(terms))

    def __mul__(self, m: Monomial) -> "Posynomial":
        return Posynomial(tuple(t * m for t in self.terms))

    def value(self, point: dict) -> float:
        return sum(t.value(point) for t in self.terms)


def condense(p: Posynomial, point: dict) -> Monomial:
    """Monomial lower bound of ``p`` that is exact at ``point`` (weighted AM-GM)."""
    vals = np.array([t.value(point) for t in p.terms])
    a = vals / vals.sum()
    out = Monomial(1.0)
    for t, ak in zip(p.terms, a):
        if ak > 0:
            out = out * Monomial(ak ** -ak) * t ** ak
    return out


@dataclass
class GpResult:
    values: dict
    objective: float
    status: str
    newton_steps: int
    max_constraint: float = field(default=0.0)


def _indicator(grp, m):
    S = np.zeros((m, len(grp)))
    S[grp, np.arange(len(grp))] = 1.0
    return S


class _Compiled:
    """Stacked log-sum-exp data: rows of ``A u + b`` grouped by constraint."""

    def __init__(self, posys, index, n):
        rows, b, grp = [], [], []
        for g, p in enumerate(posys):
            for t in p.terms:
                r = np.zeros(n)
                for k, v in t.exps:
                    r[index[k]] += v
                rows.append(r)
                b.append(math.log(t.coef))
                grp.append(g)
        self.A = np.array(rows).reshape(-1, n)
        self.b = np.array(b)
        self.grp = np.array(grp, dtype=int)
        self.m = len(posys)
        starts = np.flatnonzero(np.r_[True, self.grp[1:] != self.grp[:-1]]) if len(grp) else np.zeros(0, int)
        self.starts = starts
        self.S = _indicator(self.grp, self.m)

    def evaluate(self, u):
        """Values F (m,), gradients G (m, n) and per-term weights p for the Hessian."""
        y = self.A @ u + self.b
        mx = np.maximum.reduceat(y, self.starts)
        e = np.exp(y - mx[self.grp])
        S = np.add.reduceat(e, self.starts)
        F = mx + np.log(S)
        p = e / S[self.grp]
        G = self.S @ (p[:, None] * self.A)
        return F, G, p


def _barrier_eval(t, obj: _Compiled, con: _Compiled, u):
    F0, G0, p0 = obj.evaluate(u)
    val = t * F0[0]
    grad = t * G0[0]
    hess = t * (obj.A.T @ (p0[:, None] * obj.A) - np.outer(G0[0], G0[0]))
    if con.m:
        F, G, p = con.evaluate(u)
        if np.any(F >= 0):
            return math.inf, None, None
        s = -F
        val -= np.sum(np.log(s))
        grad = grad + G.T @ (1.0 / s)
        hess = hess + con.A.T @ ((p / s[con.grp])[:, None] * con.A) + G.T @ ((1.0 / s ** 2 - 1.0 / s)[:, None] * G)
    return val, grad, hess


def _newton(t, obj, con, E, u, max_steps, tol=1e-9, stop=None):
    steps = 0
    n = len(u)
    val, grad, hess = _barrier_eval(t, obj, con, u)
    if not math.isfinite(val):
        raise GpError("barrier evaluated at an infeasible point")
    for _ in range(max_steps):
        k = E.shape[0]
        if k:
            KKT = np.zeros((n + k, n + k))
            KKT[:n, :n] = hess
            KKT[:n, n:] = E.T
            KKT[n:, :n] = E
            rhs = np.r_[-grad, np.zeros(k)]
            try:
                sol = np.linalg.solve(KKT, rhs)
            except np.linalg.LinAlgError:
                sol = np.linalg.lstsq(KKT, rhs, rcond=None)[0]
            du = sol[:n]
        else:
            reg = 1e-12 * max(1.0, np.abs(np.diag(hess)).max())
            try:
                c = np.linalg.cholesky(hess + reg * np.eye(n))
                du = -np.linalg.solve(c.T, np.linalg.solve(c, grad))
            except np.linalg.LinAlgError:
                du = -np.linalg.lstsq(hess, grad, rcond=None)[0]
        dec = -grad @ du
        if dec / 2.0 <= tol:
            break
        step = 1.0
        while True:
            cand = u + step * du
            v, g, h = _barrier_eval(t, obj, con, cand)
            if v <= val - 0.25 * step * dec:
                break
            step *= 0.5
            if step < 1e-14:
                return u, steps, False
        stalled = val - v <= 1e-13 * max(1.0, abs(val))
        u, val, grad, hess = cand, v, g, h
        steps += 1
        if stalled:
            break
        if stop is not None and stop(u):
            break
    return u, steps, True


def _barrier(obj, con, E, u, tol, max_newton, mu=20.0, stop=None):
    m = max(con.m, 1)
    t = float(m)
    total = 0
    while True:
        u, k, _ = _newton(t, obj, con, E, u, max_newton, stop=stop)
        total += k
        if stop is not None and stop(u):
            return u, total
        if m / t < tol:
            return u, total
        if total > 50 * max_newton:
            raise GpError("barrier method did not converge")
        t *= mu


def solve_gp_program(variables, objective: Posynomial, inequalities=(), equalities=(),
                     start: dict | None = None, tol: float = 1e-9, max_newton: int = 200) -> GpResult:
    """Solve a GP given as posynomials over named positive variables.

    ``start`` is an optional positive starting point; phase I moves it into
    the strict interior when needed. Raises ``GpError`` when no strictly
    feasible point is found or Newton stalls.
    """
    names = list(variables)
    index = {v: k for k, v in enumerate(names)}
    n = len(names)
    obj = _Compiled([objective], index, n)
    con = _Compiled(list(inequalities), index, n)
    E = np.zeros((len(equalities), n))
    e = np.zeros(len(equalities))
    for r, mono in enumerate(equalities):
        for k, v in mono.exps:
            E[r, index[k]] += v
        e[r] = -math.log(mono.coef)

    u = np.zeros(n) if start is None else np.array([math.log(start[v]) for v in names])
    if len(e):
        # project onto the affine set E u = e
        u = u + np.linalg.lstsq(E, e - E @ u, rcond=None)[0]
        if np.abs(E @ u - e).max() > 1e-8 * (1 + np.abs(e).max()):
            raise GpError("monomial equalities are inconsistent")

    steps = 0
    if con.m:
        F, _, _ = con.evaluate(u)
        if F.max() >= 0.0:
            u, steps = _phase_one(con, E, u, tol, max_newton)
    u, k = _barrier(obj, con, E, u, tol, max_newton)
    steps += k
    values = {v: float(math.exp(u[index[v]])) for v in names}
    F0, _, _ = obj.evaluate(u)
    maxc = float(con.evaluate(u)[0].max()) if con.m else -math.inf
    return GpResult(values=values, objective=float(math.exp(F0[0])), status="optimal",
                    newton_steps=steps, max_constraint=maxc)


def _phase_one(con: _Compiled, E, u, tol, max_newton):
    """Minimize s subject to F_k(u) <= s until s is safely negative."""
    n = len(u)
    F, _, _ = con.evaluate(u)
    s0 = F.max() + 1.0
    aug = _Compiled.__new__(_Compiled)
    aug.A = np.hstack([con.A, -np.ones((len(con.A), 1))])
    aug.b = con.b
    aug.grp = con.grp
    aug.starts = con.starts
    aug.m = con.m
    aug.S = con.S
    # s >= -1 and |u - u_start| <= R keep the auxiliary problem bounded
    R = 30.0
    eye = np.hstack([np.eye(n), np.zeros((n, 1))])
    extra_A = np.vstack([np.r_[np.zeros(n), -1.0][None, :], eye, -eye])
    extra_b = np.r_[-1.0, -u - R, u - R]
    floor = _Compiled.__new__(_Compiled)
    floor.A = np.vstack([aug.A, extra_A])
    floor.b = np.r_[aug.b, extra_b]
    floor.grp = np.r_[aug.grp, aug.m + np.arange(len(extra_b))]
    floor.m = aug.m + len(extra_b)
    floor.starts = np.r_[aug.starts, len(aug.b) + np.arange(len(extra_b))]
    floor.S = _indicator(floor.grp, floor.m)
    obj = _Compiled.__new__(_Compiled)
    obj.A = np.r_[np.zeros(n), 1.0][None, :]
    obj.b = np.zeros(1)
    obj.grp = np.zeros(1, dtype=int)
    obj.starts = np.zeros(1, dtype=int)
    obj.m = 1
    obj.S = np.ones((1, 1))
    E_aug = np.hstack([E, np.zeros((E.shape[0], 1))])
    w = np.r_[u, s0]
    try:
        w, steps = _barrier(obj, floor, E_aug, w, tol, max_newton, stop=lambda w: w[-1] < -1e-3)
    except GpError as exc:
        raise GpError("phase I failed: " + str(exc)) from exc
    if w[-1] >= -1e-6:
        raise GpError("GP is infeasible (phase I optimum is nonnegative)")
    return w[:n], steps
