"""Dense primal-dual interior-point solver for small semidefinite programs.

Solves

    minimize    <C, X>
    subject to  <A_k, X> <= b_k      k in inequality rows
                <A_k, X>  = b_k      k in equality rows
                X PSD

with an infeasible-start path-following method (HKM search direction,
Mehrotra predictor-corrector). Inequalities carry explicit nonnegative
slacks. Problem sizes here are tiny (n <= ~30, a few hundred rows), so
everything is dense.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

OPTIMAL = "optimal"
MAX_ITER = "max-iter"
INFEASIBLE = "infeasible"


@dataclass
class ConicResult:
    X: np.ndarray
    y: np.ndarray
    Z: np.ndarray
    primal_objective: float
    dual_objective: float
    gap: float
    primal_infeasibility: float
    dual_infeasibility: float
    iterations: int
    status: str


def _sym(M):
    return 0.5 * (M + M.T)


def _max_step(X, dX):
    """Largest alpha with X + alpha dX PSD (inf if dX keeps X PSD for all alpha)."""
    try:
        Lc = np.linalg.cholesky(X)
    except np.linalg.LinAlgError:
        return 0.0
    Li = np.linalg.solve(Lc, np.eye(len(X)))
    lam = np.linalg.eigvalsh(_sym(Li @ dX @ Li.T)).min()
    return np.inf if lam >= 0 else -1.0 / lam


def _max_step_lp(s, ds):
    neg = ds < 0
    if not np.any(neg):
        return np.inf
    return float(np.min(-s[neg] / ds[neg]))


def solve_conic(C, A, b, n_ineq, tol=1e-8, max_iter=200, verbose=False) -> ConicResult:
    """Solve the SDP above. ``A`` is a sequence of symmetric matrices; the first
    ``n_ineq`` rows are inequalities, the rest equalities."""
    C = _sym(np.asarray(C, dtype=float))
    A = np.array([_sym(np.asarray(a, dtype=float)) for a in A])
    b = np.asarray(b, dtype=float)
    n = C.shape[0]
    m = len(b)
    p = int(n_ineq)
    Avec = A.reshape(m, -1)

    norm_b = np.linalg.norm(b)
    norm_C = np.linalg.norm(C)
    normA = np.linalg.norm(Avec, axis=1)
    xi = max(10.0, np.sqrt(n), np.max((1.0 + np.abs(b)) / (1.0 + normA)) if m else 10.0)
    et = max(10.0, np.sqrt(n), norm_C, normA.max() if m else 0.0)
    X = xi * np.eye(n)
    Z = et * np.eye(n)
    s = np.full(p, xi)
    z = np.full(p, et)
    y = np.zeros(m)
    N = n + p

    status = MAX_ITER
    it = 0
    for it in range(1, max_iter + 1):
        AX = Avec @ X.ravel()
        rp = b - AX
        rp[:p] -= s
        Rd = C - np.tensordot(y, A, axes=1) - Z
        rz = -y[:p] - z
        mu = (np.vdot(X, Z) + s @ z) / N
        pobj = float(np.vdot(C, X))
        dobj = float(b @ y)
        gap = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
        pinf = np.linalg.norm(rp) / (1.0 + norm_b)
        dinf = (np.linalg.norm(Rd) + np.linalg.norm(rz)) / (1.0 + norm_C)
        if verbose:
            print(f"{it:3d} pobj={pobj:+.9e} dobj={dobj:+.9e} gap={gap:.1e} pinf={pinf:.1e} dinf={dinf:.1e}")
        if gap <= tol and pinf <= tol and dinf <= tol:
            status = OPTIMAL
            break
        big = 1e12 * (1.0 + norm_b + norm_C)
        if np.trace(X) > big or np.trace(Z) > big or np.abs(y).max(initial=0.0) > big:
            status = INFEASIBLE
            break

        Zi = np.linalg.inv(Z)
        Zi = _sym(Zi)
        # Schur complement M_kl = tr(A_k X A_l Z^-1)
        XAZ = np.einsum("ij,kjl,lm->kim", X, A, Zi, optimize=True)
        Msc = Avec @ XAZ.reshape(m, -1).T
        if p:
            Msc[np.arange(p), np.arange(p)] += s / z
        Msc = _sym(Msc)
        try:
            cho = np.linalg.cholesky(Msc)
            solveM = lambda r: np.linalg.solve(cho.T, np.linalg.solve(cho, r))  # noqa: E731
        except np.linalg.LinAlgError:
            Mpinv = np.linalg.pinv(Msc)
            solveM = lambda r: Mpinv @ r  # noqa: E731

        def direction(Rc, rc):
            # dX = (Rc - X dZ) Z^-1,  dZ = Rd - sum dy A,  ds = (rc - s dz) / z,  dz = rz - dy
            G = (Rc - X @ Rd) @ Zi
            rhs = rp - Avec @ _sym(G).ravel()
            if p:
                rhs[:p] -= (rc - s * rz) / z
            dy = solveM(rhs)
            dZ = Rd - np.tensordot(dy, A, axes=1)
            dX = _sym((Rc - X @ dZ) @ Zi)
            dz = rz - dy[:p]
            ds = (rc - s * dz) / z if p else np.zeros(0)
            return dX, dy, dZ, ds, dz

        Rc = -X @ Z
        rc = -s * z
        dX, dy, dZ, ds, dz = direction(Rc, rc)
        ap = min(1.0, _max_step(X, dX), _max_step_lp(s, ds))
        ad = min(1.0, _max_step(Z, dZ), _max_step_lp(z, dz))
        mu_aff = (np.vdot(X + ap * dX, Z + ad * dZ) + (s + ap * ds) @ (z + ad * dz)) / N
        sigma = min(1.0, max(0.0, (mu_aff / mu) ** 3)) if mu > 0 else 0.0

        Rc = sigma * mu * np.eye(n) - X @ Z - dX @ dZ
        rc = sigma * mu - s * z - ds * dz
        dX, dy, dZ, ds, dz = direction(Rc, rc)
        frac = 0.98 if it > 1 else 0.9
        ap = min(1.0, frac * _max_step(X, dX), frac * _max_step_lp(s, ds))
        ad = min(1.0, frac * _max_step(Z, dZ), frac * _max_step_lp(z, dz))
        if ap <= 1e-14 and ad <= 1e-14:
            break
        X = _sym(X + ap * dX)
        s = s + ap * ds
        y = y + ad * dy
        Z = _sym(Z + ad * dZ)
        z = z + ad * dz

    AX = Avec @ X.ravel()
    rp = b - AX
    rp[:p] -= s
    Rd = C - np.tensordot(y, A, axes=1) - Z
    pobj = float(np.vdot(C, X))
    dobj = float(b @ y)
    return ConicResult(
        X=X, y=y, Z=Z, primal_objective=pobj, dual_objective=dobj,
        gap=abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj)),
        primal_infeasibility=float(np.linalg.norm(rp) / (1.0 + norm_b)),
        dual_infeasibility=float(np.linalg.norm(Rd) / (1.0 + norm_C)),
        iterations=it, status=status,
    )
