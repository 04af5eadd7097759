"""Solvers for :class:`CompiledProgram` instances.

The default path lifts the program to second-order cones (see
:mod:`uavfml.solver.conic`). The built-in alternative is a log-barrier
method: damped Newton centering with linear equalities handled through the
saddle-point system, after a phase-I problem ``min s, f(x) <= s`` when the
start is not strictly feasible. It needs no external solver and suits small
programs; on large, badly centred programs it is slow.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..exceptions import Infeasible, MaxIterReached
from .conic import solve_conic
from .program import CompiledProgram, ConvexProgram

__all__ = ["SolveReport", "solve_convex"]


@dataclass
class SolveReport:
    objective: float
    iterations: int
    violation: float
    status: str  # "Optimal" | "MaxIter" | "Infeasible"


class _PhaseOne:
    """Wraps a compiled program as ``min s  s.t.  f_i(x) - s <= 0``."""

    def __init__(self, prog):
        self.p = prog
        self.n = prog.n + 1
        self.m = prog.m
        self.Aeq = sp.hstack([prog.Aeq, sp.csr_matrix((prog.Aeq.shape[0], 1))]).tocsr()
        self.beq = prog.beq
        self.cobj = np.zeros(self.n)
        self.cobj[-1] = 1.0

    def values(self, z):
        return self.p.values(z[:-1]) - z[-1]

    def jacobian(self, z):
        J = self.p.jacobian(z[:-1])
        return sp.hstack([J, -np.ones((self.m, 1))]).tocsr()

    def hessian(self, z, lam):
        H = self.p.hessian(z[:-1], lam)
        return sp.block_diag([H, sp.csr_matrix((1, 1))]).tocsr()


class _Boxed:
    """Adds a wide box on variables that have an infinite bound.

    The barrier has no analytic centre when a variable can drift to infinity
    without tightening any row; the box restores one far from the region of
    interest.
    """

    def __init__(self, prog, x0, radius=10.0):
        self.p = prog
        self.n = prog.n
        self.Aeq, self.beq, self.cobj = prog.Aeq, prog.beq, prog.cobj
        r = radius * np.maximum(1.0, np.abs(x0))
        self.lo = np.flatnonzero(~np.isfinite(prog.lb))
        self.hi = np.flatnonzero(~np.isfinite(prog.ub))
        self.lo_val = x0[self.lo] - r[self.lo]
        self.hi_val = x0[self.hi] + r[self.hi]
        k = len(self.lo) + len(self.hi)
        self.m = prog.m + k
        rows = np.arange(k)
        cols = np.concatenate([self.lo, self.hi])
        vals = np.concatenate([-np.ones(len(self.lo)), np.ones(len(self.hi))])
        self.E = sp.csr_matrix((vals, (rows, cols)), shape=(k, self.n))
        self.e0 = np.concatenate([self.lo_val, -self.hi_val])
        self.row_names = list(prog.row_names) + ["box"] * k

    def values(self, x):
        return np.concatenate([self.p.values(x), self.E @ x + self.e0])

    def jacobian(self, x):
        return sp.vstack([self.p.jacobian(x), self.E]).tocsr()

    def hessian(self, x, lam):
        return self.p.hessian(x, lam[:self.p.m])


def _interior_start(prog, x0):
    """Pull ``x0`` strictly inside finite box bounds (needed for 1/x atoms)."""
    x = np.array(x0, dtype=float)
    bad = ~np.isfinite(x)
    x[bad] = 0.0
    lb, ub = prog.lb, prog.ub
    width = np.where(np.isfinite(lb) & np.isfinite(ub), ub - lb, np.inf)
    margin = np.minimum(1e-6 * np.maximum(np.abs(x), 1.0), 1e-3 * width)
    x = np.where(np.isfinite(lb), np.maximum(x, lb + margin), x)
    x = np.where(np.isfinite(ub), np.minimum(x, ub - margin), x)
    # unbounded-below positives fall back to the box centre
    both = np.isfinite(lb) & np.isfinite(ub)
    x[bad & both] = 0.5 * (lb[bad & both] + ub[bad & both])
    only_lb = bad & np.isfinite(lb) & ~both
    x[only_lb] = lb[only_lb] + 1.0
    return x


def _newton_system(H, g, Aeq, AeqT):
    n = g.size
    if Aeq.shape[0]:
        K = sp.bmat([[H, AeqT], [Aeq, None]], format="csc")
        sol = spla.spsolve(K, np.concatenate([-g, np.zeros(Aeq.shape[0])]))
        return sol[:n]
    return spla.spsolve(H.tocsc(), -g)


def _barrier(P, x, eps_opt, max_iter, mu=20.0, t0=None, stop=None, stop_centred=None):
    """Log-barrier path following with damped Newton centering.

    ``x`` must be strictly feasible and satisfy the equalities; steps stay in
    the null space of the equality matrix. ``stop(x)`` may end early at any
    iterate, ``stop_centred(x)`` only after a centering step has converged.
    """
    c = P.cobj
    AeqT = P.Aeq.T.tocsr()
    f = P.values(x)
    m = f.size
    if t0 is None:
        # t that best balances the objective gradient against the barrier's
        gphi = P.jacobian(x).T @ (1.0 / -f)
        t0 = -float(c @ gphi) / max(float(c @ c), 1e-300)
        t0 = min(max(t0, 1.0), 1e8)
    t = t0
    total = 0
    status = "MaxIter"
    n = x.size

    def phi(xx, ff):
        return t * float(c @ xx) - float(np.sum(np.log(-ff)))

    while total < max_iter:
        # centering
        for _ in range(100):
            if stop is not None and stop(x):
                return x, total, "Optimal"
            total += 1
            F = -f
            J = P.jacobian(x)
            g = t * c + J.T @ (1.0 / F)
            H = P.hessian(x, 1.0 / F) + J.T @ sp.diags(1.0 / F**2) @ J
            H = H + sp.diags(1e-12 * (1.0 + np.abs(H.diagonal())))
            dx = _newton_system(H, g, P.Aeq, AeqT)
            if not np.all(np.isfinite(dx)):
                return x, total, status
            dec2 = float(-(g @ dx))
            if dec2 / 2.0 <= 1e-9 or total >= max_iter:
                break
            s = 1.0
            base = phi(x, f)
            while s > 1e-14:
                xn = x + s * dx
                fn = P.values(xn)
                if np.all(fn <= 0.01 * f) and phi(xn, fn) <= base - 0.01 * s * dec2:
                    break
                s *= 0.5
            else:
                break
            x, f = xn, fn
        if stop_centred is not None and stop_centred(x):
            return x, total, "Optimal"
        if m / t <= eps_opt * max(1.0, abs(float(c @ x))):
            status = "Optimal"
            break
        t *= mu
    return x, total, status


def _solve_conic(P, eps_feas, eps_opt, max_iter, raise_on_maxiter, repairs=3):
    x, status, iters = solve_conic(P, eps_feas, eps_opt, max_iter)
    # the cone solver meets tolerances in its own scaling; rows that still
    # exceed eps_feas are tightened by their excess and the program re-solved
    shift = np.zeros(P.m)
    for _ in range(repairs):
        if x is None or status == "Infeasible" or P.max_violation(x) <= eps_feas:
            break
        f = P.values(x)
        bad = f > 0.1 * eps_feas
        shift[bad] += 2.0 * f[bad]
        x, status, more = solve_conic(P, eps_feas, eps_opt, max_iter, shift=shift)
        iters += more
    if status == "Infeasible" or x is None:
        if x is None:
            raise Infeasible("program", "conic solver returned no point")
        fx = P.values(x)
        worst = int(np.argmax(fx))
        raise Infeasible(P.row_names[worst].split("[")[0],
                         f"program is infeasible (row {P.row_names[worst]})")
    report = SolveReport(P.objective(x), iters, P.max_violation(x), status)
    if status != "Optimal" and raise_on_maxiter:
        raise MaxIterReached(f"conic solver stopped after {iters} iterations")
    return x, report


def solve_convex(program, x0=None, eps_feas=1e-8, eps_opt=1e-6, max_iter=200, raise_on_maxiter=False,
                 phase1_margin=1e-2, method="conic"):
    """Solve a structurally convex program.

    Parameters
    ----------
    program : ConvexProgram or CompiledProgram
    x0 : ndarray, optional
        Starting point; defaults to the variables' ``start`` values.
    eps_feas : float
        Bound on equality residual and on the scaled dual residual.
    eps_opt : float
        Relative duality-gap tolerance.
    method : {"conic", "barrier"}
        ``"conic"`` lifts the program to second-order cones and calls
        Clarabel; ``"barrier"`` runs the built-in log-barrier method, which
        is adequate for small programs only.

    Returns
    -------
    x : ndarray
    report : SolveReport

    Raises
    ------
    Infeasible
        If phase I cannot find a strictly feasible point.
    MaxIterReached
        Only when ``raise_on_maxiter`` is set.
    """
    P = program.compile() if isinstance(program, ConvexProgram) else program
    if not isinstance(P, CompiledProgram):
        raise TypeError("expected a ConvexProgram")
    if method == "conic":
        return _solve_conic(P, eps_feas, eps_opt, max_iter, raise_on_maxiter)
    if method != "barrier":
        raise ValueError(f"unknown method {method!r}")
    x = _interior_start(P, P.start if x0 is None else x0)
    if P.beq.size:
        r = P.Aeq @ x - P.beq
        if np.max(np.abs(r)) > 0:
            AAt = (P.Aeq @ P.Aeq.T).tocsc()
            x = x - P.Aeq.T @ spla.spsolve(AAt, r)
    iters = 0
    orig = P
    if not (np.all(np.isfinite(P.lb)) and np.all(np.isfinite(P.ub))):
        P = _Boxed(P, x)
    f = P.values(x)
    eq_ok = P.beq.size == 0 or np.max(np.abs(P.Aeq @ x - P.beq)) <= eps_feas
    if not (np.all(f < 0) and eq_ok):
        finite = np.isfinite(f)
        if not np.all(finite):
            raise Infeasible("domain", "starting point outside the program domain")
        s0 = float(np.max(f)) + 1.0
        z = np.append(x, s0)
        ph = _PhaseOne(P)

        def feasible(zz, margin=1e-9):
            ok = np.max(P.values(zz[:-1])) < -margin
            if ok and P.beq.size:
                ok = np.max(np.abs(P.Aeq @ zz[:-1] - P.beq)) <= eps_feas
            return ok

        # a well-centred start matters more than an early exit
        z, it1, _ = _barrier(ph, z, 1e-9, max_iter, stop=lambda zz: feasible(zz, phase1_margin),
                               stop_centred=lambda zz: zz[-1] < 0 and feasible(zz))
        iters += it1
        x = z[:-1]
        if not feasible(z):
            fx = P.values(x)
            worst = int(np.argmax(fx))
            raise Infeasible(P.row_names[worst].split("[")[0],
                             f"no strictly feasible point (row {P.row_names[worst]}, value {fx[worst]:.3g})")
    x, it2, status = _barrier(P, x, eps_opt, max_iter)
    iters += it2
    report = SolveReport(orig.objective(x), iters, orig.max_violation(x), status)
    if status != "Optimal" and raise_on_maxiter:
        raise MaxIterReached(f"barrier solver stopped after {iters} iterations")
    return x, report
