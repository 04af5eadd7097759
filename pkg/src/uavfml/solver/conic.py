"""Second-order-cone reformulation of a :class:`CompiledProgram`.

Every smooth atom of the IR has an exact cone representation:

* ``c * x_j**2`` and ``w * (s_k . x + o_k)**2`` use an epigraph variable
  ``v >= y**2``, written as ``||(2y/a, v/a^2 - 1)|| <= v/a^2 + 1``;
* ``c / x_j`` uses ``r >= 1 / x_j``, written as
  ``||(2, a r - x_j/a)|| <= a r + x_j/a``.

The scale ``a`` is the magnitude of the atom's argument at the program's
start point, which keeps both cone sides near one.

The lifted problem is handed to Clarabel.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

__all__ = ["ConicForm", "to_conic", "solve_conic"]


class ConicForm:
    """``min c.z  s.t.  b - A z in K`` with ``z = (x, v, w, r)``."""

    def __init__(self, A, b, c, cones, n):
        self.A, self.b, self.c, self.cones, self.n = A, b, c, cones, n


def _soc_blocks(first, second, third_A, third_b):
    """Stack triples ``(s0, s1, s2)`` row-interleaved for 3-dimensional cones.

    ``first`` and ``second`` are ``(A, b)`` pairs; each block has k rows.
    """
    A0, b0 = first
    A1, b1 = second
    k = A0.shape[0]
    A = sp.vstack([A0, A1, third_A]).tocsr()
    b = np.concatenate([b0, b1, third_b])
    perm = np.arange(3 * k).reshape(3, k).T.ravel()
    return A[perm], b[perm]


def _scale(y, floor):
    """Positive per-atom scales, at least ``floor``."""
    a = np.abs(np.asarray(y, dtype=float))
    a = np.where(np.isfinite(a), a, 1.0)
    return np.maximum(a, floor)


def to_conic(P, shift=None):
    """Lift ``P`` to a :class:`ConicForm` (Clarabel sign convention).

    ``shift`` (length ``P.m``) tightens each row to ``f(x) + shift <= 0``.
    """
    n = P.n
    qv = np.unique(P.Q.indices) if P.Q.nnz else np.zeros(0, int)
    nq = qv.size
    nsq = P.S.shape[0]
    rv = np.asarray(P.rec_vars, dtype=int) if P.has_rec else np.zeros(0, int)
    nr = rv.size
    N = n + nq + nsq + nr
    off_v, off_w, off_r = n, n + nq, n + nq + nsq

    def sel(idx, offset, k, coef=1.0):
        coef = np.broadcast_to(np.asarray(coef, dtype=float), (k,))
        return sp.csr_matrix((coef, (np.arange(k), offset + np.asarray(idx))), shape=(k, N))

    x0 = np.asarray(P.start, dtype=float)

    # inequality rows f(x) <= 0 become the nonnegative cone
    Qc = P.Q[:, qv] if nq else sp.csr_matrix((P.m, 0))
    Rc = P.R[:, rv] if nr else sp.csr_matrix((P.m, 0))
    Wc = P.W @ sp.diags(P.s_w) if nsq else sp.csr_matrix((P.m, 0))
    A_ineq = sp.hstack([P.A, Qc, Wc, Rc]).tocsr()
    blocks_A = []
    blocks_b = []
    cones = []
    if P.Aeq.shape[0]:
        blocks_A.append(sp.hstack([P.Aeq, sp.csr_matrix((P.Aeq.shape[0], N - n))]))
        blocks_b.append(P.beq)
        cones.append(("zero", P.Aeq.shape[0]))
    blocks_A.append(A_ineq)
    blocks_b.append(-P.c0 if shift is None else -(P.c0 + shift))
    cones.append(("nonneg", P.m))

    # v >= x^2
    if nq:
        a = _scale(x0[qv], 1e-3)
        Av = -sel(np.arange(nq), off_v, nq, 1.0 / a**2)
        A, b = _soc_blocks((Av, np.ones(nq)), (Av, -np.ones(nq)),
                           sel(qv, 0, nq, -2.0 / a), np.zeros(nq))
        blocks_A.append(A)
        blocks_b.append(b)
        cones += [("soc", 3)] * nq
    # w >= (S x + o)^2
    if nsq:
        # arguments that cancel at the start are scaled by their parts
        a = _scale(P.S @ x0 + P.s_off, np.maximum(1e-2 * (abs(P.S) @ np.abs(x0) + np.abs(P.s_off)), 1e-3))
        Aw = -sel(np.arange(nsq), off_w, nsq, 1.0 / a**2)
        S2 = sp.hstack([sp.diags(-2.0 / a) @ P.S, sp.csr_matrix((nsq, N - n))]).tocsr()
        A, b = _soc_blocks((Aw, np.ones(nsq)), (Aw, -np.ones(nsq)), S2, 2.0 * P.s_off / a)
        blocks_A.append(A)
        blocks_b.append(b)
        cones += [("soc", 3)] * nsq
    # r >= 1 / x
    if nr:
        a = _scale(x0[rv], 1e-6)
        Ar = sel(np.arange(nr), off_r, nr, a)
        Ax = sel(rv, 0, nr, 1.0 / a)
        A, b = _soc_blocks((-Ar - Ax, np.zeros(nr)), (-Ar + Ax, np.zeros(nr)),
                           sp.csr_matrix((nr, N)), np.full(nr, 2.0))
        blocks_A.append(A)
        blocks_b.append(b)
        cones += [("soc", 3)] * nr

    A = sp.vstack(blocks_A).tocsc()
    b = np.concatenate(blocks_b)
    c = np.concatenate([P.cobj, np.zeros(N - n)])
    return ConicForm(A, b, c, cones, n)


def _clarabel_cones(cones):
    import clarabel

    out = []
    for kind, dim in cones:
        if kind == "zero":
            out.append(clarabel.ZeroConeT(dim))
        elif kind == "nonneg":
            out.append(clarabel.NonnegativeConeT(dim))
        else:
            out.append(clarabel.SecondOrderConeT(dim))
    return out


def solve_conic(P, eps_feas=1e-8, eps_opt=1e-6, max_iter=200, shift=None):
    """Solve ``P`` through its cone form.

    Returns
    -------
    x : ndarray or None
        Primal solution restricted to the original variables.
    status : str
        ``"Optimal"``, ``"MaxIter"`` or ``"Infeasible"``.
    iterations : int
    """
    import clarabel

    form = to_conic(P, shift)
    N = form.c.size
    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.max_iter = int(max_iter)
    settings.tol_feas = min(eps_feas, 1e-8)
    settings.tol_gap_abs = min(eps_opt, 1e-8)
    settings.tol_gap_rel = min(eps_opt, 1e-8)
    solver = clarabel.DefaultSolver(sp.csc_matrix((N, N)), form.c, form.A, form.b,
                                    _clarabel_cones(form.cones), settings)
    sol = solver.solve()
    status = str(sol.status)
    x = np.asarray(sol.x)[:form.n] if sol.x is not None else None
    if "Infeasible" in status:
        return x, "Infeasible", sol.iterations
    if status.endswith("Solved"):
        return x, "Optimal", sol.iterations
    return x, "MaxIter", sol.iterations
