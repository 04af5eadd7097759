"""Solver-agnostic intermediate representation of a convex program.

A program is a set of bounded scalar variables, a linear objective, linear
equalities, and constraints of the form ``sum(atoms) <= 0``. Four atom kinds
are supported, each convex by construction:

* ``Affine(coef, var)`` with ``var=None`` for a constant term;
* ``Quadratic(coef, var)``: ``coef * var**2`` with ``coef >= 0``;
* ``SquaredSum(coef, terms, offset)``: ``coef * (sum c_j v_j + offset)**2``;
* ``Reciprocal(coef, var)``: ``coef / var`` with ``coef >= 0`` and ``var > 0``.

Builders add rows in vectorized batches; :meth:`ConvexProgram.compile`
produces sparse matrices for fast evaluation of values and derivatives.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..exceptions import UAVFMLError

__all__ = [
    "Affine", "Quadratic", "SquaredSum", "Reciprocal",
    "ConvexProgram", "CompiledProgram", "NonConvexProgram",
]


class NonConvexProgram(UAVFMLError, ValueError):
    """A builder emitted an atom that breaks structural convexity."""


@dataclass(frozen=True)
class Affine:
    coef: float
    var: str | None = None


@dataclass(frozen=True)
class Quadratic:
    coef: float
    var: str


@dataclass(frozen=True)
class SquaredSum:
    coef: float
    terms: tuple
    offset: float = 0.0


@dataclass(frozen=True)
class Reciprocal:
    coef: float
    var: str


def _fmt(v):
    return f"{v:.12g}"


class ConvexProgram:
    """Mutable builder for one convexified subproblem.

    Examples
    --------
    >>> prog = ConvexProgram()
    >>> x = prog.add_variables("x", 1, lb=1e-9, ub=1.0)
    >>> t = prog.add_variables("t", 1)
    >>> r = prog.add_rows(1, "epi")
    >>> prog.reciprocal(r, x, 1.0); prog.affine(r, t, -1.0)
    >>> prog.minimize(t, 1.0)
    """

    def __init__(self):
        self.names = []
        self.lb = []
        self.ub = []
        self.start = []
        self.blocks = {}
        self.row_names = []
        self._aff = ([], [], [])
        self._const = ([], [])
        self._quad = ([], [], [])
        self._sq = []  # (row, coef, vars tuple, coefs tuple, offset)
        self._rec = ([], [], [])
        self._eq = []  # (vars, coefs, rhs)
        self.objective = np.zeros(0)

    # variables ------------------------------------------------------------
    @property
    def n_vars(self):
        return len(self.names)

    @property
    def n_rows(self):
        return len(self.row_names)

    def add_variables(self, name, shape, lb=-np.inf, ub=np.inf, start=None):
        """Add a block of variables and return their integer indices."""
        shape = (shape,) if np.isscalar(shape) else tuple(shape)
        size = int(np.prod(shape)) if shape else 1
        first = self.n_vars
        idx = np.arange(first, first + size).reshape(shape)
        lb = np.broadcast_to(np.asarray(lb, dtype=float), shape).ravel()
        ub = np.broadcast_to(np.asarray(ub, dtype=float), shape).ravel()
        st = (np.full(size, np.nan) if start is None
              else np.broadcast_to(np.asarray(start, dtype=float), shape).ravel())
        for flat, multi in enumerate(np.ndindex(*shape) if shape else [()]):
            suffix = "[" + ",".join(map(str, multi)) + "]" if multi else ""
            self.names.append(f"{name}{suffix}")
        self.lb.extend(lb)
        self.ub.extend(ub)
        self.start.extend(st)
        self.blocks[name] = idx
        self.objective = np.concatenate([self.objective, np.zeros(size)])
        return idx

    def add_rows(self, shape, name):
        shape = (shape,) if np.isscalar(shape) else tuple(shape)
        size = int(np.prod(shape)) if shape else 1
        first = self.n_rows
        for multi in (np.ndindex(*shape) if shape else [()]):
            suffix = "[" + ",".join(map(str, multi)) + "]" if multi else ""
            self.row_names.append(f"{name}{suffix}")
        return np.arange(first, first + size).reshape(shape)

    # atoms ------------------------------------------------------------------
    @staticmethod
    def _flat(*arrays):
        b = np.broadcast_arrays(*[np.asarray(a) for a in arrays])
        return [x.ravel() for x in b]

    def affine(self, rows, vars, coefs):
        r, v, c = self._flat(rows, vars, coefs)
        self._aff[0].append(r.astype(int))
        self._aff[1].append(v.astype(int))
        self._aff[2].append(c.astype(float))

    def constant(self, rows, values):
        r, c = self._flat(rows, values)
        self._const[0].append(r.astype(int))
        self._const[1].append(c.astype(float))

    def quadratic(self, rows, vars, coefs):
        r, v, c = self._flat(rows, vars, coefs)
        if np.any(c < 0):
            raise NonConvexProgram("negative quadratic coefficient")
        self._quad[0].append(r.astype(int))
        self._quad[1].append(v.astype(int))
        self._quad[2].append(c.astype(float))

    def reciprocal(self, rows, vars, coefs):
        r, v, c = self._flat(rows, vars, coefs)
        if np.any(c < 0):
            raise NonConvexProgram("negative reciprocal coefficient")
        if np.any(np.asarray(self.lb)[v.astype(int)] <= 0) if len(v) else False:
            raise NonConvexProgram("reciprocal variable without positive lower bound")
        self._rec[0].append(r.astype(int))
        self._rec[1].append(v.astype(int))
        self._rec[2].append(c.astype(float))

    def squared_sum(self, rows, vars, coefs, offset=0.0, weight=1.0):
        """``weight * (sum_j coefs[..., j] * vars[..., j] + offset)**2`` per row.

        ``vars`` and ``coefs`` carry the term index in their last axis.
        """
        rows = np.asarray(rows)
        vars = np.asarray(vars)
        coefs = np.broadcast_to(np.asarray(coefs, dtype=float), vars.shape)
        lead = rows.shape
        vars = np.broadcast_to(vars, lead + vars.shape[-1:]).reshape(-1, vars.shape[-1])
        coefs = np.broadcast_to(coefs, lead + coefs.shape[-1:]).reshape(-1, coefs.shape[-1])
        offset = np.broadcast_to(np.asarray(offset, dtype=float), lead).ravel()
        weight = np.broadcast_to(np.asarray(weight, dtype=float), lead).ravel()
        if np.any(weight < 0):
            raise NonConvexProgram("negative squared-sum weight")
        self._sq.append((rows.ravel().astype(int), weight, vars.astype(int), coefs, offset))

    def equality(self, vars, coefs, rhs):
        """Linear equalities ``sum_j coefs[..., j] * vars[..., j] == rhs``."""
        vars = np.asarray(vars)
        coefs = np.broadcast_to(np.asarray(coefs, dtype=float), vars.shape)
        rhs = np.broadcast_to(np.asarray(rhs, dtype=float), vars.shape[:-1]).ravel()
        self._eq.append((vars.reshape(-1, vars.shape[-1]).astype(int),
                         coefs.reshape(-1, coefs.shape[-1]), rhs))

    def minimize(self, vars, coefs):
        v, c = self._flat(vars, coefs)
        np.add.at(self.objective, v.astype(int), c)

    # inspection -----------------------------------------------------------
    def _cat(self, store):
        return [np.concatenate(a) if a else np.zeros(0, dtype=int if i < 2 else float)
                for i, a in enumerate(store)]

    @property
    def constraints(self):
        """Materialized atom lists, one per inequality row (bounds excluded)."""
        out = [[] for _ in range(self.n_rows)]
        r, v, c = self._cat(self._aff)
        for ri, vi, ci in zip(r, v, c):
            out[ri].append(Affine(float(ci), self.names[vi]))
        for rr, cc in zip(*self._const):
            for ri, ci in zip(rr, cc):
                out[ri].append(Affine(float(ci), None))
        r, v, c = self._cat(self._quad)
        for ri, vi, ci in zip(r, v, c):
            out[ri].append(Quadratic(float(ci), self.names[vi]))
        for rows, w, vs, cs, off in self._sq:
            for i, ri in enumerate(rows):
                terms = tuple((float(ci), self.names[vi]) for vi, ci in zip(vs[i], cs[i]))
                out[ri].append(SquaredSum(float(w[i]), terms, float(off[i])))
        r, v, c = self._cat(self._rec)
        for ri, vi, ci in zip(r, v, c):
            out[ri].append(Reciprocal(float(ci), self.names[vi]))
        return out

    def is_structurally_convex(self):
        q = self._cat(self._quad)[2]
        rc = self._cat(self._rec)
        lb = np.asarray(self.lb)
        return bool(np.all(q >= 0) and np.all(rc[2] >= 0)
                    and np.all(lb[rc[1]] > 0) and all(np.all(s[1] >= 0) for s in self._sq))

    def dump(self):
        """Deterministic text form: variables, objective, then one row per line."""
        lines = []
        for name, lo, hi in zip(self.names, self.lb, self.ub):
            lines.append(f"var {name} [{_fmt(lo)}, {_fmt(hi)}]")
        obj = " + ".join(f"{_fmt(c)}*{self.names[i]}" for i, c in enumerate(self.objective) if c)
        lines.append(f"minimize {obj}")
        for vs, cs, rhs in self._eq:
            for i in range(len(rhs)):
                lhs = " + ".join(f"{_fmt(c)}*{self.names[v]}" for v, c in zip(vs[i], cs[i]))
                lines.append(f"eq: {lhs} == {_fmt(rhs[i])}")
        for name, atoms in zip(self.row_names, self.constraints):
            parts = []
            for a in atoms:
                if isinstance(a, Affine):
                    parts.append(_fmt(a.coef) + (f"*{a.var}" if a.var else ""))
                elif isinstance(a, Quadratic):
                    parts.append(f"{_fmt(a.coef)}*{a.var}^2")
                elif isinstance(a, SquaredSum):
                    inner = " + ".join(f"{_fmt(c)}*{v}" for c, v in a.terms)
                    parts.append(f"{_fmt(a.coef)}*({inner} + {_fmt(a.offset)})^2")
                else:
                    parts.append(f"{_fmt(a.coef)}/{a.var}")
            lines.append(f"{name}: {' + '.join(parts) or '0'} <= 0")
        return "\n".join(lines)

    def compile(self):
        return CompiledProgram(self)


class CompiledProgram:
    """Sparse, vectorized form of a :class:`ConvexProgram`.

    Bounds are appended as extra affine rows. All rows read ``f(x) <= 0``.
    """

    def __init__(self, prog):
        n = prog.n_vars
        m0 = prog.n_rows
        lb = np.asarray(prog.lb, dtype=float)
        ub = np.asarray(prog.ub, dtype=float)
        self.n = n
        self.lb, self.ub = lb, ub
        self.names = list(prog.names)
        self.row_names = list(prog.row_names)
        self.blocks = dict(prog.blocks)
        start = np.asarray(prog.start, dtype=float)
        self.start = start

        ar, av, ac = prog._cat(prog._aff)
        cr = np.concatenate(prog._const[0]) if prog._const[0] else np.zeros(0, int)
        cv = np.concatenate(prog._const[1]) if prog._const[1] else np.zeros(0)
        # bounds as rows
        lo = np.flatnonzero(np.isfinite(lb))
        hi = np.flatnonzero(np.isfinite(ub))
        rows_lo = m0 + np.arange(len(lo))
        rows_hi = m0 + len(lo) + np.arange(len(hi))
        self.m = m0 + len(lo) + len(hi)
        self.n_user_rows = m0
        self.row_names += [f"lb:{self.names[i]}" for i in lo] + [f"ub:{self.names[i]}" for i in hi]
        ar = np.concatenate([ar, rows_lo, rows_hi]).astype(int)
        av = np.concatenate([av, lo, hi]).astype(int)
        ac = np.concatenate([ac, -np.ones(len(lo)), np.ones(len(hi))])
        self.A = sp.csr_matrix((ac, (ar, av)), shape=(self.m, n))
        self.c0 = np.zeros(self.m)
        np.add.at(self.c0, cr.astype(int), cv)
        self.c0[rows_lo] += lb[lo]
        self.c0[rows_hi] -= ub[hi]

        qr, qv, qc = prog._cat(prog._quad)
        self.Q = sp.csr_matrix((qc, (qr, qv)), shape=(self.m, n))
        self.QT = self.Q.T.tocsr()

        nsq = sum(len(b[0]) for b in prog._sq)
        if nsq:
            srow, scol, sval, offs, ws, owner = [], [], [], [], [], []
            base = 0
            for rows, w, vs, cs, off in prog._sq:
                k, width = vs.shape
                srow.append(np.repeat(base + np.arange(k), width))
                scol.append(vs.ravel())
                sval.append(cs.ravel())
                offs.append(off)
                ws.append(w)
                owner.append(rows)
                base += k
            self.S = sp.csr_matrix((np.concatenate(sval), (np.concatenate(srow), np.concatenate(scol))),
                                   shape=(nsq, n))
            self.s_off = np.concatenate(offs)
            self.s_w = np.concatenate(ws)
            self.W = sp.csr_matrix((np.ones(nsq), (np.concatenate(owner), np.arange(nsq))),
                                   shape=(self.m, nsq))
        else:
            self.S = sp.csr_matrix((0, n))
            self.s_off = self.s_w = np.zeros(0)
            self.W = sp.csr_matrix((self.m, 0))
        self.WT = self.W.T.tocsr()
        self.ST = self.S.T.tocsr()

        rr, rv, rc = prog._cat(prog._rec)
        self.R = sp.csr_matrix((rc, (rr, rv)), shape=(self.m, n))
        self.RT = self.R.T.tocsr()
        self.has_rec = rc.size > 0
        self.rec_vars = np.unique(rv)

        if prog._eq:
            er, ev, ec, eb = [], [], [], []
            base = 0
            for vs, cs, rhs in prog._eq:
                k, width = vs.shape
                er.append(np.repeat(base + np.arange(k), width))
                ev.append(vs.ravel())
                ec.append(cs.ravel())
                eb.append(rhs)
                base += k
            self.Aeq = sp.csr_matrix((np.concatenate(ec), (np.concatenate(er), np.concatenate(ev))),
                                     shape=(base, n))
            self.beq = np.concatenate(eb)
        else:
            self.Aeq = sp.csr_matrix((0, n))
            self.beq = np.zeros(0)
        self.cobj = np.asarray(prog.objective, dtype=float).copy()

    # evaluation -------------------------------------------------------------
    def in_domain(self, x):
        return not self.has_rec or bool(np.all(x[self.rec_vars] > 0))

    def values(self, x):
        """Constraint values ``f(x)`` (length m); ``+inf`` outside the domain."""
        if not self.in_domain(x):
            return np.full(self.m, np.inf)
        f = self.A @ x + self.c0 + self.Q @ (x * x)
        if self.s_w.size:
            s = self.S @ x + self.s_off
            f = f + self.W @ (self.s_w * s * s)
        if self.has_rec:
            with np.errstate(divide="ignore"):
                f = f + self.R @ (1.0 / x)
        return f

    def jacobian(self, x):
        J = self.A + self.Q.multiply(2.0 * x[None, :])
        if self.s_w.size:
            s = self.S @ x + self.s_off
            J = J + self.W @ sp.diags(2.0 * self.s_w * s) @ self.S
        if self.has_rec:
            J = J - self.R.multiply(1.0 / (x * x)[None, :])
        return sp.csr_matrix(J)

    def hessian(self, x, lam):
        """``sum_i lam_i * Hess f_i(x)`` as a sparse matrix."""
        d = 2.0 * (self.QT @ lam)
        if self.has_rec:
            d = d + 2.0 * (self.RT @ lam) / x**3
        H = sp.diags(d)
        if self.s_w.size:
            ws = 2.0 * self.s_w * (self.WT @ lam)
            H = H + self.ST @ sp.diags(ws) @ self.S
        return H

    def objective(self, x):
        return float(self.cobj @ x)

    def max_violation(self, x):
        """Largest positive constraint value or equality residual."""
        f = self.values(x)
        viol = float(max(np.max(f, initial=-np.inf), 0.0))
        if self.beq.size:
            viol = max(viol, float(np.max(np.abs(self.Aeq @ x - self.beq))))
        return viol

    def unpack(self, x):
        return {name: x[idx] for name, idx in self.blocks.items()}
