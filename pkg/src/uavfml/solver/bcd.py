"""Block coordinate descent over the three convexified subproblems.

Each outer iteration runs block 1 (schedule and sensing power), block 2
(trajectory, uplink power, UAV CPU frequency) and block 3 (BS power and CPU
frequency). Every block re-linearizes at the incumbent, so the incumbent is
feasible for its program and the exact objective cannot increase beyond
solver tolerance. A block result that is worse or fails the audit is
discarded.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from .. import channel
from ..exceptions import Infeasible, InvalidState, MaxIterReached, ModelError
from ..scenario import initial_feasible_point
from . import subproblems as sub
from .barrier import solve_convex

__all__ = [
    "BaselineMode",
    "Violation",
    "ViolationReport",
    "BCDResult",
    "check_feasibility",
    "bcd_optimize",
    "bcd_optimize_detailed",
    "JointLatencyOptimizer",
]


class BaselineMode(enum.Enum):
    """Which blocks the optimizer may change; the rest keep initial values."""

    T_OPT = "T_OPT"
    UAV_SS_PC = "UAV_SS_PC"
    UAV_T_RA = "UAV_T_RA"
    BS_RA = "BS_RA"

    @property
    def blocks(self):
        return {
            BaselineMode.T_OPT: (1, 2, 3),
            BaselineMode.UAV_SS_PC: (1,),
            BaselineMode.UAV_T_RA: (2,),
            BaselineMode.BS_RA: (3,),
        }[self]

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).strip().upper().replace("-", "_")
        try:
            return cls[key]
        except KeyError:
            raise ValueError(f"unknown mode {value!r}; expected one of {[m.name for m in cls]}") from None


# ---------------------------------------------------------------------------
# feasibility audit
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class Violation:
    constraint: str
    index: tuple
    magnitude: float  # scaled (dimensionless)


@dataclass
class ViolationReport:
    violations: list = field(default_factory=list)
    max_violation: float = 0.0

    @property
    def ok(self):
        return not self.violations

    @property
    def constraints(self):
        return sorted({v.constraint for v in self.violations})

    def __len__(self):
        return len(self.violations)

    def __iter__(self):
        return iter(self.violations)


def _collect(out, name, excess, tol):
    excess = np.asarray(excess, dtype=float)
    bad = ~(excess <= tol)  # NaN counts as a violation
    for idx in zip(*np.nonzero(bad)):
        val = excess[idx]
        out.append(Violation(name, tuple(int(i) for i in idx), float(val if np.isfinite(val) else np.inf)))
    finite = excess[np.isfinite(excess)]
    return float(finite.max()) if finite.size else 0.0


def check_feasibility(config, dec, tol=1e-6):
    """Audit ``dec`` against the original (non-convexified) constraints.

    Each constraint is scaled by its natural bound (power by its maximum,
    energy by ``e_max``, displacement by ``v_max * delta_t``, radar rate by
    the threshold), and reported when its scaled excess exceeds ``tol``.

    Returns
    -------
    ViolationReport
    """
    K, C, U, T = config.num_rounds, config.num_targets, config.num_uavs, config.time_slots
    out = []
    worst = 0.0
    shapes = {
        "schedule": (K, C, U), "p_se": (K, U), "p_cm": (K, U, T), "f_u": (K, U),
        "traj_x": (K, U, T), "traj_y": (K, U, T), "p_bs": (K,), "f_bs": (K,),
    }
    for name, shape in shapes.items():
        arr = np.asarray(getattr(dec, name), dtype=float)
        if arr.shape != shape:
            out.append(Violation(f"shape:{name}", (), np.inf))
        elif not np.all(np.isfinite(arr)):
            out.append(Violation(f"finite:{name}", (), np.inf))
    if out:
        return ViolationReport(out, np.inf)

    x = dec.schedule
    worst = max(worst, _collect(out, "schedule_binary", np.abs(x - np.round(x)), tol))
    worst = max(worst, _collect(out, "schedule_box", np.maximum(-x, x - 1.0), tol))
    per_target = x.sum(axis=2)
    worst = max(worst, _collect(out, "one_uav_per_target", per_target - 1.0, tol))
    if config.sensing_coverage:
        worst = max(worst, _collect(out, "coverage", 1.0 - per_target, tol))

    for name, limit, positive in (
        ("p_se", config.p_se_max, False), ("p_cm", config.p_cm_max, False),
        ("f_u", config.f_u_max, True), ("p_bs", config.p_bs_max, True),
        ("f_bs", config.f_bs_max, True),
    ):
        v = np.asarray(getattr(dec, name), dtype=float) / limit
        low = -v if not positive else np.where(v > 0, -v, np.inf)
        worst = max(worst, _collect(out, f"{name}_box", np.maximum(low, v - 1.0), tol))

    step = config.v_max * config.slot_duration
    qx, qy = dec.traj_x, dec.traj_y
    if T > 1:
        disp = np.hypot(np.diff(qx, axis=2), np.diff(qy, axis=2))
        worst = max(worst, _collect(out, "speed", disp / step - 1.0, tol))
    start_gap = np.hypot(qx[:, :, 0] - config.start_pos[None, :, 0], qy[:, :, 0] - config.start_pos[None, :, 1])
    end_gap = np.hypot(qx[:, :, -1] - config.end_pos[0], qy[:, :, -1] - config.end_pos[1])
    worst = max(worst, _collect(out, "start_point", start_gap / step, tol))
    worst = max(worst, _collect(out, "end_point", end_gap / step, tol))

    try:
        ev = channel.evaluate(config, dec)
    except ModelError as exc:
        out.append(Violation(f"model:{exc}", (), np.inf))
        return ViolationReport(out, np.inf)
    rate_gap = np.where(x > 0.5, 1.0 - ev.radar_rates / config.rate_threshold, -np.inf)
    worst = max(worst, _collect(out, "radar_threshold", rate_gap, tol))
    energy = ev.energy.total_per_uav
    if config.e_max > 0:
        e_excess = energy / config.e_max - 1.0
    else:
        e_excess = np.where(energy > 0, np.inf, 0.0)
    worst = max(worst, _collect(out, "energy", e_excess, tol))
    return ViolationReport(out, max(worst, 0.0))


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------
@dataclass
class BCDResult:
    decision: object
    trace: list
    violations: list
    mode: BaselineMode
    iterations: int
    converged: bool
    evaluation: object
    block_log: list = field(default_factory=list)

    @property
    def objective(self):
        return self.trace[-1]

    def trace_rows(self):
        """``(iteration, objective_s, violation)`` rows for CSV output."""
        return [(i, obj, viol) for i, (obj, viol) in enumerate(zip(self.trace, self.violations))]


class _Runner:
    def __init__(self, config, eps_feas, eps_opt, max_iter, audit_tol, method):
        self.config = config
        self.kw = dict(eps_feas=eps_feas, eps_opt=eps_opt, max_iter=max_iter, method=method)
        self.eps_opt = eps_opt
        self.audit_tol = audit_tol
        self.log = []

    def solve(self, prog):
        x, report = solve_convex(prog, **self.kw)
        return x, report

    def score(self, dec):
        """Exact objective if ``dec`` passes the audit, else ``None``."""
        report = check_feasibility(self.config, dec, self.audit_tol)
        if not report.ok:
            return None
        return channel.evaluate(self.config, dec).total_latency

    def accept(self, block, cur, cur_obj, cand):
        """Keep ``cand`` if feasible and not worse than the incumbent."""
        if cand is None:
            self.log.append((block, "failed", cur_obj))
            return cur, cur_obj
        obj = self.score(cand)
        if obj is None or obj > cur_obj * (1.0 + self.eps_opt):
            self.log.append((block, "rejected", cur_obj if obj is None else obj))
            return cur, cur_obj
        self.log.append((block, "accepted", obj))
        return cand, obj

    def _try(self, fn):
        try:
            return fn()
        except (Infeasible, MaxIterReached, InvalidState, ModelError):
            return None

    def block1(self, dec, obj, sca_pass=0):
        cfg = self.config

        def fixed(base):
            prog = sub.build_subproblem1(cfg, base, relax=False)
            x, rep = self.solve(prog)
            if rep.status != "Optimal":
                return None
            return sub.apply_subproblem1(cfg, base, prog, x)

        def relaxed():
            prog = sub.build_subproblem1(cfg, dec, relax=True)
            x, rep = self.solve(prog)
            if rep.status != "Optimal":
                return None
            out = sub.apply_subproblem1(cfg, dec, prog, x)
            out.schedule = sub.round_scheduling(out.schedule, coverage=cfg.sensing_coverage)
            if np.array_equal(out.schedule, dec.schedule):
                return None
            # power must be re-optimized for the rounded schedule
            return fixed(out)

        # rescheduling is attempted once per outer iteration
        cand = self._try(relaxed) if sca_pass == 0 else None
        if cand is not None:
            new, new_obj = self.accept("1-relaxed", dec, obj, cand)
            if new is cand:
                dec, obj = new, new_obj
        return self.accept("1-fixed", dec, obj, self._try(lambda: fixed(dec)))

    def block2(self, dec, obj, sca_pass=0):
        cfg = self.config

        def run():
            prog = sub.build_subproblem2(cfg, dec)
            x, rep = self.solve(prog)
            return sub.apply_subproblem2(cfg, dec, prog, x) if rep.status == "Optimal" else None

        return self.accept("2", dec, obj, self._try(run))

    def block3(self, dec, obj, sca_pass=0):
        cfg = self.config

        def run():
            prog = sub.build_subproblem3(cfg, dec)
            x, rep = self.solve(prog)
            return sub.apply_subproblem3(cfg, dec, prog, x) if rep.status == "Optimal" else None

        return self.accept("3", dec, obj, self._try(run))


def bcd_optimize_detailed(config, mode=BaselineMode.T_OPT, max_outer=20, rel_tol=1e-3, *,
                          initial=None, eps_feas=1e-8, eps_opt=1e-6, max_iter=200,
                          audit_tol=1e-6, method="conic", sca_passes=3, sca_tol=None):
    """Run block coordinate descent and return a :class:`BCDResult`.

    Parameters
    ----------
    config : ScenarioConfig
    mode : BaselineMode or str
        Which blocks are optimized.
    max_outer : int
        Maximum number of outer iterations.
    rel_tol : float
        Stop once the relative objective change of an outer iteration falls
        below this value.
    initial : DecisionVector, optional
        Feasible starting point; defaults to :func:`initial_feasible_point`.
    sca_passes : int
        Maximum number of re-linearize-and-solve passes per block within one
        outer iteration.
    sca_tol : float, optional
        A block stops early once a pass improves the objective by less than
        this relative amount; defaults to ``rel_tol / 10``.

    Raises
    ------
    Infeasible
        If the starting point cannot be built or fails the audit.
    """
    mode = BaselineMode.parse(mode)
    dec = initial_feasible_point(config) if initial is None else initial.copy()
    start = check_feasibility(config, dec, audit_tol)
    if not start.ok:
        v = start.violations[0]
        raise Infeasible(v.constraint, f"starting point violates {v.constraint} by {v.magnitude:.3g}")
    run = _Runner(config, eps_feas, eps_opt, max_iter, audit_tol, method)
    obj = channel.evaluate(config, dec).total_latency
    trace = [obj]
    viols = [start.max_violation]
    if config.num_rounds == 0:
        return BCDResult(dec, trace, viols, mode, 0, True, channel.evaluate(config, dec), run.log)
    steps = {1: run.block1, 2: run.block2, 3: run.block3}
    converged = False
    it = 0
    sca_tol = 0.1 * rel_tol if sca_tol is None else sca_tol
    for it in range(1, max_outer + 1):
        prev = obj
        for b in mode.blocks:
            for p in range(max(int(sca_passes), 1)):
                before = obj
                dec, obj = steps[b](dec, obj, p)
                if before - obj <= sca_tol * before:
                    break
        trace.append(obj)
        viols.append(check_feasibility(config, dec, audit_tol).max_violation)
        if abs(prev - obj) <= rel_tol * max(abs(prev), 1e-12):
            converged = True
            break
    return BCDResult(dec, trace, viols, mode, it, converged, channel.evaluate(config, dec), run.log)


def bcd_optimize(config, mode=BaselineMode.T_OPT, max_outer=20, rel_tol=1e-3, **kwargs):
    """Joint latency minimization; returns ``(decision, objective_trace)``.

    ``trace[0]`` is the objective of the starting point and ``trace[i]`` the
    objective after outer iteration ``i``. See :func:`bcd_optimize_detailed`
    for the keyword arguments.
    """
    res = bcd_optimize_detailed(config, mode, max_outer, rel_tol, **kwargs)
    return res.decision, res.trace


class JointLatencyOptimizer(BaseEstimator):
    """Estimator wrapper around :func:`bcd_optimize_detailed`.

    Parameters
    ----------
    mode : str
        One of ``T_OPT``, ``UAV_SS_PC``, ``UAV_T_RA``, ``BS_RA``.
    max_outer : int
    rel_tol : float
    eps_feas, eps_opt : float
        Convex solver tolerances.
    method : str
        Convex solver backend, ``"conic"`` or ``"barrier"``.

    Attributes
    ----------
    decision_ : DecisionVector
    trace_ : list of float
    latency_ : float
    n_iter_ : int
    converged_ : bool
    """

    def __init__(self, mode="T_OPT", max_outer=20, rel_tol=1e-3, eps_feas=1e-8, eps_opt=1e-6,
                 method="conic"):
        self.mode = mode
        self.max_outer = max_outer
        self.rel_tol = rel_tol
        self.eps_feas = eps_feas
        self.eps_opt = eps_opt
        self.method = method

    def fit(self, config, y=None, initial=None):
        res = bcd_optimize_detailed(
            config, self.mode, self.max_outer, self.rel_tol, initial=initial,
            eps_feas=self.eps_feas, eps_opt=self.eps_opt, method=self.method,
        )
        self.result_ = res
        self.decision_ = res.decision
        self.trace_ = res.trace
        self.latency_ = res.objective
        self.n_iter_ = res.iterations
        self.converged_ = res.converged
        return self

    def score(self, config, y=None):
        """Negative total latency of the fitted decision under ``config``."""
        return -channel.evaluate(config, self.decision_).total_latency
