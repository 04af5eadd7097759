"""Builders for the three convexified block subproblems.

Scaling used inside every program: powers and CPU frequencies are divided
by their maxima, horizontal positions are in km, squared distances in km^2,
the radar rate slack is divided by ``delta / (2 mu)``, the uplink rate slack
is a spectral efficiency (bits/s/Hz), times stay in seconds, and energy rows
are divided by ``e_max``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import channel
from ..exceptions import InvalidState
from .program import ConvexProgram
from .surrogates import log_surrogate_coefficients

__all__ = [
    "SurrogateState",
    "surrogate_state",
    "build_subproblem1",
    "build_subproblem2",
    "build_subproblem3",
    "apply_subproblem1",
    "apply_subproblem2",
    "apply_subproblem3",
    "round_scheduling",
]

KM = 1000.0
LN2 = np.log(2.0)
# smallest scaled value allowed for variables that appear in 1/x atoms
_POS_LB = 1e-9


@dataclass
class SurrogateState:
    """Linearization point of every surrogate (scaled units, see module doc).

    Shapes: ``p_se``, ``psi`` (K, U); ``tau``, ``iota`` (K, C, U);
    ``p_cm``, ``g``, ``z``, ``gamma``, ``alpha`` (K, U, T); ``p_bs``,
    ``theta`` (K,); ``xi`` (K, U).
    """

    p_se: np.ndarray
    psi: np.ndarray
    tau: np.ndarray
    iota: np.ndarray
    p_cm: np.ndarray
    g: np.ndarray
    z: np.ndarray
    gamma: np.ndarray
    alpha: np.ndarray
    p_bs: np.ndarray
    theta: np.ndarray
    xi: np.ndarray


def _uplink_scale(config):
    """SNR per unit of scaled ``gamma`` (power / p_cm_max over km^2)."""
    return config.gamma0 * config.p_cm_max / KM**2


def surrogate_state(config, dec, evaluation=None):
    """Linearization point taken at the exact quantities of ``dec``.

    UAVs that sense nothing are linearized at half the maximum sensing power
    and at the time needed to sense their cheapest target, so the relaxed
    scheduling step can hand them targets.
    """
    ev = channel.evaluate(config, dec) if evaluation is None else evaluation
    R_ref = channel.radar_rate_scale(config)
    G = channel.target_gain(config.hover_positions, config.target_positions,
                            config.pathloss_const, config.target_reflectivity)
    kw = channel.radar_params(config)
    idle = dec.schedule.sum(axis=1) <= 0
    p_se = np.where(idle, 0.5 * config.p_se_max, dec.p_se)
    p_se = np.maximum(p_se, _POS_LB * config.p_se_max)
    rate = channel.radar_rate(p_se[:, None, :], G[None], **kw)  # (K, C, U)
    D = config.samples_per_uav
    # every pair is linearized where it would sit if scheduled
    tau = np.broadcast_to(D[None, None, :] / rate, rate.shape).copy()
    psi = (np.clip(dec.schedule, 0.0, 1.0) * tau).sum(axis=1)
    psi = np.where(psi > 0, psi, tau.min(axis=1))

    alpha = (dec.traj_x**2 + dec.traj_y**2 + config.altitude**2) / KM**2
    pc = dec.p_cm / config.p_cm_max
    gamma = pc / alpha
    z = np.log2(1.0 + _uplink_scale(config) * gamma)
    w = (config.embed_payload + config.model_payload) / (config.time_slots * config.bandwidth_uav)
    g = w / z

    d_dl = channel.uav_bs_distance(dec.traj_x[:, :, -1], dec.traj_y[:, :, -1], config.altitude)
    xi = config.gamma0 * dec.p_bs[:, None] / d_dl**2
    t_dl = np.array([r.t_download for r in ev.rounds]) if ev.rounds else np.zeros((0, config.num_uavs))
    theta = t_dl.max(axis=1) if t_dl.size else np.zeros(0)
    return SurrogateState(
        p_se=p_se / config.p_se_max, psi=psi, tau=tau, iota=rate / R_ref,
        p_cm=pc, g=g, z=z, gamma=gamma, alpha=alpha,
        p_bs=dec.p_bs / config.p_bs_max, theta=theta, xi=xi,
    )


def _components(config, ev):
    """Per (k, u) exact latency and energy arrays from an evaluation."""
    rounds = ev.rounds
    comp = {
        name: np.array([getattr(r, name) for r in rounds])
        for name in ("t_sense", "t_train", "t_embed_up", "t_model_up", "t_download")
    }
    comp["t_bs_train"] = np.array([r.t_bs_train for r in rounds])
    er = ev.energy_rounds
    for name in ("e_sense", "e_train", "e_embed_up", "e_model_up"):
        comp[name] = np.array([getattr(e, name) for e in er])
    return comp


def _epigraph_start(per_uav):
    top = per_uav.max(axis=1)
    return top + 1e-3 * np.maximum(top, 1e-3)


# ---------------------------------------------------------------------------
# block 1: sensing schedule and sensing power
# ---------------------------------------------------------------------------
def build_subproblem1(config, dec, state=None, relax=True, evaluation=None, energy_penalty=None):
    """Scheduling and sensing-power program.

    With ``relax=True`` the schedule is a continuous variable in [0, 1];
    otherwise it is fixed to ``dec.schedule`` and only the scheduled
    (target, UAV) pairs carry radar slack variables.

    The relaxed program only proposes a schedule. Its energy rows are
    elastic: a nonnegative slack per UAV, charged ``energy_penalty`` seconds
    per unit of ``e_max``, keeps it feasible when unscheduled pairs are
    linearized away from the incumbent. The fixed program is exact.

    Variables: ``x`` (relaxed only), ``p_se``, ``tau`` and ``iota`` per
    pair, ``psi`` per (round, UAV), epigraph ``t`` per round.
    """
    ev = channel.evaluate(config, dec) if evaluation is None else evaluation
    st = surrogate_state(config, dec, ev) if state is None else state
    comp = _components(config, ev)
    K, C, U = config.num_rounds, config.num_targets, config.num_uavs
    R_ref = channel.radar_rate_scale(config)
    D = config.samples_per_uav
    kappa = channel.radar_snr_coefficient(config) * config.p_se_max  # SNR per scaled power
    if np.any(st.p_se <= 0) or np.any(st.psi <= 0) or np.any(st.iota <= 0):
        raise InvalidState("sensing linearization point must be strictly positive")

    if relax:
        pairs = np.ones((K, C, U), dtype=bool)
    else:
        pairs = dec.schedule > 0.5
    kk, cc, uu = np.nonzero(pairs)
    npair = kk.size

    prog = ConvexProgram()
    if relax:
        x_start = np.clip(dec.schedule[pairs], 0.0, 1.0)
        xv = prog.add_variables("x", npair, lb=0.0, ub=1.0, start=x_start)
    p = prog.add_variables("p_se", (K, U), lb=_POS_LB, ub=1.0, start=st.p_se)
    tau_start = np.where(dec.schedule[kk, cc, uu] > 0, st.tau[kk, cc, uu], 1e-3 * st.tau[kk, cc, uu])
    tau = prog.add_variables("tau", npair, lb=0.0, start=tau_start)
    iota = prog.add_variables("iota", npair, lb=0.0, start=st.iota[kk, cc, uu])
    psi = prog.add_variables("psi", (K, U), lb=0.0, start=np.maximum(st.psi, 0.0))
    other = (comp["t_train"] + comp["t_embed_up"] + comp["t_model_up"]
             + comp["t_bs_train"][:, None] + comp["t_download"])
    t = prog.add_variables("t", K, start=_epigraph_start(st.psi + other))
    prog.minimize(t, 1.0)

    x_coef = D[uu] / R_ref
    # tau * iota >= x D / R_ref, convexified around (tau_i, iota_i)
    ti, ii = st.tau[kk, cc, uu], st.iota[kk, cc, uu]
    s_i = ti + ii
    r = prog.add_rows(npair, "product")
    prog.squared_sum(r, np.stack([tau, iota], axis=-1), [1.0, -1.0], weight=0.25)
    prog.affine(r, tau, -0.5 * s_i)
    prog.affine(r, iota, -0.5 * s_i)
    prog.constant(r, 0.25 * s_i**2)
    if relax:
        prog.affine(r, xv, x_coef)
    else:
        prog.constant(r, x_coef * dec.schedule[kk, cc, uu])

    lam_i = kappa[cc, uu] * st.p_se[kk, uu]
    const, recip = log_surrogate_coefficients(lam_i)
    # radar rate slack below the concave minorant of the radar rate
    r = prog.add_rows(npair, "radar_rate")
    prog.affine(r, iota, LN2)
    prog.reciprocal(r, p[kk, uu], recip / kappa[cc, uu])
    prog.constant(r, -const)
    # radar threshold for scheduled pairs
    nu_s = config.rate_threshold / R_ref * LN2
    r = prog.add_rows(npair, "radar_threshold")
    if relax:
        prog.affine(r, xv, nu_s)
    else:
        prog.constant(r, nu_s * dec.schedule[kk, cc, uu])
    prog.reciprocal(r, p[kk, uu], recip / kappa[cc, uu])
    prog.constant(r, -const)

    # psi collects the per-pair sensing times
    r = prog.add_rows((K, U), "sense_sum")
    prog.affine(r, psi, -1.0)
    prog.affine(r[kk, uu], tau, 1.0)

    # energy: p_se * psi majorized around (p_i, psi_i)
    e_scale = config.p_se_max / config.e_max
    fixed_e = (comp["e_train"] + comp["e_embed_up"] + comp["e_model_up"]).sum(axis=0)
    r = prog.add_rows(U, "energy")
    pi, qi = st.p_se, st.psi
    prog.quadratic(r[None, :], p, e_scale * 0.5 * qi / pi)
    prog.quadratic(r[None, :], psi, e_scale * 0.5 * pi / qi)
    prog.constant(r, fixed_e / config.e_max - 1.0)
    if relax:
        if energy_penalty is None:
            energy_penalty = 10.0 * max(ev.total_latency, 1e-3)
        slack = prog.add_variables("energy_slack", U, lb=0.0, start=1.0)
        prog.affine(r, slack, -1.0)
        prog.minimize(slack, energy_penalty)

    # epigraph of the per-round max
    r = prog.add_rows((K, U), "round_latency")
    prog.affine(r, psi, 1.0)
    prog.affine(r, t[:, None], -1.0)
    prog.constant(r, other)

    if relax:
        grid = -np.ones((K, C, U), dtype=int)
        grid[kk, cc, uu] = xv
        if config.sensing_coverage:
            prog.equality(grid, 1.0, 1.0)
        else:
            r = prog.add_rows((K, C), "one_uav_per_target")
            prog.affine(r[:, :, None], grid, 1.0)
            prog.constant(r, -1.0)
    prog.pairs = (kk, cc, uu)
    return prog


def apply_subproblem1(config, dec, prog, sol):
    """New decision from a block-1 solution; the schedule stays relaxed if it was."""
    vals = {name: sol[idx] for name, idx in prog.blocks.items()}
    out = dec.copy()
    out.p_se = vals["p_se"] * config.p_se_max
    if "x" in vals:
        kk, cc, uu = prog.pairs
        sched = np.zeros_like(dec.schedule)
        sched[kk, cc, uu] = np.clip(vals["x"], 0.0, 1.0)
        out.schedule = sched
    return out


def round_scheduling(x_relaxed, coverage=False):
    """Round a relaxed schedule of shape (K, C, U) to binary.

    Entries ``>= 0.5`` become 1. If a target still has several UAVs, only
    the largest relaxed value survives (lowest index on ties). With
    ``coverage`` set, a target left without any UAV gets its largest entry.
    """
    x = np.asarray(x_relaxed, dtype=float)
    out = np.zeros_like(x)
    best = np.argmax(x, axis=-1)  # first maximum: lowest index on ties
    keep = np.take_along_axis(x, best[..., None], axis=-1)[..., 0] >= 0.5
    if coverage:
        keep = np.ones_like(keep)
    np.put_along_axis(out, best[..., None], keep[..., None].astype(float), axis=-1)
    return out


# ---------------------------------------------------------------------------
# block 2: trajectory, uplink power and UAV CPU frequency
# ---------------------------------------------------------------------------
def build_subproblem2(config, dec, state=None, evaluation=None):
    """Trajectory and UAV resource program.

    Waypoints 0 and T-1 are pinned to the start and end points; interior
    waypoints are variables. Variables: ``wx``, ``wy`` (km), ``p_cm``,
    ``f_u``, per-slot slacks ``g`` (s), ``z`` (bits/s/Hz), ``gamma``,
    ``alpha`` (km^2), epigraph ``t``.
    """
    ev = channel.evaluate(config, dec) if evaluation is None else evaluation
    st = surrogate_state(config, dec, ev) if state is None else state
    comp = _components(config, ev)
    K, U, T = config.num_rounds, config.num_uavs, config.time_slots
    for name in ("g", "z", "gamma", "alpha", "p_cm"):
        if np.any(getattr(st, name) <= 0):
            raise InvalidState(f"uplink linearization point {name} must be strictly positive")
    Hk2 = (config.altitude / KM) ** 2
    kap = _uplink_scale(config)
    w = (config.embed_payload + config.model_payload) / (T * config.bandwidth_uav)
    nint = max(T - 2, 0)

    prog = ConvexProgram()
    X = dec.traj_x / KM
    Y = dec.traj_y / KM
    if nint:
        wx = prog.add_variables("wx", (K, U, nint), start=X[:, :, 1:-1])
        wy = prog.add_variables("wy", (K, U, nint), start=Y[:, :, 1:-1])
    pc = prog.add_variables("p_cm", (K, U, T), lb=0.0, ub=1.0, start=st.p_cm)
    f = prog.add_variables("f_u", (K, U), lb=_POS_LB, ub=1.0, start=dec.f_u / config.f_u_max)
    g = prog.add_variables("g", (K, U, T), lb=0.0, start=st.g)
    z = prog.add_variables("z", (K, U, T), lb=0.0, start=st.z)
    gam = prog.add_variables("gamma", (K, U, T), lb=_POS_LB, start=st.gamma)
    alpha_lb = np.full((K, U, T), Hk2)
    alpha_lb[:, :, 0] = X[:, :, 0] ** 2 + Y[:, :, 0] ** 2 + Hk2
    alpha_lb[:, :, -1] = X[:, :, -1] ** 2 + Y[:, :, -1] ** 2 + Hk2
    alp = prog.add_variables("alpha", (K, U, T), lb=alpha_lb, start=st.alpha)

    train_coef = config.local_iters * config.cycles_per_sample * config.samples_per_uav / config.f_u_max
    other = comp["t_sense"] + comp["t_bs_train"][:, None] + comp["t_download"]
    start_lat = other + comp["t_train"] + st.g.sum(axis=2)
    t = prog.add_variables("t", K, start=_epigraph_start(start_lat))
    prog.minimize(t, 1.0)

    # g * z >= w (payload per slot over bandwidth)
    s_i = st.g + st.z
    r = prog.add_rows((K, U, T), "product")
    prog.squared_sum(r, np.stack([g, z], axis=-1), [1.0, -1.0], weight=0.25)
    prog.affine(r, g, -0.5 * s_i)
    prog.affine(r, z, -0.5 * s_i)
    prog.constant(r, 0.25 * s_i**2 + w)

    # spectral efficiency below the concave minorant of log2(1 + snr)
    const, recip = log_surrogate_coefficients(kap * st.gamma)
    r = prog.add_rows((K, U, T), "uplink_rate")
    prog.affine(r, z, LN2)
    prog.reciprocal(r, gam, recip / kap)
    prog.constant(r, -const)

    # alpha * gamma <= p_cm
    r = prog.add_rows((K, U, T), "snr_product")
    prog.quadratic(r, alp, 0.5 * st.gamma / st.alpha)
    prog.quadratic(r, gam, 0.5 * st.alpha / st.gamma)
    prog.affine(r, pc, -1.0)

    if nint:
        r = prog.add_rows((K, U, nint), "distance")
        prog.quadratic(r, wx, 1.0)
        prog.quadratic(r, wy, 1.0)
        prog.affine(r, alp[:, :, 1:-1], -1.0)
        prog.constant(r, Hk2)

        step2 = (config.v_max * config.slot_duration / KM) ** 2
        r = prog.add_rows((K, U), "speed_first")
        prog.squared_sum(r, wx[:, :, :1], [1.0], offset=-X[:, :, 0])
        prog.squared_sum(r, wy[:, :, :1], [1.0], offset=-Y[:, :, 0])
        prog.constant(r, -step2)
        r = prog.add_rows((K, U), "speed_last")
        prog.squared_sum(r, wx[:, :, -1:], [-1.0], offset=X[:, :, -1])
        prog.squared_sum(r, wy[:, :, -1:], [-1.0], offset=Y[:, :, -1])
        prog.constant(r, -step2)
        if nint > 1:
            r = prog.add_rows((K, U, nint - 1), "speed")
            prog.squared_sum(r, np.stack([wx[:, :, 1:], wx[:, :, :-1]], axis=-1), [1.0, -1.0])
            prog.squared_sum(r, np.stack([wy[:, :, 1:], wy[:, :, :-1]], axis=-1), [1.0, -1.0])
            prog.constant(r, -step2)

    # energy, divided by e_max
    r = prog.add_rows(U, "energy")
    tr = (config.local_iters * config.switched_capacitance * config.cycles_per_sample
          * config.samples_per_uav * config.f_u_max**2 / config.e_max)
    prog.quadratic(r[None, :], f, np.broadcast_to(tr, (K, U)))
    e_cm = config.p_cm_max / config.e_max
    rr = np.broadcast_to(r[None, :, None], (K, U, T))
    prog.quadratic(rr, g, e_cm * 0.5 * st.p_cm / st.g)
    prog.quadratic(rr, pc, e_cm * 0.5 * st.g / st.p_cm)
    prog.constant(r, comp["e_sense"].sum(axis=0) / config.e_max - 1.0)

    r = prog.add_rows((K, U), "round_latency")
    prog.reciprocal(r, f, np.broadcast_to(train_coef, (K, U)))
    prog.affine(np.broadcast_to(r[:, :, None], (K, U, T)), g, 1.0)
    prog.affine(r, t[:, None], -1.0)
    prog.constant(r, other)
    return prog


def apply_subproblem2(config, dec, prog, sol):
    vals = {name: sol[idx] for name, idx in prog.blocks.items()}
    out = dec.copy()
    out.p_cm = np.clip(vals["p_cm"], 0.0, 1.0) * config.p_cm_max
    out.f_u = np.clip(vals["f_u"], 0.0, 1.0) * config.f_u_max
    if "wx" in vals:
        out.traj_x[:, :, 1:-1] = vals["wx"] * KM
        out.traj_y[:, :, 1:-1] = vals["wy"] * KM
    return out


# ---------------------------------------------------------------------------
# block 3: BS transmit power and CPU frequency
# ---------------------------------------------------------------------------
def build_subproblem3(config, dec, state=None, evaluation=None):
    """BS resource program. Variables: ``p_bs``, ``f_bs``, ``theta``, ``t``."""
    ev = channel.evaluate(config, dec) if evaluation is None else evaluation
    st = surrogate_state(config, dec, ev) if state is None else state
    comp = _components(config, ev)
    K, U = config.num_rounds, config.num_uavs
    if np.any(st.xi <= 0) or np.any(st.theta <= 0):
        raise InvalidState("downlink linearization point must be strictly positive")
    d2 = (dec.traj_x[:, :, -1] ** 2 + dec.traj_y[:, :, -1] ** 2 + config.altitude**2)
    Lam = config.gamma0 * config.p_bs_max / d2  # SNR per unit scaled power

    prog = ConvexProgram()
    p = prog.add_variables("p_bs", K, lb=_POS_LB, ub=1.0, start=st.p_bs)
    f = prog.add_variables("f_bs", K, lb=_POS_LB, ub=1.0, start=dec.f_bs / config.f_bs_max)
    th = prog.add_variables("theta", K, lb=_POS_LB, start=st.theta)
    A = comp["t_sense"] + comp["t_train"] + comp["t_embed_up"] + comp["t_model_up"]
    t = prog.add_variables("t", K, start=_epigraph_start(A + comp["t_bs_train"][:, None] + st.theta[:, None]))
    prog.minimize(t, 1.0)

    const, recip = log_surrogate_coefficients(st.xi)
    r = prog.add_rows((K, U), "downlink_rate")
    prog.reciprocal(r, np.broadcast_to(th[:, None], (K, U)),
                    config.global_payload * LN2 / config.bandwidth_bs)
    prog.reciprocal(r, np.broadcast_to(p[:, None], (K, U)), recip / Lam)
    prog.constant(r, -const)

    bs_coef = (config.server_iters * config.cycles_per_sample_bs * config.server_samples
               / config.f_bs_max)
    r = prog.add_rows((K, U), "round_latency")
    prog.reciprocal(r, np.broadcast_to(f[:, None], (K, U)), bs_coef)
    prog.affine(r, th[:, None], 1.0)
    prog.affine(r, t[:, None], -1.0)
    prog.constant(r, A)
    return prog


def apply_subproblem3(config, dec, prog, sol):
    vals = {name: sol[idx] for name, idx in prog.blocks.items()}
    out = dec.copy()
    out.p_bs = np.clip(vals["p_bs"], 0.0, 1.0) * config.p_bs_max
    out.f_bs = np.clip(vals["f_bs"], 0.0, 1.0) * config.f_bs_max
    return out
