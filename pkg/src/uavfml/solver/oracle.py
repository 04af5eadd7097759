"""Exhaustive grid oracle for single-UAV, single-target, single-round instances.

The grid covers the schedule bit, the sensing power, the uplink power of
every slot, the middle waypoint (T = 3) on the straight segment from start
to end, and the BS power and CPU frequency. The UAV CPU frequency is not
gridded: latency decreases in it, so the best choice is the largest one the
remaining energy allows. BS terms are separable from the rest and are
minimized over their own axes, which gives the same optimum as the full
product grid. Each level after the first zooms in around the incumbent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import channel
from ..exceptions import ConfigError, Infeasible
from ..scenario import DecisionVector, ScenarioConfig

__all__ = ["OracleResult", "brute_force_oracle", "tiny_scenario"]

_MAX_GRID = 10_000_000


@dataclass
class OracleResult:
    objective: float
    decision: DecisionVector
    evaluations: int


def tiny_scenario(seed=0, time_slots=3, **overrides):
    """Random one-UAV, one-target, one-round instance with a binding energy budget."""
    rng = np.random.default_rng(seed)
    dist = rng.uniform(600.0, 1200.0)
    ang = rng.uniform(0, 2 * np.pi)
    start = dist * np.array([np.cos(ang), np.sin(ang)])
    off = rng.uniform(20.0, 100.0) * np.array([np.cos(ang + 1.0), np.sin(ang + 1.0)])
    base = dict(
        num_uavs=1, num_targets=1, num_modalities=1, num_rounds=1, time_slots=time_slots,
        start_pos=start[None, :], end_pos=np.zeros(2),
        target_positions=np.r_[start + off, 0.0][None, :],
        samples_per_uav=np.array([float(np.round(rng.uniform(400, 600)))]),
        cycles_per_sample=np.array([rng.uniform(1.5e4, 2.5e4)]),
        e_max=float(rng.uniform(0.03, 0.06)), seed=seed,
    )
    base.update(overrides)
    return ScenarioConfig(**base)


def _axis(lo, hi, n):
    if hi <= lo:
        return np.array([hi])
    return np.linspace(lo, hi, n)


def _waypoints(config, s):
    """Middle waypoint at fraction ``s`` of the start-to-end segment (T = 3)."""
    q0, qF = config.start_pos[0], config.end_pos
    T = config.time_slots
    pts = np.empty((len(s), T, 2))
    pts[:, 0] = q0
    pts[:, -1] = qF
    if T == 3:
        pts[:, 1] = q0[None, :] + s[:, None] * (qF - q0)[None, :]
    return pts


def brute_force_oracle(config, grid_points=16, levels=4, force_schedule=None):
    """Global grid optimum of the exact objective for a tiny instance.

    Parameters
    ----------
    config : ScenarioConfig
        Must have one UAV, one target, one round and at most three slots.
    grid_points : int
        Points per axis at every zoom level.
    levels : int
        Zoom levels; each one re-grids +-2 spacings around the incumbent.
    force_schedule : {0, 1}, optional
        Fix the schedule bit instead of trying both values.

    Raises
    ------
    ConfigError
        If the instance is too large for exhaustive search.
    Infeasible
        If no grid point is feasible.
    """
    if (config.num_uavs, config.num_targets, config.num_rounds) != (1, 1, 1) or config.time_slots > 3:
        raise ConfigError("oracle needs U = C = K = 1 and T <= 3")
    T = config.time_slots
    n = int(grid_points)
    size = 2 * n ** (T + 1) * (n if T == 3 else 1)
    if size > _MAX_GRID:
        raise ConfigError(f"grid of {size} points exceeds {_MAX_GRID}")
    if force_schedule is None:
        choices = [0, 1]
    else:
        choices = [int(force_schedule)]
    if config.sensing_coverage:
        choices = [c for c in choices if c == 1]
    if not choices:
        raise Infeasible("coverage", "target must be sensed but the schedule is forced to 0")

    # BS side is separable; its axes include the upper bounds
    f_bs = np.linspace(config.f_bs_max / n, config.f_bs_max, n)
    p_bs = np.linspace(config.p_bs_max / n, config.p_bs_max, n)
    t_bs = channel.server_train_time(config.server_iters, config.cycles_per_sample_bs,
                                     config.server_samples, f_bs)
    d_end = channel.uav_bs_distance(config.end_pos[0], config.end_pos[1], config.altitude)
    t_dl = channel.download_time(config.global_payload,
                                 channel.downlink_rate(p_bs, d_end, config.bandwidth_bs, config.gamma0))
    bs_time = float(t_bs.min() + t_dl.min())
    f_bs_best, p_bs_best = float(f_bs[np.argmin(t_bs)]), float(p_bs[np.argmin(t_dl)])

    best = (np.inf, None)
    evals = 0
    for x in choices:
        lo_se, hi_se = config.p_se_max / n, config.p_se_max
        ranges = {"p_se": (lo_se, hi_se), "p_cm": [(config.p_cm_max / n, config.p_cm_max)] * T,
                  "s": (0.0, 1.0)}
        point = None
        for _ in range(levels):
            p_se = _axis(*ranges["p_se"], n)
            s = _axis(*ranges["s"], n) if T == 3 else np.zeros(1)
            pcs = [_axis(*r, n) for r in ranges["p_cm"]]
            lat, f = _grid(config, x, p_se, pcs, s)
            evals += lat.size
            k = np.unravel_index(np.argmin(lat), lat.shape)
            val = float(lat[k])
            if not np.isfinite(val):
                break
            point = dict(p_se=p_se[k[0]], s=s[k[1]], p_cm=[pcs[t][k[2 + t]] for t in range(T)],
                         f=float(f[k]), lat=val)

            def zoom(axis, v, lo, hi):
                step = (axis[1] - axis[0]) if len(axis) > 1 else 0.0
                return max(lo, v - 2 * step), min(hi, v + 2 * step)

            ranges = {
                "p_se": zoom(p_se, point["p_se"], 1e-12, config.p_se_max),
                "s": zoom(s, point["s"], 0.0, 1.0),
                "p_cm": [zoom(pcs[t], point["p_cm"][t], 1e-12, config.p_cm_max) for t in range(T)],
            }
        if point is not None and point["lat"] < best[0]:
            best = (point["lat"], (x, point))
    if best[1] is None:
        raise Infeasible("grid", "no feasible grid point")
    x, pt = best[1]
    pts = _waypoints(config, np.array([pt["s"]]))[0]
    dec = DecisionVector(
        schedule=np.full((1, 1, 1), float(x)),
        p_se=np.array([[pt["p_se"]]]),
        p_cm=np.array(pt["p_cm"], dtype=float)[None, None, :],
        f_u=np.array([[pt["f"]]]),
        traj_x=pts[None, None, :, 0].copy(),
        traj_y=pts[None, None, :, 1].copy(),
        p_bs=np.array([p_bs_best]),
        f_bs=np.array([f_bs_best]),
    )
    return OracleResult(best[0] + bs_time, dec, evals)


def _grid(config, x, p_se, pcs, s):
    """UAV-side latency on the product grid ``(p_se, s, p_cm[0], ..., p_cm[T-1])``.

    Returns the latency (``inf`` where infeasible) and the CPU frequency
    chosen at every grid point.
    """
    T = config.time_slots
    D = config.samples_per_uav[0]
    G = channel.target_gain(config.hover_positions, config.target_positions,
                            config.pathloss_const, config.target_reflectivity)[0, 0]
    rate_se = channel.radar_rate(p_se, G, **channel.radar_params(config))
    t_se = D / rate_se if x else np.zeros_like(p_se)
    ok_se = rate_se >= config.rate_threshold if x else np.ones(p_se.shape, dtype=bool)
    e_se = p_se * t_se

    pts = _waypoints(config, s)
    if T > 1:
        steps = np.linalg.norm(np.diff(pts, axis=1), axis=2)
        ok_s = np.all(steps <= config.v_max * config.slot_duration * (1 + 1e-12), axis=1)
    else:
        ok_s = np.ones(len(s), dtype=bool)
    d = channel.uav_bs_distance(pts[..., 0], pts[..., 1], config.altitude)  # (S, T)
    shard = (config.embed_payload + config.model_payload) / T

    shape = (len(p_se), len(s)) + tuple(len(a) for a in pcs)
    t_sum = np.zeros(shape[1:])
    e_sum = np.zeros(shape[1:])
    for t in range(T):
        rate = channel.uplink_rate(pcs[t][None, :], d[:, t:t + 1], config.bandwidth_uav, config.gamma0)
        idx = [slice(None)] + [None] * T
        idx[1 + t] = slice(None)
        t_up = shard / rate
        t_sum = t_sum + t_up[tuple(idx)]
        e_sum = e_sum + (pcs[t][None, :] * t_up)[tuple(idx)]

    pad = (slice(None),) + (None,) * (T + 1)
    e_rem = config.e_max - e_se[pad] - e_sum[None]
    J, Cu = config.local_iters, config.cycles_per_sample[0]
    coef = J * config.switched_capacitance * Cu * D
    f = np.minimum(config.f_u_max, np.sqrt(np.maximum(e_rem, 0.0) / coef))
    with np.errstate(divide="ignore"):
        t_tr = J * Cu * D / f
    lat = t_se[pad] + t_tr + t_sum[None]
    ok = (e_rem >= 0) & (f > 0) & ok_se[pad] & ok_s[(None, slice(None)) + (None,) * T]
    return np.where(ok, lat, np.inf), f
