"""One-parameter sweeps of the joint latency optimizer.

Points are solved in the order that loosens the constraints. Each point
is solved from the default start; if the previous point's solution, which
stays feasible when a limit grows (or a payload shrinks), is better than
that result, the point is re-solved from it. Block coordinate descent never
increases the objective from its start, so the swept latency is monotone
in the parameter instead of depending on which local optimum a single
start happens to reach.
"""

from __future__ import annotations

import numpy as np

from .. import channel
from ..exceptions import ConfigError
from ..scenario import initial_feasible_point, validate
from .bcd import BaselineMode, bcd_optimize_detailed, check_feasibility

__all__ = ["SWEEP_PARAMS", "parse_range", "apply_param", "sweep"]

# parameters whose growth loosens the problem
_LOOSENING = (
    "p_se_max", "p_cm_max", "p_bs_max", "f_u_max", "f_bs_max", "e_max", "bandwidth",
    "bandwidth_uav", "bandwidth_bs", "v_max", "flight_time",
)
# parameters whose growth tightens it
_TIGHTENING = (
    "model_payload", "embed_payload", "global_payload", "rate_threshold", "noise_power",
    "cycles_per_sample_bs", "switched_capacitance",
)
SWEEP_PARAMS = _LOOSENING + _TIGHTENING

_BLOCK_FIELDS = {1: ("schedule", "p_se"), 2: ("traj_x", "traj_y", "p_cm", "f_u"), 3: ("p_bs", "f_bs")}


def parse_range(text):
    """``"min:max:steps"`` -> ``numpy.linspace(min, max, steps)``."""
    try:
        lo, hi, n = text.split(":")
        lo, hi, n = float(lo), float(hi), int(n)
    except ValueError:
        raise ConfigError(f"range must look like min:max:steps, got {text!r}") from None
    if n < 1 or not (np.isfinite(lo) and np.isfinite(hi)):
        raise ConfigError(f"bad range {text!r}")
    return np.linspace(lo, hi, n)


def apply_param(config, name, value):
    """Config with ``name`` set to ``value``; ``bandwidth`` sets both links."""
    if name not in SWEEP_PARAMS:
        raise ConfigError(f"unknown sweep parameter {name!r}; choose from {', '.join(SWEEP_PARAMS)}")
    if name == "bandwidth":
        changes = {"bandwidth_uav": value, "bandwidth_bs": value}
    else:
        changes = {name: float(value)}
    out = config.replace(**changes)
    report = validate(out)
    if report:
        raise ConfigError(f"{name}={value}: " + "; ".join(report.violations))
    return out


def _warm_start(config, prev, mode):
    """Previous solution on the optimized blocks, fresh values elsewhere.

    Returns ``None`` when that point is infeasible under ``config``.
    """
    changes = {f: getattr(prev, f).copy() for b in mode.blocks for f in _BLOCK_FIELDS[b]}
    warm = initial_feasible_point(config).replace(**changes)
    return warm if check_feasibility(config, warm).ok else None


def sweep(config, name, values, modes=(BaselineMode.T_OPT,), continuation=True, **bcd_kwargs):
    """Final latency of each mode at each value of one parameter.

    Parameters
    ----------
    config : ScenarioConfig
    name : str
        One of :data:`SWEEP_PARAMS`.
    values : array_like
    modes : sequence of BaselineMode or str
    continuation : bool
        Also try the neighbouring solution as a start (see module notes).
    **bcd_kwargs
        Passed to :func:`bcd_optimize_detailed`.

    Returns
    -------
    values : ndarray
        As given.
    latency : ndarray, shape (len(values), len(modes))
    """
    values = np.asarray(values, dtype=float)
    modes = [BaselineMode.parse(m) for m in modes]
    configs = [apply_param(config, name, v) for v in values]
    order = np.argsort(values, kind="stable")
    if name in _TIGHTENING:
        order = order[::-1]
    out = np.full((len(values), len(modes)), np.nan)
    for j, mode in enumerate(modes):
        prev = None
        for i in order:
            res = bcd_optimize_detailed(configs[i], mode, **bcd_kwargs)
            warm = _warm_start(configs[i], prev, mode) if continuation and prev is not None else None
            # the cold result already beats the carried-over point, so the
            # sweep stays monotone without a second run
            if warm is not None and channel.evaluate(configs[i], warm).total_latency < res.objective:
                alt = bcd_optimize_detailed(configs[i], mode, initial=warm, **bcd_kwargs)
                if alt.objective < res.objective:
                    res = alt
            out[i, j] = res.objective
            prev = res.decision
    return values, out
