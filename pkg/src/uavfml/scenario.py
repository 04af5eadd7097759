"""Scenario configuration, decision vectors and the feasible starting point.

All quantities are stored in SI units (W, Hz, s, m, bits). dBm only appears
at the JSON boundary through ``*_dbm`` keys.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import channel
from .exceptions import ConfigError, Infeasible, ModelError

__all__ = [
    "ScenarioConfig",
    "DecisionVector",
    "ValidationReport",
    "dbm_to_watts",
    "validate",
    "default_scenario",
    "load_config",
    "config_to_dict",
    "straight_line_trajectory",
    "initial_feasible_point",
]

_ARRAY_FIELDS = {
    "start_pos": 2,
    "end_pos": 1,
    "target_positions": 2,
    "samples_per_uav": 1,
    "cycles_per_sample": 1,
}

_COUNT_FIELDS = (
    "num_uavs", "num_targets", "num_modalities", "local_iters",
    "server_iters", "time_slots", "batch_size", "embed_dim", "hidden_dim",
    "num_classes", "probe_set_size", "input_dim",
)

_POSITIVE_FIELDS = (
    "flight_time", "altitude", "v_max", "bandwidth_uav", "bandwidth_bs",
    "ref_channel_gain", "noise_power", "pulse_duration", "waveform_const",
    "pred_var", "target_reflectivity", "pathloss_const", "rate_threshold",
    "cycles_per_sample_bs", "switched_capacitance", "embed_payload",
    "model_payload", "global_payload", "p_se_max", "p_cm_max", "p_bs_max",
    "f_u_max", "f_bs_max", "learning_rate",
)


def dbm_to_watts(level):
    """Convert a power level in dBm to watts."""
    if np.ndim(level):
        return 10.0 ** ((np.asarray(level, dtype=float) - 30.0) / 10.0)
    return 10.0 ** ((float(level) - 30.0) / 10.0)


@dataclass(frozen=True)
class ScenarioConfig:
    """Every physical, radar, compute and learning parameter of one system.

    Instances are immutable; use :meth:`replace` to derive variants (sweeps).
    Per-UAV quantities are arrays of length ``num_uavs``; ``start_pos`` holds
    one horizontal start point per UAV.
    """

    # counts
    num_uavs: int = 20
    num_targets: int = 10
    num_modalities: int = 2
    num_rounds: int = 5
    local_iters: int = 15
    server_iters: int = 10
    time_slots: int = 6
    # geometry
    flight_time: float = 60.0
    altitude: float = 100.0
    v_max: float = 50.0
    start_pos: np.ndarray = field(default_factory=lambda: np.tile([1800.0, 0.0], (20, 1)))
    end_pos: np.ndarray = field(default_factory=lambda: np.zeros(2))
    target_positions: np.ndarray = field(default_factory=lambda: np.tile([1800.0, 0.0, 0.0], (10, 1)))
    # communication
    bandwidth_uav: float = 20e6
    bandwidth_bs: float = 20e6
    ref_channel_gain: float = 1e-4
    noise_power: float = 1e-11
    # radar
    duty_ratio: float = 0.3
    pulse_duration: float = 1e-4
    waveform_const: float = 1.0
    pred_var: float = 1.0
    target_reflectivity: float = 3e-10
    pathloss_const: float = 1e-4
    rate_threshold: float = 2000.0
    # compute and payloads
    samples_per_uav: np.ndarray = field(default_factory=lambda: np.full(20, 500.0))
    cycles_per_sample: np.ndarray = field(default_factory=lambda: np.full(20, 2e4))
    cycles_per_sample_bs: float = 1e5
    switched_capacitance: float = 1e-28
    embed_payload: float = 1e6
    model_payload: float = 4e6
    global_payload: float = 5e6
    # limits
    p_se_max: float = 0.1
    p_cm_max: float = 0.1
    p_bs_max: float = 1.0
    f_u_max: float = 2e9
    f_bs_max: float = 10e9
    e_max: float = 0.25
    sensing_coverage: bool = True
    # federated learning
    learning_rate: float = 0.01
    batch_size: int = 32
    input_dim: int = 8
    embed_dim: int = 8
    hidden_dim: int = 16
    num_classes: int = 6
    dirichlet_alpha: float = 0.3
    probe_set_size: int = 200
    seed: int = 0

    def __post_init__(self):
        for name, ndim in _ARRAY_FIELDS.items():
            arr = np.array(getattr(self, name), dtype=float, ndmin=ndim)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    # derived quantities -------------------------------------------------
    @property
    def gamma0(self):
        """Reference SNR beta0 / sigma^2 (1/W)."""
        return self.ref_channel_gain / self.noise_power

    @property
    def slot_duration(self):
        return self.flight_time / self.time_slots

    @property
    def hover_positions(self):
        """Sensing positions: each UAV's start point lifted to altitude H."""
        h = np.full((self.num_uavs, 1), self.altitude)
        return np.hstack([self.start_pos, h])

    @property
    def server_samples(self):
        """Fused-embedding sample count fed to server-side training."""
        return float(self.probe_set_size)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def __eq__(self, other):
        if not isinstance(other, ScenarioConfig):
            return NotImplemented
        return config_to_dict(self) == config_to_dict(other)

    __hash__ = None


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.violations

    def __bool__(self):
        return bool(self.violations)

    def __iter__(self):
        return iter(self.violations)

    def __len__(self):
        return len(self.violations)


def validate(config):
    """List every violated invariant of ``config``; an empty report is valid."""
    bad = []
    for name in _COUNT_FIELDS:
        v = getattr(config, name)
        if int(v) != v or v < 1:
            bad.append(f"count >= 1: {name}")
    # zero rounds is a valid empty run
    if int(config.num_rounds) != config.num_rounds or config.num_rounds < 0:
        bad.append("count >= 0: num_rounds")
    if config.num_modalities > config.num_uavs:
        bad.append("M ≤ U")
    for name in _POSITIVE_FIELDS:
        v = getattr(config, name)
        if not (np.isfinite(v) and v > 0):
            bad.append(f"positive: {name}")
    if not (np.isfinite(config.e_max) and config.e_max >= 0):
        bad.append("nonnegative: e_max")
    if not 0 < config.duty_ratio <= 1:
        bad.append("duty_ratio in (0, 1]")
    if not config.dirichlet_alpha > 0:
        bad.append("dirichlet_alpha > 0")
    U, C = config.num_uavs, config.num_targets
    shapes = {
        "start_pos": (U, 2), "end_pos": (2,), "target_positions": (C, 3),
        "samples_per_uav": (U,), "cycles_per_sample": (U,),
    }
    shape_ok = True
    for name, shape in shapes.items():
        if getattr(config, name).shape != shape:
            bad.append(f"shape: {name} expected {shape}")
            shape_ok = False
    if shape_ok:
        if np.any(config.samples_per_uav < 0) or np.any(config.cycles_per_sample <= 0):
            bad.append("positive: per-UAV compute load")
        # T waypoints, T-1 moves of at most v_max * delta_t each
        reach = config.v_max * config.slot_duration * max(config.time_slots - 1, 0)
        gap = np.linalg.norm(config.start_pos - config.end_pos, axis=1)
        if np.any(gap > reach * (1 + 1e-12)):
            bad.append("reachability")
    return ValidationReport(bad)


def default_scenario(seed=0, num_uavs=20, num_targets=10, **overrides):
    """Default system: UAVs clustered near (1800, 0) m flying to the BS.

    The seed places the UAV start points, the ground targets, and draws the
    per-UAV sample counts and CPU loads.
    """
    rng = np.random.default_rng(seed)
    centre = np.array([1800.0, 0.0])
    angle = rng.uniform(0, 2 * np.pi, num_uavs)
    radius = 200.0 * np.sqrt(rng.uniform(0, 1, num_uavs))
    start = centre + np.c_[radius * np.cos(angle), radius * np.sin(angle)]
    angle = rng.uniform(0, 2 * np.pi, num_targets)
    radius = 250.0 * np.sqrt(rng.uniform(0, 1, num_targets))
    targets = np.c_[centre + np.c_[radius * np.cos(angle), radius * np.sin(angle)], np.zeros(num_targets)]
    samples = np.round(rng.uniform(400, 600, num_uavs))
    cycles = rng.uniform(1.5e4, 2.5e4, num_uavs)
    base = dict(
        num_uavs=num_uavs, num_targets=num_targets, start_pos=start,
        target_positions=targets, samples_per_uav=samples,
        cycles_per_sample=cycles, seed=seed,
    )
    base.update(overrides)
    return ScenarioConfig(**base)


def config_to_dict(config):
    out = {}
    for f in dataclasses.fields(config):
        v = getattr(config, f.name)
        out[f.name] = v.tolist() if isinstance(v, np.ndarray) else v
    return out


def load_config(source):
    """Build a config from a flat JSON file (path) or an already-parsed dict.

    Keys ending in ``_dbm`` are converted to watts. Missing keys fall back to
    :func:`default_scenario` for the requested seed and sizes; unknown keys
    raise :class:`ConfigError`.
    """
    if isinstance(source, dict):
        raw = dict(source)
    else:
        try:
            raw = json.loads(Path(source).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {source}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a flat JSON object")
    names = {f.name for f in dataclasses.fields(ScenarioConfig)}
    values = {}
    for key, value in raw.items():
        if key.endswith("_dbm") and key[:-4] in names:
            values[key[:-4]] = dbm_to_watts(float(value))
        elif key in names:
            values[key] = value
        else:
            raise ConfigError(f"unknown config key: {key}")
    sizes = {k: int(values.pop(k)) for k in ("seed", "num_uavs", "num_targets") if k in values}
    try:
        config = default_scenario(**sizes, **values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    report = validate(config)
    if report:
        raise ConfigError("; ".join(report.violations))
    return config


@dataclass
class DecisionVector:
    """All control variables of the latency problem.

    Shapes: ``schedule`` (K, C, U); ``p_se``, ``f_u`` (K, U); ``p_cm``,
    ``traj_x``, ``traj_y`` (K, U, T); ``p_bs``, ``f_bs`` (K,).
    """

    schedule: np.ndarray
    p_se: np.ndarray
    p_cm: np.ndarray
    f_u: np.ndarray
    traj_x: np.ndarray
    traj_y: np.ndarray
    p_bs: np.ndarray
    f_bs: np.ndarray

    def copy(self):
        return DecisionVector(**{f.name: getattr(self, f.name).copy() for f in dataclasses.fields(self)})

    def replace(self, **changes):
        d = self.copy()
        for k, v in changes.items():
            setattr(d, k, np.array(v, dtype=float))
        return d

    def as_dict(self):
        return {f.name: getattr(self, f.name) for f in dataclasses.fields(self)}


def straight_line_trajectory(config):
    """Waypoints (U, T, 2) linearly interpolating each start point to q_F."""
    T = config.time_slots
    frac = np.linspace(0.0, 1.0, T) if T > 1 else np.zeros(1)
    start = config.start_pos[:, None, :]
    end = config.end_pos[None, None, :]
    return start + (end - start) * frac[None, :, None]


def _min_radar_power(config, schedule):
    """Smallest sensing power per (round, UAV) meeting the radar threshold."""
    kappa = channel.radar_snr_coefficient(config)  # (C, U)
    with np.errstate(over="ignore"):
        need = np.exp2(config.rate_threshold / channel.radar_rate_scale(config)) - 1.0
    with np.errstate(divide="ignore"):
        pmin = np.where(schedule > 0, need / kappa[None], 0.0)
    return pmin.max(axis=1)  # (K, U)


def initial_feasible_point(config):
    """Feasible starting point for the joint optimizer.

    Powers and CPU frequencies start at half their maxima and are halved per
    UAV until the energy budget holds; the sensing power never drops below
    the radar-threshold minimum. Each target is scheduled on its nearest
    UAV (lowest index on ties).
    """
    K, C, U, T = config.num_rounds, config.num_targets, config.num_uavs, config.time_slots
    traj = straight_line_trajectory(config)
    d = np.linalg.norm(config.hover_positions[None, :, :] - config.target_positions[:, None, :], axis=2)
    nearest = np.argmin(d, axis=1)  # (C,)
    schedule = np.zeros((K, C, U))
    schedule[:, np.arange(C), nearest] = 1.0

    pmin = _min_radar_power(config, schedule)
    if np.any(pmin > config.p_se_max):
        raise Infeasible("radar threshold", "radar threshold unreachable at maximum sensing power")

    dec = DecisionVector(
        schedule=schedule,
        p_se=np.full((K, U), 0.5 * config.p_se_max),
        p_cm=np.full((K, U, T), 0.5 * config.p_cm_max),
        f_u=np.full((K, U), 0.5 * config.f_u_max),
        traj_x=np.broadcast_to(traj[None, :, :, 0], (K, U, T)).copy(),
        traj_y=np.broadcast_to(traj[None, :, :, 1], (K, U, T)).copy(),
        p_bs=np.full(K, 0.5 * config.p_bs_max),
        f_bs=np.full(K, 0.5 * config.f_bs_max),
    )
    if not config.e_max > 0:
        raise Infeasible("energy", "a zero energy budget cannot cover local training")
    scale = np.full(U, 0.5)
    for _ in range(60):
        dec.p_se = np.maximum(scale[None, :] * config.p_se_max, pmin * (1 + 1e-9))
        dec.p_cm = np.broadcast_to((scale * config.p_cm_max)[None, :, None], (K, U, T)).copy()
        dec.f_u = np.broadcast_to((scale * config.f_u_max)[None, :], (K, U)).copy()
        try:
            energy = channel.evaluate(config, dec).energy.total_per_uav
        except ModelError:
            break
        over = energy > config.e_max
        if not over.any():
            return dec
        scale[over] *= 0.5
    raise Infeasible("energy", "energy budget cannot be met by any power/frequency scaling")
