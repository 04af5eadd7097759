"""Channel gains, rates, and the per-round latency and energy model.

Every function here is pure. The BS sits at the origin; UAVs fly at a
constant altitude ``H``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ModelError

__all__ = [
    "LatencyBreakdown",
    "EnergyBreakdown",
    "Evaluation",
    "LATENCY_COLUMNS",
    "uav_bs_distance",
    "uplink_rate",
    "downlink_rate",
    "target_gain",
    "radar_rate",
    "radar_rate_scale",
    "radar_params",
    "radar_snr_coefficient",
    "sensing_time",
    "sensing_energy",
    "local_train_time",
    "local_train_energy",
    "upload_time",
    "upload_energy",
    "server_train_time",
    "download_time",
    "round_latency",
    "total_latency",
    "uav_total_energy",
    "evaluate",
]

LATENCY_COLUMNS = (
    "round", "uav", "t_sense", "t_train", "t_embed_up", "t_model_up",
    "t_bs_train", "t_download", "round_latency",
)


def uav_bs_distance(x, y, H):
    """Line-of-sight distance from a UAV at (x, y, H) to the BS at the origin."""
    return np.sqrt(np.square(x) + np.square(y) + H * H)


def uplink_rate(p_cm, d, bandwidth, gamma0):
    """Free-space uplink rate ``B log2(1 + gamma0 p / d^2)`` in bits/s."""
    return bandwidth * np.log2(1.0 + gamma0 * np.asarray(p_cm, dtype=float) / np.square(d))


def downlink_rate(p_bs, d, bandwidth, gamma0):
    """Downlink rate from the BS; same law as the uplink."""
    return uplink_rate(p_bs, d, bandwidth, gamma0)


def target_gain(hover, targets, pathloss_const, reflectivity):
    """Round-trip radar gain ``g * beta_hat * g`` with ``g = alpha_hat / d^2``.

    Parameters
    ----------
    hover : ndarray of shape (U, 3)
    targets : ndarray of shape (C, 3)

    Returns
    -------
    ndarray of shape (C, U)
    """
    d2 = np.sum((np.asarray(targets)[:, None, :] - np.asarray(hover)[None, :, :]) ** 2, axis=2)
    g = pathloss_const / d2
    return g * reflectivity * g


def radar_rate(p_se, gain, *, bandwidth, noise_power, duty_ratio, pulse_duration,
               waveform_const, pred_var):
    """Radar estimation information rate in bits/s."""
    snr = (2.0 * pred_var * waveform_const**2 * bandwidth**3 * pulse_duration
           * np.asarray(gain) * np.asarray(p_se, dtype=float) / noise_power)
    return duty_ratio / (2.0 * pulse_duration) * np.log2(1.0 + snr)


def radar_rate_scale(config):
    """Prefactor ``delta / (2 mu)`` of the radar rate (bits/s)."""
    return config.duty_ratio / (2.0 * config.pulse_duration)


def radar_snr_coefficient(config):
    """Coefficient ``kappa`` (C, U) such that the radar SNR term is ``kappa * p_se``."""
    G = target_gain(config.hover_positions, config.target_positions,
                    config.pathloss_const, config.target_reflectivity)
    return (2.0 * config.pred_var * config.waveform_const**2 * config.bandwidth_uav**3
            * config.pulse_duration * G / config.noise_power)


def radar_params(config):
    return dict(
        bandwidth=config.bandwidth_uav, noise_power=config.noise_power,
        duty_ratio=config.duty_ratio, pulse_duration=config.pulse_duration,
        waveform_const=config.waveform_const, pred_var=config.pred_var,
    )


def sensing_time(x, samples, rate):
    """Sensing time ``x D / R``; zero wherever ``x`` is zero."""
    x, rate = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(rate, dtype=float))
    if np.any((x > 0) & (rate <= 0)):
        raise ModelError("scheduled target with zero radar rate")
    safe = np.where(x > 0, rate, 1.0)
    return np.where(x > 0, x * samples / safe, 0.0)


def sensing_energy(p_se, t_sense):
    return np.asarray(p_se, dtype=float) * t_sense


def local_train_time(J, cycles, samples, f):
    return J * np.asarray(cycles) * samples / f


def local_train_energy(J, zeta, cycles, samples, f):
    return J * zeta * np.asarray(cycles) * samples * np.square(f)


def upload_time(payload, rates):
    """Upload ``payload`` bits split equally over the slots in the last axis.

    Returns
    -------
    per_slot : ndarray
        Time spent in each slot.
    total : ndarray
        Sum over slots.
    """
    rates = np.asarray(rates, dtype=float)
    T = rates.shape[-1]
    shard = payload / T
    if shard > 0 and np.any(rates <= 0):
        raise ModelError("zero uplink rate with nonzero payload")
    per_slot = np.zeros_like(rates) if shard == 0 else shard / rates
    return per_slot, per_slot.sum(axis=-1)


def upload_energy(times, p_cm):
    return np.sum(np.asarray(times) * p_cm, axis=-1)


def server_train_time(J_prime, cycles_bs, h, f_bs):
    return J_prime * cycles_bs * h / np.asarray(f_bs, dtype=float)


def download_time(payload, rate):
    rate = np.asarray(rate, dtype=float)
    if payload > 0 and np.any(rate <= 0):
        raise ModelError("zero downlink rate with nonzero payload")
    return np.zeros_like(rate) if payload == 0 else payload / rate


@dataclass
class LatencyBreakdown:
    """The six per-UAV latency components of one round (seconds)."""

    t_sense: np.ndarray
    t_train: np.ndarray
    t_embed_up: np.ndarray
    t_model_up: np.ndarray
    t_bs_train: float
    t_download: np.ndarray
    round_latency: float

    @property
    def per_uav(self):
        return (self.t_sense + self.t_train + self.t_embed_up + self.t_model_up
                + self.t_bs_train + self.t_download)

    def rows(self, round_index):
        """CSV rows in :data:`LATENCY_COLUMNS` order, one per UAV."""
        return [
            [round_index, u, self.t_sense[u], self.t_train[u], self.t_embed_up[u],
             self.t_model_up[u], self.t_bs_train, self.t_download[u], self.round_latency]
            for u in range(len(self.t_sense))
        ]


@dataclass
class EnergyBreakdown:
    """The four per-UAV energy components (joules)."""

    e_sense: np.ndarray
    e_train: np.ndarray
    e_embed_up: np.ndarray
    e_model_up: np.ndarray

    @property
    def total_per_uav(self):
        return self.e_sense + self.e_train + self.e_embed_up + self.e_model_up


def round_latency(t_sense, t_train, t_embed_up, t_model_up, t_bs_train, t_download):
    """Assemble a :class:`LatencyBreakdown`; the round lasts as long as the slowest UAV."""
    parts = [np.atleast_1d(np.asarray(a, dtype=float))
             for a in (t_sense, t_train, t_embed_up, t_model_up, t_download)]
    total = parts[0] + parts[1] + parts[2] + parts[3] + float(t_bs_train) + parts[4]
    return LatencyBreakdown(*parts[:4], float(t_bs_train), parts[4], float(np.max(total)))


def total_latency(rounds):
    return float(sum(r.round_latency for r in rounds))


def uav_total_energy(rounds):
    """Sum a sequence of per-round :class:`EnergyBreakdown` objects."""
    rounds = list(rounds)
    return EnergyBreakdown(*(sum(getattr(r, f) for r in rounds)
                             for f in ("e_sense", "e_train", "e_embed_up", "e_model_up")))


@dataclass
class Evaluation:
    """Exact latency and energy of a decision."""

    rounds: list
    energy_rounds: list
    energy: EnergyBreakdown
    total_latency: float
    radar_rates: np.ndarray  # (K, C, U)


def evaluate(config, dec):
    """Exact objective, latency and energy of ``dec`` under ``config``."""
    K = config.num_rounds
    H = config.altitude
    G = target_gain(config.hover_positions, config.target_positions,
                    config.pathloss_const, config.target_reflectivity)
    R_rad = radar_rate(dec.p_se[:, None, :], G[None], **radar_params(config))
    D = config.samples_per_uav
    t_se = sensing_time(dec.schedule, D[None, None, :], R_rad).sum(axis=1)
    e_se = sensing_energy(dec.p_se, t_se)

    J, Cu = config.local_iters, config.cycles_per_sample
    t_tr = local_train_time(J, Cu[None], D[None], dec.f_u)
    e_tr = local_train_energy(J, config.switched_capacitance, Cu[None], D[None], dec.f_u)

    d = uav_bs_distance(dec.traj_x, dec.traj_y, H)
    R_up = uplink_rate(dec.p_cm, d, config.bandwidth_uav, config.gamma0)
    emb_slot, t_emb = upload_time(config.embed_payload, R_up)
    mod_slot, t_mod = upload_time(config.model_payload, R_up)
    e_emb = upload_energy(emb_slot, dec.p_cm)
    e_mod = upload_energy(mod_slot, dec.p_cm)

    t_bs = server_train_time(config.server_iters, config.cycles_per_sample_bs,
                             config.server_samples, dec.f_bs)
    R_dl = downlink_rate(dec.p_bs[:, None], d[:, :, -1], config.bandwidth_bs, config.gamma0)
    t_dl = download_time(config.global_payload, R_dl)

    rounds, energies = [], []
    for k in range(K):
        rounds.append(round_latency(t_se[k], t_tr[k], t_emb[k], t_mod[k], t_bs[k], t_dl[k]))
        energies.append(EnergyBreakdown(e_se[k], e_tr[k], e_emb[k], e_mod[k]))
    if K:
        energy = uav_total_energy(energies)
    else:
        z = np.zeros(config.num_uavs)
        energy = EnergyBreakdown(z, z.copy(), z.copy(), z.copy())
    return Evaluation(rounds, energies, energy, total_latency(rounds), R_rad)
