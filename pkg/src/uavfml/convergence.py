"""Convergence bound of federated multimodal training and its diagnostics.

The bound on the average squared gradient norm after ``K`` rounds of ``J``
local steps is

    2 sum_m gap_m / (eta K J)
    + M L eta sigma^2 / (U B)
    + 2 M eta^2 sigma^2 L^2 (J + 1) (1 + 1/U) / B

with ``gap_m = f_m(w^0) - f_m^*``. The smoothness ``L`` and the noise
``sigma^2`` are estimated empirically by the helpers below; those values
are diagnostics, not certified constants.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace

import numpy as np

from .exceptions import ConfigError, DegenerateSnapshot

__all__ = [
    "BoundInputs", "theorem1_bound", "bound_terms", "per_modality_bound", "estimate_lambda",
    "StepsizeCheck", "stepsize_condition", "max_stepsize", "BoundReport", "bound_vs_empirical",
    "estimate_smoothness", "estimate_noise", "bound_inputs_from_config", "empirical_report",
    "REPORT_HEADER", "report_csv",
]


@dataclass(frozen=True)
class BoundInputs:
    """Constants of the bound.

    ``gaps`` holds one initial optimality gap per modality. ``mu`` (PL
    constant) is carried for reference only. ``lam`` is the gradient
    diversity used by :func:`stepsize_condition`.
    """

    L: float
    sigma: float
    B: float
    U: float
    J: float
    K: float
    eta: float
    M: int
    gaps: tuple
    C1: float = 1.0
    mu: float | None = None
    lam: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "gaps", tuple(float(g) for g in np.atleast_1d(self.gaps)))
        bad = [k for k in ("L", "U", "J", "K", "eta", "M", "C1") if not getattr(self, k) > 0]
        if not self.B >= 1:
            bad.append("B")
        if not self.sigma >= 0:
            bad.append("sigma")
        if not all(g >= 0 for g in self.gaps):
            bad.append("gaps")
        for k in ("mu", "lam"):
            v = getattr(self, k)
            if v is not None and not v > 0:
                bad.append(k)
        if bad:
            raise ConfigError("bound inputs must be positive: " + ", ".join(bad))
        if len(self.gaps) != int(self.M):
            raise ConfigError(f"{len(self.gaps)} gaps for {self.M} modalities")

    def replace(self, **changes):
        return replace(self, **changes)


def bound_terms(inputs):
    """The optimization term and the two noise terms of the bound."""
    p = inputs
    s2 = p.sigma**2
    opt = 2.0 * sum(p.gaps) / (p.eta * p.K * p.J)
    noise = p.M * p.L * p.eta * s2 / (p.U * p.B)
    drift = 2.0 * p.M * p.eta**2 * s2 * p.L**2 * (p.J + 1) * (1.0 + 1.0 / p.U) / p.B
    return opt, noise, drift


def theorem1_bound(inputs):
    """Upper bound on the average squared gradient norm over all modalities."""
    return float(sum(bound_terms(inputs)))


def per_modality_bound(inputs, m):
    """Bound of modality ``m`` alone: one gap and ``M = 1``."""
    return theorem1_bound(inputs.replace(M=1, gaps=(inputs.gaps[m],)))


def estimate_lambda(snapshots):
    """Gradient diversity ``max_s sum_u ||g_u||^2 / ||sum_u g_u||^2``.

    Parameters
    ----------
    snapshots : iterable of array_like, each of shape (U, P)
        Per-UAV gradients captured at one point of training.

    Raises
    ------
    DegenerateSnapshot
        If every snapshot has a zero summed gradient.
    """
    best = None
    for snap in snapshots:
        G = np.atleast_2d(np.asarray(snap, dtype=float))
        num = float(np.sum(G**2))
        den = float(np.sum(G.sum(axis=0) ** 2))
        if den <= 1e-24 * num or den == 0.0:
            continue
        r = num / den
        best = r if best is None else max(best, r)
    if best is None:
        raise DegenerateSnapshot("every snapshot has a zero summed gradient")
    return best


@dataclass
class StepsizeCheck:
    satisfied: bool
    lhs: float


def stepsize_condition(inputs, lam=None):
    """Evaluate the step-size condition of the analysis.

    ``lhs = -eta/2 + lam (U+1) L^2 eta^3 (2 C1 + J (J+1)) / (2U)
    + lam L eta^2 (C1/U + 1) / 2``; the condition holds when ``lhs <= 0``.
    """
    p = inputs
    lam = p.lam if lam is None else lam
    if lam is None or not lam > 0:
        raise ConfigError("stepsize_condition needs a positive lam")
    e = p.eta
    lhs = (-e / 2.0 + lam * (p.U + 1) * p.L**2 * e**3 * (2 * p.C1 + p.J * (p.J + 1)) / (2.0 * p.U)
           + lam * p.L * e**2 * (p.C1 / p.U + 1.0) / 2.0)
    return StepsizeCheck(bool(lhs <= 0), float(lhs))


def max_stepsize(inputs, lam=None):
    """Largest ``eta`` meeting :func:`stepsize_condition` (positive root of ``lhs/eta``)."""
    p = inputs
    lam = p.lam if lam is None else lam
    a = lam * (p.U + 1) * p.L**2 * (2 * p.C1 + p.J * (p.J + 1)) / (2.0 * p.U)
    b = lam * p.L * (p.C1 / p.U + 1.0) / 2.0
    # a eta^2 + b eta - 1/2 = 0
    return float(1.0 / (b + np.sqrt(b * b + 2.0 * a)))


@dataclass
class BoundReport:
    empirical: float
    bound: float
    violated: bool
    extra: dict = field(default_factory=dict)


def bound_vs_empirical(grad_sq_trace, bound):
    """Compare the mean measured squared gradient norm with the bound.

    A violation is informative only: it means the estimated constants are
    off, not that training failed.
    """
    trace = np.asarray(grad_sq_trace, dtype=float)
    emp = float(trace.mean()) if trace.size else 0.0
    return BoundReport(emp, float(bound), bool(emp > bound))


def estimate_smoothness(grad_fn, w, rng, pairs=20, radius=0.1):
    """``max ||grad(u) - grad(v)|| / ||u - v||`` over random pairs near ``w``."""
    w = np.asarray(w, dtype=float)
    best = 0.0
    for _ in range(int(pairs)):
        u = w + radius * rng.standard_normal(w.shape)
        v = w + radius * rng.standard_normal(w.shape)
        d = np.linalg.norm(u - v)
        if d > 0:
            best = max(best, float(np.linalg.norm(grad_fn(u) - grad_fn(v)) / d))
    return best


def estimate_noise(minibatch_grad, full_grad, batch_size, draws, rng):
    """Per-sample gradient variance ``sigma^2 = B E||g_B - g||^2``.

    ``minibatch_grad(rng)`` returns one minibatch gradient of size
    ``batch_size``; ``full_grad`` is the full-data gradient.
    """
    g = np.asarray(full_grad, dtype=float)
    dev = [float(np.sum((minibatch_grad(rng) - g) ** 2)) for _ in range(int(draws))]
    return float(batch_size * np.mean(dev))


def bound_inputs_from_config(config, **overrides):
    """Bound inputs taken from a scenario; unknown constants default to one.

    ``U`` is the number of UAVs per modality cluster.
    """
    M = int(config.num_modalities)
    base = dict(L=1.0, sigma=1.0, B=float(config.batch_size), U=float(config.num_uavs // M),
                J=float(config.local_iters), K=float(config.num_rounds), eta=float(config.learning_rate),
                M=M, gaps=(1.0,) * M, C1=1.0)
    base.update(overrides)
    if "M" in overrides and "gaps" not in overrides:
        base["gaps"] = (float(np.mean(base["gaps"])),) * int(base["M"])
    return BoundInputs(**base)


REPORT_HEADER = ["K", "J", "U", "M", "B", "eta", "bound", "empirical_mean_grad_sq", "lambda_hat"]


def report_csv(rows):
    """Bound report rows as CSV text with :data:`REPORT_HEADER`."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_HEADER)
    for r in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()


def empirical_report(config, seed=0, iid=True, pairs=10, draws=20, **overrides):
    """Train once, estimate ``L``, ``sigma``, ``lambda`` and the gaps, and compare.

    ``L`` and ``sigma`` are measured on the probe set through the final
    decoder; each gap is bounded by the modality's initial loss (the
    cross-entropy is nonnegative). Explicit ``overrides`` take precedence.

    Returns
    -------
    inputs : BoundInputs
    report : BoundReport
        ``extra`` holds ``lambda_hat``.
    """
    from .fml.data import synth_multimodal_dataset
    from .fml.federated import FrozenHead, run_federated_training
    from .fml.model import encoder_forward

    datasets = synth_multimodal_dataset(config, seed, iid=iid)
    res = run_federated_training(config, "multimodal", seed, datasets=datasets, track_gradients=True)
    rng = np.random.default_rng([int(seed), 0xB0])
    M = len(datasets)
    fill = [encoder_forward(w, ds.probe[0]).mean(axis=0) for w, ds in zip(res.encoders, datasets)]
    scale = M * (res.alpha[-1] if len(res.alpha) else np.full(M, 1.0 / M))
    L_hat, s2_hat, gaps = 0.0, 0.0, []
    for m, ds in enumerate(datasets):
        head = FrozenHead(res.decoder, m, fill, scale)
        enc = res.encoders[m]
        X, y = ds.probe
        L_hat = max(L_hat, estimate_smoothness(lambda v: head.loss_grad(enc.from_flat(v), X, y)[1].flat(),
                                               enc.flat(), rng, pairs))
        B = min(config.batch_size, len(y))
        g_full = head.loss_grad(enc, X, y)[1].flat()

        def mb(r, head=head, enc=enc, X=X, y=y, B=B):
            idx = r.choice(len(y), B, replace=False)
            return head.loss_grad(enc, X[idx], y[idx])[1].flat()

        s2_hat = max(s2_hat, estimate_noise(mb, g_full, B, draws, rng))
        gaps.append(float(res.initial_loss[m]) if len(res.initial_loss) else float(np.log(config.num_classes)))
    lam = None
    flat = [s for rnd in res.grad_snapshots for s in rnd]
    if flat:
        try:
            lam = estimate_lambda(flat)
        except DegenerateSnapshot:
            lam = None
    base = dict(L=max(L_hat, 1e-12), sigma=float(np.sqrt(s2_hat)), gaps=tuple(gaps), lam=lam)
    base.update(overrides)
    inputs = bound_inputs_from_config(config, **base)
    rep = bound_vs_empirical(res.grad_sq, theorem1_bound(inputs))
    rep.extra["lambda_hat"] = float("nan") if lam is None else lam
    return inputs, rep
