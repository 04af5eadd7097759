"""Federated multimodal training with modality-wise aggregation and attention fusion.

One global round:

1. every UAV reads its local partition (sensing);
2. every UAV starts from its modality's model and runs ``J`` minibatch SGD
   steps on its encoder, scoring it through a frozen copy of the BS decoder;
3. every UAV uploads its encoder and its embeddings of the probe set;
4. the BS averages embeddings and encoders per modality, trains the decoder
   and the attention scorer for ``J'`` steps on the fused probe embeddings,
   and fuses the modality encoders with the attention weights;
5. the BS sends each modality's averaged encoder back to its UAVs.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from ..exceptions import EmptyModality, ShapeMismatch
from .data import ModalityDataset, modality_owners, synth_multimodal_dataset
from .model import (ModelParams, cross_entropy, decoder_forward, decoder_loss_grad, encoder_backward,
                    encoder_forward, init_decoder, init_encoder, softmax)

__all__ = [
    "AttentionState", "FrozenHead", "TrainingResult", "aggregate_embeddings", "concat_embeddings",
    "aggregate_models", "extract_high_level_features", "attention_scores", "fuse_global", "broadcast",
    "global_loss", "evaluate_accuracy", "local_sgd_round", "server_update", "run_federated_training",
    "parse_mode", "FederatedMultimodalClassifier",
]


@dataclass
class AttentionState:
    """Linear scorer per modality: raw score ``w_a[m] . mean(z_m) + b_a[m]``."""

    w_a: np.ndarray
    b_a: np.ndarray

    @classmethod
    def zeros(cls, num_modalities, embed_dim):
        return cls(np.zeros((num_modalities, embed_dim)), np.zeros(num_modalities))

    def copy(self):
        return AttentionState(self.w_a.copy(), self.b_a.copy())


def aggregate_embeddings(per_uav):
    """Arithmetic mean of same-shaped embedding batches."""
    if len(per_uav) == 0:
        raise ShapeMismatch("no embeddings to aggregate")
    arrs = [np.asarray(h, dtype=float) for h in per_uav]
    if any(a.shape != arrs[0].shape for a in arrs):
        raise ShapeMismatch("embedding batches differ in shape")
    return np.mean(arrs, axis=0)


def concat_embeddings(per_modality):
    """Column-wise concatenation in modality order."""
    arrs = [np.atleast_2d(np.asarray(h, dtype=float)) for h in per_modality]
    if any(a.shape[0] != arrs[0].shape[0] for a in arrs):
        raise ShapeMismatch("embedding batches differ in row count")
    return np.hstack(arrs)


def _flat(p):
    return p.flat() if isinstance(p, ModelParams) else np.asarray(p, dtype=float)


def aggregate_models(params, flags, sizes):
    """Data-size-weighted average over the UAVs with ``flags == 1``.

    Accepts :class:`ModelParams` or arrays and returns the same kind.

    Raises
    ------
    EmptyModality
        If no flagged UAV holds data.
    ShapeMismatch
        If the flat lengths differ.
    """
    weights = np.asarray(flags, dtype=float) * np.asarray(sizes, dtype=float)
    if len(params) != len(weights):
        raise ShapeMismatch("params, flags and sizes must have equal length")
    total = weights.sum()
    if not total > 0:
        raise EmptyModality("no participating UAV holds data")
    vecs = [_flat(p) for p in params]
    if any(v.shape != vecs[0].shape for v in vecs):
        raise ShapeMismatch("model shapes differ")
    avg = np.tensordot(weights / total, np.stack(vecs), axes=1)
    if isinstance(params[0], ModelParams):
        return params[0].from_flat(avg)
    return avg.reshape(np.shape(params[0]))


def extract_high_level_features(w_m, probe_X):
    """Encoder output of the aggregated model on the probe samples."""
    if len(probe_X) == 0:
        raise ShapeMismatch("probe set is empty")
    return encoder_forward(w_m, probe_X)


def _raw_scores(z_list, state):
    if len(z_list) != state.w_a.shape[0]:
        raise ShapeMismatch(f"{len(z_list)} feature sets for {state.w_a.shape[0]} scorer heads")
    means = np.array([np.asarray(z, dtype=float).mean(axis=0) for z in z_list])
    if means.shape[1] != state.w_a.shape[1]:
        raise ShapeMismatch("feature width differs from scorer width")
    return np.einsum("me,me->m", state.w_a, means) + state.b_a, means


def attention_scores(z_list, state):
    """Softmax of the per-modality raw scores."""
    raw, _ = _raw_scores(z_list, state)
    return softmax(raw[None, :])[0]


def fuse_global(models, alpha):
    """``sum_m alpha_m w_m / sum_m alpha_m`` over same-shaped models."""
    alpha = np.asarray(alpha, dtype=float)
    vecs = [_flat(w) for w in models]
    if len(vecs) != alpha.size or any(v.shape != vecs[0].shape for v in vecs):
        raise ShapeMismatch("fusion needs one score per model and equal model shapes")
    fused = np.tensordot(alpha / alpha.sum(), np.stack(vecs), axes=1)
    return models[0].from_flat(fused) if isinstance(models[0], ModelParams) else fused


def broadcast(w_m, owners):
    """Independent copies of ``w_m`` for every owner, keyed by UAV index."""
    return {u: (w_m.copy() if isinstance(w_m, ModelParams) else np.array(w_m, copy=True)) for u in owners}


def global_loss(losses, sizes):
    """Data-size-weighted mean of per-UAV losses."""
    sizes = np.asarray(sizes, dtype=float)
    return float(np.dot(sizes, losses) / sizes.sum())


def _fused_input(encoders, X_list, scale):
    return concat_embeddings([s * encoder_forward(w, X) for w, X, s in zip(encoders, X_list, scale)])


def evaluate_accuracy(decoder, encoders, X_list, y, alpha=None):
    """Top-1 accuracy of encoders -> attention-scaled concatenation -> decoder."""
    if len(y) == 0:
        return float("nan")
    M = len(encoders)
    scale = np.ones(M) if alpha is None else M * np.asarray(alpha, dtype=float)
    P = decoder_forward(decoder, _fused_input(encoders, X_list, scale))
    return float(np.mean(np.argmax(P, axis=1) == np.asarray(y)))


@dataclass
class FrozenHead:
    """BS decoder snapshot used as the local training signal.

    The UAV's embedding fills slot ``slot``; every other slot holds the
    fixed vector ``fill[m]``. Slot ``m`` is multiplied by ``scale[m]``.
    """

    decoder: ModelParams
    slot: int
    fill: list
    scale: np.ndarray

    def _input(self, H):
        cols = []
        for m, f in enumerate(self.fill):
            block = H if m == self.slot else np.broadcast_to(f, (H.shape[0], f.size))
            cols.append(self.scale[m] * block)
        return np.hstack(cols)

    def loss(self, enc, X, y):
        H = encoder_forward(enc, X)
        return cross_entropy(decoder_forward(self.decoder, self._input(H)), y)

    def loss_grad(self, enc, X, y):
        """Cross-entropy and its gradient with respect to the encoder."""
        H = encoder_forward(enc, X)
        loss, _, dIn = decoder_loss_grad(self.decoder, self._input(H), y)
        E = H.shape[1]
        dH = self.scale[self.slot] * dIn[:, self.slot * E:(self.slot + 1) * E]
        return loss, encoder_backward(enc, X, dH)


def _sgd_step(params, grad, eta):
    return ModelParams([W - eta * g for W, g in zip(params.weights, grad.weights)],
                       [b - eta * g for b, g in zip(params.biases, grad.biases)])


def local_sgd_round(params, partition, J, eta, B_mb, rng, head):
    """``J`` minibatch SGD steps on one UAV's encoder.

    Parameters
    ----------
    params : ModelParams
        Starting encoder (left unchanged).
    partition : (X, y)
    J : int
    eta : float
    B_mb : int
        Minibatch size, capped at the partition size.
    rng : numpy.random.Generator
    head : FrozenHead

    Returns
    -------
    params : ModelParams
    losses : ndarray
        Minibatch loss before each step.
    """
    X, y = partition
    n = len(y)
    B = min(int(B_mb), n)
    w = params.copy()
    losses = np.empty(int(J))
    for j in range(int(J)):
        idx = rng.choice(n, size=B, replace=False)
        loss, g = head.loss_grad(w, X[idx], y[idx])
        losses[j] = loss
        w = _sgd_step(w, g, eta)
    return w, losses


def server_update(decoder, state, H_list, Z_list, y, iters, eta):
    """Full-batch gradient steps on the decoder and the attention scorer.

    The decoder sees ``concat_m(M alpha_m H_m)`` with ``alpha`` the softmax
    of the scorer on ``Z_list``; both are updated in place of copies that
    are returned.
    """
    M = len(H_list)
    dec = decoder.copy()
    st = state.copy()
    for _ in range(int(iters)):
        raw, zbar = _raw_scores(Z_list, st)
        alpha = softmax(raw[None, :])[0]
        scale = M * alpha
        Hin = concat_embeddings([s * H for s, H in zip(scale, H_list)])
        _, g, dIn = decoder_loss_grad(dec, Hin, y)
        E = H_list[0].shape[1]
        dscale = np.array([np.sum(dIn[:, m * E:(m + 1) * E] * H_list[m]) for m in range(M)])
        dalpha = M * dscale
        draw = alpha * (dalpha - np.dot(alpha, dalpha))
        dec = _sgd_step(dec, g, eta)
        st = AttentionState(st.w_a - eta * draw[:, None] * zbar, st.b_a - eta * draw)
    return dec, st


@dataclass
class TrainingResult:
    """Per-round traces and final models of one training run."""

    loss: np.ndarray
    accuracy: np.ndarray
    alpha: np.ndarray
    encoders: list
    decoder: ModelParams
    attention: AttentionState
    global_model: ModelParams | None
    grad_sq: np.ndarray = field(default_factory=lambda: np.zeros(0))
    grad_snapshots: list = field(default_factory=list)
    initial_loss: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def num_modalities(self):
        return len(self.encoders)

    def rows(self):
        """``(round, global_loss, accuracy, alpha_1..alpha_M)`` per round."""
        return [(k + 1, float(self.loss[k]), float(self.accuracy[k]), *map(float, self.alpha[k]))
                for k in range(len(self.loss))]

    def header(self):
        return ["round", "global_loss", "accuracy"] + [f"alpha_{m + 1}" for m in range(self.num_modalities)]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.header())
            for r in self.rows():
                w.writerow([r[0]] + [repr(v) for v in r[1:]])


def _full_grad(head, enc, partition):
    X, y = partition
    loss, g = head.loss_grad(enc, X, y)
    return loss, g.flat()


def train(datasets, *, rounds, local_iters, server_iters, learning_rate, batch_size, hidden_dim,
          embed_dim, num_classes, seed=0, track_gradients=False):
    """Run the round loop on prepared datasets (one per modality).

    ``track_gradients`` records, at the start of every round, each UAV's
    full-partition gradient at its broadcast model; ``grad_sq`` then holds
    ``sum_m ||grad f_m(w_m)||^2`` per round and ``initial_loss`` the
    loss of each modality at its first broadcast model.
    """
    M = len(datasets)
    ss = np.random.SeedSequence([int(seed), 0x5EED])
    rng = np.random.default_rng(ss)
    enc = [init_encoder(ds.probe[0].shape[1], hidden_dim, embed_dim, rng) for ds in datasets]
    dec = init_decoder(M * embed_dim, num_classes, rng)
    att = AttentionState.zeros(M, embed_dim)
    y_probe = datasets[0].probe[1]
    H = [encoder_forward(w, ds.probe[0]) for w, ds in zip(enc, datasets)]
    alpha = attention_scores(H, att)
    K = int(rounds)
    losses, accs, alphas, grad_sq, snaps, init_loss = [], [], [], [], [], []
    fused = None
    for k in range(K):
        fill = [h.mean(axis=0) for h in H]
        scale = M * alpha
        local_models, local_losses, sizes, H_new = [], [], [], []
        g_round, gsq = [], 0.0
        for m, ds in enumerate(datasets):
            head = FrozenHead(dec.copy(), m, fill, scale)
            start = broadcast(enc[m], ds.owners)
            w_list, g_list, l_list = [], [], []
            for u, part in zip(ds.owners, ds.partitions):
                if track_gradients:
                    l0, g0 = _full_grad(head, start[u], part)
                    g_list.append(g0)
                    l_list.append(l0)
                r = np.random.default_rng([int(seed), k, u])
                w_u, _ = local_sgd_round(start[u], part, local_iters, learning_rate, batch_size, r, head)
                w_list.append(w_u)
                local_losses.append(head.loss(w_u, *part))
                sizes.append(len(part[1]))
            if track_gradients:
                G = np.stack(g_list)
                g_round.append(G)
                if k == 0:
                    init_loss.append(global_loss(l_list, ds.sizes))
                gsq += float(np.sum(np.tensordot(ds.sizes / ds.sizes.sum(), G, axes=1) ** 2))
            H_new.append(aggregate_embeddings([encoder_forward(w, ds.probe[0]) for w in w_list]))
            local_models.append(w_list)
        enc = [aggregate_models(w_list, np.ones(len(w_list)), ds.sizes)
               for w_list, ds in zip(local_models, datasets)]
        H = H_new
        Z = [extract_high_level_features(w, ds.probe[0]) for w, ds in zip(enc, datasets)]
        dec, att = server_update(dec, att, H, Z, y_probe, server_iters, learning_rate)
        alpha = attention_scores(Z, att)
        try:
            fused = fuse_global(enc, alpha)
        except ShapeMismatch:
            fused = None
        losses.append(global_loss(local_losses, sizes))
        accs.append(evaluate_accuracy(dec, enc, [ds.test[0] for ds in datasets], datasets[0].test[1], alpha))
        alphas.append(alpha)
        if track_gradients:
            grad_sq.append(gsq)
            snaps.append(g_round)
    return TrainingResult(np.array(losses), np.array(accs), np.array(alphas).reshape(K, M), enc, dec, att,
                          fused, np.array(grad_sq), snaps, np.array(init_loss))


def parse_mode(mode):
    """``"multimodal"`` -> None; ``"unimodal:m"`` or ``("unimodal", m)`` -> m."""
    if isinstance(mode, tuple):
        kind, m = mode
    elif isinstance(mode, str) and ":" in mode:
        kind, m = mode.split(":", 1)
    else:
        kind, m = mode, None
    if kind == "multimodal" and m is None:
        return None
    if kind == "unimodal" and m is not None:
        return int(m)
    raise ValueError(f"unknown training mode {mode!r}")


def run_federated_training(config, mode="multimodal", seed=0, iid=True, datasets=None, track_gradients=False):
    """Train on synthetic data (or ``datasets``) for ``config.num_rounds`` rounds.

    Parameters
    ----------
    config : ScenarioConfig
    mode : str or tuple
        ``"multimodal"`` uses every modality; ``"unimodal:m"`` runs the same
        loop with modality ``m`` only, sensed by all UAVs.
    seed : int
        Seeds both the data and the training.
    iid : bool
        Data split used when ``datasets`` is not given.
    datasets : list of ModalityDataset, optional

    Returns
    -------
    TrainingResult
    """
    m = parse_mode(mode)
    if datasets is None:
        datasets = synth_multimodal_dataset(config, seed, iid=iid, modalities=None if m is None else [m])
    elif m is not None:
        ds = datasets[m]
        datasets = [ModalityDataset(0, ds.owners, ds.partitions, ds.probe, ds.test, ds.columns)]
    return train(datasets, rounds=config.num_rounds, local_iters=config.local_iters,
                 server_iters=config.server_iters, learning_rate=config.learning_rate,
                 batch_size=config.batch_size, hidden_dim=config.hidden_dim, embed_dim=config.embed_dim,
                 num_classes=config.num_classes, seed=seed, track_gradients=track_gradients)


class FederatedMultimodalClassifier(ClassifierMixin, BaseEstimator):
    """Scikit-learn style wrapper around the federated round loop.

    ``X`` is a list with one feature matrix per modality, rows aligned.
    Training rows are split into a BS probe set and per-UAV partitions;
    UAV ``u`` senses modality ``u mod M``.

    Parameters
    ----------
    num_uavs : int
    rounds : int
    local_iters : int
    server_iters : int
    learning_rate : float
    batch_size : int
    hidden_dim, embed_dim : int
    probe_fraction : float
        Share of the training rows held by the BS.
    seed : int
    """

    def __init__(self, num_uavs=4, rounds=20, local_iters=15, server_iters=10, learning_rate=0.1,
                 batch_size=32, hidden_dim=16, embed_dim=8, probe_fraction=0.2, seed=0):
        self.num_uavs = num_uavs
        self.rounds = rounds
        self.local_iters = local_iters
        self.server_iters = server_iters
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.hidden_dim = hidden_dim
        self.embed_dim = embed_dim
        self.probe_fraction = probe_fraction
        self.seed = seed

    def _check_X(self, X):
        X = [np.asarray(x, dtype=float) for x in X]
        if any(x.ndim != 2 or len(x) != len(X[0]) for x in X):
            raise ShapeMismatch("X must be a list of 2-D arrays with equal row counts")
        return X

    def fit(self, X, y):
        X = self._check_X(X)
        self.classes_, yi = np.unique(np.asarray(y), return_inverse=True)
        M = len(X)
        rng = np.random.default_rng(self.seed)
        order = rng.permutation(len(yi))
        n_probe = max(1, int(round(self.probe_fraction * len(yi))))
        probe, rest = order[:n_probe], order[n_probe:]
        owners = modality_owners(self.num_uavs, M)
        datasets = []
        for m in range(M):
            parts = [(X[m][rest[u::self.num_uavs]], yi[rest[u::self.num_uavs]]) for u in owners[m]]
            datasets.append(ModalityDataset(m, owners[m], parts, (X[m][probe], yi[probe]),
                                            (X[m][probe], yi[probe])))
        self.result_ = train(datasets, rounds=self.rounds, local_iters=self.local_iters,
                             server_iters=self.server_iters, learning_rate=self.learning_rate,
                             batch_size=self.batch_size, hidden_dim=self.hidden_dim,
                             embed_dim=self.embed_dim, num_classes=len(self.classes_), seed=self.seed)
        self.alpha_ = self.result_.alpha[-1] if self.rounds else np.full(M, 1.0 / M)
        return self

    def predict_proba(self, X):
        X = self._check_X(X)
        r = self.result_
        scale = len(X) * self.alpha_
        return decoder_forward(r.decoder, _fused_input(r.encoders, X, scale))

    def predict(self, X):
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]
