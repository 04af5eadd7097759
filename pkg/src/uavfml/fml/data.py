"""Multimodal datasets: a synthetic generator and a CSV reader.

Every UAV senses one modality (UAV ``u`` gets modality ``u mod M``) and
holds a private partition of ``D_u`` labelled samples. The BS holds a
probe set and a test set in which all modalities are observed for the same
underlying sample.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..exceptions import MalformedRow, UnknownColumn

__all__ = [
    "ModalityDataset", "synth_multimodal_dataset", "load_csv_dataset", "label_histograms",
    "modality_owners",
]


@dataclass
class ModalityDataset:
    """Data of one modality.

    Attributes
    ----------
    modality : int
    owners : list of int
        UAV indices holding this modality, aligned with ``partitions``.
    partitions : list of (X, y)
        Private training data of each owner.
    probe : (X, y)
        BS-side samples; row ``i`` is the same sample across modalities.
    test : (X, y)
        Held-out samples, aligned across modalities like ``probe``.
    """

    modality: int
    owners: list
    partitions: list
    probe: tuple
    test: tuple
    columns: list = field(default_factory=list)

    @property
    def sizes(self):
        return np.array([len(y) for _, y in self.partitions], dtype=float)


def modality_owners(num_uavs, num_modalities):
    return [list(range(m, num_uavs, num_modalities)) for m in range(num_modalities)]


def _counts(total, probs):
    """Integer counts summing to ``total`` by largest-remainder rounding."""
    raw = total * np.asarray(probs, dtype=float)
    base = np.floor(raw).astype(int)
    rest = total - base.sum()
    order = np.argsort(-(raw - base), kind="stable")
    base[order[:rest]] += 1
    return base


class _Generator:
    """Latent class -> Gaussian features for each modality.

    A single modality cannot separate every class: modality ``m`` maps the
    classes onto pairs (shifted by ``m``) that share most of their mean, so
    the classes are only told apart by combining modalities.
    """

    def __init__(self, rng, num_modalities, num_classes, dim, separation, distinct, noise):
        groups = (num_classes + 1) // 2
        self.noise = noise
        self.means = []
        for m in range(num_modalities):
            g = ((np.arange(num_classes) + m) // 2) % groups
            centre = separation * rng.standard_normal((groups, dim))
            own = distinct * separation * rng.standard_normal((num_classes, dim))
            self.means.append(centre[g] + own)

    def sample(self, rng, modality, y):
        mu = self.means[modality][y]
        return mu + self.noise * rng.standard_normal(mu.shape)


def synth_multimodal_dataset(config, seed=0, iid=True, modalities=None, test_size=1000,
                             separation=2.0, distinct=0.25, noise=1.0):
    """Synthetic multimodal classification data.

    Parameters
    ----------
    config : ScenarioConfig
        Supplies ``num_uavs``, ``samples_per_uav``, ``num_classes``,
        ``input_dim``, ``probe_set_size`` and ``dirichlet_alpha``.
    seed : int
    iid : bool
        Uniform shuffle of a class-balanced pool when True, otherwise
        per-UAV label proportions drawn from ``Dirichlet(dirichlet_alpha)``.
    modalities : list of int, optional
        Generative modalities to expose; UAV ``u`` senses
        ``modalities[u % len(modalities)]``. Defaults to all
        ``config.num_modalities``. Passing one modality gives a unimodal
        system on the same underlying distribution.
    test_size : int
    separation, distinct, noise : float
        Scale of the shared pair means, of the class-specific offsets, and
        of the isotropic noise.

    Returns
    -------
    list of ModalityDataset
        One entry per exposed modality.
    """
    mods = list(range(config.num_modalities)) if modalities is None else [int(m) for m in modalities]
    gen_m = max(config.num_modalities, max(mods) + 1)
    ss = np.random.SeedSequence(seed)
    r_means, r_labels, r_feat, r_shared = (np.random.default_rng(s) for s in ss.spawn(4))
    C = config.num_classes
    gen = _Generator(r_means, gen_m, C, config.input_dim, separation, distinct, noise)

    U = config.num_uavs
    sizes = np.asarray(config.samples_per_uav, dtype=int)
    if iid:
        pool = r_labels.permutation(np.arange(int(sizes.sum())) % C)
        labels = np.split(pool, np.cumsum(sizes)[:-1])
    else:
        labels = []
        for u in range(U):
            p = r_labels.dirichlet(np.full(C, config.dirichlet_alpha))
            labels.append(r_labels.permutation(np.repeat(np.arange(C), _counts(sizes[u], p))))

    def shared(n):
        y = r_shared.integers(0, C, n)
        return y, [gen.sample(r_shared, m, y) for m in mods]

    y_probe, X_probe = shared(config.probe_set_size)
    y_test, X_test = shared(test_size)
    owners = modality_owners(U, len(mods))
    out = []
    for i, m in enumerate(mods):
        parts = [(gen.sample(r_feat, m, labels[u]), labels[u]) for u in owners[i]]
        out.append(ModalityDataset(i, owners[i], parts, (X_probe[i], y_probe), (X_test[i], y_test)))
    return out


def label_histograms(datasets, num_classes):
    """Per-UAV label proportions, rows ordered by UAV index."""
    rows = {}
    for ds in datasets:
        for u, (_, y) in zip(ds.owners, ds.partitions):
            rows[u] = np.bincount(y, minlength=num_classes) / max(len(y), 1)
    return np.array([rows[u] for u in sorted(rows)])


def _hash_rank(n):
    keys = [hashlib.blake2b(str(i).encode(), digest_size=8).digest() for i in range(n)]
    return np.array(sorted(range(n), key=lambda i: keys[i]), dtype=int)


def load_csv_dataset(path, modality_columns, label_column, num_uavs=1, probe_size=None,
                     train_fraction=0.7, seed=0):
    """Read a numeric CSV with a header into per-modality datasets.

    Columns are z-score normalized over the whole file (constant columns
    become zero). Rows are ranked by a hash of their index; the first
    ``n - ceil((1 - train_fraction) * n)`` are training rows and the rest
    test rows.
    Training rows are shuffled with ``seed`` and dealt round-robin to the
    owners of each modality; the probe set is the first ``probe_size``
    shuffled training rows (all of them by default). Labels are mapped to
    ``0..C-1`` in sorted order of their values.

    Parameters
    ----------
    path : str or Path
    modality_columns : list of list of str
        Feature columns of each modality.
    label_column : str
    num_uavs : int

    Raises
    ------
    UnknownColumn
        If a named column is not in the header.
    MalformedRow
        If a row has the wrong number of fields or a non-numeric cell.
    """
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise MalformedRow(1, "empty file") from None
        wanted = [c for cols in modality_columns for c in cols] + [label_column]
        missing = [c for c in wanted if c not in header]
        if missing:
            raise UnknownColumn(f"unknown column(s): {', '.join(missing)}")
        rows = []
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise MalformedRow(line, f"line {line}: {len(row)} fields, expected {len(header)}")
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                raise MalformedRow(line, f"line {line}: non-numeric cell") from None
    data = np.array(rows, dtype=float).reshape(len(rows), len(header))
    col = {h: i for i, h in enumerate(header)}
    _, y = np.unique(data[:, col[label_column]], return_inverse=True)
    mu = data.mean(axis=0)
    sd = data.std(axis=0)
    Z = np.where(sd > 0, (data - mu) / np.where(sd > 0, sd, 1.0), 0.0)

    n = len(rows)
    rank = _hash_rank(n)
    # rounding guards 0.3 * 10 = 3.0000000000000004 against the ceiling
    n_train = n - int(np.ceil(round((1.0 - train_fraction) * n, 9)))
    train = np.random.default_rng(seed).permutation(np.sort(rank[:n_train]))
    test = np.sort(rank[n_train:])
    probe = train if probe_size is None else train[:probe_size]
    owners = modality_owners(num_uavs, len(modality_columns))
    out = []
    for m, cols in enumerate(modality_columns):
        idx = [col[c] for c in cols]
        X = Z[:, idx]
        parts = [(X[train[i::len(owners[m])]], y[train[i::len(owners[m])]]) for i in range(len(owners[m]))]
        out.append(ModalityDataset(m, owners[m], parts, (X[probe], y[probe]), (X[test], y[test]),
                                   columns=list(cols)))
    return out
