"""Encoder and decoder networks with hand-written backpropagation.

Encoders map one modality's features to an embedding through two tanh
layers (``input_dim -> hidden_dim -> embed_dim``). The decoder is a single
softmax layer on the concatenated embeddings of all modalities.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..exceptions import ShapeMismatch

__all__ = [
    "ModelParams", "init_encoder", "init_decoder", "encoder_forward", "decoder_forward",
    "softmax", "cross_entropy", "encoder_backward", "decoder_loss_grad",
]


@dataclass
class ModelParams:
    """Layer weights ``W[i]`` (in x out) and biases ``b[i]`` with a flat view."""

    weights: list
    biases: list

    @property
    def shapes(self):
        return [(W.shape, b.shape) for W, b in zip(self.weights, self.biases)]

    @property
    def size(self):
        return int(sum(W.size + b.size for W, b in zip(self.weights, self.biases)))

    def flat(self):
        parts = []
        for W, b in zip(self.weights, self.biases):
            parts += [W.ravel(), b.ravel()]
        return np.concatenate(parts) if parts else np.zeros(0)

    def from_flat(self, vec):
        """New parameters of the same shapes holding ``vec``."""
        vec = np.asarray(vec, dtype=float)
        if vec.size != self.size:
            raise ShapeMismatch(f"flat vector of length {vec.size}, expected {self.size}")
        Ws, bs = [], []
        i = 0
        for W, b in zip(self.weights, self.biases):
            Ws.append(vec[i:i + W.size].reshape(W.shape).copy())
            i += W.size
            bs.append(vec[i:i + b.size].reshape(b.shape).copy())
            i += b.size
        return ModelParams(Ws, bs)

    def copy(self):
        return ModelParams([W.copy() for W in self.weights], [b.copy() for b in self.biases])

    def zeros_like(self):
        return ModelParams([np.zeros_like(W) for W in self.weights], [np.zeros_like(b) for b in self.biases])


def _layer(rng, n_in, n_out):
    # Xavier-uniform
    lim = np.sqrt(6.0 / (n_in + n_out))
    return rng.uniform(-lim, lim, (n_in, n_out)), np.zeros(n_out)


def init_encoder(input_dim, hidden_dim, embed_dim, rng):
    W1, b1 = _layer(rng, input_dim, hidden_dim)
    W2, b2 = _layer(rng, hidden_dim, embed_dim)
    return ModelParams([W1, W2], [b1, b2])


def init_decoder(in_dim, num_classes, rng):
    W, b = _layer(rng, in_dim, num_classes)
    return ModelParams([W], [b])


def _check_input(params, X):
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != params.weights[0].shape[0]:
        raise ShapeMismatch(f"input of shape {X.shape}, expected (n, {params.weights[0].shape[0]})")
    return X


def _encode(params, X):
    A1 = np.tanh(X @ params.weights[0] + params.biases[0])
    H = np.tanh(A1 @ params.weights[1] + params.biases[1])
    return A1, H


def encoder_forward(params, X):
    """Embeddings ``tanh(tanh(X W1 + b1) W2 + b2)`` of shape ``(n, embed_dim)``."""
    X = _check_input(params, X)
    return _encode(params, X)[1]


def softmax(Z):
    Z = Z - Z.max(axis=1, keepdims=True)
    E = np.exp(Z)
    return E / E.sum(axis=1, keepdims=True)


def decoder_forward(params, H):
    """Class probabilities ``softmax(H W + b)``; rows sum to one."""
    H = _check_input(params, H)
    return softmax(H @ params.weights[0] + params.biases[0])


def cross_entropy(P, y):
    """Mean negative log-likelihood of integer labels ``y``."""
    if len(y) == 0:
        return 0.0
    return float(-np.mean(np.log(np.maximum(P[np.arange(len(y)), y], 1e-300))))


def decoder_loss_grad(params, H, y):
    """Cross-entropy of the decoder on inputs ``H``.

    Returns
    -------
    loss : float
    grad : ModelParams
        Gradient with respect to the decoder parameters.
    dH : ndarray
        Gradient with respect to the inputs.
    """
    H = _check_input(params, H)
    n = len(y)
    P = decoder_forward(params, H)
    G = P.copy()
    G[np.arange(n), y] -= 1.0
    G /= max(n, 1)
    W = params.weights[0]
    grad = ModelParams([H.T @ G], [G.sum(axis=0)])
    return cross_entropy(P, y), grad, G @ W.T


def encoder_backward(params, X, dH):
    """Gradient of ``sum(dH * encoder_forward(params, X))`` with respect to the encoder."""
    X = _check_input(params, X)
    A1, H = _encode(params, X)
    D2 = dH * (1.0 - H**2)
    D1 = (D2 @ params.weights[1].T) * (1.0 - A1**2)
    return ModelParams([X.T @ D1, A1.T @ D2], [D1.sum(axis=0), D2.sum(axis=0)])
