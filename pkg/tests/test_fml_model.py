import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from uavfml.exceptions import ShapeMismatch
from uavfml.fml.model import (cross_entropy, decoder_forward, decoder_loss_grad, encoder_backward,
                              encoder_forward, init_decoder, init_encoder, softmax)


def fd_grad(f, x, h=1e-6):
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


class TestParams:
    def test_flat_roundtrip(self, rng):
        p = init_encoder(5, 4, 3, rng)
        assert p.size == 5 * 4 + 4 + 4 * 3 + 3
        q = p.from_flat(p.flat())
        np.testing.assert_array_equal(q.flat(), p.flat())
        q.weights[0][0, 0] += 1
        assert p.weights[0][0, 0] != q.weights[0][0, 0]

    def test_from_flat_wrong_length(self, rng):
        with pytest.raises(ShapeMismatch):
            init_decoder(4, 3, rng).from_flat(np.zeros(3))

    def test_xavier_bounds_and_zero_bias(self, rng):
        p = init_encoder(10, 6, 2, rng)
        assert np.abs(p.weights[0]).max() <= np.sqrt(6 / 16)
        assert not p.biases[0].any() and not p.biases[1].any()

    def test_zeros_like(self, rng):
        p = init_decoder(4, 3, rng)
        assert p.zeros_like().shapes == p.shapes and not p.zeros_like().flat().any()


class TestForward:
    def test_encoder_range_and_shape(self, rng):
        p = init_encoder(5, 4, 3, rng)
        H = encoder_forward(p, rng.standard_normal((7, 5)))
        assert H.shape == (7, 3) and np.all(np.abs(H) < 1)

    def test_decoder_rows_sum_to_one(self, rng):
        p = init_decoder(4, 3, rng)
        P = decoder_forward(p, 50 * rng.standard_normal((6, 4)))
        np.testing.assert_allclose(P.sum(axis=1), 1.0, rtol=1e-14)

    def test_shape_errors(self, rng):
        with pytest.raises(ShapeMismatch):
            encoder_forward(init_encoder(5, 4, 3, rng), np.zeros((2, 4)))
        with pytest.raises(ShapeMismatch):
            decoder_forward(init_decoder(4, 3, rng), np.zeros(4))

    def test_cross_entropy_uniform(self):
        P = np.full((4, 5), 0.2)
        np.testing.assert_allclose(cross_entropy(P, np.array([0, 1, 2, 3])), np.log(5))
        assert cross_entropy(P[:0], np.array([], dtype=int)) == 0.0

    @given(st.lists(st.floats(-500, 500), min_size=2, max_size=6), st.floats(-100, 100))
    def test_softmax_shift_invariant(self, z, c):
        z = np.array([z])
        np.testing.assert_allclose(softmax(z + c), softmax(z), atol=1e-12)


class TestGradients:
    @pytest.mark.parametrize("seed", range(5))
    def test_decoder_parameter_gradient(self, seed):
        rng = np.random.default_rng(seed)
        p = init_decoder(6, 4, rng)
        H = rng.standard_normal((9, 6))
        y = rng.integers(0, 4, 9)
        _, g, _ = decoder_loss_grad(p, H, y)
        fd = fd_grad(lambda v: decoder_loss_grad(p.from_flat(v), H, y)[0], p.flat())
        np.testing.assert_allclose(g.flat(), fd, atol=1e-7)

    @pytest.mark.parametrize("seed", range(5))
    def test_decoder_input_gradient(self, seed):
        rng = np.random.default_rng(seed)
        p = init_decoder(6, 4, rng)
        H = rng.standard_normal((3, 6))
        y = rng.integers(0, 4, 3)
        _, _, dH = decoder_loss_grad(p, H, y)
        fd = fd_grad(lambda v: decoder_loss_grad(p, v.reshape(H.shape), y)[0], H.ravel())
        np.testing.assert_allclose(dH.ravel(), fd, atol=1e-7)

    @pytest.mark.parametrize("seed", range(5))
    def test_encoder_gradient(self, seed):
        rng = np.random.default_rng(seed)
        p = init_encoder(5, 4, 3, rng)
        X = rng.standard_normal((8, 5))
        dH = rng.standard_normal((8, 3))
        g = encoder_backward(p, X, dH)
        fd = fd_grad(lambda v: float(np.sum(dH * encoder_forward(p.from_flat(v), X))), p.flat())
        np.testing.assert_allclose(g.flat(), fd, atol=1e-7)
