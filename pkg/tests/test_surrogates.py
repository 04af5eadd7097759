import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from uavfml.exceptions import InvalidState
from uavfml.solver.surrogates import (bilinear_upper, log_surrogate_coefficients, log_surrogate_lhs,
                                      square_lower)

pos = st.floats(1e-3, 1e3)
real = st.floats(-1e3, 1e3)


class TestLogSurrogate:
    def test_hand_value(self):
        # ln 2 + 1/2 - (1/2)/3
        np.testing.assert_allclose(log_surrogate_lhs(3.0, 1.0), 1.0264805138932787, rtol=1e-15)

    def test_coefficients(self):
        const, recip = log_surrogate_coefficients(1.0)
        np.testing.assert_allclose([const, recip], [np.log(2) + 0.5, 0.5], rtol=1e-15)

    @given(pos, pos)
    def test_minorant(self, z, z_i):
        assert log_surrogate_lhs(z, z_i) <= np.log1p(z) + 1e-12

    @given(pos)
    def test_tangent(self, z_i):
        np.testing.assert_allclose(log_surrogate_lhs(z_i, z_i), np.log1p(z_i), rtol=1e-12)
        h = 1e-6 * z_i
        slope = (log_surrogate_lhs(z_i + h, z_i) - log_surrogate_lhs(z_i - h, z_i)) / (2 * h)
        np.testing.assert_allclose(slope, 1 / (1 + z_i), rtol=1e-5)

    @given(pos, pos, pos)
    def test_concave(self, a, b, z_i):
        mid = log_surrogate_lhs(0.5 * (a + b), z_i)
        assert mid >= 0.5 * (log_surrogate_lhs(a, z_i) + log_surrogate_lhs(b, z_i)) - 1e-12 * (1 + abs(mid))

    @pytest.mark.parametrize("z_i", [0.0, -1.0, np.nan])
    def test_rejects_nonpositive_point(self, z_i):
        with pytest.raises(InvalidState):
            log_surrogate_lhs(1.0, z_i)


class TestBilinear:
    @given(real, real, pos, pos)
    def test_majorant(self, a, b, a_i, b_i):
        ub = bilinear_upper(a, b, a_i, b_i)
        assert ub >= a * b - 1e-12 * (1 + abs(ub))

    @given(pos, pos)
    def test_tangent(self, a_i, b_i):
        np.testing.assert_allclose(bilinear_upper(a_i, b_i, a_i, b_i), a_i * b_i, rtol=1e-12)

    def test_rejects_zero_point(self):
        with pytest.raises(InvalidState):
            bilinear_upper(1.0, 1.0, 0.0, 1.0)


class TestSquareLower:
    @given(real, real)
    def test_minorant(self, s, s_i):
        assert square_lower(s, s_i) <= s * s + 1e-9 * (1 + s * s)

    @given(real)
    def test_tangent(self, s_i):
        np.testing.assert_allclose(square_lower(s_i, s_i), s_i * s_i, rtol=1e-12)

    def test_vectorized(self):
        np.testing.assert_allclose(square_lower(np.array([0.0, 2.0]), 1.0), [-1.0, 3.0])
