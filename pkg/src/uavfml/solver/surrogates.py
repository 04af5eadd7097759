"""Convex surrogates used to build the successive convex approximations.

Each surrogate is tangent to the function it replaces at the linearization
point and bounds it on the safe side, so a point feasible for a surrogate
constraint is feasible for the original one.
"""

import numpy as np

from ..exceptions import InvalidState

__all__ = ["log_surrogate_lhs", "log_surrogate_coefficients", "bilinear_upper", "square_lower"]


def _positive(name, *arrays):
    for a in arrays:
        if np.any(~(np.asarray(a) > 0)):
            raise InvalidState(f"{name}: linearization point must be strictly positive")


def log_surrogate_coefficients(z_i):
    """Return ``(const, recip)`` with ``surrogate(z) = const - recip / z``."""
    _positive("log surrogate", z_i)
    z_i = np.asarray(z_i, dtype=float)
    const = np.log1p(z_i) + z_i / (z_i + 1.0)
    recip = z_i**2 / (z_i + 1.0)
    return const, recip


def log_surrogate_lhs(z, z_i):
    """Concave minorant of ``ln(1 + z)`` tangent at ``z_i``.

    ``ln(1+z_i) + z_i/(z_i+1) - z_i**2/(z_i+1) / z``
    """
    const, recip = log_surrogate_coefficients(z_i)
    return const - recip / np.asarray(z, dtype=float)


def bilinear_upper(a, b, a_i, b_i):
    """Convex majorant of ``a * b`` tangent at ``(a_i, b_i)``."""
    _positive("bilinear", a_i, b_i)
    return 0.5 * (b_i / a_i) * np.square(a) + 0.5 * (a_i / b_i) * np.square(b)


def square_lower(s, s_i):
    """First-order minorant of ``s**2`` at ``s_i``."""
    return s_i * s_i + 2.0 * s_i * (s - s_i)
