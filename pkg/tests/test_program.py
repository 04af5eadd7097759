import numpy as np
import pytest

from uavfml.exceptions import Infeasible
from uavfml.solver.barrier import solve_convex
from uavfml.solver.program import Affine, ConvexProgram, NonConvexProgram, Reciprocal

METHODS = ["conic", "barrier"]


def reciprocal_program():
    """min t  s.t.  1/x <= t,  x in [1e-9, 2]  ->  x = 2, t = 0.5."""
    prog = ConvexProgram()
    x = prog.add_variables("x", 1, lb=1e-9, ub=2.0, start=1.0)
    t = prog.add_variables("t", 1, start=2.0)
    r = prog.add_rows(1, "epi")
    prog.reciprocal(r, x, 1.0)
    prog.affine(r, t, -1.0)
    prog.minimize(t, 1.0)
    return prog


def quadratic_program():
    """min t  s.t.  x^2 <= t,  x in [1, 3]  ->  x = 1, t = 1."""
    prog = ConvexProgram()
    x = prog.add_variables("x", 1, lb=1.0, ub=3.0, start=2.0)
    t = prog.add_variables("t", 1, start=10.0)
    r = prog.add_rows(1, "epi")
    prog.quadratic(r, x, 1.0)
    prog.affine(r, t, -1.0)
    prog.minimize(t, 1.0)
    return prog


@pytest.mark.parametrize("method", METHODS)
class TestSolve:
    def test_reciprocal(self, method):
        x, rep = solve_convex(reciprocal_program(), method=method)
        np.testing.assert_allclose(x, [2.0, 0.5], rtol=1e-5)
        np.testing.assert_allclose(rep.objective, 0.5, rtol=1e-5)
        assert rep.violation <= 1e-8

    def test_quadratic(self, method):
        x, rep = solve_convex(quadratic_program(), method=method)
        np.testing.assert_allclose(x, [1.0, 1.0], rtol=1e-5)

    def test_squared_sum_with_equality(self, method):
        # min (x - y)^2 + x^2 + y^2  s.t.  x + y = 1  ->  x = y = 0.5
        prog = ConvexProgram()
        v = prog.add_variables("v", 2, lb=-5.0, ub=5.0, start=[0.2, 0.8])
        t = prog.add_variables("t", 1, start=10.0)
        r = prog.add_rows(1, "epi")
        prog.squared_sum(r, v[None, :], [[1.0, -1.0]])
        prog.quadratic(np.repeat(r, 2), v, 1.0)
        prog.affine(r, t, -1.0)
        prog.equality(v[None, :], [[1.0, 1.0]], 1.0)
        prog.minimize(t, 1.0)
        x, rep = solve_convex(prog, method=method)
        np.testing.assert_allclose(x[:2], [0.5, 0.5], atol=1e-5)
        np.testing.assert_allclose(rep.objective, 0.5, rtol=1e-5)

    def test_infeasible(self, method):
        prog = ConvexProgram()
        x = prog.add_variables("x", 1, lb=0.0, ub=1.0, start=0.5)
        r = prog.add_rows(1, "need_two")
        prog.constant(r, 2.0)
        prog.affine(r, x, -1.0)
        prog.minimize(x, 1.0)
        with pytest.raises(Infeasible):
            solve_convex(prog, method=method)


class TestBuilder:
    def test_counts_and_names(self):
        prog = reciprocal_program()
        assert prog.n_vars == 2 and prog.n_rows == 1
        assert prog.names == ["x[0]", "t[0]"]
        assert prog.constraints[0] == [Affine(-1.0, "t[0]"), Reciprocal(1.0, "x[0]")]
        assert prog.is_structurally_convex()

    def test_dump_is_deterministic(self):
        text = reciprocal_program().dump()
        assert text == reciprocal_program().dump()
        assert "epi[0]: -1*t[0] + 1/x[0] <= 0" in text

    def test_rejects_concave_atoms(self):
        prog = ConvexProgram()
        x = prog.add_variables("x", 1, lb=1.0)
        r = prog.add_rows(1, "bad")
        with pytest.raises(NonConvexProgram):
            prog.quadratic(r, x, -1.0)
        with pytest.raises(NonConvexProgram):
            prog.reciprocal(r, x, -1.0)

    def test_reciprocal_needs_positive_bound(self):
        prog = ConvexProgram()
        x = prog.add_variables("x", 1, lb=0.0)
        with pytest.raises(NonConvexProgram):
            prog.reciprocal(prog.add_rows(1, "r"), x, 1.0)

    def test_compiled_derivatives(self, rng):
        prog = quadratic_program()
        r = prog.add_rows(1, "rec")
        prog.reciprocal(r, prog.blocks["x"], 2.0)
        P = prog.compile()
        x = np.array([1.7, 0.3])
        J = P.jacobian(x).toarray()
        h = 1e-6
        for j in range(2):
            e = np.zeros(2)
            e[j] = h
            np.testing.assert_allclose(J[:, j], (P.values(x + e) - P.values(x - e)) / (2 * h), atol=1e-6)
        lam = rng.random(P.m)
        g = lambda z: P.jacobian(z).toarray().T @ lam  # noqa: E731
        H = P.hessian(x, lam).toarray()
        for j in range(2):
            e = np.zeros(2)
            e[j] = h
            np.testing.assert_allclose(H[:, j], (g(x + e) - g(x - e)) / (2 * h), atol=1e-5)
