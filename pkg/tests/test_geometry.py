import numpy as np
import pytest
import sympy as sp

from cmaball import (BallGrid, HermitianMetricField, ScalarField,
                     canonical_laplacian, chern_connection, complex_hessian,
                     covariant_derivative, curvature, tensor_norm2, torsion)
from cmaball import symbolic
from cmaball.geometry import SingularMetricError, hessian_metric

import oracles


def scalar_from_expr(grid, expr):
    return ScalarField.from_expr(grid, expr)


def metric_from_entries(grid, entries):
    return HermitianMetricField.from_matrix(
        grid, symbolic.ExprMatrix(entries, n=grid.n))


def interior_points_and_index(grid, valid):
    where = grid.interior & valid
    return grid.points(where), where


x1, y1, x2, y2 = [symbolic.var(s) for s in ("x1", "y1", "x2", "y2")]
z1 = x1 + sp.I * y1
z2 = x2 + sp.I * y2
ABS2_N2 = x1**2 + y1**2 + x2**2 + y2**2

EXP_RE_Z1 = [[sp.exp(x1), 0], [0, sp.exp(x1)]]    # non-Kahler for n=2


class TestComplexHessian:
    def test_abs2_gives_identity(self):
        grid = BallGrid(2, 13)
        u = scalar_from_expr(grid, ABS2_N2)
        hess = complex_hessian(u)
        vals = hess.values[grid.interior & hess.valid]
        assert np.allclose(vals, np.eye(2), atol=1e-12)

    def test_pluriharmonic_vanishes(self):
        grid = BallGrid(1, 33)
        u = scalar_from_expr(grid, x1**2 - y1**2)
        hess = complex_hessian(u)
        assert np.nanmax(np.abs(hess.values[hess.valid])) < 1e-12

    def test_mixed_quartic_matches_oracle(self):
        # u = |z1|^2 |z2|^2 at (0.3, 0.2i): u_11b = 0.04, u_22b = 0.09,
        # u_12b = conj(z1) z2 = 0.06j; frozen from the symbolic oracle
        expr = (x1**2 + y1**2) * (x2**2 + y2**2)
        exact = oracles.eval_exprs(oracles.hessian_exprs(expr, 2),
                                   np.array([0.3, 0.2j]), 2)
        assert np.allclose(exact, [[0.04, 0.06j], [-0.06j, 0.09]])
        grid = BallGrid(2, 21)
        u = scalar_from_expr(grid, expr)
        hess = complex_hessian(u)
        pts, where = interior_points_and_index(grid, hess.valid)
        oracle_vals = oracles.eval_exprs(oracles.hessian_exprs(expr, 2), pts, 2)
        assert np.allclose(hess.values[where], oracle_vals, atol=1e-10)

    def test_hermitian_symmetry(self):
        grid = BallGrid(2, 13)
        u = scalar_from_expr(grid, sp.exp(x1) * (x2**2 + y2**2))
        hess = complex_hessian(u)
        v = hess.values[hess.valid]
        assert np.allclose(v, np.conj(np.swapaxes(v, -1, -2)), atol=1e-12)


class TestChernConnection:
    def test_constant_metric(self):
        grid = BallGrid(2, 9)
        g = metric_from_entries(grid, [[2, sp.Rational(1, 2)],
                                       [sp.Rational(1, 2), 1]])
        th = chern_connection(g)
        assert th.max_abs() < 1e-12

    def test_conformal_exponential(self):
        grid = BallGrid(2, 13)
        g = metric_from_entries(grid, EXP_RE_Z1)
        th = chern_connection(g)
        where = grid.interior & th.valid
        vals = th.values[where]
        # theta^c_{1 b} = delta^c_b / 2, theta^c_{2 b} = 0 (exact value from
        # the oracle; grid values carry O(h^2) truncation)
        assert np.allclose(vals[:, :, 0, :], 0.5 * np.eye(2), atol=5e-3)
        assert np.allclose(vals[:, :, 1, :], 0.0, atol=5e-3)
        om = oracles.SymbolicMetric(EXP_RE_Z1, 2)
        exact = om.evaluate(om.theta(), np.array([0.1 + 0.2j, -0.3j]))
        assert np.allclose(exact[:, 0, :], 0.5 * np.eye(2), atol=1e-12)
        assert np.allclose(exact[:, 1, :], 0.0, atol=1e-12)

    def test_matches_oracle_nondiagonal(self):
        entries = [[sp.exp(x1) + 1, sp.Rational(1, 4) * (sp.sin(x1) + sp.I * y2)],
                   [sp.Rational(1, 4) * (sp.sin(x1) - sp.I * y2),
                    1 + sp.cos(y1) / 2]]
        grid = BallGrid(2, 17)
        g = metric_from_entries(grid, entries)
        th = chern_connection(g)
        pts, where = interior_points_and_index(grid, th.valid)
        om = oracles.SymbolicMetric(entries, 2)
        exact = om.evaluate(om.theta(), pts)
        assert np.max(np.abs(th.values[where] - exact)) < 5e-3
        # refinement: truncation error drops at second order
        grid2 = BallGrid(2, 33)
        g2 = metric_from_entries(grid2, entries)
        th2 = chern_connection(g2)
        pts2, where2 = interior_points_and_index(grid2, th2.valid)
        err1 = np.max(np.abs(th.values[where] - exact))
        err2 = np.max(np.abs(th2.values[where2] - om.evaluate(om.theta(), pts2)))
        assert err2 < err1 * 0.45

    def test_kahler_symmetry_refines(self):
        # any potential Hessian is Kahler; exp cross term keeps it non-polynomial
        pot = ABS2_N2 + sp.Rational(1, 20) * sp.exp(x1 + 2 * x2)
        entries = oracles.hessian_exprs(pot, 2)
        errs = []
        for m in (9, 17):
            grid = BallGrid(2, m)
            g = metric_from_entries(grid, entries)
            th = chern_connection(g)
            asym = th.values - np.swapaxes(th.values, -1, -2)
            near = grid.interior & th.valid & (grid.radius2 <= 0.25)
            errs.append(np.nanmax(np.abs(asym[near])))
        assert errs[1] < errs[0] * 0.35


class TestTorsion:
    def test_constant_metric_zero(self):
        grid = BallGrid(2, 9)
        g = metric_from_entries(grid, [[1, 0], [0, 3]])
        assert torsion(g).max_abs() < 1e-12

    def test_conformal_exponential_components(self):
        grid = BallGrid(2, 17)
        g = metric_from_entries(grid, EXP_RE_Z1)
        T = torsion(g)
        where = grid.interior & T.valid
        vals = T.values[where]
        assert np.allclose(vals[:, 1, 0, 1], 0.5, atol=5e-3)   # T^2_{12}
        assert np.allclose(vals[:, 0, 0, 1], 0.0, atol=5e-3)   # T^1_{12}
        assert np.nanmax(np.abs(vals)) >= 0.4
        om = oracles.SymbolicMetric(EXP_RE_Z1, 2)
        exact = om.evaluate(om.torsion(), np.array([0.25 - 0.1j, 0.4j]))
        assert exact[1, 0, 1] == pytest.approx(0.5, abs=1e-12)  # T^2_{12}
        assert abs(exact[0, 0, 1]) < 1e-12                      # T^1_{12}

    def test_exact_antisymmetry(self):
        grid = BallGrid(2, 13)
        g = metric_from_entries(grid, [[1 + x2**2, 0], [0, 1 + y1**2]])
        T = torsion(g)
        sym = T.values + np.swapaxes(T.values, -1, -2)
        assert np.nanmax(np.abs(sym[T.valid])) == 0.0

    def test_kahler_torsion_refines(self):
        pot = ABS2_N2 + sp.Rational(1, 20) * sp.exp(x1 + 2 * x2)
        entries = oracles.hessian_exprs(pot, 2)
        errs = []
        for m in (9, 17):
            grid = BallGrid(2, m)
            g = metric_from_entries(grid, entries)
            errs.append(torsion(g).max_abs(grid.interior & (grid.radius2 <= 0.25)))
        assert errs[1] < errs[0] * 0.35


class TestCurvature:
    def test_constant_metric_zero(self):
        grid = BallGrid(1, 17)
        g = metric_from_entries(grid, [[2]])
        assert curvature(g).max_abs() < 1e-12

    def test_gaussian_metric_n1(self):
        grid = BallGrid(1, 33)
        g = metric_from_entries(grid, [[sp.exp(x1**2 + y1**2)]])
        R = curvature(g)
        vals = R.values[grid.interior & R.valid]
        assert np.allclose(vals, -1.0, atol=5e-3)

    def test_matches_oracle_n2(self):
        entries = [[1 + x1**2 + y2**2, 0], [0, 1 + x2**2]]
        grid = BallGrid(2, 17)
        g = metric_from_entries(grid, entries)
        R = curvature(g)
        pts, where = interior_points_and_index(grid, R.valid)
        om = oracles.SymbolicMetric(entries, 2)
        exact = om.evaluate(om.curvature(), pts)
        assert np.max(np.abs(R.values[where] - exact)) < 2e-2

    def test_singular_metric_rejected(self):
        grid = BallGrid(1, 9)
        g = metric_from_entries(grid, [[x1]])   # changes sign in the ball
        with pytest.raises(SingularMetricError):
            curvature(g)


class TestCovariantDerivative:
    def test_scalar_reduces_to_gradient(self):
        grid = BallGrid(1, 17)
        g = metric_from_entries(grid, [[sp.exp(x1)]])
        f = scalar_from_expr(grid, x1**2 + y1**2)
        grad = covariant_derivative(f, g, "holo")
        pts, where = interior_points_and_index(grid, grad.valid)
        assert np.allclose(grad.values[where][:, 0], np.conj(pts[:, 0]),
                           atol=1e-10)

    def test_constant_tensor_constant_metric(self):
        grid = BallGrid(2, 9)
        g = metric_from_entries(grid, [[1, 0], [0, 1]])
        t = torsion(g)  # identically zero, constant
        d = covariant_derivative(t, g, "anti")
        assert d.max_abs() < 1e-12

    def test_metric_compatibility(self):
        for entries, n in (
            ([[sp.exp(x1 + y1)]], 1),
            (EXP_RE_Z1, 2),
            ([[2 + x1**2, sp.Rational(1, 4) * (x1 + sp.I * y2)],
              [sp.Rational(1, 4) * (x1 - sp.I * y2), 1 + y1**2]], 2),
        ):
            errs = []
            for m in (9, 17):
                grid = BallGrid(n, m)
                g = metric_from_entries(grid, entries)
                nabla_g = covariant_derivative(g.as_tensor(), g, "holo")
                errs.append(nabla_g.max_abs(grid.interior))
            assert errs[1] < errs[0] * 0.45 + 1e-14

    def test_direction_validation(self):
        grid = BallGrid(1, 9)
        g = metric_from_entries(grid, [[1]])
        with pytest.raises(ValueError):
            covariant_derivative(g.as_tensor(), g, "sideways")


class TestTensorNorm:
    def test_zero_tensor(self):
        grid = BallGrid(2, 9)
        g = metric_from_entries(grid, [[1, 0], [0, 1]])
        t = torsion(g)
        assert tensor_norm2(t, g).max_abs() < 1e-24

    def test_identity_endomorphism(self):
        from cmaball.fields import HOLO_UP, HOLO_DOWN, TensorField
        grid = BallGrid(2, 9)
        g = metric_from_entries(grid, [[1, 0], [0, 1]])
        eye = np.broadcast_to(np.eye(2), grid.shape + (2, 2)).copy()
        t = TensorField(grid, (HOLO_UP, HOLO_DOWN), eye, grid.in_ball)
        n2 = tensor_norm2(t, g)
        vals = n2.values[n2.valid]
        assert np.allclose(vals, 2.0, atol=1e-12)

    def test_torsion_norm_matches_symbolic_contraction(self):
        # |T|^2 for g = e^{Re z1} I: T^2_{12} = 1/2 antisymmetric, so
        # |T|^2 = g^{1 1b} g^{2 2b} g_{2 2b} |T^2_{12}|^2 * 2 = 2 * (1/4) e^{-x1}
        grid = BallGrid(2, 13)
        g = metric_from_entries(grid, EXP_RE_Z1)
        T = torsion(g)
        n2 = tensor_norm2(T, g)
        where = grid.interior & n2.valid
        x1v = np.broadcast_to(grid.coord(0), grid.shape)[where]
        # the centered stencil turns d_1 e^{x1} into e^{x1} sinh(h)/h, and
        # that is the only approximation in the whole contraction
        fd_factor = (np.sinh(grid.spacing) / grid.spacing) ** 2
        assert np.allclose(n2.values[where], 0.5 * np.exp(-x1v) * fd_factor,
                           atol=1e-12)

    def test_norm_invariant_under_variance_shuffle(self):
        # lowering the upper torsion index must not change the norm
        from cmaball.fields import HOLO_DOWN, ANTI_DOWN, TensorField
        entries = [[2 + x1**2, sp.Rational(1, 4) * (x1 + sp.I * y2)],
                   [sp.Rational(1, 4) * (x1 - sp.I * y2), 1 + y1**2]]
        grid = BallGrid(2, 13)
        g = metric_from_entries(grid, entries)
        T = torsion(g)
        lowered = np.einsum("...cd,...cab->...dab", g.values, T.values)
        Tl = TensorField(grid, (ANTI_DOWN, HOLO_DOWN, HOLO_DOWN), lowered,
                         T.valid)
        a = tensor_norm2(T, g).values
        b = tensor_norm2(Tl, g).values
        ok = T.valid & g.valid
        assert np.allclose(a[ok], b[ok], atol=1e-10)


class TestCanonicalLaplacian:
    def test_euclidean_abs2(self):
        for n, m in ((1, 17), (2, 13)):
            grid = BallGrid(n, m)
            g = metric_from_entries(grid, [[1 if i == j else 0
                                            for j in range(n)]
                                           for i in range(n)])
            expr = sum(symbolic.var(f"x{i}")**2 + symbolic.var(f"y{i}")**2
                       for i in range(1, n + 1))
            lap = canonical_laplacian(scalar_from_expr(grid, expr), g)
            vals = lap.values[grid.interior & lap.valid]
            assert np.allclose(vals, 2.0 * n, atol=1e-11)

    def test_pluriharmonic_zero(self):
        grid = BallGrid(2, 13)
        g = metric_from_entries(grid, EXP_RE_Z1)
        lap = canonical_laplacian(scalar_from_expr(grid, x1 * x2 - y1 * y2), g)
        assert lap.max_abs(grid.interior) < 1e-10

    def test_quartic_value(self):
        # f = |z1|^4, g = I: lap = 2 * 4 |z1|^2 = 2.0 at |z1| = 0.5
        grid = BallGrid(1, 33)
        g = metric_from_entries(grid, [[1]])
        lap = canonical_laplacian(
            scalar_from_expr(grid, (x1**2 + y1**2) ** 2), g)
        i = np.argmin(np.abs(grid.axis - 0.5))
        j = np.argmin(np.abs(grid.axis))
        # centered d2 on x^4 carries an exact +2h^2 truncation term
        assert lap.values[i, j] == pytest.approx(2.0 + 2 * grid.spacing**2,
                                                 abs=1e-10)


class TestHessianMetric:
    def test_positive_and_hermitian(self):
        grid = BallGrid(2, 13)
        g = metric_from_entries(grid, EXP_RE_Z1)
        u = scalar_from_expr(grid, sp.Rational(1, 10) * ABS2_N2)
        gt = hessian_metric(g, u)
        assert gt.check_hermitian() < 1e-13
        from cmaball.linalg import herm_min_eig
        assert herm_min_eig(gt.values)[gt.valid & grid.interior].min() > 0
