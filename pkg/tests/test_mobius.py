import numpy as np
import pytest

from cmaball import (BallGrid, HermitianMetricField, ScalarField,
                     make_automorphism, make_translation, pullback_form,
                     pullback_scalar)
from cmaball import symbolic
from cmaball.linalg import herm_min_eig


def random_ball_points(rng, n, count, radius=0.9):
    pts = rng.normal(size=(count, n)) + 1j * rng.normal(size=(count, n))
    norms = np.linalg.norm(pts, axis=-1, keepdims=True)
    scale = radius * rng.random((count, 1)) ** (1.0 / (2 * n))
    return pts / norms * scale


def random_sphere_points(rng, n, count):
    pts = rng.normal(size=(count, n)) + 1j * rng.normal(size=(count, n))
    return pts / np.linalg.norm(pts, axis=-1, keepdims=True)


class TestBallAutomorphism:
    def test_n1_closed_form(self):
        T = make_automorphism([0.5])
        assert T.gamma == pytest.approx(np.array([[1.0]]))
        z = np.array([0.2 + 0.1j])
        expected = (z - 0.5) / (1 - 0.5 * z)
        assert np.allclose(T.apply(z), expected, atol=1e-14)
        assert np.allclose(T.apply(np.array([0.5])), 0.0, atol=1e-14)
        assert np.allclose(T.apply(np.array([0.0])), -0.5, atol=1e-14)

    def test_maps_base_point_to_origin(self):
        rng = np.random.default_rng(7)
        for n in (1, 2):
            for _ in range(5):
                a = random_ball_points(rng, n, 1, radius=0.8)[0]
                T = make_automorphism(a)
                assert np.linalg.norm(T.apply(a)) < 1e-12

    def test_sphere_preservation(self):
        rng = np.random.default_rng(11)
        T = make_automorphism([0.3, 0.4j])
        zs = random_sphere_points(rng, 2, 200)
        radii = np.linalg.norm(T.apply(zs), axis=-1)
        assert np.max(np.abs(radii - 1.0)) <= 1e-10

    def test_group_law(self):
        rng = np.random.default_rng(3)
        for n in (1, 2):
            a = random_ball_points(rng, n, 1, radius=0.7)[0]
            T = make_automorphism(a)
            zs = random_ball_points(rng, n, 50)
            assert np.max(np.abs(T.inverse().apply(T.apply(zs)) - zs)) < 1e-12

    def test_zero_base_is_identity(self):
        rng = np.random.default_rng(5)
        T = make_automorphism([0.0, 0.0])
        zs = random_ball_points(rng, 2, 20)
        assert np.array_equal(T.apply(zs), zs)
        assert np.allclose(np.linalg.norm(T.apply(zs), axis=-1),
                           np.linalg.norm(zs, axis=-1))

    def test_domain_error(self):
        with pytest.raises(ValueError):
            make_automorphism([1.0])
        with pytest.raises(ValueError):
            make_automorphism([0.8, 0.7j])

    def test_jacobian_matches_difference_quotient(self):
        rng = np.random.default_rng(13)
        T = make_automorphism([0.2 + 0.1j, -0.3j])
        zs = random_ball_points(rng, 2, 10, radius=0.6)
        J = T.jacobian(zs)
        eps = 1e-6
        for k in range(2):
            e = np.zeros(2, dtype=complex)
            e[k] = eps
            dq = (T.apply(zs + e) - T.apply(zs - e)) / (2 * eps)
            assert np.max(np.abs(dq - J[..., :, k])) < 1e-8


class TestTranslationMap:
    def test_zero_displacement_identity(self):
        rng = np.random.default_rng(17)
        L = make_translation([0.3, 0.1j], [0.0, 0.0])
        zs = random_ball_points(rng, 2, 30)
        assert np.max(np.abs(L.apply(zs) - zs)) < 1e-13

    def test_ball_into_ball(self):
        rng = np.random.default_rng(19)
        L = make_translation([0.4, 0.2j], [0.05, -0.05j])
        zs = random_ball_points(rng, 2, 100, radius=1.0)
        assert np.all(np.linalg.norm(L.apply(zs), axis=-1) <= 1.0 + 1e-12)

    def test_n1_scalar_composition(self):
        # L(0, 0.1, z) = T_{0.1}^{-1}(z) since T_0 = id and Gamma = 1 in n=1
        L = make_translation([0.0], [0.1])
        z = np.array([[0.3 + 0.2j], [-0.5j], [0.7]])
        expected = (z + 0.1) / (1 + 0.1 * z)
        assert np.allclose(L.apply(z), expected, atol=1e-14)

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            make_translation([0.9], [0.2])
        with pytest.raises(ValueError):
            make_translation([0.85], [0.05], eta=0.2)
        with pytest.raises(ValueError):
            make_translation([0.5], [0.15], eta=0.2)
        make_translation([0.8], [0.1], eta=0.2)  # allowed

    def test_holomorphy_probe(self):
        # dbar of L via centered differences at probe scale 1e-4
        rng = np.random.default_rng(23)
        L = make_translation([0.25, -0.1j], [0.06j, 0.03])
        zs = random_ball_points(rng, 2, 10, radius=0.6)
        eps = 1e-4
        for k in range(2):
            e = np.zeros(2, dtype=complex)
            e[k] = eps
            dx = (L.apply(zs + e) - L.apply(zs - e)) / (2 * eps)
            dy = (L.apply(zs + 1j * e) - L.apply(zs - 1j * e)) / (2 * eps)
            dbar = 0.5 * (dx + 1j * dy)
            assert np.max(np.abs(dbar)) <= 1e-8

    def test_jacobian_chain_rule(self):
        rng = np.random.default_rng(29)
        L = make_translation([0.3, 0.0], [0.0, 0.08j])
        zs = random_ball_points(rng, 2, 8, radius=0.5)
        J = L.jacobian(zs)
        eps = 1e-6
        for k in range(2):
            e = np.zeros(2, dtype=complex)
            e[k] = eps
            dq = (L.apply(zs + e) - L.apply(zs - e)) / (2 * eps)
            assert np.max(np.abs(dq - J[..., :, k])) < 1e-8

    def test_functoriality_at_analytic_points(self):
        # L2 after L1 equals the single map with displacement h1 + h2
        rng = np.random.default_rng(31)
        a = np.array([0.2, 0.1j])
        h1 = np.array([0.05, 0.0])
        h2 = np.array([0.0, -0.04j])
        L1 = make_translation(a, h1)
        L2 = make_translation(a + h1, h2)
        L12 = L1.compose(L2)
        zs = random_ball_points(rng, 2, 40)
        assert np.max(np.abs(L2.apply(L1.apply(zs)) - L12.apply(zs))) < 1e-10

        def u(z):
            return np.sum(np.abs(z) ** 2, axis=-1) + z[..., 0].real

        assert np.allclose(u(L2.apply(L1.apply(zs))), u(L12.apply(zs)),
                           atol=1e-10)

    def test_compose_mismatch(self):
        L1 = make_translation([0.2], [0.05])
        with pytest.raises(ValueError):
            L1.compose(make_translation([0.3], [0.01]))


class TestPullbacks:
    def test_scalar_identity(self):
        grid = BallGrid(2, 13)
        u = ScalarField.from_function(
            grid, lambda z: np.sum(np.abs(z) ** 2, axis=-1))
        L = make_translation([0.0, 0.0], [0.0, 0.0])
        pb = pullback_scalar(L, u)
        ok = pb.valid & u.valid
        assert np.allclose(pb.values[ok], u.values[ok], atol=1e-12)

    def test_scalar_constant(self):
        grid = BallGrid(1, 17)
        u = ScalarField.from_function(grid, lambda z: np.full(z.shape[:-1], 3.5))
        pb = pullback_scalar(make_translation([0.2], [0.1]), u)
        assert np.allclose(pb.values[pb.valid], 3.5, atol=1e-12)

    def test_scalar_matches_composition(self):
        grid = BallGrid(2, 33)
        fn = lambda z: np.sum(np.abs(z) ** 2, axis=-1)
        u = ScalarField.from_function(grid, fn)
        L = make_translation([0.2, 0.1j], [0.05, 0.0])
        pb = pullback_scalar(L, u)
        where = pb.valid & grid.interior
        pts = grid.points(where)
        exact = fn(L.apply(pts))
        err = np.max(np.abs(pb.values[where] - exact))
        assert err < 4 * grid.spacing**2

    def test_form_identity(self):
        grid = BallGrid(2, 13)
        x1 = symbolic.var("x1")
        g = HermitianMetricField.from_matrix(
            grid, symbolic.ExprMatrix([[1 + x1**2, 0], [0, 2]], n=2))
        L = make_translation([0.0, 0.0], [0.0, 0.0])
        pb = pullback_form(L, g)
        ok = pb.valid & g.valid
        assert np.allclose(pb.values[ok], g.values[ok], atol=1e-12)

    def test_form_n1_euclidean_closed_form(self):
        # L = T_{-h} in n=1; (L* omega)_{1 1b} = |L'|^2 = ((1-|h|^2)/|1+hbar z|^2)^2
        grid = BallGrid(1, 21)
        g = HermitianMetricField.from_matrix(grid, symbolic.euclidean_metric(1))
        h = 0.2 + 0.1j
        L = make_translation([0.0], [h])
        pb = pullback_form(L, g)
        where = pb.valid & grid.interior
        z = grid.points(where)[..., 0]
        expected = ((1 - abs(h) ** 2) / np.abs(1 + np.conj(h) * z) ** 2) ** 2
        assert np.allclose(pb.values[where][..., 0, 0].real, expected,
                           atol=1e-12)

    def test_form_positivity_nonkahler(self):
        grid = BallGrid(2, 13)
        x1, y2 = symbolic.var("x1"), symbolic.var("y2")
        import sympy as sp
        entries = [[sp.exp(x1), sp.Rational(1, 4) * sp.I * y2],
                   [-sp.Rational(1, 4) * sp.I * y2, 1 + x1**2]]
        g = HermitianMetricField.from_matrix(
            grid, symbolic.ExprMatrix(entries, n=2))
        pb = pullback_form(make_translation([0.15, 0.1j], [0.05, 0.0]), g)
        assert pb.check_hermitian() < 1e-12
        assert herm_min_eig(pb.values)[pb.valid].min() > 0.0
