import numpy as np
import pytest

from kigrasp.oracles import (
    FdSpec,
    convex_distance_oracle,
    fd_gradient,
    reference_qp,
    sampled_cone_max,
)


class TestFdGradient:
    def test_linear_exact(self):
        a = np.array([1.0, -2.0, 3.0])
        g = fd_gradient(lambda x: a @ x, np.array([0.3, 0.1, -0.7]))
        assert np.allclose(g, a, atol=1e-9)

    def test_quadratic_second_order(self):
        x0 = np.array([0.5, -1.5])
        g = fd_gradient(lambda x: x @ x, x0, FdSpec(h=1e-6))
        assert np.allclose(g, 2 * x0, atol=1e-8)

    def test_shrinks_near_infeasible_boundary(self):
        # f is infinite right of x = 1e-7; gradient at 0 still computable
        def f(x):
            return np.inf if x[0] > 1e-7 else float(3.0 * x[0])

        g = fd_gradient(f, np.zeros(1), FdSpec(h=1e-6))
        assert g[0] == pytest.approx(3.0, abs=1e-6)

    def test_exhausted_shrink_names_coordinate(self):
        def f(x):
            return np.inf if abs(x[1]) > 0 else 0.0

        with pytest.raises(FloatingPointError, match="coordinate 1"):
            fd_gradient(f, np.zeros(3), FdSpec(h=1e-6, shrink_rounds=3))


class TestSampledCone:
    def test_never_exceeds_closed_form(self):
        from kigrasp.metric import best_contact_force

        rng = np.random.default_rng(0)
        for _ in range(200):
            x = rng.normal(size=3)
            n = rng.normal(size=3)
            n /= np.linalg.norm(n)
            w = rng.normal(size=6)
            mu = rng.uniform(0, 1.0)
            s_cf, _ = best_contact_force(x, n, w, mu)
            s_or = sampled_cone_max(x, n, w, mu)
            assert s_or <= s_cf + 1e-12

    def test_requires_enough_directions(self):
        with pytest.raises(ValueError):
            sampled_cone_max(np.zeros(3), np.array([0, 0, 1.0]), np.ones(6), 0.5, k_dirs=4)


class TestReferenceQp:
    def test_unconstrained(self):
        rng = np.random.default_rng(1)
        A = rng.standard_normal((4, 4))
        H = A @ A.T + np.eye(4)
        g = rng.standard_normal(4)
        x = reference_qp(H, g, np.zeros((0, 4)), np.zeros(0))
        assert np.allclose(x, -np.linalg.solve(H, g), atol=1e-9)

    def test_single_tight_constraint_projects(self):
        # min 0.5 x^2 s.t. x <= -1  ->  x = -1
        x = reference_qp(np.eye(1), np.zeros(1), np.array([[1.0]]), np.array([-1.0]),
                         x0=np.array([-2.0]))
        assert x[0] == pytest.approx(-1.0, abs=1e-8)

    def test_kkt_residual_tight(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            n, m = 5, 8
            A_ = rng.standard_normal((n, n))
            H = A_ @ A_.T + 0.1 * np.eye(n)
            g = rng.standard_normal(n)
            A = rng.standard_normal((m, n))
            x0 = rng.standard_normal(n) * 0.1
            b = A @ x0 + rng.uniform(0.5, 1.5, m)  # strictly feasible at x0
            x = reference_qp(H, g, A, b, x0=x0)
            # stationarity with the implied multipliers must nearly vanish:
            # check optimality via a projection-free certificate: no feasible
            # descent direction among random probes
            f0 = 0.5 * x @ H @ x + g @ x
            for _ in range(50):
                d = rng.standard_normal(n) * 1e-4
                xt = x + d
                if np.all(A @ xt <= b + 1e-12):
                    ft = 0.5 * xt @ H @ xt + g @ xt
                    assert ft >= f0 - 1e-9


class TestConvexDistanceOracle:
    def test_point_segment_triangle(self):
        V = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], float)
        # above the xy face
        assert convex_distance_oracle([0.2, 0.2, -1.0], V) == pytest.approx(1.0, abs=1e-12)
        # beyond a vertex
        assert convex_distance_oracle([2.0, 0, 0], V) == pytest.approx(1.0, abs=1e-12)
