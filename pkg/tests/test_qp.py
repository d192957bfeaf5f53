import numpy as np
import pytest

from kigrasp.oracles import reference_qp
from kigrasp.qp import psd_project, solve_step_qp


def subproblem_objective(H, gL, z_theta, z_slack):
    return 0.5 * z_theta @ H @ z_theta + gL @ z_theta - z_slack


class TestPsdProject:
    def test_identity_unchanged(self):
        assert np.allclose(psd_project(np.eye(4)), np.eye(4))

    def test_direct_clamp(self):
        H = psd_project(np.diag([1.0, -1.0]))
        assert np.allclose(H, np.diag([1.0, 1e-6]))

    def test_random_symmetric_floor(self):
        rng = np.random.default_rng(0)
        for _ in range(30):
            A = rng.standard_normal((6, 6))
            H = psd_project(A + A.T)
            w = np.linalg.eigvalsh(H)
            assert w.min() >= 1e-6 - 1e-12
            # eigenvectors preserved: same projection applied twice is stable
            assert np.allclose(psd_project(H), H, atol=1e-12)


class TestStepQp:
    def test_flat_constraints_give_newton_step(self):
        """With flat constraint gradients the smooth part decouples and the
        slack step lands on the tightest linearized margin."""
        rng = np.random.default_rng(1)
        H = psd_project(rng.standard_normal((5, 5)) @ np.eye(5) + 3 * np.eye(5))
        gL = rng.standard_normal(5)
        margins = np.array([0.7, 0.2, 1.3])
        grads = np.zeros((3, 5))
        sol = solve_step_qp(H, gL, margins, grads)
        assert np.allclose(sol.dtheta, -np.linalg.solve(H, gL), atol=1e-9)
        assert sol.dslack == pytest.approx(0.2, abs=1e-10)

    def test_hand_kkt_single_direction(self):
        # D = 1, one variable, H = 1, zero gradients, zero margin
        sol = solve_step_qp(np.eye(1), np.zeros(1), np.zeros(1), np.zeros((1, 1)))
        assert sol.dtheta[0] == pytest.approx(0.0, abs=1e-12)
        assert sol.dslack == pytest.approx(0.0, abs=1e-12)

    def test_multipliers_sum_to_one(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            p = int(rng.integers(1, 9))
            D = int(rng.integers(1, 30))
            H = psd_project(rng.standard_normal((p, p)))
            sol = solve_step_qp(H, rng.standard_normal(p),
                                rng.standard_normal(D) * 0.2,
                                rng.standard_normal((D, p)) * 0.5)
            assert sol.multipliers.sum() == pytest.approx(1.0, abs=1e-7)
            assert np.all(sol.multipliers >= 0.0)
            assert sol.kkt_residual < 1e-8

    def test_matches_interior_point_reference(self):
        rng = np.random.default_rng(3)
        for _ in range(60):
            p = int(rng.integers(2, 12))
            D = int(rng.integers(1, 40))
            A = rng.standard_normal((p, p))
            H = psd_project(A @ A.T * 10 ** rng.uniform(-2, 1))
            gL = rng.standard_normal(p)
            margins = rng.standard_normal(D) * 0.4 + 0.2
            grads = rng.standard_normal((D, p)) * 10 ** rng.uniform(-2, 0)
            sol = solve_step_qp(H, gL, margins, grads)
            Hbig = np.zeros((p + 1, p + 1))
            Hbig[:p, :p] = H
            Hbig[p, p] = 1e-12
            x0 = np.zeros(p + 1)
            x0[p] = margins.min() - 1.0
            ref = reference_qp(Hbig, np.append(gL, -1.0),
                               np.hstack([-grads, np.ones((D, 1))]), margins, x0=x0)
            gap = abs(
                subproblem_objective(H, gL, sol.dtheta, sol.dslack)
                - subproblem_objective(H, gL, ref[:p], ref[p])
            )
            assert gap <= 1e-6 * max(1.0, abs(subproblem_objective(H, gL, ref[:p], ref[p])))

    def test_never_infeasible_even_with_violated_margins(self):
        # negative margins (already-violated constraints) are fine: the
        # slack step simply goes negative
        rng = np.random.default_rng(4)
        for _ in range(20):
            p, D = 4, 10
            H = psd_project(np.eye(p))
            margins = rng.standard_normal(D) - 1.0
            sol = solve_step_qp(H, rng.standard_normal(p), margins,
                                rng.standard_normal((D, p)))
            lin = margins + sol.dtheta @ rng.standard_normal((D, p)).T * 0  # placeholder
            assert np.isfinite(sol.dslack)

    def test_solution_satisfies_linearized_constraints(self):
        rng = np.random.default_rng(5)
        for _ in range(30):
            p, D = 6, 20
            H = psd_project(rng.standard_normal((p, p)))
            gL = rng.standard_normal(p)
            margins = rng.standard_normal(D) * 0.3
            grads = rng.standard_normal((D, p))
            sol = solve_step_qp(H, gL, margins, grads)
            slack_room = margins + grads @ sol.dtheta - sol.dslack
            assert slack_room.min() > -1e-12  # exact after the final polish
