import json

import numpy as np
import pytest

from kigrasp import fixtures
from kigrasp.errors import SpecFileError
from kigrasp.kinematics import (
    all_link_jacobians,
    forward_kinematics,
    kinematic_jacobian,
    load_gripper,
    model_from_dict,
)


def two_link_chain():
    """Revolute z-axis joint at the origin, child vertex at (1, 0, 0)."""
    return model_from_dict(
        {
            "links": [
                {
                    "name": "base",
                    "parent": None,
                    "joint": {"type": "free6", "axis": [0, 0, 1],
                              "origin": {"R": list(np.eye(3).ravel()), "t": [0, 0, 0]}},
                    "vertices": [[0, 0, 0], [0.2, 0, 0], [0, 0.2, 0], [0, 0, 0.2],
                                 [0.2, 0.2, 0.2]],
                },
                {
                    "name": "arm",
                    "parent": 0,
                    "joint": {"type": "revolute", "axis": [0, 0, 1],
                              "origin": {"R": list(np.eye(3).ravel()), "t": [0, 0, 0]}},
                    "vertices": [[1, 0, 0], [0.8, 0.1, 0], [0.8, -0.1, 0],
                                 [0.9, 0, 0.1], [0.9, 0, -0.1]],
                },
            ]
        }
    )


def random_model(rng):
    """Random 4-link serial chain with mixed joint types."""
    links = [
        {
            "name": "root",
            "parent": None,
            "joint": {"type": "free6", "axis": [0, 0, 1],
                      "origin": {"R": list(np.eye(3).ravel()), "t": [0, 0, 0]}},
            "vertices": (rng.normal(size=(6, 3)) * 0.1).tolist(),
        }
    ]
    for i in range(1, 4):
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        from kigrasp.geometry import rotvec_to_matrix

        R = rotvec_to_matrix(rng.normal(size=3))
        links.append(
            {
                "name": f"link{i}",
                "parent": i - 1,
                "joint": {
                    "type": "revolute" if rng.random() < 0.6 else "prismatic",
                    "axis": axis.tolist(),
                    "origin": {"R": list(R.ravel()), "t": (rng.normal(size=3) * 0.3).tolist()},
                },
                "vertices": (rng.normal(size=(5, 3)) * 0.1).tolist(),
            }
        )
    return model_from_dict({"links": links})


class TestForwardKinematics:
    def test_identity_at_zero(self, jaw_model):
        model = two_link_chain()
        R, t = forward_kinematics(model, np.zeros(model.dof_count))
        assert np.allclose(R, np.eye(3)[None], atol=1e-15)
        assert np.allclose(t, 0.0, atol=1e-15)

    def test_root_translation_offsets_every_link(self):
        model = two_link_chain()
        theta = np.zeros(model.dof_count)
        R0, t0 = forward_kinematics(model, theta)
        theta[0:3] = [1.0, 0.0, 0.0]
        R1, t1 = forward_kinematics(model, theta)
        assert np.allclose(R1, R0, atol=1e-15)
        assert np.allclose(t1 - t0, [[1, 0, 0], [1, 0, 0]], atol=1e-15)

    def test_revolute_quarter_turn(self):
        model = two_link_chain()
        theta = np.zeros(model.dof_count)
        theta[6] = np.pi / 2
        R, t = forward_kinematics(model, theta)
        world_vertex = R[1] @ np.array([1.0, 0.0, 0.0]) + t[1]
        assert np.allclose(world_vertex, [0.0, 1.0, 0.0], atol=1e-12)

    def test_rotations_stay_proper(self):
        rng = np.random.default_rng(7)
        for trial in range(10):
            model = random_model(rng)
            for _ in range(100):
                theta = rng.normal(size=model.dof_count)
                R, _ = forward_kinematics(model, theta)
                for Rl in R:
                    assert np.abs(Rl.T @ Rl - np.eye(3)).max() < 1e-10
                    assert np.linalg.det(Rl) > 0.0

    def test_dimension_mismatch_raises(self):
        model = two_link_chain()
        with pytest.raises(ValueError):
            forward_kinematics(model, np.zeros(model.dof_count + 1))
        with pytest.raises(ValueError):
            forward_kinematics(model, np.full(model.dof_count, np.nan))


class TestJacobian:
    def test_root_translation_columns(self):
        model = two_link_chain()
        J = kinematic_jacobian(model, np.zeros(model.dof_count), 1)
        for k in range(3):
            assert np.allclose(J[:9, k], 0.0)
            e = np.zeros(3)
            e[k] = 1.0
            assert np.allclose(J[9:, k], e)

    def test_non_ancestor_columns_are_zero(self, claw_model):
        theta = np.zeros(claw_model.dof_count)
        # link 1 (first proximal) must not move with any other finger's joints
        J = kinematic_jacobian(claw_model, theta, 1)
        for other in range(2, claw_model.link_count):
            col = claw_model.dof_index[other]
            assert np.allclose(J[:, col], 0.0)

    def test_invalid_link_raises(self):
        model = two_link_chain()
        with pytest.raises(ValueError):
            kinematic_jacobian(model, np.zeros(model.dof_count), 5)

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(8)
        h = 1e-6
        for trial in range(25):
            model = random_model(rng)
            theta = rng.normal(size=model.dof_count) * 0.6
            for link_id in range(model.link_count):
                J = kinematic_jacobian(model, theta, link_id)
                scale = max(1.0, np.abs(J).max())
                for k in range(model.dof_count):
                    e = np.zeros(model.dof_count)
                    e[k] = h
                    Rp, tp = forward_kinematics(model, theta + e)
                    Rm, tm = forward_kinematics(model, theta - e)
                    fd = np.concatenate(
                        [(Rp[link_id] - Rm[link_id]).ravel(), tp[link_id] - tm[link_id]]
                    ) / (2 * h)
                    assert np.abs(J[:, k] - fd).max() / scale < 1e-6

    def test_all_link_jacobians_consistent(self, jaw_model):
        rng = np.random.default_rng(9)
        theta = rng.normal(size=jaw_model.dof_count) * 0.3
        stacked = all_link_jacobians(jaw_model, theta)
        for lid in range(jaw_model.link_count):
            assert np.allclose(stacked[lid], kinematic_jacobian(jaw_model, theta, lid))


class TestGripperSpec:
    def test_fixture_models_load(self):
        for make in (fixtures.parallel_jaw, fixtures.three_finger_claw):
            model = model_from_dict(make())
            assert model.dof_count == 6 + model.link_count - 1

    def test_malformed_spec_errors_carry_context(self, tmp_path):
        spec = fixtures.parallel_jaw()
        spec["links"][1]["joint"]["type"] = "helical"
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(spec))
        with pytest.raises(SpecFileError, match=r"links\[1\].joint.type"):
            load_gripper(path)

    def test_json_syntax_error_reports_line(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"links": [,]}')
        with pytest.raises(SpecFileError, match="line"):
            load_gripper(path)

    def test_nonadjacent_pairs(self, jaw_model, claw_model):
        assert jaw_model.nonadjacent_pairs() == [(1, 2)]
        assert len(claw_model.nonadjacent_pairs()) == 15
