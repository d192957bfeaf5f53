import numpy as np
import pytest

from kigrasp import fixtures
from kigrasp.barriers import BarrierConfig
from kigrasp.kinematics import model_from_dict
from kigrasp.metric import FrictionCone, sample_wrench_directions
from kigrasp.sampling import SurfaceSamples, sample_gripper_surface
from kigrasp.solver import GraspProblem, initial_configuration


def sphere_samples(count=400, radius=0.04):
    pts, nrm = fixtures.sphere_cloud(count=count)
    return SurfaceSamples(pts, -nrm, np.full(count, np.pi * radius**2))


@pytest.fixture(scope="session")
def jaw_model():
    return model_from_dict(fixtures.parallel_jaw())


@pytest.fixture(scope="session")
def claw_model():
    return model_from_dict(fixtures.three_finger_claw())


@pytest.fixture(scope="session")
def toy_problem(jaw_model):
    """Small sphere-vs-parallel-jaw problem, exact kernel sums."""
    obj = sphere_samples()
    grip = sample_gripper_surface(jaw_model, 0.04, seed=0)
    dirs = sample_wrench_directions(32, seed=0)
    problem = GraspProblem(
        obj, grip, jaw_model, dirs, FrictionCone(0.7), alpha=1e-3,
        barrier_config=BarrierConfig(d0=0.04), use_brute_force=True,
    )
    theta0 = initial_configuration(jaw_model, obj, barrier_config=problem.barrier_config)
    return problem, theta0


def random_feasible_states(problem, theta0, count, seed, scale=0.01, min_clearance=2e-3):
    """Perturbations of a feasible pose that keep every barrier finite.

    States closer than ``min_clearance`` to contact are rejected: there the
    barrier's higher derivatives blow up and finite-difference oracles at
    h = 1e-6 lose their validity.
    """
    from kigrasp.barriers import (
        init_separating_planes,
        object_clearances,
        self_collision_barrier,
    )
    from kigrasp.kinematics import forward_kinematics

    rng = np.random.default_rng(seed)
    out = []
    planes = init_separating_planes(problem.model, theta0)
    guard = 0
    while len(out) < count:
        guard += 1
        if guard > 500 * count:
            raise RuntimeError("could not find enough feasible test states")
        theta = theta0 + rng.normal(scale=scale, size=theta0.size)
        theta[2] += abs(rng.normal(scale=scale))  # bias away from contact
        R, t = forward_kinematics(problem.model, theta)
        dist, _, _ = object_clearances(problem.object_samples, problem.model,
                                       R, t, problem.barrier_config.d0)
        if dist.min() < min_clearance:
            continue
        bs = self_collision_barrier(problem.model, theta, planes,
                                    problem.barrier_config, with_derivatives=False)
        if bs.finite:
            out.append(theta)
    return out, planes
