"""Grasp quality objective: per-direction resisting wrench and gradients.

For each sampled external wrench direction w the objective accumulates,
over object samples x and gripper samples y,

    value[d] = sum_x a_x s_d(x) sum_y a_y exp(-|x - y|^2 / alpha)

where s_d(x) is the closed-form payoff of the best friction-cone force at
x against direction d, and a are the Poisson-disk quadrature weights.  The
grasp quality q_inf is the minimum of value[] over directions.

Gradients with respect to the gripper configuration flow through the
per-link rigid transforms: gripper points obey y = R yl + t, so
d/dt_j = sum dK/dy_j and d/dR_ij = sum dK/dy_i * yl_j, both of which the
kernel evaluator produces from strength channels {a, a*yl_1, a*yl_2,
a*yl_3} per link.  Contraction with the kinematic Jacobians finishes the
chain rule.
"""

import math
from dataclasses import dataclass

import numpy as np

from .fgt import brute_force_sum, fgt_evaluate
from .kinematics import all_link_jacobians, forward_kinematics


@dataclass
class FrictionCone:
    """Coulomb cone: tangential force at most mu times normal force."""

    mu: float = 0.7

    def __post_init__(self):
        if self.mu < 0.0:
            raise ValueError("friction coefficient must be non-negative")


@dataclass
class WrenchDirectionSet:
    directions: np.ndarray      # (D, 6) unit rows

    def __post_init__(self):
        self.directions = np.atleast_2d(np.asarray(self.directions, float))
        if self.directions.shape[1] != 6 or self.directions.shape[0] < 1:
            raise ValueError("need at least one 6-vector direction")
        norms = np.linalg.norm(self.directions, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-12):
            raise ValueError("directions must be unit 6-vectors")

    def __len__(self):
        return self.directions.shape[0]


def sample_wrench_directions(count, seed=0):
    """Draw ``count`` unit 6-vectors from a seeded generator (reproducible)."""
    if count < 1:
        raise ValueError("need at least one direction")
    rng = np.random.default_rng(seed)
    raw = rng.standard_normal((count, 6))
    return WrenchDirectionSet(raw / np.linalg.norm(raw, axis=1, keepdims=True))


def best_contact_force(position, normal, wrench_dir, mu):
    """Optimal unit-capped friction-cone force against one wrench direction.

    Maximizes <w, [f; x cross f]> subject to f in the cone at (x, n) with
    <n, f> <= 1.  Writing q = u + v cross x for w = [u; v], the optimum is
    f = n + mu * q_t/|q_t| with payoff q_n + mu |q_t| when that is positive,
    else f = 0.  Returns (payoff, force).
    """
    x = np.asarray(position, float)
    n = np.asarray(normal, float)
    w = np.asarray(wrench_dir, float)
    q = w[:3] + np.cross(w[3:], x)
    q_n = float(q @ n)
    q_t = q - q_n * n
    t_norm = float(np.linalg.norm(q_t))
    s = q_n + mu * t_norm
    if s <= 0.0:
        return 0.0, np.zeros(3)
    f = n + (mu / t_norm) * q_t if t_norm > 0.0 else n.copy()
    return s, f


def direction_strengths(samples, dirs, cone):
    """Payoff field s_d(x) for all samples and directions, shape (N, D).

    Depends only on object geometry and the direction set, not on the
    gripper configuration, so callers evaluate it once per problem.
    """
    X = samples.positions
    Nrm = samples.normals
    W = dirs.directions
    q = W[None, :, :3] + np.cross(W[None, :, 3:], X[:, None, :])
    q_n = np.einsum("ndk,nk->nd", q, Nrm)
    q_t = q - q_n[:, :, None] * Nrm[:, None, :]
    s = q_n + cone.mu * np.linalg.norm(q_t, axis=2)
    return np.maximum(s, 0.0)


@dataclass
class GraspObjective:
    values: np.ndarray          # (D,) per-direction resisting wrench
    gradients: np.ndarray       # (D, dof)
    q_inf: float
    worst_direction: int


def gripper_strength_channels(gripper):
    """Strength matrix (M, 4L): per link the columns {a, a yl_1, a yl_2, a yl_3}."""
    M = len(gripper)
    L = int(gripper.link_ids.max()) + 1
    S = np.zeros((M, 4 * L))
    rows = np.arange(M)
    a = gripper.area_weights
    lid = gripper.link_ids
    S[rows, 4 * lid] = a
    for k in range(3):
        S[rows, 4 * lid + 1 + k] = a * gripper.positions[:, k]
    return S


def evaluate_objective(
    object_samples,
    gripper_samples,
    model,
    theta,
    dirs,
    cone,
    alpha,
    epsilon=1e-6,
    strengths_field=None,
    use_brute_force=False,
    with_gradients=True,
    fgt_options=None,
):
    """Per-direction resisting-wrench values and configuration gradients.

    ``gripper_samples`` holds link-local points; this transforms them with
    the forward kinematics of ``theta``, runs one fused kernel evaluation
    (1 value + 12 gradient channels per link), and contracts the transform
    gradients with the kinematic Jacobians.

    ``strengths_field`` may carry a precomputed (N, D) payoff field.
    ``use_brute_force`` swaps the fast evaluator for exact summation.
    """
    theta = np.asarray(theta, float)
    R, t = forward_kinematics(model, theta)
    lid = gripper_samples.link_ids
    world = np.einsum("nij,nj->ni", R[lid], gripper_samples.positions) + t[lid]

    if strengths_field is None:
        strengths_field = direction_strengths(object_samples, dirs, cone)
    a_obj = object_samples.area_weights
    target_w = strengths_field * a_obj[:, None]          # (N, D)

    if with_gradients:
        S = gripper_strength_channels(gripper_samples)   # (M, 4L)
    else:
        S = gripper_samples.area_weights[:, None]
    evaluator = brute_force_sum if use_brute_force else fgt_evaluate
    kwargs = {} if use_brute_force else {"epsilon": epsilon, **(fgt_options or {})}
    res = evaluator(world, S, object_samples.positions, alpha,
                    with_gradients=with_gradients, **kwargs)

    L = model.link_count
    if with_gradients:
        unit_cols = 4 * np.arange(L)
        kernel_sum = res.values[:, unit_cols].sum(axis=1)     # (N,)
    else:
        kernel_sum = res.values[:, 0]
    values = target_w.T @ kernel_sum                          # (D,)

    if not with_gradients:
        arg = int(np.argmin(values))
        return GraspObjective(values, None, float(values[arg]), arg)

    # per-direction transform gradients: (D, 4L * 3), laid out [channel, j]
    tg = target_w.T @ res.gradients.reshape(len(object_samples), -1)
    tg = tg.reshape(len(dirs), 4 * L, 3)
    jac = all_link_jacobians(model, theta)                    # (L, 12, dof)
    grads = np.zeros((len(dirs), model.dof_count))
    for l in range(L):
        # translation rows: channel 4l (plain weights), all 3 coordinates
        vec12 = np.empty((len(dirs), 12))
        vec12[:, 9:] = tg[:, 4 * l, :]
        # rotation rows: dG/dR_ij = sum a yl_j dK/dy_i -> channel 4l+1+j, coord i
        for i in range(3):
            for j in range(3):
                vec12[:, 3 * i + j] = tg[:, 4 * l + 1 + j, i]
        grads += vec12 @ jac[l]
    arg = int(np.argmin(values))
    return GraspObjective(values, grads, float(values[arg]), arg)


def relaxation_kernel_disk_integral(alpha, disk_radius):
    """Closed form of the polar integral of the complementarity-relaxation
    kernel over a disk of the given radius.

    Computes integral_0^r -s / (log(alpha) (s^2 + alpha^2)) ds, which tends
    to 1 as alpha decreases to 0 (test utility, not planner runtime code).
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie strictly between 0 and 1")
    if disk_radius <= 0.0:
        raise ValueError("disk radius must be positive")
    la = math.log(alpha)
    return (la - 0.5 * math.log(disk_radius**2 + alpha**2)) / la
