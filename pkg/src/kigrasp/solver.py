"""Line-search SQP over gripper configurations with slack-variable recast.

Minimizes  barriers(theta) - q_inf(theta)  through the equivalent
constrained form with a scalar slack Q <= value_d(theta), using:

* a QP step subproblem on the barrier curvature (PSD-projected),
* an exact l1 merit  phi = L - Q + rho * sum_d |min(0, value_d - Q)|,
* a penalty weight rho raised just enough to keep the step a descent
  direction of the merit,
* backtracking Armijo line search that rejects any trial state with an
  infinite barrier (strict feasibility is maintained for free), and
* per-pair separating-plane updates interleaved after every accepted step.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .barriers import (
    BarrierConfig,
    init_separating_planes,
    object_barrier,
    self_collision_barrier,
    update_separating_plane,
)
from .errors import InfeasibleInitError
from .geometry import rotation_between
from .metric import direction_strengths, evaluate_objective
from .qp import psd_project, solve_step_qp


@dataclass
class SolverParams:
    gamma: float = 0.1          # descent-margin factor of the penalty rule
    beta: float = 0.5           # backtracking factor
    c: float = 0.1              # Armijo constant
    tau: float = 1e-10          # combined step-norm termination threshold
    max_iters: int = 500
    hessian_floor: float = 1e-6
    # per-iteration inf-norm cap on the step; None picks sqrt(alpha), the
    # kernel correlation length, beyond which the linearized grasp term
    # carries no information and the iterate can drift out of the kernel's
    # attraction basin
    trust_cap: float | None = None
    rho0: float = 1.0           # keeps the slack clamp merit-monotone
    min_step_scale: float = 1e-12

    def __post_init__(self):
        for name in ("gamma", "beta", "c"):
            if not 0.0 < getattr(self, name) < 1.0:
                raise ValueError(f"{name} must lie in (0, 1)")
        if self.tau <= 0.0 or self.max_iters < 1 or self.hessian_floor <= 0.0:
            raise ValueError("bad solver parameters")
        if self.rho0 < 1.0:
            raise ValueError("rho0 must be at least 1 for the slack clamp")


@dataclass
class GraspProblem:
    object_samples: object
    gripper_samples: object
    model: object
    directions: object
    cone: object
    alpha: float
    epsilon: float = 1e-6
    barrier_config: BarrierConfig = field(default_factory=BarrierConfig)
    use_brute_force: bool = False
    fgt_options: dict | None = None
    strengths_field: np.ndarray = None

    def __post_init__(self):
        if self.strengths_field is None:
            self.strengths_field = direction_strengths(
                self.object_samples, self.directions, self.cone
            )

    def objective(self, theta, with_gradients=True):
        return evaluate_objective(
            self.object_samples,
            self.gripper_samples,
            self.model,
            theta,
            self.directions,
            self.cone,
            self.alpha,
            epsilon=self.epsilon,
            strengths_field=self.strengths_field,
            use_brute_force=self.use_brute_force,
            with_gradients=with_gradients,
            fgt_options=self.fgt_options,
        )

    def barrier_values(self, theta, planes):
        bo = object_barrier(self.object_samples, self.model, theta,
                            self.barrier_config, with_derivatives=False)
        if not bo.finite:
            return np.inf, False
        bs = self_collision_barrier(self.model, theta, planes,
                                    self.barrier_config, with_derivatives=False)
        if not bs.finite:
            return np.inf, False
        return bo.value + bs.value, True


@dataclass
class SqpState:
    theta: np.ndarray
    slack: float
    planes: dict
    rho: float
    iteration: int = 0
    last_step_norm: float = np.inf
    stalled: bool = False
    converged: bool = False


@dataclass
class TraceRow:
    iteration: int
    merit: float
    q_inf: float
    step_scale: float
    rho: float
    step_norm: float
    millis: float
    barriers_finite: bool = True
    # merit overshoot against the sufficient-decrease bound; <= ~0 for a
    # correctly accepted step
    armijo_margin: float = 0.0


def merit_value(problem, theta, slack, planes, rho):
    """Exact l1 merit; +inf when any barrier is infinite.

    Returns (phi, objective_values or None).
    """
    L, finite = problem.barrier_values(theta, planes)
    if not finite:
        return np.inf, None
    obj = problem.objective(theta, with_gradients=False)
    phi = L - slack + rho * merit_violation(obj.values, slack)
    return phi, obj.values


def merit_violation(values, slack):
    return float(np.abs(np.minimum(0.0, values - slack)).sum())


def directional_derivative(grad_L, dtheta, dslack, values, slack, rho):
    """Upper bound on the merit's one-sided derivative along the step."""
    return float(grad_L @ dtheta - dslack - rho * merit_violation(values, slack))


def update_penalty_weight(rho, grad_L, dtheta, dslack, values, slack, gamma):
    """Raise rho just past the bound that keeps the step a descent direction.

    With no violated constraint the current rho already works and is kept
    (rho never decreases).
    """
    viol = merit_violation(values, slack)
    denom = (1.0 - gamma) * viol
    if denom <= 1e-14:
        return rho
    bound = (grad_L @ dtheta - dslack) / denom
    if bound <= rho:
        return rho
    return 1.01 * bound


def _armijo_accept(phi, phi0, c, scale, dphi):
    """Sufficient-decrease test, with float slack for the dphi = 0 case."""
    return phi <= phi0 + c * scale * dphi + 1e-12 * max(1.0, abs(phi0))


def line_search(problem, theta, slack, planes, rho, dtheta, dslack, phi0, dphi, params):
    """Backtracking Armijo search; infeasible trials evaluate to +inf and
    are rejected, preserving strict feasibility of accepted states."""
    scale = 1.0
    while scale >= params.min_step_scale:
        trial_theta = theta + scale * dtheta
        trial_slack = slack + scale * dslack
        phi, values = merit_value(problem, trial_theta, trial_slack, planes, rho)
        if _armijo_accept(phi, phi0, params.c, scale, dphi):
            return scale, trial_theta, trial_slack, phi, values
        scale *= params.beta
    return None, theta, slack, phi0, None


def solve(problem, theta0, params=None, planes=None, callback=None):
    """Run the SQP loop from a strictly feasible initial configuration.

    Returns (SqpState, list[TraceRow]).  Raises InfeasibleInitError when the
    start penetrates; a line-search stall terminates with the best state and
    ``stalled=True``.
    """
    params = params or SolverParams()
    theta = np.asarray(theta0, float).copy()
    model = problem.model
    if planes is None:
        planes = init_separating_planes(model, theta)
    L0, finite = problem.barrier_values(theta, planes)
    if not finite:
        raise InfeasibleInitError("initial configuration has penetrating or touching links")

    obj = problem.objective(theta, with_gradients=False)
    slack = float(obj.values.min())
    rho = params.rho0
    state = SqpState(theta, slack, planes, rho)
    trace = []
    phi = L0 - slack  # no violation at the start by construction
    base_cap = params.trust_cap if params.trust_cap is not None else float(np.sqrt(problem.alpha))
    cap_scale = 1.0
    prev_step = None

    for it in range(1, params.max_iters + 1):
        tic = time.perf_counter()
        obj = problem.objective(theta, with_gradients=True)
        bo = object_barrier(problem.object_samples, model, theta, problem.barrier_config)
        bs = self_collision_barrier(model, theta, planes, problem.barrier_config)
        grad_L = bo.gradient + bs.gradient
        H = psd_project(bo.hessian + bs.hessian, params.hessian_floor)

        margins = obj.values - slack
        step = solve_step_qp(H, grad_L, margins, obj.gradients)
        dtheta, dslack = step.dtheta, step.dslack
        trust_cap = base_cap * cap_scale
        cap = np.abs(dtheta).max()
        if cap > trust_cap:
            shrink = trust_cap / cap
            dtheta = dtheta * shrink
            dslack = dslack * shrink

        rho = update_penalty_weight(rho, grad_L, dtheta, dslack, obj.values, slack, params.gamma)
        dphi = directional_derivative(grad_L, dtheta, dslack, obj.values, slack, rho)
        phi0 = bo.value + bs.value - slack + rho * merit_violation(obj.values, slack)

        scale, theta_new, slack_new, phi_acc, values_acc = line_search(
            problem, theta, slack, planes, rho, dtheta, dslack, phi0, dphi, params
        )
        if scale is None:
            state.stalled = True
            state.iteration = it
            trace.append(TraceRow(it, phi0, float(obj.values.min()), 0.0, rho, 0.0,
                                  1e3 * (time.perf_counter() - tic)))
            break

        # tighten the slack onto the actual minimum; never raises the merit
        # because rho >= 1
        slack_new = min(slack_new, float(values_acc.min()))
        accepted = scale * dtheta
        if prev_step is not None:
            # zigzag damping: reversing steps mean the trust region straddles
            # a merit valley; shrink it so the iterate can follow the floor
            denom = np.linalg.norm(accepted) * np.linalg.norm(prev_step)
            if denom > 0.0:
                cosine = float(accepted @ prev_step) / denom
                if cosine < -0.5:
                    cap_scale = max(0.25 * cap_scale, 1e-8)
                elif cosine > 0.5:
                    cap_scale = min(1.2 * cap_scale, 1.0)
        prev_step = accepted
        theta, slack = theta_new, slack_new

        plane_delta = 0.0
        new_planes = {}
        for (p, q), plane in planes.items():
            updated = update_separating_plane(p, q, model, theta, plane,
                                              problem.barrier_config)
            d = updated.parameters() - plane.parameters()
            plane_delta += float(d @ d)
            new_planes[(p, q)] = updated
        planes = new_planes

        step_vec = np.concatenate([scale * dtheta, [scale * dslack]])
        step_norm = float(np.sqrt(step_vec @ step_vec + plane_delta))
        q_inf = float(values_acc.min())
        state = SqpState(theta, slack, planes, rho, it, step_norm)
        margin = phi_acc - (phi0 + params.c * scale * dphi)
        phi = phi_acc
        trace.append(TraceRow(it, phi, q_inf, scale, rho, step_norm,
                              1e3 * (time.perf_counter() - tic),
                              armijo_margin=margin))
        if callback is not None:
            callback(state, trace[-1])
        if step_norm < params.tau:
            state.converged = True
            break
    return state, trace


def initial_configuration(model, object_samples, approach_axis=(0.0, 0.0, 1.0),
                          barrier_config=None, step=0.01, max_extra=3.0):
    """Trivial initialization: root on the object's bounding sphere along the
    approach axis, fingers at their zero midpoints, retreated until every
    barrier is finite."""
    barrier_config = barrier_config or BarrierConfig()
    a = np.asarray(approach_axis, float)
    a = a / np.linalg.norm(a)
    theta = model.zero_configuration()
    theta[3:6] = rotation_between(np.array([0.0, 0.0, 1.0]), -a)
    radius = float(np.linalg.norm(object_samples.positions, axis=1).max())
    standoff = radius
    while standoff <= radius + max_extra:
        theta[0:3] = a * standoff
        bo = object_barrier(object_samples, model, theta, barrier_config,
                            with_derivatives=False)
        if bo.finite:
            try:
                init_separating_planes(model, theta)
            except InfeasibleInitError:
                raise
            return theta
        standoff += step
    raise InfeasibleInitError(
        "could not find a collision-free start along the approach axis"
    )
