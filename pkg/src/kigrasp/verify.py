"""End-to-end oracle suite behind ``kigrasp verify``.

Each check recomputes a core quantity through an independent route and
compares.  The suite is deliberately sensitive: flipping a sign in the
expansion gradient moments or in the line-search acceptance rule makes the
corresponding check fail.
"""

import numpy as np

from . import fixtures, solver
from .barriers import BarrierConfig, init_separating_planes, object_barrier, self_collision_barrier
from .fgt import brute_force_sum, fgt_evaluate, m2m_expand
from .geometry import ConvexShape, point_to_convex_distance
from .kinematics import model_from_dict
from .metric import FrictionCone, best_contact_force, sample_wrench_directions
from .oracles import (
    FdSpec,
    convex_distance_oracle,
    fd_gradient,
    reference_qp,
    sampled_cone_max,
)
from .qp import psd_project, solve_step_qp
from .sampling import SurfaceSamples, sample_gripper_surface


def _toy_problem(seed=0, n_obj=180, radius=0.05, use_brute=True):
    rng = np.random.default_rng(seed)
    pts, nrm = fixtures.sphere_cloud(count=n_obj)
    obj = SurfaceSamples(pts, -nrm, np.full(n_obj, np.pi * radius**2))
    model = model_from_dict(fixtures.parallel_jaw())
    grip = sample_gripper_surface(model, 0.05, seed=seed)
    dirs = sample_wrench_directions(16, seed=seed)
    cone = FrictionCone(0.7)
    problem = solver.GraspProblem(
        obj, grip, model, dirs, cone, alpha=1e-3,
        barrier_config=BarrierConfig(d0=0.04), use_brute_force=use_brute,
    )
    theta = solver.initial_configuration(model, obj, barrier_config=problem.barrier_config)
    return problem, theta, rng


def check_fgt_values(seed=0):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for n, kwargs in ((800, {}), (500, dict(n0=16, near_width=1, force_expansion=True))):
        Y = rng.random((n, 3)) * 0.25
        X = rng.random((n, 3)) * 0.25
        S = rng.standard_normal((n, 4))
        ref = brute_force_sum(Y, S, X, 1e-3, with_gradients=False)
        res = fgt_evaluate(Y, S, X, 1e-3, epsilon=1e-6, with_gradients=False, **kwargs)
        err = np.abs(res.values - ref.values).max(0) / np.abs(S).sum(0)
        worst = max(worst, float(err.max()))
    return worst < 1e-6, f"max value error {worst:.2e} (budget 1e-6)"


def check_fgt_gradients(seed=1):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for n, kwargs in ((800, {}), (500, dict(n0=16, near_width=1, force_expansion=True))):
        Y = rng.random((n, 3)) * 0.25
        X = rng.random((n, 3)) * 0.25
        S = rng.standard_normal((n, 4))
        ref = brute_force_sum(Y, S, X, 1e-3)
        res = fgt_evaluate(Y, S, X, 1e-3, epsilon=1e-6, **kwargs)
        scale = np.sqrt(1e-3) / 2.0
        err = np.abs(res.gradients - ref.gradients).max((0, 2)) / np.abs(S).sum(0) * scale
        worst = max(worst, float(err.max()))
    return worst < 1e-6, f"max gradient error {worst:.2e} (budget 1e-6)"


def check_moment_identity(seed=2):
    rng = np.random.default_rng(seed)
    pts = rng.random((40, 3)) * 0.05
    S = rng.random((40, 2))
    hc = m2m_expand(pts, S, pts.mean(axis=0), 1e-3, 8)
    k = hc.c.shape[1]
    expected = (-2.0 / np.sqrt(1e-3)) * hc.a[:, :k, :k, :k]
    ok = np.array_equal(hc.c, expected)
    return ok, "scaled moments equal -2/sqrt(alpha) times value moments" if ok else "identity broken"


def check_force_closed_form(seed=3, trials=300):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        x = rng.standard_normal(3) * 0.3
        n = rng.standard_normal(3)
        n /= np.linalg.norm(n)
        w = rng.standard_normal(6)
        w /= np.linalg.norm(w)
        mu = rng.uniform(0.0, 1.2)
        s, _ = best_contact_force(x, n, w, mu)
        ref = sampled_cone_max(x, n, w, mu)
        worst = max(worst, abs(s - ref) / max(ref, 1e-9))
    return worst < 1e-3, f"max relative payoff gap {worst:.2e} (budget 1e-3)"


def check_convex_distance(seed=4, trials=60):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        V = rng.standard_normal((4 + rng.integers(0, 5), 3))
        try:
            shape = ConvexShape(V)
        except Exception:
            continue
        x = rng.standard_normal(3) * 2.0
        d, _, _ = point_to_convex_distance(x, shape, np.eye(3), np.zeros(3))
        ref = convex_distance_oracle(x, V)
        if d == 0.0:
            continue
        worst = max(worst, abs(d - ref))
    return worst < 1e-10, f"max distance gap {worst:.2e} (budget 1e-10)"


def check_objective_gradient():
    problem, theta, _ = _toy_problem()
    obj = problem.objective(theta)
    d = int(np.argmin(obj.values))

    def value_d(th):
        return problem.objective(th, with_gradients=True).values[d]

    ref = fd_gradient(value_d, theta, FdSpec(h=1e-6))
    scale = max(float(np.abs(ref).max()), 1e-12)
    err = float(np.abs(obj.gradients[d] - ref).max()) / scale
    return err < 1e-4, f"worst-direction gradient rel err {err:.2e} (budget 1e-4)"


def check_barrier_gradients():
    problem, theta, _ = _toy_problem()
    model = problem.model
    cfg = problem.barrier_config
    planes = init_separating_planes(model, theta)
    bo = object_barrier(problem.object_samples, model, theta, cfg)
    bs = self_collision_barrier(model, theta, planes, cfg)

    ref_o = fd_gradient(
        lambda th: object_barrier(problem.object_samples, model, th, cfg,
                                  with_derivatives=False).value, theta)
    ref_s = fd_gradient(
        lambda th: self_collision_barrier(model, th, planes, cfg,
                                          with_derivatives=False).value, theta)
    e_o = np.abs(bo.gradient - ref_o).max() / max(np.abs(ref_o).max(), 1e-10)
    e_s = np.abs(bs.gradient - ref_s).max() / max(np.abs(ref_s).max(), 1e-10)
    err = max(float(e_o), float(e_s))
    return err < 1e-4, f"barrier gradient rel err {err:.2e} (budget 1e-4)"


def check_qp_against_interior_point(seed=5, trials=40):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        p = int(rng.integers(2, 12))
        D = int(rng.integers(2, 40))
        A = rng.standard_normal((p, p))
        H = psd_project(A @ A.T, 1e-6)
        gL = rng.standard_normal(p)
        margins = rng.standard_normal(D) * 0.3 + 0.2
        grads = rng.standard_normal((D, p))
        sol = solve_step_qp(H, gL, margins, grads)
        Hbig = np.zeros((p + 1, p + 1))
        Hbig[:p, :p] = H
        gbig = np.append(gL, -1.0)
        Aq = np.hstack([-grads, np.ones((D, 1))])
        x0 = np.zeros(p + 1)
        x0[p] = margins.min() - 1.0
        ref = reference_qp(Hbig, gbig, Aq, margins, x0=x0)

        def obj(z):
            return 0.5 * z[:p] @ H @ z[:p] + gL @ z[:p] - z[p]

        gap = abs(obj(np.append(sol.dtheta, sol.dslack)) - obj(ref))
        worst = max(worst, gap / max(abs(obj(ref)), 1.0))
    return worst < 1e-6, f"max objective gap {worst:.2e} (budget 1e-6)"


class _QuadraticStubProblem:
    """Analytic stand-in driving the production line search through a
    feasible full step that overshoots the sufficient-decrease bound."""

    def barrier_values(self, theta, planes):
        return float(theta @ theta), True

    def objective(self, theta, with_gradients=False):
        from .metric import GraspObjective

        values = np.array([10.0])
        return GraspObjective(values, None, 10.0, 0)


def check_merit_decrease():
    problem, theta, _ = _toy_problem(n_obj=120)
    params = solver.SolverParams(max_iters=8)
    _, trace = solver.solve(problem, theta, params)
    merits = [row.merit for row in trace]
    ok = all(b <= a + 1e-9 * max(1.0, abs(a)) for a, b in zip(merits, merits[1:]))
    ok = ok and len(trace) > 0
    rhos = [row.rho for row in trace]
    ok = ok and all(b >= a for a, b in zip(rhos, rhos[1:]))
    # every accepted step must satisfy the sufficient-decrease inequality
    worst_margin = max(row.armijo_margin for row in trace)
    ok = ok and worst_margin <= 1e-9 * max(1.0, abs(merits[0]))

    # overshoot probe: merit (theta^2 - slack) along theta 1 -> -1.2 rises at
    # the full step; a correct rule backtracks to half and satisfies the bound
    stub = _QuadraticStubProblem()
    theta0 = np.array([1.0])
    dtheta = np.array([-2.2])
    dphi = float(2.0 * theta0 @ dtheta)
    phi0 = float(theta0 @ theta0)
    p = solver.SolverParams()
    scale, theta_acc, _, phi_acc, _ = solver.line_search(
        stub, theta0, 0.0, {}, 1.0, dtheta, 0.0, phi0, dphi, p
    )
    probe_ok = scale is not None and phi_acc <= phi0 + p.c * scale * dphi + 1e-9
    ok = ok and probe_ok
    return ok, (
        f"{len(trace)} iterations, merit span [{min(merits):.4g}, {max(merits):.4g}], "
        f"worst overshoot {worst_margin:.2e}, probe step {scale}"
    )


ALL_CHECKS = [
    ("fgt-values-vs-brute-force", check_fgt_values),
    ("fgt-gradients-vs-brute-force", check_fgt_gradients),
    ("hermite-scaled-moment-identity", check_moment_identity),
    ("force-closed-form-vs-sampled-cone", check_force_closed_form),
    ("convex-distance-vs-feature-oracle", check_convex_distance),
    ("objective-gradient-vs-finite-difference", check_objective_gradient),
    ("barrier-gradients-vs-finite-difference", check_barrier_gradients),
    ("qp-active-set-vs-interior-point", check_qp_against_interior_point),
    ("merit-decrease-and-penalty-monotone", check_merit_decrease),
]


def run_verification(stream=None):
    """Run every check; returns True when all pass, printing one line each."""
    import sys

    stream = stream or sys.stdout
    all_ok = True
    width = max(len(name) for name, _ in ALL_CHECKS)
    for name, fn in ALL_CHECKS:
        try:
            ok, detail = fn()
        except Exception as exc:  # a crashed check is a failed check
            ok, detail = False, f"raised {type(exc).__name__}: {exc}"
        all_ok &= ok
        stream.write(f"{name:<{width}}  {'PASS' if ok else 'FAIL'}  {detail}\n")
    return all_ok
