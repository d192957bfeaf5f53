"""Acceptance suite: one test per criterion, printed as a pass/fail line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the lines.  The
expensive planner runs are shared session fixtures (both bundled grippers,
once with the fast evaluator and once with exact summation).
"""

import time

import numpy as np
import pytest

from kigrasp import fixtures
from kigrasp.barriers import BarrierConfig, init_separating_planes, object_barrier, self_collision_barrier
from kigrasp.cli import RunConfig, bench_rows
from kigrasp.fgt import brute_force_sum, fgt_evaluate
from kigrasp.geometry import points_to_convex_distance
from kigrasp.kinematics import forward_kinematics, model_from_dict
from kigrasp.metric import (
    FrictionCone,
    best_contact_force,
    relaxation_kernel_disk_integral,
    sample_wrench_directions,
)
from kigrasp.oracles import reference_qp, sampled_cone_max
from kigrasp.qp import psd_project, solve_step_qp
from kigrasp.sampling import poisson_disk_cloud, sample_gripper_surface
from kigrasp.solver import GraspProblem, SolverParams, initial_configuration, solve

from conftest import random_feasible_states

POISSON_R = 0.015
ALPHA = 1e-3

# iteration caps: the jaw's grasp valley needs the long tail to settle onto
# its floor; the claw locks in quickly
LOOP_ITERS = {"parallel_jaw": 400, "three_finger_claw": 150}

# q_inf regression values frozen from the first validated fixture runs
# (seed 0, the exact configurations built below)
FROZEN_Q_INF = {
    ("parallel_jaw", "box"): 1.097051339e-04,
    ("three_finger_claw", "box"): 6.011362599e-05,
    ("parallel_jaw", "sphere"): 3.079354421e-05,
}
FROZEN_REL_TOL = 1e-3


def report(num, name, ok, detail):
    print(f"criterion {num} ({name}): {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, f"criterion {num} ({name}): {detail}"


def build_fixture_problem(gripper_name, use_brute, object_name="box"):
    pts, nrm = fixtures.OBJECT_GENERATORS[object_name](count=60000)
    obj = poisson_disk_cloud(pts, -nrm, POISSON_R, seed=0)
    model = model_from_dict(fixtures.GRIPPER_GENERATORS[gripper_name]())
    grip = sample_gripper_surface(model, POISSON_R, seed=0)
    dirs = sample_wrench_directions(128, seed=0)
    problem = GraspProblem(
        obj, grip, model, dirs, FrictionCone(0.7), alpha=ALPHA, epsilon=1e-6,
        barrier_config=BarrierConfig(d0=2 * POISSON_R), use_brute_force=use_brute,
    )
    return problem


def run_fixture(gripper_name, use_brute, object_name="box", max_iters=None):
    problem = build_fixture_problem(gripper_name, use_brute, object_name)
    theta0 = initial_configuration(
        problem.model, problem.object_samples, barrier_config=problem.barrier_config
    )
    t0 = time.perf_counter()
    state, trace = solve(
        problem, theta0,
        SolverParams(max_iters=max_iters or LOOP_ITERS[gripper_name]),
    )
    return {
        "problem": problem,
        "state": state,
        "trace": trace,
        "seconds": time.perf_counter() - t0,
    }


@pytest.fixture(scope="session")
def fixture_solves():
    out = {}
    for gripper_name in ("parallel_jaw", "three_finger_claw"):
        for label, use_brute in (("fgt", False), ("brute", True)):
            out[(gripper_name, label)] = run_fixture(gripper_name, use_brute)
    return out


@pytest.fixture(scope="session")
def sphere_jaw_solve():
    return run_fixture("parallel_jaw", False, object_name="sphere", max_iters=60)


def test_criterion_1_fgt_accuracy():
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst = 0.0
    sizes = [100] * 33 + [1000] * 12 + [5000] * 5  # 50 instances
    for n in sizes:
        Y = rng.random((n, 3))
        X = rng.random((n, 3))
        S = rng.standard_normal((n, 13))
        res = fgt_evaluate(Y, S, X, ALPHA, epsilon=1e-6)
        ref = brute_force_sum(Y, S, X, ALPHA)
        sumS = np.abs(S).sum(0)
        ev = (np.abs(res.values - ref.values).max(0) / sumS).max()
        eg = (np.abs(res.gradients - ref.gradients).max((0, 2)) / sumS).max() * np.sqrt(ALPHA) / 2
        worst = max(worst, float(ev), float(eg))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-6 and elapsed < 30.0
    report(1, "fgt accuracy", ok,
           f"max channel error {worst:.2e} over 50 instances (budget 1e-6), {elapsed:.1f}s")


def test_criterion_2_fgt_scaling():
    t0 = time.perf_counter()
    cfg = RunConfig(poisson_r=0.02, directions=128)
    rows = bench_rows(cfg, densities=(1, 2, 4, 8, 16))
    elapsed = time.perf_counter() - t0
    ratios = [r["time_brute_ms"] / r["time_fgt_ms"] for r in rows]
    inversions = sum(1 for a, b in zip(ratios, ratios[1:]) if b < a)
    top_ratio = ratios[-1]
    growth = rows[-1]["time_fgt_ms"] / rows[0]["time_fgt_ms"]
    per_doubling = growth ** 0.25
    ok = (inversions <= 1) and (top_ratio >= 2.0) and (per_doubling <= 2.5) and elapsed < 300
    report(2, "fgt scaling", ok,
           f"ratios {['%.1f' % r for r in ratios]}, top {top_ratio:.1f}x, "
           f"mean per-doubling growth {per_doubling:.2f}x, {elapsed:.0f}s")


def test_criterion_3_fgt_fidelity_in_loop(fixture_solves):
    details = []
    ok = True
    for gripper_name in ("parallel_jaw", "three_finger_claw"):
        qf = fixture_solves[(gripper_name, "fgt")]["trace"][-1].q_inf
        qb = fixture_solves[(gripper_name, "brute")]["trace"][-1].q_inf
        rel = abs(qf - qb) / abs(qb)
        ok &= rel < 1e-4
        details.append(f"{gripper_name}: fgt {qf:.6e} vs brute {qb:.6e} (rel {rel:.1e})")
    seconds = sum(v["seconds"] for v in fixture_solves.values())
    ok &= seconds < 600
    report(3, "fgt fidelity in the loop", ok, "; ".join(details) + f"; solves {seconds:.0f}s")


def _near_pair_model():
    """Two cubes 0.04 apart (inside the 0.1 barrier support) on a far root."""
    eye = list(np.eye(3).ravel())

    def box(cx, half):
        return [[cx + sx * half, sy * half, sz * half]
                for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)]

    spec = {"links": [
        {"name": "root", "parent": None,
         "joint": {"type": "free6", "axis": [0, 0, 1],
                   "origin": {"R": eye, "t": [0, 0, 0]}},
         "vertices": box(0.0, 0.2)},
        {"name": "left", "parent": 0,
         "joint": {"type": "revolute", "axis": [0, 0, 1],
                   "origin": {"R": eye, "t": [-0.52, 0, 0]}},
         "vertices": box(0.0, 0.5)},
        {"name": "right", "parent": 0,
         "joint": {"type": "revolute", "axis": [0, 1, 0],
                   "origin": {"R": eye, "t": [0.52, 0, 0]}},
         "vertices": box(0.0, 0.5)},
    ]}
    spec["links"][0]["vertices"] = box(0.0, 0.1)
    for v in spec["links"][0]["vertices"]:
        v[2] += 3.0  # park the root body away from the pair
    return model_from_dict(spec)


def test_criterion_4_gradient_correctness(toy_problem):
    problem, theta0 = toy_problem
    t0 = time.perf_counter()
    states, planes = random_feasible_states(problem, theta0, 100, seed=11)
    h = 1e-6
    worst = {"objective": 0.0, "clearance": 0.0, "separation": 0.0}
    for theta in states:
        obj = problem.objective(theta)
        d = int(np.argmin(obj.values))
        bo = object_barrier(problem.object_samples, problem.model, theta,
                            problem.barrier_config)
        fd_o = np.zeros(theta.size)
        fd_b = np.zeros(theta.size)
        for k in range(theta.size):
            e = np.zeros(theta.size)
            e[k] = h
            fd_o[k] = (problem.objective(theta + e, with_gradients=False).values[d]
                       - problem.objective(theta - e, with_gradients=False).values[d]) / (2 * h)
            fd_b[k] = (object_barrier(problem.object_samples, problem.model, theta + e,
                                      problem.barrier_config, with_derivatives=False).value
                       - object_barrier(problem.object_samples, problem.model, theta - e,
                                        problem.barrier_config, with_derivatives=False).value) / (2 * h)
        worst["objective"] = max(worst["objective"],
                                 np.abs(obj.gradients[d] - fd_o).max() / max(np.abs(fd_o).max(), 1e-12))
        worst["clearance"] = max(worst["clearance"],
                                 np.abs(bo.gradient - fd_b).max() / max(np.abs(fd_b).max(), 1e-10))

    # separation barrier: a model whose non-adjacent pair sits inside the
    # barrier support, so the gradient is non-trivial
    pair_model = _near_pair_model()
    pair_cfg = BarrierConfig(d0=0.1)
    base = pair_model.zero_configuration()
    pair_planes = init_separating_planes(pair_model, base)
    rng = np.random.default_rng(12)
    checked = 0
    while checked < 100:
        theta = base.copy()
        theta[0:6] += rng.normal(scale=3e-3, size=6)
        theta[6:] += rng.normal(scale=3e-3, size=theta.size - 6)
        bs = self_collision_barrier(pair_model, theta, pair_planes, pair_cfg)
        if not bs.finite or bs.value == 0.0:
            continue
        fd_s = np.zeros(theta.size)
        for k in range(theta.size):
            e = np.zeros(theta.size)
            e[k] = h
            fd_s[k] = (self_collision_barrier(pair_model, theta + e, pair_planes,
                                              pair_cfg, with_derivatives=False).value
                       - self_collision_barrier(pair_model, theta - e, pair_planes,
                                                pair_cfg, with_derivatives=False).value) / (2 * h)
        worst["separation"] = max(worst["separation"],
                                  np.abs(bs.gradient - fd_s).max() / max(np.abs(fd_s).max(), 1e-12))
        checked += 1
    elapsed = time.perf_counter() - t0
    ok = all(v < 1e-4 for v in worst.values()) and elapsed < 300
    report(4, "gradient correctness", ok,
           f"rel errors: objective {worst['objective']:.1e}, clearance barrier "
           f"{worst['clearance']:.1e}, separation barrier {worst['separation']:.1e}; "
           f"100 states each, {elapsed:.0f}s")


def test_criterion_5_closed_form_force():
    rng = np.random.default_rng(5)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(1000):
        x = rng.normal(size=3) * 0.5
        n = rng.normal(size=3)
        n /= np.linalg.norm(n)
        w = rng.normal(size=6)
        w /= np.linalg.norm(w)
        mu = rng.uniform(0.0, 1.5)
        s, _ = best_contact_force(x, n, w, mu)
        ref = sampled_cone_max(x, n, w, mu, k_dirs=720)
        worst = max(worst, abs(s - ref) / max(ref, 1e-9))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-3 and elapsed < 10
    report(5, "closed-form force", ok,
           f"max relative gap {worst:.2e} over 1000 draws (budget 1e-3), {elapsed:.1f}s")


def test_criterion_6_kernel_disk_integral_limit():
    vals = {a: relaxation_kernel_disk_integral(a, 0.1)
            for a in (1e-4, 1e-8, 1e-16, 1e-30)}
    gaps = [abs(1.0 - vals[a]) for a in (1e-4, 1e-8, 1e-16, 1e-30)]
    monotone = all(b < a for a, b in zip(gaps, gaps[1:]))
    ok = monotone and gaps[-1] < 0.05
    report(6, "relaxation kernel limit", ok,
           f"values {[f'{vals[a]:.4f}' for a in (1e-4, 1e-8, 1e-16, 1e-30)]}, "
           f"final gap {gaps[-1]:.3f} (budget 0.05)")


def test_criterion_7_collision_free_guarantee(fixture_solves):
    t0 = time.perf_counter()
    details = []
    ok = True
    pts, nrm = fixtures.box_cloud(count=200000)
    dense = poisson_disk_cloud(pts, -nrm, POISSON_R / np.sqrt(10.0), seed=1)
    for gripper_name in ("parallel_jaw", "three_finger_claw"):
        info = fixture_solves[(gripper_name, "fgt")]
        ok &= all(r.barriers_finite for r in info["trace"])
        model = info["problem"].model
        R, t = forward_kinematics(model, info["state"].theta)
        dmin = np.inf
        for lid, link in enumerate(model.links):
            d, _, _ = points_to_convex_distance(dense.positions, link.shape,
                                                R[lid], t[lid], want_grad=False)
            dmin = min(dmin, float(d.min()))
        ok &= dmin > 0.0
        details.append(f"{gripper_name}: {len(dense)} dense probes, min distance {dmin:.2e}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 600
    report(7, "collision-free guarantee", ok, "; ".join(details) + f"; {elapsed:.0f}s")


def _sqp_trace_properties(trace, state, max_iters):
    merits = [r.merit for r in trace]
    ok = all(b <= a + 1e-9 * max(1.0, abs(a)) for a, b in zip(merits, merits[1:]))
    ok &= max(r.armijo_margin for r in trace) <= 1e-9 * max(1.0, abs(merits[0]))
    rhos = [r.rho for r in trace]
    ok &= all(b >= a for a, b in zip(rhos, rhos[1:]))
    ok &= state.converged or state.iteration >= max_iters or state.stalled
    return ok


def test_criterion_8_sqp_behavior(fixture_solves, sphere_jaw_solve):
    details = []
    ok = True
    runs = [
        ("parallel_jaw", "sphere", sphere_jaw_solve, 60),
        ("parallel_jaw", "box", fixture_solves[("parallel_jaw", "fgt")],
         LOOP_ITERS["parallel_jaw"]),
        ("three_finger_claw", "box", fixture_solves[("three_finger_claw", "fgt")],
         LOOP_ITERS["three_finger_claw"]),
    ]
    for gripper_name, object_name, info, iters in runs:
        trace, state = info["trace"], info["state"]
        ok &= _sqp_trace_properties(trace, state, iters)
        q = trace[-1].q_inf
        ok &= q > 0.0
        frozen = FROZEN_Q_INF.get((gripper_name, object_name))
        if frozen is not None:
            ok &= abs(q - frozen) / frozen < FROZEN_REL_TOL
            details.append(
                f"{gripper_name}/{object_name}: q_inf {q:.6e} (frozen {frozen:.6e})"
            )
        else:
            details.append(f"{gripper_name}/{object_name}: q_inf {q:.6e} (freeze pending)")
    report(8, "sqp behavior", ok, "; ".join(details))


def test_criterion_9_qp_subproblem():
    rng = np.random.default_rng(9)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(200):
        p = int(rng.integers(2, 31))
        D = int(rng.integers(1, 129))
        A = rng.standard_normal((p, p))
        H = psd_project(A @ A.T * 10 ** rng.uniform(-2, 1))
        gL = rng.standard_normal(p)
        margins = rng.standard_normal(D) * 0.4 + 0.2
        grads = rng.standard_normal((D, p)) * 10 ** rng.uniform(-2, 0)
        sol = solve_step_qp(H, gL, margins, grads)   # must never be infeasible
        Hbig = np.zeros((p + 1, p + 1))
        Hbig[:p, :p] = H
        Hbig[p, p] = 1e-12
        x0 = np.zeros(p + 1)
        x0[p] = margins.min() - 1.0
        ref = reference_qp(Hbig, np.append(gL, -1.0),
                           np.hstack([-grads, np.ones((D, 1))]), margins, x0=x0)

        def obj(zt, zs):
            return 0.5 * zt @ H @ zt + gL @ zt - zs

        gap = abs(obj(sol.dtheta, sol.dslack) - obj(ref[:p], ref[p]))
        worst = max(worst, gap / max(1.0, abs(obj(ref[:p], ref[p]))))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-6 and elapsed < 60
    report(9, "qp subproblem", ok,
           f"max objective gap {worst:.2e} over 200 instances (budget 1e-6), {elapsed:.0f}s")
