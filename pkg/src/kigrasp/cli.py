"""Batch command-line front end.

Subcommands
-----------
plan       load object + gripper, run the SQP planner, write result files
fgt-bench  density sweep comparing the fast evaluator with brute force
verify     run the independent oracle suite

Configuration comes from an optional TOML file plus flag overrides (flags
win).  Exit codes: 0 success, 1 verification failure, 2 file/parse error,
3 infeasible initialization, 4 line-search stall (results still written).
"""

import argparse
import csv
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

import numpy as np

from .barriers import BarrierConfig
from .errors import InfeasibleInitError, SpecFileError
from .fgt import brute_force_sum, fgt_evaluate
from .fixtures import parallel_jaw, sphere_cloud
from .kinematics import forward_kinematics, load_gripper, model_from_dict
from .meshio import load_object, write_pose_obj
from .metric import (
    FrictionCone,
    direction_strengths,
    evaluate_objective,
    gripper_strength_channels,
    sample_wrench_directions,
)
from .sampling import poisson_disk_cloud, sample_gripper_surface
from .solver import GraspProblem, SolverParams, initial_configuration, solve
from .verify import run_verification

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_PARSE = 2
EXIT_INFEASIBLE = 3
EXIT_STALL = 4

RESULT_SCHEMA = 1


@dataclass
class RunConfig:
    object: str = ""
    gripper: str = ""
    directions: int = 128
    alpha: float = 1e-3
    epsilon_fgt: float = 1e-6
    mu: float = 0.7
    gamma_obj: float = 0.1
    gamma_self: float = 0.1
    beta: float = 0.5
    c: float = 0.1
    tau: float = 1e-10
    max_iters: int = 500
    seed: int = 0
    poisson_r: float = 0.02
    d0: float | None = None          # defaults to 2 * poisson_r
    approach_axis: tuple = (0.0, 0.0, 1.0)
    output_dir: str = "."
    brute_force: bool = False
    alpha_schedule: int = 0          # extra solves, halving alpha each time
    jobs: int = 1

    def barrier_config(self):
        d0 = self.d0 if self.d0 is not None else 2.0 * self.poisson_r
        return BarrierConfig(self.gamma_obj, self.gamma_self, d0)

    def validate(self):
        if self.directions < 1 or self.alpha <= 0 or not 0 < self.epsilon_fgt < 1:
            raise SpecFileError("directions/alpha/epsilon_fgt out of range")
        if self.mu < 0 or self.poisson_r <= 0 or self.max_iters < 1:
            raise SpecFileError("mu/poisson_r/max_iters out of range")
        for name in ("beta", "c"):
            if not 0 < getattr(self, name) < 1:
                raise SpecFileError(f"{name} must lie in (0, 1)")


def _load_config(path, overrides):
    cfg = RunConfig()
    if path:
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except OSError as exc:
            raise SpecFileError(f"{path}: cannot read: {exc}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise SpecFileError(f"{path}: {exc}") from exc
        known = {f.name for f in fields(RunConfig)}
        for key, value in data.items():
            if key not in known:
                raise SpecFileError(f"{path}: unknown config key {key!r}")
            setattr(cfg, key, tuple(value) if key == "approach_axis" else value)
    for key, value in overrides.items():
        if value is not None:
            setattr(cfg, key, value)
    cfg.validate()
    return cfg


def _thread_cap():
    raw = os.environ.get("KIGRASP_THREADS")
    if not raw:
        return None
    try:
        return max(1, int(raw))
    except ValueError:
        return None


def _build_problem(cfg):
    samples, info = load_object(cfg.object, radius=cfg.poisson_r, seed=cfg.seed)
    model = load_gripper(cfg.gripper)
    gripper = sample_gripper_surface(model, cfg.poisson_r, seed=cfg.seed)
    dirs = sample_wrench_directions(cfg.directions, seed=cfg.seed)
    problem = GraspProblem(
        samples, gripper, model, dirs, FrictionCone(cfg.mu),
        alpha=cfg.alpha, epsilon=cfg.epsilon_fgt,
        barrier_config=cfg.barrier_config(),
        use_brute_force=cfg.brute_force,
    )
    return problem, info


def run_plan(cfg):
    """One planning run; returns (exit_code, summary dict)."""
    t_start = time.perf_counter()
    problem, obj_info = _build_problem(cfg)
    params = SolverParams(beta=cfg.beta, c=cfg.c, tau=cfg.tau, max_iters=cfg.max_iters)
    theta = initial_configuration(
        problem.model, problem.object_samples, cfg.approach_axis, problem.barrier_config
    )
    state, trace = solve(problem, theta, params)
    alpha = cfg.alpha
    for _ in range(cfg.alpha_schedule):
        alpha *= 0.5
        problem.alpha = alpha
        state, extra = solve(problem, state.theta, params, planes=state.planes)
        trace.extend(extra)

    obj = problem.objective(state.theta, with_gradients=False)
    wall = time.perf_counter() - t_start

    outdir = Path(cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    result = {
        "schema": RESULT_SCHEMA,
        "theta": state.theta.tolist(),
        "q_inf": float(obj.values.min()),
        "per_direction_values": obj.values.tolist(),
        "worst_direction": int(np.argmin(obj.values)),
        "iterations": state.iteration,
        "converged": state.converged,
        "stalled": state.stalled,
        "wall_time_s": wall,
        "object_normalization": obj_info,
        "alpha_final": alpha,
    }
    with open(outdir / "result.json", "w") as fh:
        json.dump(result, fh, indent=1)
    with open(outdir / "trace.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "merit", "q_inf", "step_scale", "rho", "step_norm", "ms"])
        for row in trace:
            writer.writerow([row.iteration, f"{row.merit:.12g}", f"{row.q_inf:.12g}",
                             f"{row.step_scale:.6g}", f"{row.rho:.6g}",
                             f"{row.step_norm:.6g}", f"{row.millis:.3f}"])
    R, t = forward_kinematics(problem.model, state.theta)
    write_pose_obj(outdir / "pose.obj", problem.model, R, t)
    return (EXIT_STALL if state.stalled else EXIT_OK), result


def _plan_entry(args_tuple):
    cfg_dict, obj_path, outdir = args_tuple
    cfg = RunConfig(**cfg_dict)
    cfg.object = obj_path
    cfg.output_dir = outdir
    try:
        code, result = run_plan(cfg)
        return obj_path, code, result.get("q_inf")
    except (SpecFileError, FileNotFoundError) as exc:
        return obj_path, EXIT_PARSE, str(exc)
    except InfeasibleInitError as exc:
        return obj_path, EXIT_INFEASIBLE, str(exc)


def cmd_plan(args):
    cfg = _load_config(args.config, _overrides(args))
    if not cfg.object or not cfg.gripper:
        print("plan: both an object and a gripper path are required", file=sys.stderr)
        return EXIT_PARSE
    if not Path(cfg.gripper).exists():
        print(f"plan: gripper file not found: {cfg.gripper}", file=sys.stderr)
        return EXIT_PARSE

    obj_path = Path(cfg.object)
    if obj_path.is_dir():
        targets = sorted(
            p for p in obj_path.iterdir() if p.suffix.lower() in (".ply", ".obj")
        )
        if not targets:
            print(f"plan: no .ply/.obj files under {obj_path}", file=sys.stderr)
            return EXIT_PARSE
        jobs = min(cfg.jobs, _thread_cap() or cfg.jobs)
        base = asdict(cfg)
        work = [
            (base, str(p), str(Path(cfg.output_dir) / p.stem)) for p in targets
        ]
        worst = EXIT_OK
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                for path, code, info in pool.map(_plan_entry, work):
                    print(f"{path}: exit {code} ({info})")
                    worst = max(worst, code)
        else:
            for item in work:
                path, code, info = _plan_entry(item)
                print(f"{path}: exit {code} ({info})")
                worst = max(worst, code)
        return worst

    if not obj_path.exists():
        print(f"plan: object file not found: {cfg.object}", file=sys.stderr)
        return EXIT_PARSE
    try:
        code, result = run_plan(cfg)
    except SpecFileError as exc:
        print(f"plan: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except InfeasibleInitError as exc:
        print(f"plan: infeasible initialization: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    print(json.dumps({k: result[k] for k in ("q_inf", "iterations", "converged", "stalled")}))
    return code


def bench_rows(cfg, densities=(1, 2, 4, 8, 16)):
    """Density sweep on the bundled sphere + parallel-jaw fixture."""
    pts, nrm = sphere_cloud(count=60000)
    model = model_from_dict(parallel_jaw())
    dirs = sample_wrench_directions(cfg.directions, seed=cfg.seed)
    cone = FrictionCone(cfg.mu)
    rows = []
    for density in densities:
        r = cfg.poisson_r / np.sqrt(density)

        obj = poisson_disk_cloud(pts, -nrm, r, seed=cfg.seed)
        grip = sample_gripper_surface(model, r, seed=cfg.seed)
        theta = initial_configuration(model, obj, cfg.approach_axis, cfg.barrier_config())
        sf = direction_strengths(obj, dirs, cone)

        common = dict(strengths_field=sf, with_gradients=True)
        t0 = time.perf_counter()
        res_f = evaluate_objective(obj, grip, model, theta, dirs, cone, cfg.alpha,
                                   epsilon=cfg.epsilon_fgt, **common)
        t_fgt = 1e3 * (time.perf_counter() - t0)
        t0 = time.perf_counter()
        res_b = evaluate_objective(obj, grip, model, theta, dirs, cone, cfg.alpha,
                                   use_brute_force=True, **common)
        t_brute = 1e3 * (time.perf_counter() - t0)

        # raw per-channel error of the kernel stage at this density
        R, t = forward_kinematics(model, theta)
        world = np.einsum("nij,nj->ni", R[grip.link_ids], grip.positions) + t[grip.link_ids]
        S = gripper_strength_channels(grip)
        out_f = fgt_evaluate(world, S, obj.positions, cfg.alpha, epsilon=cfg.epsilon_fgt)
        out_b = brute_force_sum(world, S, obj.positions, cfg.alpha)
        sumS = np.abs(S).sum(0)
        err_v = np.abs(out_f.values - out_b.values).max(0) / sumS
        scale = np.sqrt(cfg.alpha) / 2.0
        err_g = np.abs(out_f.gradients - out_b.gradients).max((0, 2)) / sumS * scale
        max_err = float(np.maximum(err_v, err_g).max())

        rows.append({
            "density": density,
            "N": len(obj),
            "M": len(grip),
            "time_fgt_ms": t_fgt,
            "time_brute_ms": t_brute,
            "max_abs_err": max_err,
            "q_inf_fgt": res_f.q_inf,
            "q_inf_brute": res_b.q_inf,
        })
    return rows


def cmd_bench(args):
    cfg = _load_config(args.config, _overrides(args))
    rows = bench_rows(cfg)
    out = Path(cfg.output_dir) / "fgt_bench.csv"
    Path(cfg.output_dir).mkdir(parents=True, exist_ok=True)
    cols = ["density", "N", "M", "time_fgt_ms", "time_brute_ms",
            "max_abs_err", "q_inf_fgt", "q_inf_brute"]
    with open(out, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=cols)
        writer.writeheader()
        writer.writerows(rows)
    for row in rows:
        print(",".join(str(row[c]) for c in cols))
    return EXIT_OK


def cmd_verify(_args):
    return EXIT_OK if run_verification() else EXIT_FAIL


def _overrides(args):
    keys = (
        "object gripper directions alpha epsilon_fgt mu gamma_obj gamma_self "
        "beta c tau max_iters seed poisson_r d0 output_dir brute_force "
        "alpha_schedule jobs"
    ).split()
    out = {k: getattr(args, k, None) for k in keys}
    if getattr(args, "approach_axis", None) is not None:
        out["approach_axis"] = tuple(args.approach_axis)
    return out


def _add_common(p):
    p.add_argument("--config", help="TOML config file; flags override its values")
    p.add_argument("--object", help="object point cloud or mesh (.ply/.obj), or a directory")
    p.add_argument("--gripper", help="gripper kinematic spec (.json)")
    p.add_argument("--directions", type=int, help="number of wrench directions (default 128)")
    p.add_argument("--alpha", type=float, help="kernel scale (default 1e-3)")
    p.add_argument("--epsilon-fgt", dest="epsilon_fgt", type=float,
                   help="kernel evaluator error budget (default 1e-6)")
    p.add_argument("--mu", type=float, help="friction coefficient (default 0.7)")
    p.add_argument("--gamma-obj", dest="gamma_obj", type=float)
    p.add_argument("--gamma-self", dest="gamma_self", type=float)
    p.add_argument("--beta", type=float, help="line-search backtracking factor")
    p.add_argument("--c", type=float, help="Armijo constant")
    p.add_argument("--tau", type=float, help="termination threshold")
    p.add_argument("--max-iters", dest="max_iters", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--poisson-r", dest="poisson_r", type=float,
                   help="Poisson-disk radius after normalization (default 0.02)")
    p.add_argument("--d0", type=float, help="barrier support distance (default 2r)")
    p.add_argument("--approach-axis", dest="approach_axis", type=float, nargs=3)
    p.add_argument("--output-dir", dest="output_dir")
    p.add_argument("--jobs", type=int, help="parallel solver processes in batch mode")


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="kigrasp",
        description="Kernel-integral grasp planner (Q-infinity metric, "
                    "fast Gauss transform, log-barrier collision constraints)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_plan = sub.add_parser("plan", help="run the planner on one object (or a directory)")
    _add_common(p_plan)
    p_plan.add_argument("--brute-force", dest="brute_force", action="store_true",
                        default=None, help="replace the fast evaluator with exact sums")
    p_plan.add_argument("--alpha-schedule", dest="alpha_schedule", type=int,
                        help="number of alpha-halving continuation solves")
    p_plan.set_defaults(func=cmd_plan)

    p_bench = sub.add_parser("fgt-bench", help="kernel evaluator density sweep (CSV)")
    _add_common(p_bench)
    p_bench.set_defaults(func=cmd_bench)

    p_verify = sub.add_parser("verify", help="run the independent oracle suite")
    p_verify.set_defaults(func=cmd_verify)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SpecFileError as exc:
        print(f"kigrasp: {exc}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
