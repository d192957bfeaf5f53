"""Dense quadratic programming for the step subproblem.

The per-iteration subproblem in (step, slack_step) coordinates:

    minimize   0.5 step' H step + <obj_grad, step> - slack_step
    subject to slack_step - <con_grad_d, step> <= margin_d   for all d

It is always feasible (drive the slack step down) and bounded (H is
positive definite after projection; the slack is capped by the tightest
constraint).  At any optimum the active multipliers sum to one, so the
active set never empties once seeded with the tightest constraint.

The active-set iteration runs in the Hessian-whitened variable u with
step = H^(-1/2) u, where the curvature is the identity; the barrier
Hessian spans eleven orders of magnitude near contact and whitening keeps
every KKT system well scaled.
"""

from dataclasses import dataclass

import numpy as np

from .errors import QpSolverError


def psd_project(H, floor=1e-6):
    """Symmetrize and clamp eigenvalues below ``floor`` (keeps eigenvectors)."""
    Hs = 0.5 * (np.asarray(H, float) + np.asarray(H, float).T)
    w, V = np.linalg.eigh(Hs)
    return (V * np.maximum(w, floor)) @ V.T


@dataclass
class StepSolution:
    dtheta: np.ndarray
    dslack: float
    multipliers: np.ndarray     # one per constraint row, >= 0, summing to 1
    kkt_residual: float
    iterations: int


def _eqp_solve(g_w, A, margins, work):
    """Optimum of the equality-constrained subproblem with rows ``work``
    active: stationarity gives u = -g_w + sum lam_d a_d with sum lam = 1 and
    the active linearized margins all equal."""
    k = len(work)
    a0 = work[0]
    Aw = A[work]                                   # (k, p)
    M = np.zeros((k, k))
    rhs = np.zeros(k)
    if k > 1:
        B = Aw[1:] - Aw[0]                         # (k-1, p)
        M[: k - 1] = B @ Aw.T
        rhs[: k - 1] = (margins[a0] - margins[work[1:]]) + B @ g_w
    M[k - 1] = 1.0
    rhs[k - 1] = 1.0
    lam, *_ = np.linalg.lstsq(M, rhs, rcond=None)
    u = -g_w + Aw.T @ lam
    q = margins[a0] + Aw[0] @ u
    return u, q, lam


def solve_step_qp(H, obj_grad, margins, con_grads, max_iters=400):
    """Solve the per-iteration step subproblem by a dense active-set method.

    Parameters
    ----------
    H : (p, p) positive-definite curvature (after :func:`psd_project`)
    obj_grad : (p,) gradient of the smooth objective part
    margins : (D,) current slack margins, value_d - slack
    con_grads : (D, p) per-direction value gradients

    Returns the step, the slack step, and the constraint multipliers; the
    KKT residual of the returned point is tracked and tiny by construction.
    """
    H = np.asarray(H, float)
    obj_grad = np.asarray(obj_grad, float)
    margins = np.asarray(margins, float)
    con_grads = np.atleast_2d(np.asarray(con_grads, float))
    p = obj_grad.size
    D = margins.size

    w, V = np.linalg.eigh(0.5 * (H + H.T))
    if w.min() <= 0.0:
        raise ValueError("step QP needs a positive-definite curvature matrix")
    root = np.sqrt(w)
    g_w = (V.T @ obj_grad) / root                  # whitened objective gradient
    A = (con_grads @ V) / root                     # whitened constraint gradients

    # feasible start on the tightest constraint
    seed = int(np.argmin(margins))
    u = np.zeros(p)
    q = float(margins[seed])
    work = [seed]

    tol = 1e-12
    for it in range(1, max_iters + 1):
        u_star, q_star, lam = _eqp_solve(g_w, A, margins, work)
        pu = u_star - u
        pq = q_star - q
        move = np.sqrt(pu @ pu + pq * pq)
        if move <= 1e-10 * max(1.0, np.sqrt(u @ u + q * q), np.linalg.norm(u_star)):
            if np.all(lam >= -1e-9):
                break
            neg = [i for i, v in enumerate(lam) if v < -1e-9]
            work.pop(min(neg, key=lambda i: work[i]))
            continue
        # largest feasible fraction of the move: keep q - a_d u <= margin_d
        alpha = 1.0
        blocking = -1
        viol_rate = pq - A @ pu                    # d/dalpha of (q - a_d u)
        slack_now = margins - (q - A @ u)
        for d in range(D):
            if d in work or viol_rate[d] <= tol:
                continue
            room = max(slack_now[d], 0.0) / viol_rate[d]
            if room < alpha - 1e-14 or (blocking >= 0 and room < alpha + 1e-14 and d < blocking):
                alpha = max(room, 0.0)
                blocking = d
        u = u + alpha * pu
        q = q + alpha * pq
        if blocking >= 0:
            row = np.append(1.0, -A[blocking])
            basis = np.column_stack([np.append(1.0, -A[d]) for d in work])
            resid = row - basis @ np.linalg.lstsq(basis, row, rcond=None)[0]
            if np.linalg.norm(resid) > 1e-9 * (1.0 + np.linalg.norm(row)):
                work.append(blocking)
            elif alpha <= 1e-14:
                # degenerate: swap for the seed of the dependent direction
                work.append(blocking)
                work.pop(0)
    else:
        raise QpSolverError(f"active-set QP exceeded {max_iters} iterations")

    dtheta = V @ (u / root)
    # polish: the whitening round trip can leave ~1e-8 constraint drift
    q = min(q, float((margins + con_grads @ dtheta).min()))
    mult = np.zeros(D)
    for i, d in enumerate(work):
        mult[d] = max(float(lam[i]), 0.0)
    # stationarity residual in the original variables, relative to the
    # magnitude of the terms that cancel in it
    terms = H @ dtheta
    resid = terms + obj_grad - con_grads.T @ mult
    denom = 1.0 + np.linalg.norm(terms) + np.linalg.norm(obj_grad)
    kkt = float(np.linalg.norm(resid)) / denom + abs(1.0 - mult.sum())
    return StepSolution(dtheta, float(q), mult, kkt, it)
