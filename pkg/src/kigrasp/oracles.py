"""Independent reference computations backing the test and verify suites.

Every oracle here re-derives its answer through a different algorithm than
the implementation it checks: finite differences instead of analytic
gradients, exhaustive feature enumeration instead of the triangle-region
walk, a sampled cone instead of the closed form, and an interior-point QP
instead of the active-set method.
"""

from dataclasses import dataclass

import numpy as np


@dataclass
class FdSpec:
    h: float = 1e-6
    shrink_rounds: int = 6      # adaptive halving when a probe is infeasible


def fd_gradient(f, at, spec=None):
    """Central-difference gradient of a scalar function.

    ``f`` may return +inf (or NaN) for infeasible probes; the step shrinks
    adaptively and the coordinate is reported if no feasible step remains.
    """
    spec = spec or FdSpec()
    x = np.asarray(at, float)
    g = np.empty(x.size)
    for k in range(x.size):
        h = spec.h
        for _ in range(spec.shrink_rounds + 1):
            e = np.zeros(x.size)
            e[k] = h
            fp = f(x + e)
            fm = f(x - e)
            if np.isfinite(fp) and np.isfinite(fm):
                g[k] = (fp - fm) / (2.0 * h)
                break
            h *= 0.5
        else:
            raise FloatingPointError(
                f"finite-difference probe stayed infeasible along coordinate {k}"
            )
    return g


def sampled_cone_max(position, normal, wrench_dir, mu, k_dirs=720):
    """Brute-force payoff of the per-point force subproblem.

    Maximizes the wrench payoff over zero force, the pure normal force, and
    ``k_dirs`` forces on the friction-cone boundary with unit normal part.
    """
    if k_dirs < 8:
        raise ValueError("need at least 8 tangent directions")
    x = np.asarray(position, float)
    n = np.asarray(normal, float)
    w = np.asarray(wrench_dir, float)
    # orthonormal tangent frame
    a = np.array([1.0, 0.0, 0.0])
    if abs(n @ a) > 0.9:
        a = np.array([0.0, 1.0, 0.0])
    t1 = np.cross(n, a)
    t1 /= np.linalg.norm(t1)
    t2 = np.cross(n, t1)
    ang = 2.0 * np.pi * np.arange(k_dirs) / k_dirs
    forces = n[None, :] + mu * (np.cos(ang)[:, None] * t1 + np.sin(ang)[:, None] * t2)
    forces = np.vstack([np.zeros(3), n, forces])
    payoff = forces @ w[:3] + np.cross(x[None, :], forces) @ w[3:]
    return float(payoff.max())


def convex_distance_oracle(point, vertices):
    """Distance to a convex hull by enumerating vertex, segment, and
    triangle candidates over all vertex tuples (exact for points outside,
    boundary distance for points inside)."""
    x = np.asarray(point, float)
    V = np.asarray(vertices, float)
    best = np.inf
    nv = V.shape[0]
    for i in range(nv):
        best = min(best, float(np.linalg.norm(x - V[i])))
    for i in range(nv):
        for j in range(i + 1, nv):
            d = V[j] - V[i]
            denom = float(d @ d)
            if denom < 1e-30:
                continue
            t = np.clip(float((x - V[i]) @ d) / denom, 0.0, 1.0)
            best = min(best, float(np.linalg.norm(x - V[i] - t * d)))
    for i in range(nv):
        for j in range(i + 1, nv):
            for k in range(j + 1, nv):
                p = _project_to_triangle(x, V[i], V[j], V[k])
                if p is not None:
                    best = min(best, float(np.linalg.norm(x - p)))
    return best


def _project_to_triangle(x, a, b, c):
    """Orthogonal projection of x onto triangle abc, or None when the
    projection falls outside (edges/vertices are covered separately)."""
    u = b - a
    v = c - a
    nrm = np.cross(u, v)
    n2 = float(nrm @ nrm)
    if n2 < 1e-30:
        return None
    w = x - a
    p = x - (float(w @ nrm) / n2) * nrm
    # barycentric containment
    d00, d01, d11 = float(u @ u), float(u @ v), float(v @ v)
    pw = p - a
    d20, d21 = float(pw @ u), float(pw @ v)
    den = d00 * d11 - d01 * d01
    if abs(den) < 1e-30:
        return None
    s = (d11 * d20 - d01 * d21) / den
    t = (d00 * d21 - d01 * d20) / den
    if s < 0.0 or t < 0.0 or s + t > 1.0:
        return None
    return p


def reference_qp(H, g, A, b, x0=None, tol=1e-10, max_iters=200):
    """Long-form primal-dual interior-point solve of
    min 0.5 x'Hx + g'x  s.t.  Ax <= b, to a tight KKT residual.

    Independent cross-check for the active-set solver.
    """
    H = np.asarray(H, float)
    g = np.asarray(g, float)
    b = np.asarray(b, float)
    n, m = g.size, b.size
    A = np.asarray(A, float).reshape(m, n) if m else np.zeros((0, n))
    if m == 0:
        return np.linalg.solve(H, -g)
    if x0 is None:
        x = np.zeros(n)
    else:
        x = np.asarray(x0, float).copy()
    s = b - A @ x
    if np.any(s <= 0.0):
        # push into the interior along the constraint normals
        x = x - A.T @ np.maximum(-s + 1.0, 0.0) / max(np.linalg.norm(A) ** 2, 1.0)
        s = b - A @ x
        if np.any(s <= 0.0):
            raise ValueError("reference QP needs a strictly feasible start")
    lam = np.full(m, 1.0)

    def newton_direction(sigma_mu):
        # eliminate dlam, ds through the complementarity rows
        W = A.T * (lam / s)
        M = H + W @ A
        rhs = -r_dual - A.T @ ((sigma_mu - r_comp) / s)
        try:
            dx = np.linalg.solve(M, rhs)
        except np.linalg.LinAlgError:
            dx = np.linalg.lstsq(M, rhs, rcond=None)[0]
        ds = -A @ dx
        dlam = (sigma_mu - r_comp - lam * ds) / s
        return dx, ds, dlam

    def boundary_fraction(ds, dlam, frac=0.995):
        step = 1.0
        neg = ds < 0.0
        if np.any(neg):
            step = min(step, frac * float((s[neg] / -ds[neg]).min()))
        neg = dlam < 0.0
        if np.any(neg):
            step = min(step, frac * float((lam[neg] / -dlam[neg]).min()))
        return step

    best_resid = np.inf
    stalled = 0
    done = False
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        for _ in range(max_iters):
            r_dual = H @ x + g + A.T @ lam
            r_comp = lam * s
            mu = float(r_comp.mean())
            # residual relative to the size of the canceling terms
            scale = 1.0 + np.linalg.norm(g) + np.linalg.norm(H @ x) + np.linalg.norm(A.T @ lam)
            resid = float(np.linalg.norm(r_dual))
            if resid < tol * scale and mu < tol * scale:
                done = True
                break
            # the condensed Newton system squares the terminal conditioning;
            # once complementarity is closed and the dual residual stops
            # moving, the iterate sits at this instance's floating-point floor
            if mu < tol * scale:
                if resid >= 0.5 * best_resid:
                    stalled += 1
                    if stalled >= 10:
                        done = True
                        break
                else:
                    stalled = 0
            best_resid = min(best_resid, resid)
            # predictor step sets the centering weight adaptively
            dxa, dsa, dla = newton_direction(0.0)
            a_aff = boundary_fraction(dsa, dla)
            mu_aff = float(((lam + a_aff * dla) * (s + a_aff * dsa)).mean())
            sigma = min(max((mu_aff / max(mu, 1e-300)) ** 3, 1e-4), 0.9)
            dx, ds, dlam = newton_direction(sigma * mu)
            step = boundary_fraction(ds, dlam)
            x = x + step * dx
            s = s + step * ds
            lam = lam + step * dlam
    if not done:
        raise RuntimeError("interior-point reference failed to converge")
    return x
