"""Log-barrier terms keeping iterates penetration- and self-collision-free.

Object barrier: gamma * sum_x a_x b(d_r(x, theta)), the quadrature form of
the surface integral of b(d_r) with the Poisson-disk area weights a_x; d_r
is the distance from object sample x to the nearest gripper link and b the
locally supported shape

    b(d) = -(d/d0 - 1)^2 log(d/d0)   for 0 < d < d0,   0 for d >= d0,

which is C2 at d0 and diverges at contact.  Links whose inflated bounding
box misses a sample are pruned; pruning only skips exactly-zero terms.

Self-collision barrier: one separating plane per non-adjacent link pair
(p, q), parameterized by a rotation vector (normal = R e_z) and an offset.
Links p and q sit on opposite sides; the term applies the same locally
supported shape b to every vertex-plane margin, so it diverges when a
vertex reaches the plane and vanishes once every margin clears the support
distance.  (A raw -log(margin) sum is unbounded below in the margins and
rewards spreading the links apart without limit; with grasp-quality values
many orders of magnitude below the barrier scale that defect dominates the
objective, so the supported shape is used for both barriers.)  Planes are
optimized per pair by a damped Newton method interleaved with the
configuration steps (block coordinate descent): on the supported objective
while it is positive, otherwise on the raw log sum, which recenters the
plane between the links and keeps it useful as the links move.
"""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .errors import InfeasibleInitError
from .geometry import (
    points_to_convex_distance,
    rotation_between,
    rotvec_to_matrix,
    skew,
)
from .kinematics import all_link_jacobians, forward_kinematics

_PLANE_REF_AXIS = np.array([0.0, 0.0, 1.0])


@dataclass
class BarrierConfig:
    gamma_obj: float = 0.1
    gamma_self: float = 0.1
    d0: float = 0.04            # local-support distance of the object barrier

    def __post_init__(self):
        if self.gamma_obj <= 0.0 or self.gamma_self <= 0.0 or self.d0 <= 0.0:
            raise ValueError("barrier weights and support distance must be positive")


@dataclass
class SeparatingPlane:
    rotation: np.ndarray        # (3,) rotation vector; normal = R(rotation) e_z
    offset: float

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, float)

    @property
    def normal(self):
        return rotvec_to_matrix(self.rotation) @ _PLANE_REF_AXIS

    def parameters(self):
        return np.append(self.rotation, self.offset)


@dataclass
class BarrierValue:
    value: float
    gradient: np.ndarray | None
    hessian: np.ndarray | None
    finite: bool


# ---------------------------------------------------------------------------
# Barrier shape
# ---------------------------------------------------------------------------

def barrier_shape(d, d0):
    """b(d) with local support d0; accepts arrays, returns inf at d <= 0."""
    d = np.asarray(d, float)
    out = np.zeros(d.shape)
    out[d <= 0.0] = np.inf
    mask = (d > 0.0) & (d < d0)
    s = d[mask] / d0
    out[mask] = -((s - 1.0) ** 2) * np.log(s)
    return out


def barrier_shape_d1(d, d0):
    d = np.asarray(d, float)
    out = np.zeros(d.shape)
    mask = (d > 0.0) & (d < d0)
    s = d[mask] / d0
    out[mask] = (-2.0 * (s - 1.0) * np.log(s) - (s - 1.0) ** 2 / s) / d0
    return out


def barrier_shape_d2(d, d0):
    d = np.asarray(d, float)
    out = np.zeros(d.shape)
    mask = (d > 0.0) & (d < d0)
    s = d[mask] / d0
    out[mask] = (-2.0 * np.log(s) - 4.0 * (s - 1.0) / s + (s - 1.0) ** 2 / s**2) / d0**2
    return out


# ---------------------------------------------------------------------------
# Object barrier
# ---------------------------------------------------------------------------

def object_clearances(object_samples, model, R, t, d0):
    """Min distance to any link per object sample, plus the active link and
    its 12-entry transform gradient; samples farther than d0 report d0."""
    X = object_samples.positions
    n = X.shape[0]
    best = np.full(n, np.inf)
    active = np.full(n, -1)
    grad12 = np.zeros((n, 12))
    for lid, link in enumerate(model.links):
        lo, hi = link.shape.world_aabb(R[lid], t[lid])
        out = np.maximum(lo - d0 - X, 0.0) + np.maximum(X - hi - d0, 0.0)
        near = np.flatnonzero((out == 0.0).all(axis=1))
        if near.size == 0:
            continue
        dist, _, g = points_to_convex_distance(X[near], link.shape, R[lid], t[lid])
        upd = dist < best[near]
        rows = near[upd]
        best[rows] = dist[upd]
        active[rows] = lid
        grad12[rows] = g[upd]
    best[active < 0] = d0  # pruned: provably at least d0 away
    return best, active, grad12


def object_barrier(object_samples, model, theta, config, with_derivatives=True):
    """Clearance barrier value, theta-gradient, theta-Hessian, finite flag."""
    theta = np.asarray(theta, float)
    R, t = forward_kinematics(model, theta)
    dist, active, grad12 = object_clearances(object_samples, model, R, t, config.d0)
    if np.any(dist <= 0.0):
        return BarrierValue(np.inf, None, None, False)
    weights = object_samples.area_weights
    value = config.gamma_obj * float(weights @ barrier_shape(dist, config.d0))
    if not with_derivatives:
        return BarrierValue(value, None, None, True)
    grad = _object_barrier_gradient(model, theta, dist, active, grad12, config, weights)
    hess = _fd_hessian(
        lambda th: _object_gradient_at(object_samples, model, th, config), theta
    )
    return BarrierValue(value, grad, hess, True)


def _object_gradient_at(object_samples, model, theta, config):
    R, t = forward_kinematics(model, theta)
    dist, active, grad12 = object_clearances(object_samples, model, R, t, config.d0)
    if np.any(dist <= 0.0):
        return None
    return _object_barrier_gradient(model, theta, dist, active, grad12, config,
                                    object_samples.area_weights)


def _object_barrier_gradient(model, theta, dist, active, grad12, config, weights):
    jac = all_link_jacobians(model, theta)
    db = config.gamma_obj * weights * barrier_shape_d1(dist, config.d0)
    grad = np.zeros(model.dof_count)
    for lid in range(model.link_count):
        rows = np.flatnonzero((active == lid) & (db != 0.0))
        if rows.size == 0:
            continue
        grad += (db[rows][:, None] * grad12[rows]).sum(axis=0) @ jac[lid]
    return grad


def _fd_hessian(grad_fn, theta, h=1e-5, shrink=4):
    """Central differences of an analytic gradient; shrinks the step when a
    probe lands in an infeasible (infinite-barrier) state."""
    dof = theta.size
    H = np.zeros((dof, dof))
    for k in range(dof):
        step = h
        for _ in range(shrink + 1):
            e = np.zeros(dof)
            e[k] = step
            gp = grad_fn(theta + e)
            gm = grad_fn(theta - e)
            if gp is not None and gm is not None:
                H[:, k] = (gp - gm) / (2.0 * step)
                break
            step *= 0.25
        else:
            raise FloatingPointError(f"hessian probe infeasible along coordinate {k}")
    return 0.5 * (H + H.T)


# ---------------------------------------------------------------------------
# Self-collision barrier
# ---------------------------------------------------------------------------

def _pair_margins(plane, verts_p, verts_q):
    n = plane.normal
    return verts_p @ n + plane.offset, -(verts_q @ n) - plane.offset


def self_collision_barrier(model, theta, planes, config, with_derivatives=True):
    """Separating-plane barrier over all non-adjacent link pairs.

    ``planes`` maps (p, q) with p < q to a SeparatingPlane; a missing pair
    raises.  Value is gamma * sum b(margin) over both vertex sets of every
    pair, with the locally supported shape b of this module.
    """
    theta = np.asarray(theta, float)
    pairs = model.nonadjacent_pairs()
    for pair in pairs:
        if pair not in planes:
            raise ValueError(f"missing separating plane for link pair {pair}")
    if not pairs:
        z = np.zeros(model.dof_count)
        return BarrierValue(0.0, z, np.zeros((model.dof_count,) * 2), True)
    R, t = forward_kinematics(model, theta)
    world = [model.links[l].shape.vertices @ R[l].T + t[l] for l in range(model.link_count)]
    value = 0.0
    for p, q in pairs:
        mp, mq = _pair_margins(planes[(p, q)], world[p], world[q])
        if np.any(mp <= 0.0) or np.any(mq <= 0.0):
            return BarrierValue(np.inf, None, None, False)
        value += config.gamma_self * (
            barrier_shape(mp, config.d0).sum() + barrier_shape(mq, config.d0).sum()
        )
    if not with_derivatives:
        return BarrierValue(value, None, None, True)
    grad = _self_barrier_gradient(model, theta, planes, config, R, t, world)
    hess = _fd_hessian(
        lambda th: _self_gradient_at(model, th, planes, config), theta
    )
    return BarrierValue(value, grad, hess, True)


def _self_gradient_at(model, theta, planes, config):
    R, t = forward_kinematics(model, theta)
    world = [model.links[l].shape.vertices @ R[l].T + t[l] for l in range(model.link_count)]
    for p, q in model.nonadjacent_pairs():
        mp, mq = _pair_margins(planes[(p, q)], world[p], world[q])
        if np.any(mp <= 0.0) or np.any(mq <= 0.0):
            return None
    return _self_barrier_gradient(model, theta, planes, config, R, t, world)


def _self_barrier_gradient(model, theta, planes, config, R, t, world):
    jac = all_link_jacobians(model, theta)
    grad = np.zeros(model.dof_count)

    def vertex_jacobian(lid):
        # d(world vertex)/d theta from the link transform jacobian
        V = model.links[lid].shape.vertices
        Jr = jac[lid, :9].reshape(3, 3, -1)
        return np.einsum("ijd,vj->vid", Jr, V) + jac[lid, 9:][None, :, :]

    for p, q in model.nonadjacent_pairs():
        plane = planes[(p, q)]
        n = plane.normal
        mp, mq = _pair_margins(plane, world[p], world[q])
        wp = barrier_shape_d1(mp, config.d0)
        wq = barrier_shape_d1(mq, config.d0)
        Jp = vertex_jacobian(p)
        Jq = vertex_jacobian(q)
        grad += config.gamma_self * np.einsum("v,vid,i->d", wp, Jp, n)
        grad -= config.gamma_self * np.einsum("v,vid,i->d", wq, Jq, n)
    return grad


# ---------------------------------------------------------------------------
# Plane initialization and per-pair update
# ---------------------------------------------------------------------------

def _plane_from_normal(normal, offset):
    return SeparatingPlane(rotation_between(_PLANE_REF_AXIS, normal), float(offset))


def _max_margin_plane(verts_p, verts_q):
    """Support-vector-style fallback: maximize the worst signed margin under
    a box bound on the normal.  Returns None when no separating plane exists."""
    # variables: n (3), b, t; maximize t
    nv = verts_p.shape[0] + verts_q.shape[0]
    A = np.zeros((nv, 5))
    A[: verts_p.shape[0], :3] = -verts_p
    A[: verts_p.shape[0], 3] = -1.0
    A[verts_p.shape[0] :, :3] = verts_q
    A[verts_p.shape[0] :, 3] = 1.0
    A[:, 4] = 1.0
    rhs = np.zeros(nv)
    c = np.zeros(5)
    c[4] = -1.0
    bounds = [(-1.0, 1.0)] * 3 + [(None, None), (None, None)]
    res = linprog(c, A_ub=A, b_ub=rhs, bounds=bounds, method="highs")
    if not res.success or res.x[4] <= 1e-12:
        return None
    n = res.x[:3]
    norm = np.linalg.norm(n)
    if norm < 1e-12:
        return None
    return _plane_from_normal(n / norm, res.x[3] / norm)


def init_separating_planes(model, theta):
    """Initial plane per non-adjacent pair: centroid-difference normal with
    the offset through the midpoint, falling back to a max-margin solve."""
    R, t = forward_kinematics(model, theta)
    planes = {}
    for p, q in model.nonadjacent_pairs():
        cp = R[p] @ model.links[p].shape.centroid + t[p]
        cq = R[q] @ model.links[q].shape.centroid + t[q]
        wp = model.links[p].shape.vertices @ R[p].T + t[p]
        wq = model.links[q].shape.vertices @ R[q].T + t[q]
        d = cp - cq
        plane = None
        if np.linalg.norm(d) > 1e-12:
            n = d / np.linalg.norm(d)
            cand = _plane_from_normal(n, -float(n @ (cp + cq)) / 2.0)
            mp, mq = _pair_margins(cand, wp, wq)
            if mp.min() > 0.0 and mq.min() > 0.0:
                plane = cand
        if plane is None:
            plane = _max_margin_plane(wp, wq)
        if plane is None:
            raise InfeasibleInitError(
                f"links {p} ({model.links[p].name}) and {q} ({model.links[q].name}) "
                "intersect; no separating plane exists"
            )
        planes[(p, q)] = plane
    return planes


def _pair_supported_value(n, offset, verts_p, verts_q, gamma, d0):
    mp = verts_p @ n + offset
    mq = -(verts_q @ n) - offset
    if mp.min() <= 0.0 or mq.min() <= 0.0:
        return np.inf, mp, mq
    value = gamma * (barrier_shape(mp, d0).sum() + barrier_shape(mq, d0).sum())
    return float(value), mp, mq


def _pair_objective(n, offset, wp, wq, gamma, d0, mode):
    """Pair objective in one of two modes: the supported barrier itself, or
    the raw log sum used to recenter an already-inactive plane."""
    mp = wp @ n + offset
    mq = -(wq @ n) - offset
    if mp.min() <= 0.0 or mq.min() <= 0.0:
        return np.inf, None, None
    if mode == "supported":
        f = gamma * (barrier_shape(mp, d0).sum() + barrier_shape(mq, d0).sum())
        wgt_p, wgt_q = gamma * barrier_shape_d1(mp, d0), gamma * barrier_shape_d1(mq, d0)
        curv_p, curv_q = gamma * barrier_shape_d2(mp, d0), gamma * barrier_shape_d2(mq, d0)
    else:
        f = -(np.log(mp).sum() + np.log(mq).sum())
        wgt_p, wgt_q = -1.0 / mp, -1.0 / mq
        curv_p, curv_q = 1.0 / mp**2, 1.0 / mq**2
    # margin derivatives: p side (y, +1), q side (-y, -1)
    g_n = wgt_p @ wp - wgt_q @ wq
    g_b = wgt_p.sum() - wgt_q.sum()
    Hnn = np.einsum("v,vi,vj->ij", curv_p, wp, wp) + np.einsum("v,vi,vj->ij", curv_q, wq, wq)
    Hnb = curv_p @ wp + curv_q @ wq
    Hbb = curv_p.sum() + curv_q.sum()
    g = np.empty(4)
    H = np.empty((4, 4))
    K = skew(n)
    g[:3] = K @ g_n
    g[3] = g_b
    H[:3, :3] = K @ Hnn @ K.T
    H[:3, 3] = K @ Hnb
    H[3, :3] = H[:3, 3]
    H[3, 3] = Hbb
    return float(f), g, H


def update_separating_plane(p, q, model, theta, plane, config, max_iters=50, tol=1e-10):
    """Minimize one pair's barrier over its plane (rotation increment +
    offset) by damped Newton with feasibility-preserving backtracking.

    While the supported barrier is positive it is minimized directly; once
    it is zero the raw log sum recenters the plane between the hulls.  The
    returned plane never has a larger supported barrier value than the
    input plane.
    """
    R, t = forward_kinematics(model, theta)
    wp = model.links[p].shape.vertices @ R[p].T + t[p]
    wq = model.links[q].shape.vertices @ R[q].T + t[q]
    gamma = config.gamma_self
    d0 = config.d0
    n0 = plane.normal
    off0 = float(plane.offset)
    v0, _, _ = _pair_supported_value(n0, off0, wp, wq, gamma, d0)
    if not np.isfinite(v0):
        raise ValueError(f"input plane for pair ({p}, {q}) does not separate the links")
    mode = "supported" if v0 > 0.0 else "log"
    n, offset = n0, off0
    value, g, H = _pair_objective(n, offset, wp, wq, gamma, d0, mode)
    lam = 1e-8
    for _ in range(max_iters):
        if g is None or np.linalg.norm(g) < 1e-14:
            break
        step = None
        for _ in range(60):
            try:
                cand = np.linalg.solve(H + lam * np.eye(4), -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            n_new = rotvec_to_matrix(cand[:3]) @ n
            off_new = offset + float(cand[3])
            v_new, g_new, H_new = _pair_objective(n_new, off_new, wp, wq, gamma, d0, mode)
            if np.isfinite(v_new) and v_new <= value:
                step = cand
                lam = max(lam * 0.25, 1e-10)
                break
            lam *= 10.0
        if step is None:
            break
        n, offset, value, g, H = n_new, off_new, v_new, g_new, H_new
        if np.linalg.norm(step) < tol:
            break
    v1, _, _ = _pair_supported_value(n, offset, wp, wq, gamma, d0)
    if not np.isfinite(v1) or v1 > v0:
        return plane
    return _plane_from_normal(n, offset)
