"""Rigid transforms, rotation helpers, and point-to-convex-hull distances.

A rigid transform is the pair ``(R, t)`` with ``R`` a (3, 3) rotation matrix
and ``t`` a (3,) translation; it maps local points ``p`` to ``R @ p + t``.
"""

import numpy as np
from scipy.spatial import ConvexHull


# ---------------------------------------------------------------------------
# Rotations
# ---------------------------------------------------------------------------

def skew(v):
    """Cross-product matrix [v]x with [v]x @ u = v x u."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def rotvec_to_matrix(w):
    """Rotation matrix of the exponential map of rotation vector ``w``."""
    w = np.asarray(w, float)
    theta = np.linalg.norm(w)
    K = skew(w)
    if theta < 1e-8:
        # second-order series keeps orthogonality to machine precision here
        return np.eye(3) + K + 0.5 * (K @ K)
    a = np.sin(theta) / theta
    b = (1.0 - np.cos(theta)) / theta**2
    return np.eye(3) + a * K + b * (K @ K)


def rotation_left_jacobian(w):
    """Left Jacobian J(w) of the rotation exponential.

    Columns of ``d exp([w]x) / d w_k`` equal ``skew(J @ e_k) @ exp([w]x)``.
    """
    w = np.asarray(w, float)
    theta = np.linalg.norm(w)
    K = skew(w)
    if theta < 1e-5:
        return np.eye(3) + 0.5 * K + (K @ K) / 6.0
    a = (1.0 - np.cos(theta)) / theta**2
    b = (theta - np.sin(theta)) / theta**3
    return np.eye(3) + a * K + b * (K @ K)


def matrix_to_rotvec(R):
    """Rotation vector of a rotation matrix (inverse of rotvec_to_matrix)."""
    R = np.asarray(R, float)
    cos_t = np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)
    theta = np.arccos(cos_t)
    if theta < 1e-8:
        return np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]]) / 2.0
    if np.pi - theta < 1e-6:
        # near-antipodal: axis from the dominant column of R + I
        B = R + np.eye(3)
        axis = B[:, np.argmax(np.diag(B))]
        axis = axis / np.linalg.norm(axis)
        return theta * axis
    axis = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    return theta * axis / (2.0 * np.sin(theta))


def rotation_between(a, b):
    """Rotation vector taking unit vector ``a`` to unit vector ``b``."""
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    c = np.cross(a, b)
    d = float(np.dot(a, b))
    if d > 1.0 - 1e-12:
        return np.zeros(3)
    if d < -1.0 + 1e-12:
        # pick any axis orthogonal to a
        axis = np.cross(a, [1.0, 0.0, 0.0])
        if np.linalg.norm(axis) < 1e-6:
            axis = np.cross(a, [0.0, 1.0, 0.0])
        return np.pi * axis / np.linalg.norm(axis)
    angle = np.arctan2(np.linalg.norm(c), d)
    return angle * c / np.linalg.norm(c)


def compose(Ra, ta, Rb, tb):
    """Transform composition: (Ra, ta) applied after... i.e. a then b maps p -> Ra(Rb p + tb) + ta."""
    return Ra @ Rb, Ra @ tb + ta


def apply_transform(R, t, points):
    return np.asarray(points, float) @ np.asarray(R, float).T + np.asarray(t, float)


# ---------------------------------------------------------------------------
# Convex hulls
# ---------------------------------------------------------------------------

class ConvexShape:
    """Precomputed convex hull of a vertex set, in its local frame.

    Carries triangle facets (for closest-point queries), half-space
    equations (for inside tests), and the local axis-aligned bounding box.
    """

    def __init__(self, vertices):
        V = np.asarray(vertices, float)
        if V.ndim != 2 or V.shape[1] != 3 or V.shape[0] < 4:
            raise ValueError("convex shape needs at least 4 points of shape (n, 3)")
        try:
            hull = ConvexHull(V)
        except Exception as exc:  # qhull raises its own error type
            raise ValueError(f"vertex set is not a full-dimensional hull: {exc}") from exc
        if hull.volume <= 0.0:
            raise ValueError("convex shape is degenerate (zero volume)")
        self.vertices = V
        self.triangles = hull.simplices.copy()          # (F, 3) vertex indices
        self.equations = hull.equations.copy()          # (F, 4): n.x + d <= 0 inside
        self.centroid = V[np.unique(self.triangles)].mean(axis=0)
        self.aabb_lo = V.min(axis=0)
        self.aabb_hi = V.max(axis=0)

    def world_aabb(self, R, t):
        """Bounding box of the transformed local bounding box."""
        corners = np.array(
            [[x, y, z] for x in (self.aabb_lo[0], self.aabb_hi[0])
             for y in (self.aabb_lo[1], self.aabb_hi[1])
             for z in (self.aabb_lo[2], self.aabb_hi[2])]
        )
        w = apply_transform(R, t, corners)
        return w.min(axis=0), w.max(axis=0)


def closest_point_on_triangles(points, a, b, c):
    """Closest point on each triangle (a[f], b[f], c[f]) from each query point.

    Vectorized case analysis over vertex/edge/face regions.

    Parameters
    ----------
    points : (N, 3) query points
    a, b, c : (F, 3) triangle corners

    Returns
    -------
    (N, F, 3) closest points.
    """
    P = np.asarray(points, float)[:, None, :]    # (N,1,3)
    A = np.asarray(a, float)[None, :, :]         # (1,F,3)
    B = np.asarray(b, float)[None, :, :]
    C = np.asarray(c, float)[None, :, :]

    ab = B - A
    ac = C - A
    ap = P - A
    d1 = np.einsum("nfk,nfk->nf", *np.broadcast_arrays(ab, ap))
    d2 = np.einsum("nfk,nfk->nf", *np.broadcast_arrays(ac, ap))
    bp = P - B
    d3 = np.einsum("nfk,nfk->nf", *np.broadcast_arrays(ab, bp))
    d4 = np.einsum("nfk,nfk->nf", *np.broadcast_arrays(ac, bp))
    cp = P - C
    d5 = np.einsum("nfk,nfk->nf", *np.broadcast_arrays(ab, cp))
    d6 = np.einsum("nfk,nfk->nf", *np.broadcast_arrays(ac, cp))

    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2

    out = np.empty(np.broadcast_shapes(P.shape, A.shape))
    filled = np.zeros(out.shape[:2], bool)

    def _fill(mask, value):
        m = mask & ~filled
        out[m] = np.broadcast_to(value, out.shape)[m]
        filled[...] |= m

    def _safe_div(num, den):
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(np.abs(den) > 0, num / np.where(den == 0, 1.0, den), 0.0)

    # region order follows the classic closest-point-on-triangle case analysis;
    # each test is only valid once all earlier regions are excluded
    _fill((d1 <= 0) & (d2 <= 0), A)
    _fill((d3 >= 0) & (d4 <= d3), B)
    _fill((vc <= 0) & (d1 >= 0) & (d3 <= 0), A + _safe_div(d1, d1 - d3)[..., None] * ab)
    _fill((d6 >= 0) & (d5 <= d6), C)
    _fill((vb <= 0) & (d2 >= 0) & (d6 <= 0), A + _safe_div(d2, d2 - d6)[..., None] * ac)
    _fill(
        (va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0),
        B + _safe_div(d4 - d3, (d4 - d3) + (d5 - d6))[..., None] * (C - B),
    )
    denom = va + vb + vc
    v = _safe_div(vb, denom)
    w = _safe_div(vc, denom)
    _fill(np.ones_like(filled), A + v[..., None] * ab + w[..., None] * ac)
    return out


def point_to_convex_distance(x, shape, R, t):
    """Distance from world point ``x`` to a rigidly placed convex shape.

    Returns ``(distance, witness_world, grad12)`` where ``witness_world`` is
    the closest hull point and ``grad12`` holds the distance derivative with
    respect to the 12 transform entries (9 rotation entries row-major, then
    the 3 translation entries). At distance 0 (point inside or on the hull)
    the gradient entries are NaN; callers must not use them there.
    """
    d, w, g = points_to_convex_distance(np.asarray(x, float)[None, :], shape, R, t)
    return float(d[0]), w[0], g[0]


def points_to_convex_distance(points, shape, R, t, want_grad=True):
    """Vectorized form of :func:`point_to_convex_distance` for (N, 3) input."""
    P = np.asarray(points, float)
    Rm = np.asarray(R, float)
    tv = np.asarray(t, float)
    # work in the local frame; rigid invariance makes distances equal
    PL = (P - tv) @ Rm
    tri = shape.triangles
    V = shape.vertices
    cands = closest_point_on_triangles(PL, V[tri[:, 0]], V[tri[:, 1]], V[tri[:, 2]])
    d2 = ((PL[:, None, :] - cands) ** 2).sum(axis=2)
    best = np.argmin(d2, axis=1)
    idx = np.arange(P.shape[0])
    wit_local = cands[idx, best]
    dist = np.sqrt(d2[idx, best])
    inside = np.all(PL @ shape.equations[:, :3].T + shape.equations[:, 3] <= 1e-12, axis=1)
    dist = np.where(inside, 0.0, dist)
    wit_world = apply_transform(Rm, tv, wit_local)
    wit_world[inside] = P[inside]
    if not want_grad:
        return dist, wit_world, None
    # d = |x - (R wl + t)|; grad wrt R_ij is -(u_i) wl_j, wrt t_j is -u_j, u = (x-w)/d
    grad = np.full((P.shape[0], 12), np.nan)
    ok = dist > 0.0
    if np.any(ok):
        u = (P[ok] - wit_world[ok]) / dist[ok, None]
        grad[ok, 9:] = -u
        grad[ok, :9] = (-u[:, :, None] * wit_local[ok][:, None, :]).reshape(-1, 9)
    return dist, wit_world, grad
