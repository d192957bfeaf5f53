"""Articulated gripper model: tree of convex links with a free-floating root.

Joint conventions
-----------------
* A configuration is a plain float array of length ``dof_count`` (radians
  for revolute entries, lengths for prismatic and translation entries).
* Link 0 carries the 6-DOF free joint: ``theta[0:3]`` is a world-frame
  translation and ``theta[3:6]`` an exponential-map rotation vector.  The
  root world pose is ``free_motion(theta) . origin``.
* Every other link has a 1-DOF revolute or prismatic joint:
  ``T_link = T_parent . origin . motion(theta_j)``.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import SpecFileError
from .geometry import (
    ConvexShape,
    compose,
    rotation_left_jacobian,
    rotvec_to_matrix,
    skew,
)

JOINT_TYPES = ("revolute", "prismatic", "free6")


@dataclass
class Joint:
    kind: str                      # one of JOINT_TYPES
    axis: np.ndarray               # unit 3-vector (ignored for free6)
    origin_R: np.ndarray           # (3, 3) fixed transform from parent frame
    origin_t: np.ndarray           # (3,)

    def __post_init__(self):
        if self.kind not in JOINT_TYPES:
            raise ValueError(f"unknown joint type {self.kind!r}")
        self.axis = np.asarray(self.axis, float)
        if self.kind != "free6" and abs(np.linalg.norm(self.axis) - 1.0) > 1e-9:
            raise ValueError("joint axis must have unit norm")
        self.origin_R = np.asarray(self.origin_R, float)
        self.origin_t = np.asarray(self.origin_t, float)


@dataclass
class ConvexLink:
    name: str
    shape: ConvexShape
    parent: int | None
    joint: Joint


@dataclass
class KinematicModel:
    links: list[ConvexLink]
    dof_index: list[int | None] = field(init=False)  # first theta index per link
    dof_count: int = field(init=False)

    def __post_init__(self):
        if not self.links:
            raise ValueError("model needs at least one link")
        if self.links[0].parent is not None or self.links[0].joint.kind != "free6":
            raise ValueError("link 0 must be the free-floating root")
        for i, link in enumerate(self.links[1:], start=1):
            if link.parent is None or not 0 <= link.parent < i:
                raise ValueError(f"link {i} parent must point at an earlier link")
            if link.joint.kind == "free6":
                raise ValueError("only the root may use a free6 joint")
        self.dof_index = [0]
        n = 6
        for link in self.links[1:]:
            self.dof_index.append(n)
            n += 1
        self.dof_count = n

    @property
    def link_count(self):
        return len(self.links)

    def adjacent(self, p, q):
        """True if links p, q share a joint (parent/child in either order)."""
        return self.links[p].parent == q or self.links[q].parent == p

    def nonadjacent_pairs(self):
        L = self.link_count
        return [(p, q) for p in range(L) for q in range(p + 1, L) if not self.adjacent(p, q)]

    def zero_configuration(self):
        return np.zeros(self.dof_count)


def _joint_motion(joint, value):
    if joint.kind == "revolute":
        return rotvec_to_matrix(joint.axis * value), np.zeros(3)
    if joint.kind == "prismatic":
        return np.eye(3), joint.axis * value
    raise ValueError(joint.kind)


def forward_kinematics(model, theta):
    """World transforms of every link.

    Returns (R, t) with R of shape (L, 3, 3) and t of shape (L, 3).
    """
    theta = np.asarray(theta, float)
    if theta.shape != (model.dof_count,):
        raise ValueError(
            f"configuration has length {theta.shape}, model expects ({model.dof_count},)"
        )
    if not np.all(np.isfinite(theta)):
        raise ValueError("configuration entries must be finite")
    L = model.link_count
    R = np.empty((L, 3, 3))
    t = np.empty((L, 3))
    root = model.links[0].joint
    R_free = rotvec_to_matrix(theta[3:6])
    R[0], t[0] = compose(R_free, theta[0:3], root.origin_R, root.origin_t)
    for i, link in enumerate(model.links[1:], start=1):
        j = link.joint
        Rm, tm = _joint_motion(j, theta[model.dof_index[i]])
        Ro, to = compose(R[link.parent], t[link.parent], j.origin_R, j.origin_t)
        R[i], t[i] = compose(Ro, to, Rm, tm)
    return R, t


def _world_twists(model, theta, R, t):
    """Per-DOF world twist (omega, v): d(point p)/d theta = omega x p + v.

    Returns arrays omega, v of shape (dof, 3) plus, per DOF, the deepest
    link whose frame the twist is attached to (for ancestry masks).
    """
    dof = model.dof_count
    omega = np.zeros((dof, 3))
    v = np.zeros((dof, 3))
    # free root: translations move points directly
    for k in range(3):
        v[k, k] = 1.0
    # free root rotations: exponential-map chart, pivot at the root translation
    J = rotation_left_jacobian(theta[3:6])
    for k in range(3):
        w = J[:, k]
        omega[3 + k] = w
        v[3 + k] = -np.cross(w, theta[0:3])
    for i, link in enumerate(model.links[1:], start=1):
        j = link.joint
        Ro, to = compose(R[link.parent], t[link.parent], j.origin_R, j.origin_t)
        k = model.dof_index[i]
        axis_w = Ro @ j.axis
        if j.kind == "revolute":
            omega[k] = axis_w
            v[k] = -np.cross(axis_w, to)
        else:
            v[k] = axis_w
    return omega, v


def _ancestor_dofs(model, link_id):
    """Theta indices that move the given link, in increasing order."""
    dofs = [0, 1, 2, 3, 4, 5]
    i = link_id
    while i != 0:
        dofs.append(model.dof_index[i])
        i = model.links[i].parent
    return sorted(dofs)


def kinematic_jacobian(model, theta, link_id):
    """Derivative of one link's world transform w.r.t. theta.

    Returns a (12, dof) array: rows 0..8 are the rotation entries in
    row-major order, rows 9..11 the translation.  Columns of joints that are
    not on the root-to-link path are zero.
    """
    if not 0 <= link_id < model.link_count:
        raise ValueError(f"link_id {link_id} out of range")
    theta = np.asarray(theta, float)
    R, t = forward_kinematics(model, theta)
    omega, v = _world_twists(model, theta, R, t)
    Jc = np.zeros((12, model.dof_count))
    Rl, tl = R[link_id], t[link_id]
    for k in _ancestor_dofs(model, link_id):
        W = skew(omega[k])
        Jc[:9, k] = (W @ Rl).reshape(9)
        Jc[9:, k] = W @ tl + v[k]
    return Jc


def all_link_jacobians(model, theta):
    """Stacked :func:`kinematic_jacobian` for every link: (L, 12, dof)."""
    theta = np.asarray(theta, float)
    R, t = forward_kinematics(model, theta)
    omega, v = _world_twists(model, theta, R, t)
    out = np.zeros((model.link_count, 12, model.dof_count))
    for lid in range(model.link_count):
        for k in _ancestor_dofs(model, lid):
            W = skew(omega[k])
            out[lid, :9, k] = (W @ R[lid]).reshape(9)
            out[lid, 9:, k] = W @ t[lid] + v[k]
    return out


# ---------------------------------------------------------------------------
# JSON gripper spec
# ---------------------------------------------------------------------------

def model_from_dict(spec, source="<gripper>"):
    """Build a KinematicModel from the JSON gripper dictionary."""

    def fail(path, msg):
        raise SpecFileError(f"{source}: {path}: {msg}")

    if not isinstance(spec, dict) or "links" not in spec:
        fail("$", "expected an object with a 'links' array")
    raw_links = spec["links"]
    if not isinstance(raw_links, list) or not raw_links:
        fail("links", "must be a non-empty array")
    links = []
    for i, raw in enumerate(raw_links):
        path = f"links[{i}]"
        if not isinstance(raw, dict):
            fail(path, "expected an object")
        name = raw.get("name", f"link{i}")
        parent = raw.get("parent", None)
        if parent is not None and (not isinstance(parent, int) or parent < 0):
            fail(f"{path}.parent", "must be null or a non-negative integer")
        joint_raw = raw.get("joint")
        if not isinstance(joint_raw, dict):
            fail(f"{path}.joint", "missing joint object")
        kind = joint_raw.get("type")
        if kind not in JOINT_TYPES:
            fail(f"{path}.joint.type", f"must be one of {JOINT_TYPES}")
        axis = joint_raw.get("axis", [0.0, 0.0, 1.0])
        origin = joint_raw.get("origin", {})
        R = np.asarray(origin.get("R", np.eye(3).ravel().tolist()), float)
        tvec = np.asarray(origin.get("t", [0.0, 0.0, 0.0]), float)
        if R.size != 9:
            fail(f"{path}.joint.origin.R", "must hold 9 floats")
        if tvec.size != 3:
            fail(f"{path}.joint.origin.t", "must hold 3 floats")
        verts = raw.get("vertices")
        if not isinstance(verts, list) or len(verts) < 4:
            fail(f"{path}.vertices", "need at least 4 vertices")
        try:
            shape = ConvexShape(np.asarray(verts, float))
        except Exception as exc:  # qhull raises its own error types
            fail(f"{path}.vertices", f"not a usable convex hull: {exc}")
        try:
            joint = Joint(kind, np.asarray(axis, float), R.reshape(3, 3), tvec)
        except ValueError as exc:
            fail(f"{path}.joint", str(exc))
        links.append(ConvexLink(name, shape, parent, joint))
    try:
        return KinematicModel(links)
    except ValueError as exc:
        fail("links", str(exc))


def load_gripper(path):
    """Load a gripper kinematic spec from a JSON file."""
    try:
        with open(path) as fh:
            spec = json.load(fh)
    except OSError as exc:
        raise SpecFileError(f"{path}: cannot read: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SpecFileError(f"{path}: line {exc.lineno}, col {exc.colno}: {exc.msg}") from exc
    return model_from_dict(spec, source=str(path))
