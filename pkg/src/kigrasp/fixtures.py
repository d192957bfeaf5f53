"""Bundled desk-scale fixtures: two toy grippers and analytic point clouds.

Grippers are sized for objects normalized to a unit bounding-box diagonal
(a unit-diagonal sphere has radius ~0.289).  Both follow the JSON gripper
schema and carry their canonical approach direction along +z: link frames
are built so fingers extend toward +z from the palm.

Objects are generated as dense point clouds with outward normals, ready to
be written as PLY and run through the normal loading pipeline.
"""

import json

import numpy as np


def _box(xlo, xhi, ylo, yhi, zlo, zhi):
    return [[x, y, z] for x in (xlo, xhi) for y in (ylo, yhi) for z in (zlo, zhi)]


def parallel_jaw():
    """2-finger parallel-jaw gripper: 3 links, 8 DOF (6 free + 2 prismatic).

    Fingers close along +/-x with positive joint values; the gap spans 0.64
    at zero and closes at 0.32 of travel (object diag = 1 scale).
    """
    finger = _box(-0.03, 0.03, -0.1, 0.1, 0.0, 0.55)
    return {
        "links": [
            {
                "name": "palm",
                "parent": None,
                "joint": {"type": "free6", "axis": [0, 0, 1],
                          "origin": {"R": list(np.eye(3).ravel()), "t": [0, 0, 0]}},
                "vertices": _box(-0.4, 0.4, -0.1, 0.1, -0.12, 0.0),
            },
            {
                "name": "finger_left",
                "parent": 0,
                "joint": {"type": "prismatic", "axis": [1, 0, 0],
                          "origin": {"R": list(np.eye(3).ravel()), "t": [-0.35, 0, 0]}},
                "vertices": finger,
            },
            {
                "name": "finger_right",
                "parent": 0,
                "joint": {"type": "prismatic", "axis": [-1, 0, 0],
                          "origin": {"R": list(np.eye(3).ravel()), "t": [0.35, 0, 0]}},
                "vertices": finger,
            },
        ]
    }


def three_finger_claw():
    """3-finger claw: 7 links, 12 DOF (6 free + 2 revolute per finger).

    Fingers sit at 120-degree spacing on a radius-0.36 ring and curl
    radially; negative proximal angles close the claw.
    """
    links = [
        {
            "name": "palm",
            "parent": None,
            "joint": {"type": "free6", "axis": [0, 0, 1],
                      "origin": {"R": list(np.eye(3).ravel()), "t": [0, 0, 0]}},
            "vertices": _box(-0.42, 0.42, -0.42, 0.42, -0.1, 0.0),
        }
    ]
    for fi, psi in enumerate(np.deg2rad([0.0, 120.0, 240.0])):
        u = np.array([np.cos(psi), np.sin(psi), 0.0])
        axis = np.array([-np.sin(psi), np.cos(psi), 0.0])
        links.append(
            {
                "name": f"proximal_{fi}",
                "parent": 0,
                "joint": {"type": "revolute", "axis": list(axis),
                          "origin": {"R": list(np.eye(3).ravel()), "t": list(0.36 * u)}},
                "vertices": _box(-0.04, 0.04, -0.04, 0.04, 0.0, 0.3),
            }
        )
        links.append(
            {
                "name": f"distal_{fi}",
                "parent": 2 * fi + 1,
                "joint": {"type": "revolute", "axis": list(axis),
                          "origin": {"R": list(np.eye(3).ravel()), "t": [0, 0, 0.3]}},
                "vertices": _box(-0.035, 0.035, -0.035, 0.035, 0.0, 0.26),
            }
        )
    return {"links": links}


def sphere_cloud(count=20000, seed=0, radius=None):
    """Fibonacci-spiral sphere cloud with outward normals.

    The default radius makes the bounding-box diagonal roughly 1 so the
    normalization step is close to a no-op.
    """
    radius = radius if radius is not None else 0.5 / np.sqrt(3.0)
    i = np.arange(count) + 0.5
    phi = np.arccos(1.0 - 2.0 * i / count)
    golden = np.pi * (1.0 + 5.0**0.5)
    theta = golden * i
    n = np.column_stack(
        [np.sin(phi) * np.cos(theta), np.sin(phi) * np.sin(theta), np.cos(phi)]
    )
    return radius * n, n


def box_cloud(count=20000, seed=0, half=(0.25, 0.2, 0.3)):
    """Uniform samples over a box surface with outward face normals."""
    rng = np.random.default_rng(seed)
    hx, hy, hz = half
    areas = np.array([hy * hz, hy * hz, hx * hz, hx * hz, hx * hy, hx * hy], float)
    face = rng.choice(6, size=count, p=areas / areas.sum())
    u = rng.uniform(-1.0, 1.0, count)
    v = rng.uniform(-1.0, 1.0, count)
    pts = np.empty((count, 3))
    nrm = np.zeros((count, 3))
    for f in range(6):
        m = face == f
        axis, sign = divmod(f, 2)
        sign = 1.0 if sign == 0 else -1.0
        h = [hx, hy, hz]
        p = np.zeros((m.sum(), 3))
        p[:, axis] = sign * h[axis]
        others = [i for i in range(3) if i != axis]
        p[:, others[0]] = u[m] * h[others[0]]
        p[:, others[1]] = v[m] * h[others[1]]
        pts[m] = p
        nrm[m, axis] = sign
    return pts, nrm


def torus_cloud(count=20000, seed=0, major=0.22, minor=0.09):
    """Area-weighted torus samples with outward normals (rejection on the
    Jacobian of the torus parameterization)."""
    rng = np.random.default_rng(seed)
    pts, nrm = [], []
    have = 0
    while have < count:
        need = (count - have) * 2
        u = rng.uniform(0.0, 2.0 * np.pi, need)
        v = rng.uniform(0.0, 2.0 * np.pi, need)
        keep = rng.random(need) < (major + minor * np.cos(v)) / (major + minor)
        u, v = u[keep][: count - have], v[keep][: count - have]
        cx = np.column_stack([np.cos(u), np.sin(u), np.zeros(u.size)])
        n = np.column_stack(
            [np.cos(v) * np.cos(u), np.cos(v) * np.sin(u), np.sin(v)]
        )
        pts.append(major * cx + minor * n)
        nrm.append(n)
        have += u.size
    return np.vstack(pts), np.vstack(nrm)


def write_object_ply(path, points, normals):
    """ASCII PLY with positions and (outward) normals."""
    with open(path, "w") as fh:
        fh.write("ply\nformat ascii 1.0\n")
        fh.write(f"element vertex {len(points)}\n")
        for prop in ("x", "y", "z", "nx", "ny", "nz"):
            fh.write(f"property float {prop}\n")
        fh.write("end_header\n")
        for p, n in zip(points, normals):
            fh.write(f"{p[0]:.8g} {p[1]:.8g} {p[2]:.8g} {n[0]:.6g} {n[1]:.6g} {n[2]:.6g}\n")


def write_gripper_json(path, spec):
    with open(path, "w") as fh:
        json.dump(spec, fh, indent=1)


OBJECT_GENERATORS = {"sphere": sphere_cloud, "box": box_cloud, "torus": torus_cloud}
GRIPPER_GENERATORS = {"parallel_jaw": parallel_jaw, "three_finger_claw": three_finger_claw}
