"""Object input: PLY / OBJ point clouds (with normals) and OBJ pose export.

Supported inputs
----------------
* PLY, ascii or binary_little_endian: vertex elements with x y z nx ny nz.
* OBJ: ``v`` lines paired 1:1 with ``vn`` lines; ``f`` faces, when present,
  mark the input as a mesh (sampled by area) instead of a raw cloud.

File normals are treated as outward and flipped to the inward convention by
:func:`load_object` (see sampling module docstring).
"""

import struct
from dataclasses import dataclass

import numpy as np

from .errors import SpecFileError
from .sampling import poisson_disk_cloud, poisson_disk_mesh

_PLY_TYPES = {
    "float": ("f", 4), "float32": ("f", 4), "double": ("d", 8), "float64": ("d", 8),
    "int": ("i", 4), "int32": ("i", 4), "uint": ("I", 4), "uint32": ("I", 4),
    "short": ("h", 2), "ushort": ("H", 2), "char": ("b", 1), "uchar": ("B", 1),
    "int8": ("b", 1), "uint8": ("B", 1), "int16": ("h", 2), "uint16": ("H", 2),
}


@dataclass
class RawSurface:
    points: np.ndarray          # (N, 3)
    normals: np.ndarray         # (N, 3), outward as stored in the file
    faces: np.ndarray | None    # (F, 3) int or None for raw clouds


def read_ply(path):
    """Read points + normals (+ faces if present) from a PLY file."""
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(b"ply"):
        raise SpecFileError(f"{path}: line 1: not a PLY file (missing 'ply' magic)")
    try:
        header_end = data.index(b"end_header\n") + len(b"end_header\n")
    except ValueError:
        raise SpecFileError(f"{path}: no end_header line") from None
    header_lines = data[:header_end].decode("ascii", "replace").splitlines()
    fmt = None
    elements = []  # (name, count, [(prop_name, type), ...] , list_props)
    for lineno, line in enumerate(header_lines[1:], start=2):
        tok = line.split()
        if not tok or tok[0] == "comment":
            continue
        if tok[0] == "format":
            fmt = tok[1]
        elif tok[0] == "element":
            elements.append((tok[1], int(tok[2]), []))
        elif tok[0] == "property":
            if not elements:
                raise SpecFileError(f"{path}: line {lineno}: property before element")
            if tok[1] == "list":
                elements[-1][2].append((tok[4], ("list", tok[2], tok[3])))
            else:
                if tok[1] not in _PLY_TYPES:
                    raise SpecFileError(f"{path}: line {lineno}: unknown type {tok[1]!r}")
                elements[-1][2].append((tok[2], tok[1]))
        elif tok[0] == "end_header":
            break
    if fmt not in ("ascii", "binary_little_endian"):
        raise SpecFileError(f"{path}: unsupported PLY format {fmt!r}")
    body = data[header_end:]
    verts = normals = faces = None
    if fmt == "ascii":
        rows = body.decode("ascii", "replace").split("\n")
        cursor = 0
        for name, count, props in elements:
            if name == "vertex":
                cols = [p for p, _ in props]
                table = np.empty((count, len(cols)))
                for i in range(count):
                    parts = rows[cursor + i].split()
                    if len(parts) < len(cols):
                        raise SpecFileError(
                            f"{path}: vertex row {i + 1}: expected {len(cols)} fields, got {len(parts)}"
                        )
                    table[i] = [float(v) for v in parts[: len(cols)]]
                verts, normals = _split_vertex_table(path, cols, table)
                cursor += count
            elif name == "face":
                faces = []
                for i in range(count):
                    parts = rows[cursor + i].split()
                    k = int(parts[0])
                    poly = [int(v) for v in parts[1 : 1 + k]]
                    faces.extend(_fan(poly))
                faces = np.asarray(faces, int) if faces else None
                cursor += count
            else:
                cursor += count
    else:
        offset = 0
        for name, count, props in elements:
            if name == "vertex":
                fmt_str = "<" + "".join(_PLY_TYPES[t][0] for _, t in props)
                size = struct.calcsize(fmt_str)
                cols = [p for p, _ in props]
                table = np.array(
                    [struct.unpack_from(fmt_str, body, offset + i * size) for i in range(count)],
                    float,
                )
                verts, normals = _split_vertex_table(path, cols, table)
                offset += size * count
            elif name == "face":
                faces = []
                for _ in range(count):
                    (_, ct, it) = props[0][1]
                    csz = _PLY_TYPES[ct][1]
                    k = struct.unpack_from("<" + _PLY_TYPES[ct][0], body, offset)[0]
                    isz = _PLY_TYPES[it][1]
                    poly = struct.unpack_from(
                        "<" + _PLY_TYPES[it][0] * k, body, offset + csz
                    )
                    faces.extend(_fan(list(poly)))
                    offset += csz + isz * k
                faces = np.asarray(faces, int) if faces else None
            else:
                raise SpecFileError(f"{path}: cannot skip binary element {name!r}")
    if verts is None:
        raise SpecFileError(f"{path}: no vertex element")
    return RawSurface(verts, normals, faces)


def _split_vertex_table(path, cols, table):
    def col(name):
        if name not in cols:
            return None
        return table[:, cols.index(name)]
    xyz = [col("x"), col("y"), col("z")]
    if any(c is None for c in xyz):
        raise SpecFileError(f"{path}: vertex element lacks x/y/z properties")
    nrm = [col("nx"), col("ny"), col("nz")]
    if any(c is None for c in nrm):
        raise SpecFileError(f"{path}: vertex element lacks nx/ny/nz normals")
    return np.column_stack(xyz), np.column_stack(nrm)


def _fan(poly):
    return [(poly[0], poly[i], poly[i + 1]) for i in range(1, len(poly) - 1)]


def read_obj(path):
    """Read points + normals (+ faces) from a Wavefront OBJ file."""
    verts, normals, faces = [], [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            tok = line.split()
            if not tok or tok[0].startswith("#"):
                continue
            try:
                if tok[0] == "v":
                    verts.append([float(v) for v in tok[1:4]])
                elif tok[0] == "vn":
                    normals.append([float(v) for v in tok[1:4]])
                elif tok[0] == "f":
                    idx = [int(part.split("/")[0]) for part in tok[1:]]
                    idx = [i - 1 if i > 0 else len(verts) + i for i in idx]
                    faces.extend(_fan(idx))
            except (ValueError, IndexError) as exc:
                raise SpecFileError(f"{path}: line {lineno}: {exc}") from exc
    if not verts:
        raise SpecFileError(f"{path}: no vertices")
    if len(normals) != len(verts) and not faces:
        raise SpecFileError(
            f"{path}: point cloud needs one vn per v ({len(normals)} vn vs {len(verts)} v)"
        )
    return RawSurface(
        np.asarray(verts, float),
        np.asarray(normals, float) if normals else None,
        np.asarray(faces, int) if faces else None,
    )


def normalize_object(points):
    """Center on the centroid and scale the bounding-box diagonal to 1.

    Returns (scaled_points, center, scale); world = scaled * scale + center.
    """
    P = np.asarray(points, float)
    center = P.mean(axis=0)
    Q = P - center
    diag = float(np.linalg.norm(Q.max(axis=0) - Q.min(axis=0)))
    if diag <= 0.0:
        raise SpecFileError("object is degenerate: zero bounding-box diagonal")
    return Q / diag, center, diag


def load_object(path, radius=0.02, seed=0):
    """Load, normalize, and Poisson-disk sample an object surface.

    Returns (SurfaceSamples, info dict).  Sample normals point INTO the
    object.  ``radius`` is the Poisson radius after normalization (the
    bounding-box diagonal is 1).
    """
    p = str(path)
    if p.lower().endswith(".ply"):
        raw = read_ply(p)
    elif p.lower().endswith(".obj"):
        raw = read_obj(p)
    else:
        raise SpecFileError(f"{path}: unknown extension (expected .ply or .obj)")
    pts, center, scale = normalize_object(raw.points)
    if raw.faces is not None:
        samples = poisson_disk_mesh(pts, raw.faces, radius, seed=seed, flip_normals=True)
    else:
        norms = raw.normals / np.linalg.norm(raw.normals, axis=1, keepdims=True)
        samples = poisson_disk_cloud(pts, -norms, radius, seed=seed)
    info = {"center": center.tolist(), "scale": scale, "count": len(samples)}
    return samples, info


def write_pose_obj(path, model, R, t):
    """Write every link hull at its world pose as one OBJ for viewers."""
    with open(path, "w") as fh:
        base = 1
        for lid, link in enumerate(model.links):
            fh.write(f"o {link.name}\n")
            W = link.shape.vertices @ R[lid].T + t[lid]
            for v in W:
                fh.write(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}\n")
            for tri in link.shape.triangles:
                a, b, c = (int(i) + base for i in tri)
                fh.write(f"f {a} {b} {c}\n")
            base += W.shape[0]
