"""Object models: ASCII PLY ingestion, diameters and synthetic shapes.

Synthetic shapes are centred on the origin and built on structured grids,
so their declared symmetries hold exactly rather than only up to sampling
noise.
"""

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels, so3


class PlyError(ValueError):
    """Malformed or unsupported PLY input; ``lineno`` is 1-based."""

    def __init__(self, message, lineno=None):
        self.lineno = lineno
        where = f"line {lineno}: " if lineno is not None else ""
        super().__init__(f"{where}{message}")


@dataclass(frozen=True)
class ObjectModel:
    """Point cloud of an object in its own frame.

    ``symmetric`` selects closest-point matching in losses and metrics.
    ``symmetries`` optionally lists exact symmetry rotations (quaternions)
    known by construction; ``symmetry_axis`` marks a continuous symmetry.
    """

    id: str
    points: np.ndarray
    diameter: float
    symmetric: bool = False
    symmetries: np.ndarray = field(default=None, repr=False)
    symmetry_axis: tuple = None

    def __post_init__(self):
        pts = np.ascontiguousarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3 or len(pts) == 0:
            raise ValueError(f"model {self.id!r}: points must be a nonempty (M, 3) array")
        if not np.all(np.isfinite(pts)):
            raise ValueError(f"model {self.id!r}: non-finite point coordinates")
        if not self.diameter > 0:
            raise ValueError(f"model {self.id!r}: diameter must be positive")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @classmethod
    def from_points(cls, id, points, symmetric=False, **kwargs):
        points = np.asarray(points, dtype=np.float64)
        return cls(id=id, points=points, diameter=compute_diameter(points),
                   symmetric=symmetric, **kwargs)

    def __len__(self):
        return len(self.points)


@dataclass(frozen=True)
class Pose:
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        q = so3.normalize(np.asarray(self.rotation, dtype=np.float64).reshape(4))
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(t)):
            raise ValueError("translation must be finite")
        object.__setattr__(self, "rotation", q)
        object.__setattr__(self, "translation", t)

    def apply(self, points):
        return so3.rotate(self.rotation, points) + self.translation

    def compose(self, other):
        """``self`` applied after ``other``."""
        return Pose(so3.compose(self.rotation, other.rotation),
                    so3.rotate(self.rotation, other.translation) + self.translation)

    def to_json(self):
        return {"rotation_wxyz": self.rotation.tolist(), "translation_m": self.translation.tolist()}

    @classmethod
    def from_json(cls, obj):
        return cls(np.array(obj["rotation_wxyz"], dtype=np.float64),
                   np.array(obj["translation_m"], dtype=np.float64))


def compute_diameter(points):
    """Largest pairwise Euclidean distance (exact, O(M^2))."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 3:
        raise ValueError(f"expected an (M, 3) array, got shape {points.shape}")
    if len(points) < 2:
        raise ValueError("diameter needs at least two points")
    return kernels.max_pairwise_distance(points)


# -- PLY ---------------------------------------------------------------------

_PLY_FLOATS = {"float", "float32", "double", "float64"}
_PLY_SCALARS = _PLY_FLOATS | {"char", "uchar", "short", "ushort", "int", "uint",
                              "int8", "uint8", "int16", "uint16", "int32", "uint32"}


def _parse_header(lines):
    if not lines or lines[0].strip() != "ply":
        raise PlyError("missing 'ply' magic", 1)
    n_vertex = None
    props = []
    elements = []
    fmt_seen = False
    for i, raw in enumerate(lines[1:], start=2):
        tok = raw.split()
        if not tok or tok[0] in ("comment", "obj_info"):
            continue
        if tok[0] == "format":
            if len(tok) != 3:
                raise PlyError("malformed format line", i)
            if tok[1] != "ascii":
                raise PlyError(f"unsupported PLY format {tok[1]!r}; only ascii is read", i)
            fmt_seen = True
        elif tok[0] == "element":
            if len(tok) != 3 or not tok[2].isdigit():
                raise PlyError("malformed element line", i)
            elements.append((tok[1], int(tok[2])))
            if tok[1] == "vertex":
                n_vertex = int(tok[2])
        elif tok[0] == "property":
            if not elements:
                raise PlyError("property before any element", i)
            if elements[-1][0] == "vertex":
                if len(tok) != 3:
                    raise PlyError("vertex list properties are not supported", i)
                if tok[1] not in _PLY_SCALARS:
                    raise PlyError(f"unknown property type {tok[1]!r}", i)
                props.append((tok[2], tok[1]))
        elif tok[0] == "end_header":
            if not fmt_seen:
                raise PlyError("missing format line", i)
            if n_vertex is None:
                raise PlyError("no vertex element", i)
            if elements[0][0] != "vertex":
                raise PlyError("vertex must be the first element", i)
            return n_vertex, props, i
        else:
            raise PlyError(f"unexpected header keyword {tok[0]!r}", i)
    raise PlyError("header not terminated by end_header", len(lines))


def read_ply_points(path):
    """Vertex x/y/z of an ASCII PLY file, in file order."""
    path = Path(path)
    try:
        text = path.read_text(encoding="ascii")
    except UnicodeDecodeError:
        raise PlyError("file is not ASCII (binary PLY is not supported)") from None
    lines = text.splitlines()
    n_vertex, props, header_end = _parse_header(lines)
    names = [p[0] for p in props]
    cols = []
    for axis in "xyz":
        if axis not in names:
            raise PlyError(f"vertex property {axis!r} missing", header_end)
        if props[names.index(axis)][1] not in _PLY_FLOATS:
            raise PlyError(f"vertex property {axis!r} is not a float type", header_end)
        cols.append(names.index(axis))

    points = np.empty((n_vertex, 3), dtype=np.float64)
    lineno = header_end
    row = 0
    for lineno in range(header_end + 1, len(lines) + 1):
        if row == n_vertex:
            break
        tok = lines[lineno - 1].split()
        if not tok:
            continue
        if len(tok) < len(props):
            raise PlyError(f"expected {len(props)} values, got {len(tok)}", lineno)
        try:
            points[row] = [float(tok[c]) for c in cols]
        except ValueError:
            raise PlyError("non-numeric vertex value", lineno) from None
        row += 1
    if row != n_vertex:
        raise PlyError(f"expected {n_vertex} vertices, found {row}", lineno)
    return points


def load_ply(path, symmetric=None, model_id=None):
    """Load an ObjectModel from an ASCII PLY file.

    The symmetric flag comes from ``symmetric`` if given, else from a sidecar
    ``<name>.meta.json`` holding ``{"symmetric": bool}``, else defaults to False.
    """
    path = Path(path)
    points = read_ply_points(path)
    if symmetric is None:
        meta = path.with_name(path.stem + ".meta.json")
        symmetric = False
        if meta.exists():
            try:
                symmetric = bool(json.loads(meta.read_text()).get("symmetric", False))
            except (json.JSONDecodeError, AttributeError):
                raise PlyError(f"sidecar {meta.name} is not a JSON object") from None
    return ObjectModel.from_points(model_id or path.stem, points, symmetric=symmetric)


def write_ply(path, points, symmetric=None):
    """Write points as ASCII PLY with float64 x/y/z; ``repr`` keeps them bit-exact.

    When ``symmetric`` is not None a sidecar ``.meta.json`` is written too.
    """
    path = Path(path)
    points = np.asarray(points, dtype=np.float64)
    out = ["ply", "format ascii 1.0", f"element vertex {len(points)}",
           "property double x", "property double y", "property double z", "end_header"]
    out += [" ".join(repr(float(c)) for c in p) for p in points]
    path.write_text("\n".join(out) + "\n", encoding="ascii")
    if symmetric is not None:
        path.with_name(path.stem + ".meta.json").write_text(json.dumps({"symmetric": bool(symmetric)}))
    return path


# -- synthetic shapes ----------------------------------------------------------

_DIMS = {"cylinder": 2, "box": 3, "prism": 2, "blob": 1}


@dataclass(frozen=True)
class ShapeSpec:
    """Synthetic shape request.

    ``kind`` is 'cylinder' (dims = radius, height), 'box' (dims = dx, dy, dz),
    'prism' (dims = side, height; the 8 vertices of a square prism) or 'blob'
    (dims = mean radius). ``n`` is the approximate point count; prisms ignore it.
    """

    kind: str
    dims: tuple
    n: int = 500

    def __post_init__(self):
        if self.kind not in _DIMS:
            raise ValueError(f"unknown shape kind {self.kind!r}")
        expected = _DIMS[self.kind]
        if len(self.dims) != expected:
            raise ValueError(f"{self.kind} takes {expected} dimensions, got {len(self.dims)}")
        if any(not d > 0 for d in self.dims):
            raise ValueError("dimensions must be positive")
        if self.n < 8:
            raise ValueError("need at least 8 points")

    def to_json(self):
        return {"kind": self.kind, "dims": list(self.dims), "n": self.n}

    @classmethod
    def from_json(cls, obj):
        return cls(kind=obj["kind"], dims=tuple(obj["dims"]), n=int(obj.get("n", 500)))


def _ring(radius, count, phase, z):
    t = phase + 2.0 * np.pi * np.arange(count) / count
    return np.column_stack([radius * np.cos(t), radius * np.sin(t), np.full(count, z)])


def cylinder_points(radius, height, n, rng, n_theta=None):
    """Rings of ``n_theta`` points on the lateral surface and both caps.

    Every ring has the same count, so rotation by ``2*pi/n_theta`` about z
    maps the cloud onto itself exactly. Ring phases are drawn from ``rng``.
    """
    if n_theta is None:
        n_theta = max(8, int(round(math.sqrt(n * 2.0 * np.pi * radius / height))))
    n_rings = max(2, n // n_theta)
    lateral_area = 2 * np.pi * radius * height
    cap_area = np.pi * radius**2
    n_cap = max(1, int(round(n_rings * cap_area / (lateral_area + 2 * cap_area))))
    n_side = max(2, n_rings - 2 * n_cap)
    rings = []
    for z in np.linspace(-height / 2, height / 2, n_side):
        rings.append(_ring(radius, n_theta, rng.uniform(0, 2 * np.pi), z))
    for z in (-height / 2, height / 2):
        for r in radius * (np.arange(n_cap) + 0.5) / n_cap:
            rings.append(_ring(r, n_theta, rng.uniform(0, 2 * np.pi), z))
    return np.vstack(rings), n_theta


def box_points(dx, dy, dz, n):
    """Cell-centred grids on the six faces; symmetric under the box's rotations."""
    dims = np.array([dx, dy, dz], dtype=np.float64)
    area = 2 * (dx * dy + dy * dz + dx * dz)
    spacing = math.sqrt(area / n)
    faces = []
    for axis in range(3):
        u, v = [a for a in range(3) if a != axis]
        nu = max(1, int(round(dims[u] / spacing)))
        nv = max(1, int(round(dims[v] / spacing)))
        gu = (np.arange(nu) + 0.5) / nu * dims[u] - dims[u] / 2
        gv = (np.arange(nv) + 0.5) / nv * dims[v] - dims[v] / 2
        uu, vv = np.meshgrid(gu, gv, indexing="ij")
        for side in (-0.5, 0.5):
            face = np.zeros((uu.size, 3))
            face[:, u] = uu.ravel()
            face[:, v] = vv.ravel()
            face[:, axis] = side * dims[axis]
            faces.append(face)
    return np.vstack(faces)


def prism_points(side, height):
    """The eight vertices of a square prism with its long axis on z."""
    corners = np.array(list(itertools.product((-0.5, 0.5), repeat=3)))
    return corners * np.array([side, side, height])


def blob_points(radius, n, rng):
    """Star-shaped random surface; no nontrivial symmetry with probability 1."""
    dirs = rng.standard_normal((n, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    # random low-order bumps make the radial profile asymmetric
    centers = rng.standard_normal((5, 3))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    amps = rng.uniform(0.2, 0.6, size=5)
    scale = 1.0 + (amps * np.exp(4.0 * (dirs @ centers.T - 1.0))).sum(axis=1)
    aniso = np.array([1.0, 0.75, 0.55])
    pts = radius * scale[:, None] * dirs * aniso
    return pts - pts.mean(axis=0)


def _box_symmetries(dx, dy, dz):
    syms = [so3.identity()]
    for axis in np.eye(3):
        syms.append(so3.from_axis_angle(axis, np.pi))
    if math.isclose(dx, dy):
        for ang in (np.pi / 2, 3 * np.pi / 2):
            syms.append(so3.from_axis_angle([0, 0, 1], ang))
        for axis in ([1, 1, 0], [1, -1, 0]):
            syms.append(so3.from_axis_angle(axis, np.pi))
    return np.array(syms)


def generate(spec, rng, model_id=None, symmetric=None):
    """Build an ObjectModel from a ShapeSpec; deterministic for a given ``rng`` state.

    Cylinders, boxes and prisms default to ``symmetric=True``, blobs to False.
    """
    model_id = model_id or f"{spec.kind}"
    if spec.kind == "cylinder":
        radius, height = spec.dims
        pts, n_theta = cylinder_points(radius, height, spec.n, rng)
        syms = so3.from_axis_angle([[0.0, 0.0, 1.0]] * n_theta, 2 * np.pi * np.arange(n_theta) / n_theta)
        return ObjectModel.from_points(model_id, pts, symmetric=True if symmetric is None else symmetric,
                                       symmetries=syms, symmetry_axis=(0.0, 0.0, 1.0))
    if spec.kind == "box":
        dx, dy, dz = spec.dims
        pts = box_points(dx, dy, dz, spec.n)
        return ObjectModel.from_points(model_id, pts, symmetric=True if symmetric is None else symmetric,
                                       symmetries=_box_symmetries(dx, dy, dz))
    if spec.kind == "prism":
        side, height = spec.dims
        return ObjectModel.from_points(model_id, prism_points(side, height),
                                       symmetric=True if symmetric is None else symmetric,
                                       symmetries=_box_symmetries(side, side, height))
    (radius,) = spec.dims
    pts = blob_points(radius, spec.n, rng)
    return ObjectModel.from_points(model_id, pts, symmetric=bool(symmetric),
                                   symmetries=np.array([so3.identity()]))
