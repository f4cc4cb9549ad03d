"""Simplicial meshes: loading, validation, adjacency and normalization.

A mesh stores a vertex array and a padded simplex array of shape (m, 3);
unused slots hold -1, so a point is ``[i, -1, -1]``, an edge ``[i, j, -1]``
and a triangle ``[i, j, k]``.  Points, edges and triangles may be mixed.
"""

from __future__ import annotations

import struct
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

POINT, EDGE, TRIANGLE = 0, 1, 2


class MeshError(ValueError):
    """Raised for malformed mesh input."""


class DegenerateSimplexError(MeshError):
    def __init__(self, offending):
        self.offending = [tuple(int(i) for i in s) for s in offending]
        shown = ", ".join(str(s) for s in self.offending[:10])
        more = "" if len(self.offending) <= 10 else f" (+{len(self.offending) - 10} more)"
        super().__init__(f"degenerate simplices: {shown}{more}")


class NoEdgesError(MeshError):
    """Raised when an edge-based quantity is requested from a point cloud."""


@dataclass(frozen=True)
class Aabb:
    lo: np.ndarray
    hi: np.ndarray

    @property
    def diagonal(self) -> float:
        return float(np.linalg.norm(self.hi - self.lo))

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    def contains(self, p, tol=0.0) -> bool:
        p = np.asarray(p, dtype=float)
        return bool(np.all(p >= self.lo - tol) and np.all(p <= self.hi + tol))


@dataclass(frozen=True, eq=False)
class SimplexMesh:
    vertices: np.ndarray
    simplices: np.ndarray
    kinds: np.ndarray = field(init=False)

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        s = np.asarray(self.simplices, dtype=np.int64)
        if s.size == 0:
            s = s.reshape(0, 3)
        if s.ndim != 2 or s.shape[1] != 3:
            raise MeshError("simplices must have shape (m, 3) padded with -1")
        s = np.ascontiguousarray(s)
        kinds = (s >= 0).sum(axis=1) - 1
        v.setflags(write=False)
        s.setflags(write=False)
        kinds.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "simplices", s)
        object.__setattr__(self, "kinds", kinds)
        _validate(self)

    @classmethod
    def from_lists(cls, vertices, points=(), edges=(), triangles=()):
        rows = [[p, -1, -1] for p in np.atleast_1d(np.asarray(points, dtype=np.int64)).ravel()]
        rows += [[a, b, -1] for a, b in np.asarray(edges, dtype=np.int64).reshape(-1, 2)]
        rows += [list(t) for t in np.asarray(triangles, dtype=np.int64).reshape(-1, 3)]
        return cls(np.asarray(vertices, dtype=float), np.array(rows, dtype=np.int64).reshape(-1, 3))

    @classmethod
    def point_cloud(cls, points):
        points = np.asarray(points, dtype=float).reshape(-1, 3)
        return cls.from_lists(points, points=np.arange(len(points)))

    def __len__(self):
        return len(self.simplices)

    @property
    def counts(self) -> dict:
        return {
            "points": int(np.sum(self.kinds == POINT)),
            "edges": int(np.sum(self.kinds == EDGE)),
            "triangles": int(np.sum(self.kinds == TRIANGLE)),
        }

    def simplex_vertices(self, i) -> np.ndarray:
        """Vertex coordinates of simplex ``i`` as an (n+1, 3) array."""
        s = self.simplices[i]
        return self.vertices[s[: self.kinds[i] + 1]]

    def volumes(self) -> np.ndarray:
        """|f_i|: 1 for points, length for edges, area for triangles."""
        out = np.ones(len(self))
        v, s = self.vertices, self.simplices
        e = self.kinds == EDGE
        out[e] = np.linalg.norm(v[s[e, 1]] - v[s[e, 0]], axis=1)
        t = self.kinds == TRIANGLE
        cr = np.cross(v[s[t, 1]] - v[s[t, 0]], v[s[t, 2]] - v[s[t, 0]])
        out[t] = 0.5 * np.linalg.norm(cr, axis=1)
        return out

    def translated(self, offset) -> SimplexMesh:
        return SimplexMesh(self.vertices + np.asarray(offset, dtype=float), self.simplices)


def _validate(mesh: SimplexMesh):
    v, s, k = mesh.vertices, mesh.simplices, mesh.kinds
    if np.any(k < 0):
        raise MeshError("empty simplex row")
    valid = s >= 0
    # padding must be trailing
    if np.any(valid[:, 1:] & ~valid[:, :-1]):
        raise MeshError("simplex padding must be trailing -1 entries")
    if np.any(s[valid] >= len(v)):
        bad = int(s[valid].max())
        raise MeshError(f"simplex index {bad} out of range for {len(v)} vertices")
    if not np.all(np.isfinite(v)):
        raise MeshError("non-finite vertex coordinates")

    offending = []
    vol = mesh.volumes()
    for i in np.flatnonzero(k > 0):
        idx = s[i, : k[i] + 1]
        if len(set(idx.tolist())) != len(idx):
            offending.append(idx)
            continue
        if k[i] == EDGE:
            if vol[i] <= 0.0:
                offending.append(idx)
        else:
            longest = max(np.sum((v[idx[a]] - v[idx[b]]) ** 2) for a, b in ((0, 1), (1, 2), (2, 0)))
            if vol[i] <= 1e-12 * longest:
                offending.append(idx)
    if offending:
        raise DegenerateSimplexError(offending)


# ---------------------------------------------------------------------------
# file formats


def load_mesh(path, format=None) -> SimplexMesh:
    path = Path(path)
    fmt = (format or path.suffix.lstrip(".")).lower()
    if fmt == "obj":
        return _load_obj(path)
    if fmt == "xyz":
        return _load_xyz(path)
    if fmt == "ply":
        return _load_ply(path)
    raise MeshError(f"unsupported mesh format {fmt!r}")


def _obj_index(tok, nverts, lineno):
    try:
        i = int(tok.split("/")[0])
    except ValueError:
        raise MeshError(f"line {lineno}: bad index {tok!r}") from None
    if i < 0:
        i = nverts + i
    else:
        i -= 1
    if not 0 <= i < nverts:
        raise MeshError(f"line {lineno}: index {tok} out of range")
    return i


def _load_obj(path):
    verts, rows = [], []
    saw_elements = False
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split("#", 1)[0].split()
            if not parts:
                continue
            tag, args = parts[0], parts[1:]
            if tag == "v":
                if len(args) < 3:
                    raise MeshError(f"line {lineno}: vertex needs 3 coordinates")
                try:
                    verts.append([float(a) for a in args[:3]])
                except ValueError:
                    raise MeshError(f"line {lineno}: bad vertex coordinate") from None
            elif tag in ("f", "l", "p"):
                saw_elements = True
                idx = [_obj_index(a, len(verts), lineno) for a in args]
                if tag == "p":
                    rows.extend([i, -1, -1] for i in idx)
                elif tag == "l":
                    if len(idx) < 2:
                        raise MeshError(f"line {lineno}: line element needs 2 indices")
                    rows.extend([a, b, -1] for a, b in zip(idx[:-1], idx[1:]))
                else:
                    if len(idx) < 3:
                        raise MeshError(f"line {lineno}: face needs 3 indices")
                    # polygons are fan-triangulated
                    rows.extend([idx[0], idx[j], idx[j + 1]] for j in range(1, len(idx) - 1))
    if not saw_elements:
        rows = [[i, -1, -1] for i in range(len(verts))]
    return SimplexMesh(np.array(verts, dtype=float).reshape(-1, 3), np.array(rows, dtype=np.int64).reshape(-1, 3))


def save_obj(mesh: SimplexMesh, path):
    """Write ``mesh`` as OBJ; coordinates use 17 significant digits so they round-trip exactly."""
    with open(path, "w") as fh:
        for x, y, z in mesh.vertices:
            fh.write(f"v {float(x)!r} {float(y)!r} {float(z)!r}\n")
        for s, k in zip(mesh.simplices, mesh.kinds):
            tag = ("p", "l", "f")[k]
            fh.write(tag + " " + " ".join(str(i + 1) for i in s[: k + 1]) + "\n")


def _load_xyz(path):
    pts = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split("#", 1)[0].replace(",", " ").split()
            if not parts:
                continue
            if len(parts) < 3:
                raise MeshError(f"line {lineno}: expected 'x y z'")
            try:
                pts.append([float(a) for a in parts[:3]])
            except ValueError:
                raise MeshError(f"line {lineno}: bad coordinate") from None
    return SimplexMesh.point_cloud(np.array(pts, dtype=float).reshape(-1, 3))


_PLY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}


def _load_ply(path):
    with open(path, "rb") as fh:
        if fh.readline().strip() != b"ply":
            raise MeshError("line 1: missing 'ply' magic")
        fmt = None
        elements = []  # (name, count, [(prop, type) | ('list', ...)])
        lineno = 1
        while True:
            raw = fh.readline()
            lineno += 1
            if not raw:
                raise MeshError("unexpected end of PLY header")
            parts = raw.decode("ascii", "replace").split()
            if not parts or parts[0] in ("comment", "obj_info"):
                continue
            if parts[0] == "format":
                fmt = parts[1]
            elif parts[0] == "element":
                elements.append((parts[1], int(parts[2]), []))
            elif parts[0] == "property":
                if not elements:
                    raise MeshError(f"line {lineno}: property before element")
                if parts[1] == "list":
                    elements[-1][2].append(("list", parts[2], parts[3], parts[4]))
                else:
                    if parts[1] not in _PLY_TYPES:
                        raise MeshError(f"line {lineno}: unknown PLY type {parts[1]!r}")
                    elements[-1][2].append((parts[2], parts[1]))
            elif parts[0] == "end_header":
                break
        if fmt not in ("ascii", "binary_little_endian", "binary_big_endian"):
            raise MeshError(f"unsupported PLY format {fmt!r}")

        for name, count, props in elements:
            if name == "vertex":
                break
            if fmt != "ascii" and any(p[0] == "list" for p in props):
                raise MeshError("binary PLY with list elements before vertices is not supported")
        else:
            raise MeshError("PLY file has no vertex element")

        names = [p[0] for p in props]
        if any(p[0] == "list" for p in props) or not {"x", "y", "z"} <= set(names):
            raise MeshError("PLY vertex element needs scalar x, y, z properties")

        if fmt == "ascii":
            skip = sum(c for n, c, _ in elements[: elements.index((name, count, props))])
            for _ in range(skip):
                fh.readline()
                lineno += 1
            rows = []
            for _ in range(count):
                lineno += 1
                vals = fh.readline().split()
                if len(vals) < len(names):
                    raise MeshError(f"line {lineno}: truncated PLY vertex")
                rows.append([float(vals[names.index(c)]) for c in "xyz"])
            pts = np.array(rows, dtype=float).reshape(-1, 3)
        else:
            endian = "<" if fmt == "binary_little_endian" else ">"
            for n, c, pr in elements[: elements.index((name, count, props))]:
                fh.read(c * struct.calcsize(endian + "".join(np.dtype(_PLY_TYPES[t]).char for _, t in pr)))
            dt = np.dtype([(p, endian + _PLY_TYPES[t]) for p, t in props])
            buf = fh.read(dt.itemsize * count)
            if len(buf) < dt.itemsize * count:
                raise MeshError("truncated binary PLY vertex data")
            data = np.frombuffer(buf, dtype=dt, count=count)
            pts = np.stack([data[c].astype(float) for c in "xyz"], axis=1)
    return SimplexMesh.point_cloud(pts)


# ---------------------------------------------------------------------------
# adjacency


@dataclass(frozen=True)
class Adjacency:
    vertex_valence: np.ndarray
    edge_valence: dict
    one_ring: list

    def valence_of_edge(self, a, b) -> int:
        return self.edge_valence.get((min(a, b), max(a, b)), 0)


def compute_adjacency(mesh: SimplexMesh) -> Adjacency:
    """Incidence counts over non-point simplices, plus per-vertex one-rings.

    Vertex valence counts every edge or triangle containing the vertex; edge
    valence counts every edge or triangle containing that edge, so mixed
    meshes pool incidences across simplex kinds.  The one-ring of a vertex
    lists all simplices (points included) that contain it.
    """
    vval = np.zeros(len(mesh.vertices), dtype=np.int64)
    eval_ = defaultdict(int)
    ring = [[] for _ in range(len(mesh.vertices))]
    for i, (s, k) in enumerate(zip(mesh.simplices.tolist(), mesh.kinds.tolist())):
        idx = s[: k + 1]
        for a in idx:
            ring[a].append(i)
        if k == POINT:
            continue
        for a in idx:
            vval[a] += 1
        for a, b in ((0, 1), (1, 2), (0, 2))[: 1 if k == EDGE else 3]:
            eval_[(min(idx[a], idx[b]), max(idx[a], idx[b]))] += 1
    vval.setflags(write=False)
    return Adjacency(vval, dict(eval_), ring)


# ---------------------------------------------------------------------------
# measurements


def bounding_box(mesh: SimplexMesh) -> Aabb:
    if len(mesh) == 0:
        raise MeshError("empty mesh")
    used = np.unique(mesh.simplices[mesh.simplices >= 0])
    pts = mesh.vertices[used]
    return Aabb(pts.min(axis=0), pts.max(axis=0))


def min_edge_length(mesh: SimplexMesh) -> float:
    v, s, k = mesh.vertices, mesh.simplices, mesh.kinds
    pairs = [s[k == EDGE][:, [0, 1]]]
    tri = s[k == TRIANGLE]
    pairs += [tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]]
    pairs = np.concatenate(pairs)
    if len(pairs) == 0:
        raise NoEdgesError("mesh has no edges")
    return float(np.min(np.linalg.norm(v[pairs[:, 0]] - v[pairs[:, 1]], axis=1)))


def normalize_to_benchmark_frame(mesh: SimplexMesh, center=0.5, diagonal=0.5) -> SimplexMesh:
    """Translate and uniformly scale so the bbox is centred at ``center`` with the given diagonal.

    A zero-size bounding box is only translated.
    """
    box = bounding_box(mesh)
    diag = box.diagonal
    scale = diagonal / diag if diag > 0 else 1.0
    v = (mesh.vertices - box.center) * scale + center
    return SimplexMesh(v, mesh.simplices)
