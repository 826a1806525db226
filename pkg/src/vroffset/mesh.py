"""Triangle meshes, planar polygons, file I/O, and mesh quality statistics.

Meshes are stored as flat numpy arrays (vertices ``(n, 3)`` float64, faces
``(m, 3)`` int64) and are immutable after construction.  Adjacency is built
lazily and cached.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property

import numpy as np


class MeshError(Exception):
    """Raised for malformed mesh data or unreadable mesh files."""


# ---------------------------------------------------------------------------
# core data structures


class TriangleMesh:
    """Indexed triangle mesh.

    Parameters
    ----------
    vertices : (n, 3) float array
    faces : (m, 3) int array
        Counter-clockwise winding seen from outside defines face normals.

    Boundary and non-manifold edges are allowed at this level; pipelines
    that require a closed manifold check explicitly via
    ``require_closed_manifold``.
    """

    def __init__(self, vertices, faces):
        vertices = np.ascontiguousarray(vertices, dtype=np.float64)
        faces = np.ascontiguousarray(faces, dtype=np.int64)
        if vertices.ndim != 2 or vertices.shape[1] != 3:
            raise MeshError("vertices must be an (n, 3) array")
        if faces.size == 0:
            faces = faces.reshape(0, 3)
        if faces.ndim != 2 or faces.shape[1] != 3:
            raise MeshError("faces must be an (m, 3) array")
        if not np.all(np.isfinite(vertices)):
            raise MeshError("vertex coordinates must be finite")
        if faces.size and (faces.min() < 0 or faces.max() >= len(vertices)):
            raise MeshError("face index out of range")
        same = (faces[:, 0] == faces[:, 1]) | (faces[:, 1] == faces[:, 2]) \
            | (faces[:, 0] == faces[:, 2])
        if np.any(same):
            raise MeshError(
                f"degenerate face with repeated vertex index at row {int(np.argmax(same))}")
        vertices.setflags(write=False)
        faces.setflags(write=False)
        self.vertices = vertices
        self.faces = faces

    # -- basic counts ------------------------------------------------------

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @cached_property
    def edges(self) -> np.ndarray:
        """Unique undirected edges as sorted index pairs, shape (E, 2)."""
        e = np.sort(self.faces[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1)
        return np.unique(e, axis=0)

    @cached_property
    def _edge_tables(self):
        """face->edge ids (m, 3) and CSR edge->faces."""
        raw = np.sort(self.faces[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1)
        edges, inverse = np.unique(raw, axis=0, return_inverse=True)
        face_edges = inverse.reshape(-1, 3)
        face_of_raw = np.repeat(np.arange(self.n_faces), 3)
        order = np.argsort(inverse, kind="stable")
        sorted_faces = face_of_raw[order]
        counts = np.bincount(inverse, minlength=len(edges))
        offsets = np.concatenate([[0], np.cumsum(counts)])
        return face_edges, offsets, sorted_faces

    @property
    def face_edges(self) -> np.ndarray:
        return self._edge_tables[0]

    def edge_lookup(self, pairs: np.ndarray) -> np.ndarray:
        """Edge ids for (k, 2) vertex index pairs, -1 where absent."""
        pairs = np.asarray(pairs, dtype=np.int64)
        if pairs.size == 0:
            return np.empty(0, dtype=np.int64)
        nv = self.n_vertices
        keys = self.edges[:, 0].astype(np.int64) * nv + self.edges[:, 1]
        p = np.sort(pairs, axis=1)
        q = p[:, 0] * nv + p[:, 1]
        pos = np.clip(np.searchsorted(keys, q), 0, len(keys) - 1)
        return np.where(keys[pos] == q, pos, -1)

    def edge_faces(self, edge_id: int) -> np.ndarray:
        """Face indices incident to one edge."""
        _, offsets, data = self._edge_tables
        return data[offsets[edge_id]:offsets[edge_id + 1]]

    @cached_property
    def edge_face_counts(self) -> np.ndarray:
        _, offsets, _ = self._edge_tables
        return np.diff(offsets)

    @cached_property
    def _vertex_faces(self):
        """CSR vertex -> incident faces."""
        vid = self.faces.reshape(-1)
        fid = np.repeat(np.arange(self.n_faces), 3)
        order = np.argsort(vid, kind="stable")
        counts = np.bincount(vid, minlength=self.n_vertices)
        offsets = np.concatenate([[0], np.cumsum(counts)])
        return offsets, fid[order]

    def vertex_faces(self, v: int) -> np.ndarray:
        offsets, data = self._vertex_faces
        return data[offsets[v]:offsets[v + 1]]

    # -- geometry ----------------------------------------------------------

    @cached_property
    def face_normals(self) -> np.ndarray:
        """Unit face normals; degenerate (near-zero area) faces raise."""
        v = self.vertices
        f = self.faces
        cross = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
        norms = np.linalg.norm(cross, axis=1)
        e1 = np.linalg.norm(v[f[:, 1]] - v[f[:, 0]], axis=1)
        e2 = np.linalg.norm(v[f[:, 2]] - v[f[:, 0]], axis=1)
        bad = norms <= 1e-12 * e1 * e2
        if np.any(bad):
            raise MeshError(
                f"degenerate face {int(np.argmax(bad))}: area below tolerance")
        return cross / norms[:, None]

    def face_normal(self, i: int) -> np.ndarray:
        """Unit normal of face ``i`` (right-hand rule on the winding)."""
        return self.face_normals[i]

    @cached_property
    def face_areas(self) -> np.ndarray:
        v = self.vertices
        f = self.faces
        cross = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
        return 0.5 * np.linalg.norm(cross, axis=1)

    @cached_property
    def face_centroids(self) -> np.ndarray:
        return self.vertices[self.faces].mean(axis=1)

    def dihedral_angle(self, edge) -> float:
        """Angle in [0, pi] between the normals of the two faces at an edge.

        ``edge`` is either an edge id or a vertex index pair.  Coplanar
        neighbours give 0, a fold-back gives pi.  Boundary and non-manifold
        edges raise.
        """
        if np.isscalar(edge):
            eid = int(edge)
        else:
            a, b = sorted(int(x) for x in edge)
            eid = int(np.searchsorted(
                self.edges[:, 0] * (self.n_vertices + 1) + self.edges[:, 1],
                a * (self.n_vertices + 1) + b))
            if eid >= len(self.edges) or tuple(self.edges[eid]) != (a, b):
                raise MeshError(f"no edge ({a}, {b}) in mesh")
        fids = self.edge_faces(eid)
        if len(fids) != 2:
            raise MeshError(
                f"dihedral angle needs exactly 2 incident faces, edge {eid} has {len(fids)}")
        n0, n1 = self.face_normals[fids]
        return float(np.arccos(np.clip(np.dot(n0, n1), -1.0, 1.0)))

    @cached_property
    def edge_dihedrals(self) -> np.ndarray:
        """Dihedral per edge; NaN where not exactly two incident faces."""
        _, offsets, data = self._edge_tables
        out = np.full(len(self.edges), np.nan)
        two = np.flatnonzero(np.diff(offsets) == 2)
        f0 = data[offsets[two]]
        f1 = data[offsets[two] + 1]
        dots = np.einsum("ij,ij->i", self.face_normals[f0], self.face_normals[f1])
        out[two] = np.arccos(np.clip(dots, -1.0, 1.0))
        return out

    def average_edge_length(self) -> float:
        """Mean length over unique edges."""
        if len(self.edges) == 0:
            raise MeshError("mesh has no edges")
        v = self.vertices
        return float(np.linalg.norm(v[self.edges[:, 0]] - v[self.edges[:, 1]],
                                    axis=1).mean())

    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def bbox_diagonal(self) -> float:
        lo, hi = self.bbox()
        return float(np.linalg.norm(hi - lo))

    def euler_characteristic(self) -> int:
        return self.n_vertices - len(self.edges) + self.n_faces

    def boundary_edge_ids(self) -> np.ndarray:
        return np.flatnonzero(self.edge_face_counts == 1)

    def nonmanifold_edge_ids(self) -> np.ndarray:
        return np.flatnonzero(self.edge_face_counts > 2)

    def is_closed_manifold(self) -> bool:
        return bool(np.all(self.edge_face_counts == 2))

    def transformed(self, scale: float = 1.0, offset=(0.0, 0.0, 0.0)) -> "TriangleMesh":
        return TriangleMesh(self.vertices * scale + np.asarray(offset, dtype=float),
                            self.faces)


def require_closed_manifold(mesh: TriangleMesh) -> None:
    """Raise when a mesh declared closed has boundary or non-manifold edges."""
    nb = len(mesh.boundary_edge_ids())
    nn = len(mesh.nonmanifold_edge_ids())
    if nb or nn:
        raise MeshError(
            f"input is not a closed manifold: {nb} boundary edges, "
            f"{nn} non-manifold edges")


@dataclass(frozen=True)
class Polygon2D:
    """Closed planar polygon, vertices (n, 2), counter-clockwise for outward
    normals to point away from the enclosed region."""

    vertices: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=np.float64)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
            raise MeshError("polygon needs an (n>=3, 2) vertex array")
        if np.any(np.linalg.norm(np.diff(np.vstack([v, v[:1]]), axis=0), axis=1) == 0):
            raise MeshError("polygon has a zero-length edge")
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)

    def signed_area(self) -> float:
        v = self.vertices
        w = np.roll(v, -1, axis=0)
        return float(0.5 * np.sum(v[:, 0] * w[:, 1] - w[:, 0] * v[:, 1]))

    def is_ccw(self) -> bool:
        return self.signed_area() > 0

    def perimeter(self) -> float:
        v = self.vertices
        return float(np.linalg.norm(np.roll(v, -1, axis=0) - v, axis=1).sum())

    def edge_lengths(self) -> np.ndarray:
        v = self.vertices
        return np.linalg.norm(np.roll(v, -1, axis=0) - v, axis=1)


@dataclass(frozen=True)
class MeshQualityReport:
    """Structural quality ratios, each in [0, 1].

    en_ratio : non-manifold edges (more than two faces) / total edges
    eb_ratio : boundary edges (exactly one face) / total edges
    vn_ratio : non-manifold vertices (face fan not edge-connected) / total vertices
    fi_ratio : faces in at least one non-coplanar face/face intersection / total faces
    """

    en_ratio: float
    eb_ratio: float
    vn_ratio: float
    fi_ratio: float
    n_vertices: int = 0
    n_edges: int = 0
    n_faces: int = 0

    def max_ratio(self) -> float:
        return max(self.en_ratio, self.eb_ratio, self.vn_ratio, self.fi_ratio)

    def format_line(self) -> str:
        return (f"en={self.en_ratio:.6g} eb={self.eb_ratio:.6g} "
                f"vn={self.vn_ratio:.6g} fi={self.fi_ratio:.6g} "
                f"v={self.n_vertices} e={self.n_edges} f={self.n_faces}")


# ---------------------------------------------------------------------------
# exact predicates for the intersection audit


def _orient3d_exact(a, b, c, d) -> int:
    fa = [Fraction(x) for x in a]
    fb = [Fraction(x) for x in b]
    fc = [Fraction(x) for x in c]
    fd = [Fraction(x) for x in d]
    u = [fb[i] - fa[i] for i in range(3)]
    v = [fc[i] - fa[i] for i in range(3)]
    w = [fd[i] - fa[i] for i in range(3)]
    det = (u[0] * (v[1] * w[2] - v[2] * w[1])
           - u[1] * (v[0] * w[2] - v[2] * w[0])
           + u[2] * (v[0] * w[1] - v[1] * w[0]))
    return (det > 0) - (det < 0)


def orient3d(a, b, c, d) -> int:
    """Sign of the orientation determinant, exact.

    Floating point with a permanent-based error filter, falling back to
    rational arithmetic in the uncertain zone.
    """
    u = np.asarray(b, dtype=float) - a
    v = np.asarray(c, dtype=float) - a
    w = np.asarray(d, dtype=float) - a
    det = (u[0] * (v[1] * w[2] - v[2] * w[1])
           - u[1] * (v[0] * w[2] - v[2] * w[0])
           + u[2] * (v[0] * w[1] - v[1] * w[0]))
    au, av, aw = np.abs(u), np.abs(v), np.abs(w)
    perm = (au[0] * (av[1] * aw[2] + av[2] * aw[1])
            + au[1] * (av[0] * aw[2] + av[2] * aw[0])
            + au[2] * (av[0] * aw[1] + av[1] * aw[0]))
    if abs(det) > 1e-12 * perm:
        return 1 if det > 0 else -1
    return _orient3d_exact(a, b, c, d)


def _edge_crosses_triangle(p, q, t0, t1, t2) -> bool:
    """Proper crossing of segment pq through triangle t0 t1 t2."""
    sp = orient3d(t0, t1, t2, p)
    sq = orient3d(t0, t1, t2, q)
    if sp == 0 or sq == 0 or sp == sq:
        return False
    s0 = orient3d(p, q, t0, t1)
    s1 = orient3d(p, q, t1, t2)
    s2 = orient3d(p, q, t2, t0)
    return (s0 >= 0 and s1 >= 0 and s2 >= 0) or (s0 <= 0 and s1 <= 0 and s2 <= 0)


def triangles_intersect(tri_a, tri_b) -> bool:
    """Non-coplanar intersection test for two triangles with distinct vertices.

    Coplanar pairs report False by construction (a proper crossing needs a
    strict plane sign change).
    """
    a0, a1, a2 = tri_a
    b0, b1, b2 = tri_b
    for (p, q) in ((a0, a1), (a1, a2), (a2, a0)):
        if _edge_crosses_triangle(p, q, b0, b1, b2):
            return True
    for (p, q) in ((b0, b1), (b1, b2), (b2, b0)):
        if _edge_crosses_triangle(p, q, a0, a1, a2):
            return True
    return False


def _candidate_face_pairs(mesh: TriangleMesh) -> np.ndarray:
    """Bounding-box overlapping face pairs from a uniform grid."""
    v = mesh.vertices[mesh.faces]
    lo = v.min(axis=1)
    hi = v.max(axis=1)
    extents = hi - lo
    cell = max(float(np.median(extents.max(axis=1))) * 2.0, 1e-12)
    lo_cells = np.floor(lo / cell).astype(np.int64)
    hi_cells = np.floor(hi / cell).astype(np.int64)
    buckets: dict[tuple, list[int]] = {}
    for f in range(mesh.n_faces):
        for ix in range(lo_cells[f, 0], hi_cells[f, 0] + 1):
            for iy in range(lo_cells[f, 1], hi_cells[f, 1] + 1):
                for iz in range(lo_cells[f, 2], hi_cells[f, 2] + 1):
                    buckets.setdefault((ix, iy, iz), []).append(f)
    pairs = set()
    for members in buckets.values():
        if len(members) < 2:
            continue
        for i in range(len(members)):
            for j in range(i + 1, len(members)):
                pairs.add((members[i], members[j]))
    if not pairs:
        return np.empty((0, 2), dtype=np.int64)
    pairs = np.array(sorted(pairs), dtype=np.int64)
    keep = np.all(lo[pairs[:, 0]] <= hi[pairs[:, 1]], axis=1) \
        & np.all(lo[pairs[:, 1]] <= hi[pairs[:, 0]], axis=1)
    return pairs[keep]


def intersecting_faces(mesh: TriangleMesh) -> np.ndarray:
    """Indices of faces participating in a non-coplanar intersection.

    Pairs sharing a vertex index are skipped (adjacent faces touch along
    their shared simplex by construction).
    """
    pairs = _candidate_face_pairs(mesh)
    if len(pairs) == 0:
        return np.empty(0, dtype=np.int64)
    fa = mesh.faces[pairs[:, 0]]
    fb = mesh.faces[pairs[:, 1]]
    shares = np.zeros(len(pairs), dtype=bool)
    for i in range(3):
        for j in range(3):
            shares |= fa[:, i] == fb[:, j]
    pairs = pairs[~shares]
    v = mesh.vertices
    hit: set[int] = set()
    for i, j in pairs:
        if triangles_intersect(v[mesh.faces[i]], v[mesh.faces[j]]):
            hit.add(int(i))
            hit.add(int(j))
    return np.array(sorted(hit), dtype=np.int64)


def _nonmanifold_vertices(mesh: TriangleMesh) -> int:
    """Vertices whose incident faces do not form one edge-connected fan."""
    count = 0
    faces = mesh.faces
    for v in range(mesh.n_vertices):
        incident = mesh.vertex_faces(v)
        if len(incident) <= 1:
            continue
        # union-find over incident faces, joined across shared edges at v
        parent = {int(f): int(f) for f in incident}

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        by_edge: dict[tuple, list[int]] = {}
        for f in incident:
            tri = faces[f]
            others = [int(x) for x in tri if x != v]
            for w in others:
                by_edge.setdefault((v, w), []).append(int(f))
        for group in by_edge.values():
            for g in group[1:]:
                ra, rb = find(group[0]), find(g)
                if ra != rb:
                    parent[ra] = rb
        roots = {find(int(f)) for f in incident}
        if len(roots) > 1:
            count += 1
    return count


def quality_report(mesh: TriangleMesh, check_intersections: bool = True) -> MeshQualityReport:
    """Structural audit: non-manifold edges/vertices, boundary edges, and
    face/face intersections, each as a ratio of the total element count."""
    n_e = len(mesh.edges)
    n_v = mesh.n_vertices
    n_f = mesh.n_faces
    if n_e == 0 or n_f == 0:
        raise MeshError("quality report needs a non-empty mesh")
    en = int(np.sum(mesh.edge_face_counts > 2))
    eb = int(np.sum(mesh.edge_face_counts == 1))
    vn = _nonmanifold_vertices(mesh)
    fi = len(intersecting_faces(mesh)) if check_intersections else 0
    return MeshQualityReport(en / n_e, eb / n_e, vn / n_v, fi / n_f,
                             n_vertices=n_v, n_edges=n_e, n_faces=n_f)


# ---------------------------------------------------------------------------
# polygon soup helpers


def fan_triangulate(vertices: np.ndarray, polygons) -> TriangleMesh:
    """Triangulate polygons by fanning from their centroid.

    Triangles pass through unchanged; polygons with more than three corners
    get a new centroid vertex so the triangulation is symmetric in the
    corner order.
    """
    vertices = np.asarray(vertices, dtype=float)
    new_vertices = [vertices]
    tris = []
    next_id = len(vertices)
    for poly in polygons:
        ids = list(poly)
        if len(ids) < 3:
            continue
        if len(ids) == 3:
            tris.append(ids)
            continue
        centroid = vertices[ids].mean(axis=0)
        new_vertices.append(centroid[None, :])
        for k in range(len(ids)):
            tris.append([ids[k], ids[(k + 1) % len(ids)], next_id])
        next_id += 1
    if not tris:
        raise MeshError("no polygons to triangulate")
    return TriangleMesh(np.vstack(new_vertices), np.array(tris, dtype=np.int64))


# ---------------------------------------------------------------------------
# file I/O


_FORMATS = ("obj", "off", "ply")


def _infer_format(path: str, fmt: str | None) -> str:
    if fmt is None:
        fmt = os.path.splitext(path)[1].lstrip(".").lower()
    fmt = fmt.lower()
    if fmt not in _FORMATS:
        raise MeshError(f"unsupported mesh format {fmt!r}, expected one of {_FORMATS}")
    return fmt


def load_mesh(path: str, fmt: str | None = None) -> TriangleMesh:
    """Read a triangle mesh from OBJ, OFF, or ascii PLY.

    The format comes from the extension unless given explicitly.  Only
    triangular faces are accepted; malformed content raises ``MeshError``
    with the offending line number.
    """
    fmt = _infer_format(path, fmt)
    try:
        with open(path, "r") as fh:
            text = fh.read()
    except OSError as exc:
        raise MeshError(f"cannot read {path}: {exc}") from exc
    if fmt == "obj":
        return _parse_obj(text)
    if fmt == "off":
        return _parse_off(text)
    return _parse_ply(text)


def _parse_obj(text: str) -> TriangleMesh:
    vertices = []
    faces = []
    for ln, line in enumerate(text.splitlines(), start=1):
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        if parts[0] == "v":
            if len(parts) < 4:
                raise MeshError(f"line {ln}: vertex needs 3 coordinates")
            try:
                vertices.append([float(x) for x in parts[1:4]])
            except ValueError as exc:
                raise MeshError(f"line {ln}: bad vertex coordinate") from exc
        elif parts[0] == "f":
            if len(parts) != 4:
                raise MeshError(f"line {ln}: only triangular faces are supported")
            try:
                idx = [int(p.split("/")[0]) for p in parts[1:4]]
            except ValueError as exc:
                raise MeshError(f"line {ln}: bad face index") from exc
            faces.append([i - 1 if i > 0 else len(vertices) + i for i in idx])
    try:
        return TriangleMesh(np.array(vertices, dtype=float).reshape(-1, 3),
                            np.array(faces, dtype=np.int64).reshape(-1, 3))
    except MeshError as exc:
        raise MeshError(f"invalid OBJ data: {exc}") from exc


def _parse_off(text: str) -> TriangleMesh:
    lines = []
    for ln, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if stripped:
            lines.append((ln, stripped))
    if not lines:
        raise MeshError("empty OFF file")
    pos = 0
    header = lines[0][1]
    if header.upper().startswith("OFF"):
        pos = 1
        rest = header[3:].strip()
        if rest:
            lines.insert(1, (lines[0][0], rest))
    if pos >= len(lines):
        raise MeshError("OFF file missing the counts line")
    ln, counts = lines[pos]
    parts = counts.split()
    if len(parts) < 2:
        raise MeshError(f"line {ln}: OFF counts line needs at least 2 fields")
    try:
        nv, nf = int(parts[0]), int(parts[1])
    except ValueError as exc:
        raise MeshError(f"line {ln}: bad OFF counts") from exc
    body = lines[pos + 1:]
    if len(body) < nv + nf:
        raise MeshError("OFF file truncated")
    vertices = []
    for ln, line in body[:nv]:
        parts = line.split()
        try:
            vertices.append([float(x) for x in parts[:3]])
        except (ValueError, IndexError) as exc:
            raise MeshError(f"line {ln}: bad OFF vertex") from exc
    faces = []
    for ln, line in body[nv:nv + nf]:
        parts = line.split()
        try:
            k = int(parts[0])
            idx = [int(x) for x in parts[1:1 + k]]
        except (ValueError, IndexError) as exc:
            raise MeshError(f"line {ln}: bad OFF face") from exc
        if k != 3:
            raise MeshError(f"line {ln}: only triangular faces are supported")
        faces.append(idx)
    try:
        return TriangleMesh(np.array(vertices, dtype=float).reshape(-1, 3),
                            np.array(faces, dtype=np.int64).reshape(-1, 3))
    except MeshError as exc:
        raise MeshError(f"invalid OFF data: {exc}") from exc


def _parse_ply(text: str) -> TriangleMesh:
    lines = text.splitlines()
    if not lines or lines[0].strip() != "ply":
        raise MeshError("not a PLY file")
    n_vert = n_face = None
    elements = []  # (name, count)
    header_end = None
    vertex_props = []
    current = None
    for ln, line in enumerate(lines[1:], start=2):
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "format":
            if parts[1] != "ascii":
                raise MeshError(f"line {ln}: only ascii PLY is supported")
        elif parts[0] == "element":
            current = parts[1]
            elements.append((parts[1], int(parts[2])))
            if parts[1] == "vertex":
                n_vert = int(parts[2])
            elif parts[1] == "face":
                n_face = int(parts[2])
        elif parts[0] == "property" and current == "vertex":
            vertex_props.append(parts[-1])
        elif parts[0] == "end_header":
            header_end = ln
            break
    if header_end is None or n_vert is None or n_face is None:
        raise MeshError("PLY header missing vertex or face element")
    try:
        ix, iy, iz = (vertex_props.index(c) for c in ("x", "y", "z"))
    except ValueError as exc:
        raise MeshError("PLY vertex element lacks x/y/z properties") from exc
    body = [l for l in lines[header_end:] if l.strip()]
    if len(body) < n_vert + n_face:
        raise MeshError("PLY file truncated")
    vertices = []
    for ln, line in enumerate(body[:n_vert], start=header_end + 1):
        parts = line.split()
        try:
            vertices.append([float(parts[ix]), float(parts[iy]), float(parts[iz])])
        except (ValueError, IndexError) as exc:
            raise MeshError(f"line {ln}: bad PLY vertex") from exc
    faces = []
    for ln, line in enumerate(body[n_vert:n_vert + n_face], start=header_end + n_vert + 1):
        parts = line.split()
        try:
            k = int(parts[0])
            idx = [int(x) for x in parts[1:1 + k]]
        except (ValueError, IndexError) as exc:
            raise MeshError(f"line {ln}: bad PLY face") from exc
        if k != 3:
            raise MeshError(f"line {ln}: only triangular faces are supported")
        faces.append(idx)
    try:
        return TriangleMesh(np.array(vertices, dtype=float).reshape(-1, 3),
                            np.array(faces, dtype=np.int64).reshape(-1, 3))
    except MeshError as exc:
        raise MeshError(f"invalid PLY data: {exc}") from exc


def save_mesh(path: str, mesh: TriangleMesh, fmt: str | None = None) -> None:
    """Write a mesh as OBJ, OFF, or ascii PLY (inferred from the extension)."""
    fmt = _infer_format(path, fmt)
    out = []
    if fmt == "obj":
        for v in mesh.vertices:
            out.append(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}")
        for f in mesh.faces:
            out.append(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}")
    elif fmt == "off":
        out.append("OFF")
        out.append(f"{mesh.n_vertices} {mesh.n_faces} {len(mesh.edges)}")
        for v in mesh.vertices:
            out.append(f"{v[0]:.9g} {v[1]:.9g} {v[2]:.9g}")
        for f in mesh.faces:
            out.append(f"3 {f[0]} {f[1]} {f[2]}")
    else:
        out.append("ply")
        out.append("format ascii 1.0")
        out.append(f"element vertex {mesh.n_vertices}")
        out.append("property double x")
        out.append("property double y")
        out.append("property double z")
        out.append(f"element face {mesh.n_faces}")
        out.append("property list uchar int vertex_indices")
        out.append("end_header")
        for v in mesh.vertices:
            out.append(f"{v[0]:.9g} {v[1]:.9g} {v[2]:.9g}")
        for f in mesh.faces:
            out.append(f"3 {f[0]} {f[1]} {f[2]}")
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")


# ---------------------------------------------------------------------------
# SVG scene output for the 2D pipeline


def save_svg(path: str, polygons=(), polylines=(), points=(),
             width: int = 900, stroke: float | None = None) -> None:
    """Write a simple SVG scene.

    polygons : iterable of (n, 2) arrays drawn as closed outlines
    polylines : iterable of (n, 2) arrays drawn as open paths
    points : (n, 2) array of dots
    """
    groups = [np.asarray(p, dtype=float) for p in polygons]
    lines = [np.asarray(p, dtype=float) for p in polylines]
    pts = np.asarray(points, dtype=float).reshape(-1, 2) if len(points) else np.empty((0, 2))
    all_xy = np.vstack([*(groups or [np.empty((0, 2))]),
                        *(lines or [np.empty((0, 2))]), pts])
    if len(all_xy) == 0:
        raise MeshError("nothing to draw")
    lo = all_xy.min(axis=0)
    hi = all_xy.max(axis=0)
    span = max(float((hi - lo).max()), 1e-9)
    pad = 0.05 * span
    scale = width / (span + 2 * pad)
    height = int(np.ceil((hi[1] - lo[1] + 2 * pad) * scale))
    if stroke is None:
        stroke = max(width / 600.0, 1.0)

    def tx(p):
        x = (p[:, 0] - lo[0] + pad) * scale
        y = height - (p[:, 1] - lo[1] + pad) * scale
        return x, y

    def svg_path(p, close):
        x, y = tx(p)
        d = "M " + " L ".join(f"{a:.2f} {b:.2f}" for a, b in zip(x, y))
        return d + (" Z" if close else "")

    body = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
            f'height="{height}" viewBox="0 0 {width} {height}">']
    for p in groups:
        body.append(f'<path d="{svg_path(p, True)}" fill="none" stroke="#444" '
                    f'stroke-width="{stroke:.2f}"/>')
    for p in lines:
        body.append(f'<path d="{svg_path(p, False)}" fill="none" stroke="#d62728" '
                    f'stroke-width="{stroke:.2f}"/>')
    if len(pts):
        x, y = tx(pts)
        for a, b in zip(x, y):
            body.append(f'<circle cx="{a:.2f}" cy="{b:.2f}" r="{stroke * 1.2:.2f}" '
                        f'fill="#1f77b4"/>')
    body.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(body) + "\n")
