"""Per-vertex radius fields: interpolation, gradients, and slope validation.

A radius field assigns every mesh vertex a strictly positive radius.  Sparse
constraints are filled in by solving the discrete biharmonic equation built
from the cotangent Laplacian with barycentric vertex masses.  Offsetting is
well defined only while the tangential slope of the field stays at or below
one, which ``validate_lipschitz`` checks face by face.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.csgraph as csgraph
import scipy.sparse.linalg as spla

from .mesh import MeshError, TriangleMesh


class RadiusError(Exception):
    """Raised for invalid radius values, constraints, or field files."""


@dataclass(frozen=True)
class RadiusConstraintSet:
    """Sparse per-vertex radius constraints.

    vertex_ids : (k,) int array of constrained vertices
    values : (k,) float array of prescribed radii, all > 0
    """

    vertex_ids: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        ids = np.ascontiguousarray(self.vertex_ids, dtype=np.int64).reshape(-1)
        vals = np.ascontiguousarray(self.values, dtype=np.float64).reshape(-1)
        if len(ids) != len(vals):
            raise RadiusError("constraint ids and values differ in length")
        if len(ids) == 0:
            raise RadiusError("constraint set is empty")
        if len(np.unique(ids)) != len(ids):
            raise RadiusError("duplicate constraint vertex")
        if np.any(vals <= 0) or not np.all(np.isfinite(vals)):
            raise RadiusError(f"constraint radii must be positive, min={vals.min()}")
        ids.setflags(write=False)
        vals.setflags(write=False)
        object.__setattr__(self, "vertex_ids", ids)
        object.__setattr__(self, "values", vals)


@dataclass(frozen=True)
class RadiusField:
    """Radius values bound to the vertices of one mesh."""

    mesh: TriangleMesh
    values: np.ndarray

    def __post_init__(self):
        vals = np.ascontiguousarray(self.values, dtype=np.float64).reshape(-1)
        if len(vals) != self.mesh.n_vertices:
            raise RadiusError(
                f"field has {len(vals)} values for {self.mesh.n_vertices} vertices")
        if np.any(vals <= 0) or not np.all(np.isfinite(vals)):
            raise RadiusError(
                f"radius values must be positive and finite, min={vals.min():.6g}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @staticmethod
    def constant(mesh: TriangleMesh, radius: float) -> "RadiusField":
        if radius <= 0:
            raise RadiusError(f"radius must be positive, got {radius}")
        return RadiusField(mesh, np.full(mesh.n_vertices, float(radius)))

    def is_constant(self, tol: float = 0.0) -> bool:
        return float(self.values.max() - self.values.min()) <= tol

    def at_faces_barycentric(self, face_ids: np.ndarray, bary: np.ndarray) -> np.ndarray:
        """Interpolate at barycentric coordinates inside given faces."""
        tri = self.mesh.faces[face_ids]
        return np.einsum("ij,ij->i", self.values[tri], bary)

    def scaled(self, factor: float) -> "RadiusField":
        return RadiusField(self.mesh, self.values * factor)


# ---------------------------------------------------------------------------
# cotangent Laplacian and biharmonic fill-in


def cotangent_laplacian(mesh: TriangleMesh) -> sp.csr_matrix:
    """Symmetric cotangent-weight Laplacian, positive semi-definite."""
    v = mesh.vertices
    f = mesh.faces
    i0, i1, i2 = f[:, 0], f[:, 1], f[:, 2]
    rows = []
    cols = []
    vals = []
    for (a, b, c) in ((i0, i1, i2), (i1, i2, i0), (i2, i0, i1)):
        # cotangent at corner c, weighting edge (a, b)
        u = v[a] - v[c]
        w = v[b] - v[c]
        cross = np.linalg.norm(np.cross(u, w), axis=1)
        cross = np.maximum(cross, 1e-300)
        cot = np.einsum("ij,ij->i", u, w) / cross
        half = 0.5 * cot
        rows.extend([a, b])
        cols.extend([b, a])
        vals.extend([-half, -half])
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    L = sp.coo_matrix((vals, (rows, cols)),
                      shape=(mesh.n_vertices, mesh.n_vertices)).tocsr()
    L = L - sp.diags(np.asarray(L.sum(axis=1)).ravel())
    return L.tocsr()


def vertex_masses(mesh: TriangleMesh) -> np.ndarray:
    """Barycentric lumped masses (one third of incident face area)."""
    m = np.zeros(mesh.n_vertices)
    np.add.at(m, mesh.faces.reshape(-1),
              np.repeat(mesh.face_areas / 3.0, 3))
    return np.maximum(m, 1e-300)


def interpolate_biharmonic(mesh: TriangleMesh,
                           constraints: RadiusConstraintSet) -> RadiusField:
    """Fill a sparse radius specification to all vertices.

    Solves the squared cotangent Laplacian system (mass-normalized) with the
    constrained rows eliminated.  Every connected component of the mesh must
    carry at least one constraint; a non-positive interpolated value is an
    error because it cannot be a radius.
    """
    ids = constraints.vertex_ids
    if ids.max() >= mesh.n_vertices:
        raise RadiusError("constraint vertex id out of range")

    n = mesh.n_vertices
    adj = sp.coo_matrix(
        (np.ones(len(mesh.edges)), (mesh.edges[:, 0], mesh.edges[:, 1])),
        shape=(n, n))
    n_comp, labels = csgraph.connected_components(adj, directed=False)
    covered = np.zeros(n_comp, dtype=bool)
    covered[labels[ids]] = True
    if not covered.all():
        raise RadiusError(
            f"{int((~covered).sum())} connected component(s) have no radius constraint")

    L = cotangent_laplacian(mesh)
    inv_m = sp.diags(1.0 / vertex_masses(mesh))
    K = (L @ inv_m @ L).tocsr()

    x = np.zeros(n)
    x[ids] = constraints.values
    is_free = np.ones(n, dtype=bool)
    is_free[ids] = False
    free = np.flatnonzero(is_free)
    if len(free):
        K_ff = K[free][:, free]
        rhs = -K[free][:, ids] @ constraints.values
        sol = spla.spsolve(K_ff.tocsc(), rhs)
        if not np.all(np.isfinite(sol)):
            raise RadiusError("biharmonic solve failed (singular system)")
        residual = np.abs(K_ff @ sol - rhs)
        scale = max(float(np.abs(rhs).max()), 1.0)
        if residual.max() > 1e-8 * scale:
            raise RadiusError(
                f"biharmonic solve residual {residual.max():.3e} above tolerance")
        x[free] = sol
    if x.min() <= 0:
        raise RadiusError(
            f"interpolated radius dips to {x.min():.6g} <= 0; "
            "constraints are incompatible with a positive field")
    return RadiusField(mesh, x)


# ---------------------------------------------------------------------------
# gradients and slope validation


def gradient_on_face(field: RadiusField, face_id: int) -> np.ndarray:
    """Tangential gradient of the linear interpolant on one face."""
    return face_gradients(field, np.array([face_id]))[0]


def face_gradients(field: RadiusField, face_ids: np.ndarray | None = None) -> np.ndarray:
    """Per-face tangential gradients, shape (k, 3), lying in the face planes.

    Solves the 2x2 Gram system g . e1 = r1 - r0, g . e2 = r2 - r0 for the
    in-plane vector g on each face.
    """
    mesh = field.mesh
    if face_ids is None:
        face_ids = np.arange(mesh.n_faces)
    f = mesh.faces[face_ids]
    v = mesh.vertices
    e1 = v[f[:, 1]] - v[f[:, 0]]
    e2 = v[f[:, 2]] - v[f[:, 0]]
    d1 = field.values[f[:, 1]] - field.values[f[:, 0]]
    d2 = field.values[f[:, 2]] - field.values[f[:, 0]]
    a = np.einsum("ij,ij->i", e1, e1)
    b = np.einsum("ij,ij->i", e1, e2)
    c = np.einsum("ij,ij->i", e2, e2)
    det = a * c - b * b
    if np.any(det <= 1e-24 * np.maximum(a * c, 1e-300)):
        bad = int(np.argmax(det <= 1e-24 * np.maximum(a * c, 1e-300)))
        raise MeshError(f"degenerate face {int(face_ids[bad])} in gradient computation")
    alpha = (c * d1 - b * d2) / det
    beta = (a * d2 - b * d1) / det
    return alpha[:, None] * e1 + beta[:, None] * e2


@dataclass(frozen=True)
class LipschitzReport:
    """Result of the per-face slope check."""

    ok: bool
    max_slope: float
    violating_faces: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))


def validate_lipschitz(field: RadiusField, limit: float = 1.0,
                       tol: float = 1e-6) -> LipschitzReport:
    """Check that every face gradient magnitude stays at or below ``limit``.

    ``tol`` is relative: slopes up to limit * (1 + tol) pass, absorbing
    floating-point noise in the per-face gradients.
    """
    grads = face_gradients(field)
    slopes = np.linalg.norm(grads, axis=1)
    bad = np.flatnonzero(slopes > limit * (1.0 + tol))
    return LipschitzReport(ok=len(bad) == 0,
                           max_slope=float(slopes.max()) if len(slopes) else 0.0,
                           violating_faces=bad)


# ---------------------------------------------------------------------------
# radius sources: files and closed-form expressions


_EXPR_NAMES = {
    "sin": np.sin, "cos": np.cos, "tan": np.tan, "exp": np.exp,
    "log": np.log, "sqrt": np.sqrt, "abs": np.abs, "arctan": np.arctan,
    "arcsin": np.arcsin, "arccos": np.arccos, "floor": np.floor,
    "pi": np.pi, "e": np.e, "minimum": np.minimum, "maximum": np.maximum,
}


def evaluate_expression(expr: str, **variables) -> np.ndarray:
    """Evaluate a closed-form scalar expression over numpy array variables.

    Exposes basic math functions plus the provided variables (typically
    x, y, z, r for positions or u for curve parameters).
    """
    names = dict(_EXPR_NAMES)
    names.update(variables)
    try:
        code = compile(expr, "<radius-expression>", "eval")
    except SyntaxError as exc:
        raise RadiusError(f"bad expression {expr!r}: {exc}") from exc
    for name in code.co_names:
        if name not in names:
            raise RadiusError(f"unknown name {name!r} in expression {expr!r}")
    out = eval(code, {"__builtins__": {}}, names)
    return np.asarray(out, dtype=float)


def field_from_expression(mesh: TriangleMesh, expr: str) -> RadiusField:
    """Radius field from an expression in x, y, z and r = |(x, y, z)|."""
    v = mesh.vertices
    r = np.linalg.norm(v, axis=1)
    vals = evaluate_expression(expr, x=v[:, 0], y=v[:, 1], z=v[:, 2], r=r)
    vals = np.broadcast_to(vals, (mesh.n_vertices,)).copy()
    return RadiusField(mesh, vals)


def load_radius_values(path: str, mesh: TriangleMesh) -> RadiusField:
    """Full per-vertex radius file: one value per line, vertex order."""
    vals = _read_floats(path)
    if vals.shape != (mesh.n_vertices,):
        raise RadiusError(
            f"{path}: {len(vals)} radii for {mesh.n_vertices} vertices")
    return RadiusField(mesh, vals)


def load_radius_constraints(path: str) -> RadiusConstraintSet:
    """Sparse constraint file: lines of `vertex_id radius`."""
    ids = []
    vals = []
    with open(path, "r") as fh:
        for ln, line in enumerate(fh, start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            parts = stripped.split()
            if len(parts) != 2:
                raise RadiusError(f"{path}:{ln}: expected `vertex_id radius`")
            try:
                ids.append(int(parts[0]))
                vals.append(float(parts[1]))
            except ValueError as exc:
                raise RadiusError(f"{path}:{ln}: bad number") from exc
    return RadiusConstraintSet(np.array(ids, dtype=np.int64),
                               np.array(vals, dtype=float))


def _read_floats(path: str) -> np.ndarray:
    out = []
    with open(path, "r") as fh:
        for ln, line in enumerate(fh, start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            try:
                out.append(float(stripped))
            except ValueError as exc:
                raise RadiusError(f"{path}:{ln}: bad radius value") from exc
    return np.array(out, dtype=float)
