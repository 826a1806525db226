"""Error metrics and brute-force offset oracles.

The generalized offset of a surface S with radius field R is the zero set
of phi(x) = min_{p in S} (|x - p| - R(p)).  The oracle evaluates phi by
dense surface sampling with a certified k-nearest-neighbour search and
contours it with marching cubes (or marching squares in the plane).  The
same module carries the comparison metrics used throughout: Chamfer and
Hausdorff distances, normal consistency, and the one-sided offset error
against an exact point-to-mesh distance.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .mesh import Polygon2D, TriangleMesh
from .radius import RadiusField


class MetricsError(Exception):
    pass


def _workers() -> int:
    return int(os.environ.get("VROFFSET_THREADS", "-1"))


# ---------------------------------------------------------------------------
# surface sampling


def sample_surface(mesh: TriangleMesh, count: int, seed: int = 0,
                   with_normals: bool = False):
    """Area-weighted uniform samples; optionally with their face normals."""
    rng = np.random.default_rng(seed)
    areas = mesh.face_areas
    cum = np.cumsum(areas)
    face_ids = np.searchsorted(cum, rng.random(count) * cum[-1])
    r1 = np.sqrt(rng.random(count))
    r2 = rng.random(count)
    bary = np.stack([1.0 - r1, r1 * (1.0 - r2), r1 * r2], axis=1)
    tri = mesh.vertices[mesh.faces[face_ids]]
    pts = np.einsum("ijk,ij->ik", tri, bary)
    if with_normals:
        # normals of the sampled faces only; the mesh may contain degenerate
        # faces elsewhere (zero area, never sampled) that face_normals rejects
        cross = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        return pts, cross / np.linalg.norm(cross, axis=1)[:, None]
    return pts, face_ids


def surface_point_cloud(mesh: TriangleMesh, field: RadiusField, count: int,
                        seed: int = 0):
    """Sample positions and radii for the distance-field oracle.

    Random area-weighted points are topped up with chains along every edge
    and all vertices so sharp features are represented at full density.
    """
    rng = np.random.default_rng(seed)
    areas = mesh.face_areas
    cum = np.cumsum(areas)
    face_ids = np.searchsorted(cum, rng.random(count) * cum[-1])
    a = np.sqrt(rng.random(count))
    b = rng.random(count)
    bary = np.stack([1.0 - a, a * (1.0 - b), a * b], axis=1)
    tri = mesh.vertices[mesh.faces[face_ids]]
    pts = np.einsum("ijk,ij->ik", tri, bary)
    radii = field.at_faces_barycentric(face_ids, bary)

    spacing = float(np.sqrt(mesh.face_areas.sum() / max(count, 1)))
    edges = mesh.edges
    p0 = mesh.vertices[edges[:, 0]]
    p1 = mesh.vertices[edges[:, 1]]
    lengths = np.linalg.norm(p1 - p0, axis=1)
    counts = np.maximum(1, np.ceil(lengths / spacing).astype(int))
    reps = np.repeat(np.arange(len(edges)), counts)
    t = np.concatenate([np.arange(1, c + 1) / (c + 1.0) for c in counts])
    edge_pts = p0[reps] + t[:, None] * (p1[reps] - p0[reps])
    edge_r = ((1 - t) * field.values[edges[reps, 0]]
              + t * field.values[edges[reps, 1]])

    all_pts = np.vstack([pts, edge_pts, mesh.vertices])
    all_r = np.concatenate([radii, edge_r, field.values])
    return all_pts, all_r


# ---------------------------------------------------------------------------
# exact point-to-mesh distance


def closest_point_on_triangles(p: np.ndarray, tri: np.ndarray) -> np.ndarray:
    """Closest point on each triangle to each query (paired, vectorized)."""
    a, b, c = tri[:, 0, :], tri[:, 1, :], tri[:, 2, :]
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    bp = p - b
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    cp = p - c
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)
    vc = d1 * d4 - d3 * d2
    vb = d5 * d2 - d1 * d6
    va = d3 * d6 - d5 * d4

    out = np.empty_like(p)
    done = np.zeros(len(p), dtype=bool)

    def claim(mask, value):
        nonlocal done
        take = mask & ~done
        out[take] = value[take]
        done = done | take

    claim((d1 <= 0) & (d2 <= 0), a)
    claim((d3 >= 0) & (d4 <= d3), b)
    with np.errstate(divide="ignore", invalid="ignore"):
        t_ab = np.where(d1 - d3 != 0, d1 / (d1 - d3), 0.0)
        claim((vc <= 0) & (d1 >= 0) & (d3 <= 0), a + t_ab[:, None] * ab)
        claim((d6 >= 0) & (d5 <= d6), c)
        t_ac = np.where(d2 - d6 != 0, d2 / (d2 - d6), 0.0)
        claim((vb <= 0) & (d2 >= 0) & (d6 <= 0), a + t_ac[:, None] * ac)
        den_bc = (d4 - d3) + (d5 - d6)
        t_bc = np.where(den_bc != 0, (d4 - d3) / den_bc, 0.0)
        claim((va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0),
              b + t_bc[:, None] * (c - b))
        denom = va + vb + vc
        denom = np.where(denom != 0, denom, 1.0)
        v = vb / denom
        w = vc / denom
        claim(np.ones(len(p), dtype=bool), a + v[:, None] * ab + w[:, None] * ac)
    return out


class _FaceTree:
    def __init__(self, mesh: TriangleMesh):
        self.mesh = mesh
        self.centroids = mesh.face_centroids
        self.tree = cKDTree(self.centroids)
        tri = mesh.vertices[mesh.faces]
        self.half_diam = float(
            np.linalg.norm(tri - self.centroids[:, None, :], axis=2).max())

    def query(self, points: np.ndarray, k: int):
        k = min(k, len(self.centroids))
        d, idx = self.tree.query(points, k=k, workers=_workers())
        if k == 1:
            d = d[:, None]
            idx = idx[:, None]
        return d, idx


def point_mesh_distance(points: np.ndarray, mesh: TriangleMesh,
                        chunk: int = 16384) -> np.ndarray:
    """Exact unsigned distance from each point to the triangle set.

    Candidate faces come from a centroid tree; the answer is certified when
    the best candidate distance cannot be beaten by any face whose centroid
    lies beyond the k-th candidate, and the candidate set grows otherwise.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    ft = _FaceTree(mesh)
    nf = len(mesh.faces)
    result = np.empty(len(points))
    pending = np.arange(len(points))
    k = min(32, nf)
    while len(pending):
        sub = points[pending]
        best = np.empty(len(sub))
        dk = np.empty(len(sub))
        # keep the candidate gather below ~0.5M rows as k escalates
        step = max(1, chunk * 32 // k)
        for lo in range(0, len(sub), step):
            hi = min(lo + step, len(sub))
            d_cand, idx = ft.query(sub[lo:hi], k)
            tri = mesh.vertices[mesh.faces[idx.reshape(-1)]]
            q = np.repeat(sub[lo:hi], idx.shape[1], axis=0)
            cp = closest_point_on_triangles(q, tri)
            dist = np.linalg.norm(q - cp, axis=1).reshape(idx.shape)
            best[lo:hi] = dist.min(axis=1)
            dk[lo:hi] = d_cand[:, -1]
        certified = (best <= dk - ft.half_diam) | (k >= nf)
        result[pending[certified]] = best[certified]
        pending = pending[~certified]
        k = min(k * 4, nf)
    return result


def winding_number(points: np.ndarray, mesh: TriangleMesh,
                   chunk: int = 64) -> np.ndarray:
    """Generalized winding number via summed signed solid angles."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    tri = mesh.vertices[mesh.faces]
    out = np.empty(len(points))
    for lo in range(0, len(points), chunk):
        hi = min(lo + chunk, len(points))
        q = points[lo:hi]
        a = tri[None, :, 0, :] - q[:, None, :]
        b = tri[None, :, 1, :] - q[:, None, :]
        c = tri[None, :, 2, :] - q[:, None, :]
        la = np.linalg.norm(a, axis=2)
        lb = np.linalg.norm(b, axis=2)
        lc = np.linalg.norm(c, axis=2)
        det = np.einsum("qfi,qfi->qf", a, np.cross(b, c))
        den = (la * lb * lc + np.einsum("qfi,qfi->qf", a, b) * lc
               + np.einsum("qfi,qfi->qf", b, c) * la
               + np.einsum("qfi,qfi->qf", c, a) * lb)
        out[lo:hi] = np.arctan2(det, den).sum(axis=1) / (2.0 * np.pi)
    return out


def signed_point_mesh_distance(points: np.ndarray, mesh: TriangleMesh) -> np.ndarray:
    """Negative inside (winding number above one half)."""
    d = point_mesh_distance(points, mesh)
    w = winding_number(points, mesh)
    return np.where(w > 0.5, -d, d)


def winding_number_2d(points: np.ndarray, polygon: Polygon2D) -> np.ndarray:
    """Winding number of a closed polygon around each planar point."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    v = polygon.vertices
    a = v[None, :, :] - points[:, None, :]
    b = np.roll(v, -1, axis=0)[None, :, :] - points[:, None, :]
    cross = a[:, :, 0] * b[:, :, 1] - a[:, :, 1] * b[:, :, 0]
    dot = np.einsum("qei,qei->qe", a, b)
    return np.arctan2(cross, dot).sum(axis=1) / (2.0 * np.pi)


# ---------------------------------------------------------------------------
# generalized distance field


class DistanceField:
    """phi(x) = min_i (|x - p_i| - r_i) over a sampled variable-radius
    surface, evaluated exactly with a certified k-NN search.

    A candidate minimum from the k nearest samples is certified when every
    unseen sample, being at least as far as the k-th, cannot undercut it
    even with the largest radius in the cloud.
    """

    def __init__(self, points: np.ndarray, radii: np.ndarray | float):
        self.points = np.atleast_2d(np.asarray(points, dtype=float))
        if np.isscalar(radii):
            radii = np.full(len(self.points), float(radii))
        self.radii = np.asarray(radii, dtype=float).reshape(-1)
        if len(self.radii) != len(self.points):
            raise MetricsError("radius count does not match point count")
        self.r_max = float(self.radii.max())
        self.tree = cKDTree(self.points)

    def phi(self, queries: np.ndarray, k0: int = 8) -> np.ndarray:
        queries = np.atleast_2d(np.asarray(queries, dtype=float))
        n = len(self.points)
        out = np.empty(len(queries))
        pending = np.arange(len(queries))
        k = min(k0, n)
        while len(pending):
            d, idx = self.tree.query(queries[pending], k=k, workers=_workers())
            if k == 1:
                d = d[:, None]
                idx = idx[:, None]
            cand = (d - self.radii[idx]).min(axis=1)
            certified = (d[:, -1] >= cand + self.r_max) | (k >= n)
            out[pending[certified]] = cand[certified]
            pending = pending[~certified]
            k = min(k * 8, n)
        return out

    def grid(self, lo: np.ndarray, hi: np.ndarray, resolution: int):
        """phi sampled on a regular grid; returns (volume, axes)."""
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        dim = len(lo)
        axes = [np.linspace(lo[i], hi[i], resolution) for i in range(dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        queries = np.stack([m.reshape(-1) for m in mesh], axis=1)
        values = self.phi(queries).reshape([resolution] * dim)
        return values, axes


# ---------------------------------------------------------------------------
# brute-force offsets


def brute_force_offset(mesh: TriangleMesh, field: RadiusField,
                       resolution: int = 128, samples: int = 200000,
                       margin: float = 0.05, seed: int = 0) -> TriangleMesh:
    """Marching-cubes contour of the sampled distance field."""
    from skimage import measure

    pts, radii = surface_point_cloud(mesh, field, samples, seed)
    df = DistanceField(pts, radii)
    r_max = float(radii.max())
    lo = mesh.vertices.min(axis=0) - (r_max + margin * mesh.bbox_diagonal())
    hi = mesh.vertices.max(axis=0) + (r_max + margin * mesh.bbox_diagonal())
    volume, axes = df.grid(lo, hi, resolution)
    if volume.min() > 0 or volume.max() < 0:
        raise MetricsError("offset level set does not cross the sample grid")
    step = [(axes[i][-1] - axes[i][0]) / (resolution - 1) for i in range(3)]
    verts, faces, _, _ = measure.marching_cubes(volume, level=0.0,
                                                spacing=tuple(step))
    verts = verts + lo[None, :]
    return TriangleMesh(verts, faces.astype(np.int64))


def brute_force_offset_2d(polygon: Polygon2D, radii: np.ndarray | float,
                          resolution: int = 1024, margin: float = 0.05):
    """Marching-squares contour of the planar distance field.

    Returns (loops, phi, (lo, hi)) where loops are polylines in world
    coordinates and phi is the sampled grid for pixel-level comparisons.
    """
    from skimage import measure

    pts, r = polygon_point_cloud(polygon, radii, spacing_factor=0.25,
                                 resolution=resolution)
    df = DistanceField(pts, r)
    v = polygon.vertices
    r_max = float(np.max(r))
    diag = float(np.linalg.norm(v.max(axis=0) - v.min(axis=0)))
    lo = v.min(axis=0) - (r_max + margin * diag)
    hi = v.max(axis=0) + (r_max + margin * diag)
    phi, axes = df.grid(lo, hi, resolution)
    contours = measure.find_contours(phi, 0.0)
    sx = (hi[0] - lo[0]) / (resolution - 1)
    sy = (hi[1] - lo[1]) / (resolution - 1)
    loops = [np.column_stack([c[:, 0] * sx + lo[0], c[:, 1] * sy + lo[1]])
             for c in contours]
    return loops, phi, (lo, hi)


def polygon_point_cloud(polygon: Polygon2D, radii: np.ndarray | float,
                        spacing_factor: float = 0.25, resolution: int = 1024):
    """Dense boundary samples with linearly interpolated radii."""
    v = polygon.vertices
    n = len(v)
    if np.isscalar(radii):
        radii = np.full(n, float(radii))
    radii = np.asarray(radii, dtype=float).reshape(-1)
    diag = float(np.linalg.norm(v.max(axis=0) - v.min(axis=0)))
    r_max = float(radii.max())
    px = (diag + 2 * r_max) / resolution
    spacing = spacing_factor * px
    pts = []
    rs = []
    for i in range(n):
        j = (i + 1) % n
        length = float(np.linalg.norm(v[j] - v[i]))
        m = max(2, int(np.ceil(length / spacing)) + 1)
        t = np.linspace(0.0, 1.0, m, endpoint=False)
        pts.append(v[i][None, :] + t[:, None] * (v[j] - v[i])[None, :])
        rs.append((1 - t) * radii[i] + t * radii[j])
    return np.vstack(pts), np.concatenate(rs)


# ---------------------------------------------------------------------------
# comparison metrics


@dataclass(frozen=True)
class MetricsReport:
    """Chamfer distance (mean squared, x 1e4), Hausdorff distance (max
    squared, x 1e2), and normal consistency (mean |cos|, x 1e2)."""

    chamfer: float
    hausdorff: float
    normal_consistency: float

    @property
    def chamfer_scaled(self) -> float:
        return self.chamfer * 1e4

    @property
    def hausdorff_scaled(self) -> float:
        return self.hausdorff * 1e2

    @property
    def normal_consistency_scaled(self) -> float:
        return self.normal_consistency * 1e2

    def format_line(self) -> str:
        return (f"CD(x1e4) {self.chamfer_scaled:.4f}  "
                f"HD(x1e2) {self.hausdorff_scaled:.4f}  "
                f"NC(x1e2) {self.normal_consistency_scaled:.4f}")


def compare_meshes(mesh_a: TriangleMesh, mesh_b: TriangleMesh,
                   count: int = 100000, seed: int = 0) -> MetricsReport:
    """Sampled symmetric Chamfer / Hausdorff / normal-consistency metrics."""
    pa, na = sample_surface(mesh_a, count, seed, with_normals=True)
    pb, nb = sample_surface(mesh_b, count, seed + 1, with_normals=True)
    tree_a = cKDTree(pa)
    tree_b = cKDTree(pb)
    d_ab, i_ab = tree_b.query(pa, k=1, workers=_workers())
    d_ba, i_ba = tree_a.query(pb, k=1, workers=_workers())
    sq_ab = d_ab ** 2
    sq_ba = d_ba ** 2
    chamfer = 0.5 * (float(sq_ab.mean()) + float(sq_ba.mean()))
    hausdorff = max(float(sq_ab.max()), float(sq_ba.max()))
    nc_ab = np.abs(np.einsum("ij,ij->i", na, nb[i_ab]))
    nc_ba = np.abs(np.einsum("ij,ij->i", nb, na[i_ba]))
    nc = 0.5 * (float(nc_ab.mean()) + float(nc_ba.mean()))
    return MetricsReport(chamfer=chamfer, hausdorff=hausdorff,
                         normal_consistency=nc)


@dataclass(frozen=True)
class OffsetErrorReport:
    mean: float
    rms: float
    max: float

    def format_line(self) -> str:
        return f"offset error mean {self.mean:.6g} rms {self.rms:.6g} max {self.max:.6g}"


def one_sided_offset_error(offset_mesh: TriangleMesh, source_mesh: TriangleMesh,
                           distance, count: int = 10000,
                           seed: int = 0) -> OffsetErrorReport:
    """|D(x) - d| statistics over samples x of the offset surface, where D
    is the exact distance to the source mesh.  Only meaningful for constant
    radii; a varying field raises."""
    if isinstance(distance, RadiusField):
        if not distance.is_constant():
            raise MetricsError(
                "one-sided offset error requires a constant radius field")
        distance = distance.constant()
    d = float(distance)
    pts, _ = sample_surface(offset_mesh, count, seed)
    err = np.abs(point_mesh_distance(pts, source_mesh) - d)
    return OffsetErrorReport(mean=float(err.mean()),
                             rms=float(np.sqrt((err ** 2).mean())),
                             max=float(err.max()))
