"""Crust extraction from power diagrams of paired sites.

The offset surface is approximated by the power-cell facets that separate a
base cell from a displaced cell.  Each such facet is the dual polygon of a
triangulation edge, read off as the cycle of power vertices of the cells
around that edge.  Because padding bounds every real cell the facets close
up, and the resulting polygon complex is watertight by construction: a dual
edge is shared by exactly two separating facets or none.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from functools import cached_property

import numpy as np
from scipy.spatial import cKDTree

from .mesh import TriangleMesh, fan_triangulate
from .powerdiagram import PowerDiagram, PowerDiagramError
from .sampling import SiteKind

_MERGE_TOL_FACTOR = 1e-12


class CrustError(Exception):
    """Raised when no crust exists or extraction breaks down."""


@dataclass(frozen=True)
class VertexConstraint:
    """Tangent-plane constraint contributed by one site pair: the plane
    through point + radius * direction with normal direction."""

    point: np.ndarray
    direction: np.ndarray
    radius: float

    @property
    def target(self) -> float:
        return float(np.dot(self.direction, self.point)) + self.radius


@dataclass
class CrustAudit:
    """Edge-sharing census of the crust polygon complex.

    Cross-pair facets between neighbouring samples are epsilon-thin slivers
    and unavoidable, so misalignment is reported both by count and by area
    fraction; only the latter signals real under-sampling.
    """

    polygon_count: int
    edge_count: int
    interior_edges: int
    boundary_edges: int
    nonmanifold_edges: int
    misaligned_facets: int
    misaligned_area_fraction: float
    merged_vertices: int
    dropped_degenerate: int

    @property
    def is_watertight(self) -> bool:
        return self.boundary_edges == 0 and self.nonmanifold_edges == 0

    def format_line(self) -> str:
        return (f"polygons {self.polygon_count} edges {self.edge_count} "
                f"boundary {self.boundary_edges} nonmanifold {self.nonmanifold_edges} "
                f"misaligned {self.misaligned_facets} "
                f"(area {self.misaligned_area_fraction:.3e})")


@dataclass
class CrustSurface:
    """Polygonal crust with per-vertex refinement constraints.

    vertices : (nv, 3) power vertices after merging
    polygons : list of vertex index cycles, oriented base-to-displaced
        (flipped for inward-layer facets so normals point off the solid)
    base_sites / displaced_sites : (nf,) defining site indices
    matched : (nf,) True when the two sites stem from the same base sample
    facet_normals : (nf, 3) exact radical-plane normals, off the solid
    facet_layer_dirs : (nf, 3) displacement direction of the facet's
        displaced site, off the solid.  Equals the facet normal on matched
        facets; on cross-pair facets it is the offset direction of the
        layer behind the facet, which is what feature tests should compare.
    constraint_* : CSR arrays of the per-vertex tangent-plane constraints
    """

    vertices: np.ndarray
    polygons: list[np.ndarray]
    base_sites: np.ndarray
    displaced_sites: np.ndarray
    matched: np.ndarray
    constraint_indptr: np.ndarray
    constraint_points: np.ndarray
    constraint_dirs: np.ndarray
    constraint_radii: np.ndarray
    merged_vertices: int = 0
    dropped_degenerate: int = 0
    facet_normals: np.ndarray | None = None
    facet_layer_dirs: np.ndarray | None = None

    @property
    def polygon_count(self) -> int:
        return len(self.polygons)

    @property
    def vertex_count(self) -> int:
        return len(self.vertices)

    def contributors(self, v: int) -> list[VertexConstraint]:
        lo, hi = self.constraint_indptr[v], self.constraint_indptr[v + 1]
        return [VertexConstraint(self.constraint_points[k],
                                 self.constraint_dirs[k],
                                 float(self.constraint_radii[k]))
                for k in range(lo, hi)]

    @cached_property
    def _edge_counts(self):
        keys = []
        nv = len(self.vertices)
        for poly in self.polygons:
            nxt = np.roll(poly, -1)
            a = np.minimum(poly, nxt)
            b = np.maximum(poly, nxt)
            keys.append(a.astype(np.int64) * nv + b)
        if not keys:
            return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
        uniq, counts = np.unique(np.concatenate(keys), return_counts=True)
        return uniq, counts

    def polygon_areas(self) -> np.ndarray:
        return np.array([0.5 * np.linalg.norm(_newell_normal(self.vertices[poly]))
                         for poly in self.polygons])

    def audit(self) -> CrustAudit:
        uniq, counts = self._edge_counts
        areas = self.polygon_areas()
        total = float(areas.sum())
        mis_area = float(areas[~self.matched].sum()) / total if total > 0 else 0.0
        return CrustAudit(
            polygon_count=len(self.polygons),
            edge_count=len(uniq),
            interior_edges=int((counts == 2).sum()),
            boundary_edges=int((counts == 1).sum()),
            nonmanifold_edges=int((counts > 2).sum()),
            misaligned_facets=int((~self.matched).sum()),
            misaligned_area_fraction=mis_area,
            merged_vertices=self.merged_vertices,
            dropped_degenerate=self.dropped_degenerate,
        )

    def euler_characteristic(self) -> int:
        uniq, _ = self._edge_counts
        used = np.unique(np.concatenate(self.polygons)) if self.polygons else []
        return len(used) - len(uniq) + len(self.polygons)

    def to_triangle_mesh(self, vertices: np.ndarray | None = None) -> TriangleMesh:
        """Fan-triangulate the polygons (with refined vertices if given)."""
        pts = self.vertices if vertices is None else np.asarray(vertices, float)
        return fan_triangulate(pts, self.polygons)

    def triangle_sources(self) -> np.ndarray:
        """Polygon index of each triangle emitted by to_triangle_mesh."""
        counts = [1 if len(p) == 3 else len(p) for p in self.polygons]
        return np.repeat(np.arange(len(self.polygons)), counts)

    def feature_edges(self, threshold: float, use: str = "layer",
                      min_area: float | None = None) -> np.ndarray:
        """Vertex pairs lying on crease lines of the crust.

        Compares a per-facet direction of the two facets meeting at each
        edge and keeps edges where it jumps by at least ``threshold``
        radians.  Both direction fields are exact no matter how degenerate
        the facet geometry is:

        use="layer" compares displacement directions of the generating
        sites.  Across terracing noise (a matched facet next to the
        cross-pair sliver of a neighbouring sample) they agree to within
        the sampling angle while a genuine crease jumps by the full crease
        angle, so this detects the macroscopic crease graph where triangle
        dihedrals on the same surface are pure noise.

        use="normal" compares the radical-plane facet normals and hence
        returns every true crease of the crust polyhedron, terracing steps
        included.  This is the edge set to fan when the crust itself is
        offset again: each such edge bounds the polyhedron's normal cone.

        ``min_area`` keeps only edges where both facets have at least that
        area.  Cross-pair slivers carry arbitrary radical-plane normals on
        vanishing area, so without the guard they flood the normal-mode
        edge set with false creases.
        """
        if use == "layer":
            dirs = self.facet_layer_dirs
        elif use == "normal":
            dirs = self.facet_normals
        else:
            raise ValueError(f"use must be 'layer' or 'normal', got {use!r}")
        if dirs is None:
            raise CrustError(f"crust carries no facet {use} directions")
        substantial = None
        if min_area is not None:
            substantial = self.polygon_areas() >= min_area
        nv = len(self.vertices)
        edge_polys: dict[int, list[int]] = {}
        for pid, poly in enumerate(self.polygons):
            nxt = np.roll(poly, -1)
            a = np.minimum(poly, nxt).astype(np.int64)
            b = np.maximum(poly, nxt).astype(np.int64)
            for key in a * nv + b:
                edge_polys.setdefault(int(key), []).append(pid)
        out = []
        for key, pids in edge_polys.items():
            if len(pids) != 2:
                continue
            p, q = pids
            if substantial is not None and not (substantial[p] and substantial[q]):
                continue
            cosang = float(dirs[p] @ dirs[q])
            if np.arccos(np.clip(cosang, -1.0, 1.0)) >= threshold:
                out.append((key // nv, key % nv))
        if not out:
            return np.empty((0, 2), dtype=np.int64)
        return np.array(sorted(out), dtype=np.int64)


@dataclass
class Crust2D:
    """Planar crust: segments separating base cells from displaced cells."""

    vertices: np.ndarray  # (nv, 2)
    segments: np.ndarray  # (ns, 2) vertex index pairs
    base_sites: np.ndarray
    displaced_sites: np.ndarray
    matched: np.ndarray
    constraint_indptr: np.ndarray
    constraint_points: np.ndarray
    constraint_dirs: np.ndarray
    constraint_radii: np.ndarray

    @property
    def segment_count(self) -> int:
        return len(self.segments)

    def component_count(self) -> int:
        parent = np.arange(len(self.vertices))

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for a, b in self.segments:
            ra, rb = find(int(a)), find(int(b))
            if ra != rb:
                parent[ra] = rb
        used = np.unique(self.segments)
        return len({find(int(v)) for v in used})

    def loops(self) -> list[np.ndarray]:
        """Closed polylines assembled by walking unused segments."""
        by_vertex: dict[int, list[int]] = {}
        for idx, (a, b) in enumerate(self.segments):
            by_vertex.setdefault(int(a), []).append(idx)
            by_vertex.setdefault(int(b), []).append(idx)
        visited = np.zeros(len(self.segments), dtype=bool)
        loops = []
        for start in range(len(self.segments)):
            if visited[start]:
                continue
            visited[start] = True
            a, b = int(self.segments[start, 0]), int(self.segments[start, 1])
            loop = [a, b]
            current = b
            while current != a:
                nxt_seg = None
                for idx in by_vertex.get(current, []):
                    if not visited[idx]:
                        nxt_seg = idx
                        break
                if nxt_seg is None:
                    break
                visited[nxt_seg] = True
                u, v = int(self.segments[nxt_seg, 0]), int(self.segments[nxt_seg, 1])
                current = v if u == current else u
                loop.append(current)
            if loop[0] == loop[-1]:
                loop = loop[:-1]
            loops.append(np.array(loop, dtype=np.int64))
        return loops


def _separating_edges(diagram: PowerDiagram, orientation: int | None):
    """Triangulation edges with one base and one displaced endpoint."""
    edges = diagram.rt_edge_array()
    ki = diagram.kinds[edges[:, 0]]
    kj = diagram.kinds[edges[:, 1]]
    mask = (ki.astype(np.int64) + kj.astype(np.int64)) == (
        int(SiteKind.BASE) + int(SiteKind.DISPLACED))
    edges = edges[mask]
    swap = diagram.kinds[edges[:, 0]] == int(SiteKind.DISPLACED)
    edges[swap] = edges[swap][:, ::-1]  # column 0 base, column 1 displaced
    if orientation is not None:
        orient = diagram.orientations[edges[:, 1]]
        edges = edges[(orient == orientation) | (orient == 0)]
    return edges


def _merge_vertices(points: np.ndarray):
    """Cluster power vertices closer than 1e-12 of the cloud diagonal.
    Returns (representatives, old index -> new index map, merged count)."""
    if len(points) == 0:
        return points, np.empty(0, dtype=np.int64), 0
    diag = float(np.linalg.norm(points.max(axis=0) - points.min(axis=0)))
    tol = _MERGE_TOL_FACTOR * max(diag, 1.0)
    pairs = cKDTree(points).query_pairs(tol, output_type="ndarray")
    parent = np.arange(len(points))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a, b in pairs:
        ra, rb = find(int(a)), find(int(b))
        if ra != rb:
            parent[ra] = rb
    roots = np.array([find(int(i)) for i in range(len(points))])
    uniq, remap = np.unique(roots, return_inverse=True)
    reps = np.zeros((len(uniq), points.shape[1]))
    counts = np.bincount(remap)
    np.add.at(reps, remap, points)
    reps /= counts[:, None]
    return reps, remap, int(len(points) - len(uniq))


def _compress_cycle(cycle: np.ndarray) -> np.ndarray | None:
    """Drop consecutive duplicates; None when fewer than 3 distinct remain."""
    keep = cycle != np.roll(cycle, 1)
    out = cycle[keep] if keep.any() else cycle[:1]
    if len(np.unique(out)) < 3 or len(out) < 3:
        return None
    return out


def _newell_normal(pts: np.ndarray) -> np.ndarray:
    nxt = np.roll(pts, -1, axis=0)
    return np.array([
        np.sum((pts[:, 1] - nxt[:, 1]) * (pts[:, 2] + nxt[:, 2])),
        np.sum((pts[:, 2] - nxt[:, 2]) * (pts[:, 0] + nxt[:, 0])),
        np.sum((pts[:, 0] - nxt[:, 0]) * (pts[:, 1] + nxt[:, 1])),
    ])


def _constraint_tables(diagram: PowerDiagram, vertex_cells: list[np.ndarray],
                       vertices: np.ndarray):
    """Per-vertex tangent-plane constraints in CSR form.

    For every displaced site among a vertex's defining sites, the constraint
    is the plane of its own pair.  A base site whose displaced children are
    all absent contributes the fan direction best aligned with the vertex.
    """
    kinds = diagram.kinds
    pair_ids = diagram.pair_ids
    base_of_pair: dict[int, int] = {}
    base_idx = np.flatnonzero(kinds == int(SiteKind.BASE))
    for s in base_idx:
        base_of_pair[int(pair_ids[s])] = int(s)
    disp_idx = np.flatnonzero(kinds == int(SiteKind.DISPLACED))
    disp_sorted = disp_idx[np.argsort(pair_ids[disp_idx], kind="stable")]
    disp_pids = pair_ids[disp_sorted]

    def fan_of(pid: int) -> np.ndarray:
        lo = np.searchsorted(disp_pids, pid, side="left")
        hi = np.searchsorted(disp_pids, pid, side="right")
        return disp_sorted[lo:hi]

    indptr = [0]
    pts, dirs, radii = [], [], []
    for v, cells in enumerate(vertex_cells):
        if len(cells) == 1:
            site_ids = diagram.simplices[cells[0]]
        else:
            site_ids = np.unique(diagram.simplices[cells])
        groups: dict[int, list[int]] = {}
        for s in site_ids:
            s = int(s)
            if kinds[s] == int(SiteKind.PADDING):
                continue
            groups.setdefault(int(pair_ids[s]), []).append(s)
        for pid, members in groups.items():
            disp = [s for s in members if kinds[s] == int(SiteKind.DISPLACED)]
            base = base_of_pair.get(pid)
            if base is None:
                continue
            if disp:
                for s in disp:
                    pts.append(diagram.positions[base])
                    dirs.append(diagram.directions[s])
                    radii.append(diagram.base_radii[s])
            else:
                fan = fan_of(pid)
                if len(fan) == 0:
                    continue
                rel = vertices[v] - diagram.positions[base]
                scores = diagram.directions[fan] @ rel
                s = int(fan[int(np.argmax(scores))])
                pts.append(diagram.positions[base])
                dirs.append(diagram.directions[s])
                radii.append(diagram.base_radii[s])
        indptr.append(len(pts))
    dim = diagram.dim
    return (np.array(indptr, dtype=np.int64),
            np.array(pts, dtype=float).reshape(-1, dim),
            np.array(dirs, dtype=float).reshape(-1, dim),
            np.array(radii, dtype=float))


def extract(diagram: PowerDiagram, orientation: int | None = None) -> CrustSurface:
    """Pull the separating facets out of a 3D power diagram.

    orientation selects the outward (+1) or inward (-1) layer when the
    diagram holds both; None keeps every separating facet.
    """
    if diagram.dim != 3:
        raise CrustError("extract expects a 3D diagram; use extract_planar")
    edges = _separating_edges(diagram, orientation)
    if len(edges) == 0:
        raise CrustError(
            "no separating facets: the offset layers are empty or fully occluded")
    rings = []
    ring_edges = []
    for i, j in edges:
        ring = diagram.cells_around_edge(int(i), int(j))
        if len(ring) == 0:
            continue
        rings.append(ring)
        ring_edges.append((int(i), int(j)))
    if not rings:
        raise CrustError("no closed dual polygons found")

    used = np.unique(np.concatenate(rings))
    cell_local = np.full(diagram.n_cells, -1, dtype=np.int64)
    cell_local[used] = np.arange(len(used))
    raw_pts = diagram.dual_vertices[used]
    verts, remap, merged = _merge_vertices(raw_pts)

    polygons = []
    base_sites = []
    displaced_sites = []
    normals = []
    layer_dirs = []
    dropped = 0
    kept_rings = []
    for ring, (i, j) in zip(rings, ring_edges):
        cycle = _compress_cycle(remap[cell_local[ring]])
        if cycle is None:
            dropped += 1
            continue
        # orient the facet from the base cell toward the displaced cell
        ref = diagram.positions[j] - diagram.positions[i]
        orient_sign = diagram.orientations[j]
        if orient_sign < 0:
            ref = -ref
        if _newell_normal(verts[cycle]) @ ref < 0:
            cycle = cycle[::-1].copy()
        polygons.append(cycle)
        base_sites.append(i)
        displaced_sites.append(j)
        normals.append(ref / np.linalg.norm(ref))
        ld = diagram.directions[j]
        if orient_sign < 0:
            ld = -ld
        nrm = np.linalg.norm(ld)
        layer_dirs.append(ld / nrm if nrm > 0 else normals[-1])
        kept_rings.append(ring)
    if not polygons:
        raise CrustError("all separating facets degenerated to slivers")

    base_sites = np.array(base_sites, dtype=np.int64)
    displaced_sites = np.array(displaced_sites, dtype=np.int64)
    matched = diagram.pair_ids[base_sites] == diagram.pair_ids[displaced_sites]

    vertex_cells: list[list[int]] = [[] for _ in range(len(verts))]
    for gi, li in zip(used, remap):
        vertex_cells[li].append(int(gi))
    vertex_cells = [np.array(c, dtype=np.int64) for c in vertex_cells]
    indptr, cpts, cdirs, cradii = _constraint_tables(diagram, vertex_cells, verts)

    return CrustSurface(vertices=verts, polygons=polygons,
                        base_sites=base_sites, displaced_sites=displaced_sites,
                        matched=matched, constraint_indptr=indptr,
                        constraint_points=cpts, constraint_dirs=cdirs,
                        constraint_radii=cradii, merged_vertices=merged,
                        dropped_degenerate=dropped,
                        facet_normals=np.array(normals),
                        facet_layer_dirs=np.array(layer_dirs))


def extract_planar(diagram: PowerDiagram) -> Crust2D:
    """Pull the separating segments out of a 2D power diagram."""
    if diagram.dim != 2:
        raise CrustError("extract_planar expects a 2D diagram")
    edges = _separating_edges(diagram, None)
    if len(edges) == 0:
        raise CrustError(
            "no separating segments: the offset layer is empty or fully occluded")
    seg_cells = []
    kept = []
    for i, j in edges:
        cells = diagram.edge_cells(int(i), int(j))
        if len(cells) != 2:
            raise CrustError(
                f"separating edge ({i}, {j}) borders {len(cells)} cells; "
                f"padding should make this exactly two")
        seg_cells.append(cells)
        kept.append((int(i), int(j)))
    seg_cells = np.array(seg_cells, dtype=np.int64)
    used = np.unique(seg_cells)
    cell_local = np.full(diagram.n_cells, -1, dtype=np.int64)
    cell_local[used] = np.arange(len(used))
    verts, remap, _ = _merge_vertices(diagram.dual_vertices[used])
    segments = remap[cell_local[seg_cells]]
    good = segments[:, 0] != segments[:, 1]
    segments = segments[good]
    kept = [kept[k] for k in np.flatnonzero(good)]
    if len(segments) == 0:
        raise CrustError("all separating segments collapsed")
    base_sites = np.array([a for a, _ in kept], dtype=np.int64)
    displaced_sites = np.array([b for _, b in kept], dtype=np.int64)
    matched = diagram.pair_ids[base_sites] == diagram.pair_ids[displaced_sites]

    vertex_cells: list[list[int]] = [[] for _ in range(len(verts))]
    for gi, li in zip(used, remap):
        vertex_cells[li].append(int(gi))
    vertex_cells = [np.array(c, dtype=np.int64) for c in vertex_cells]
    indptr, cpts, cdirs, cradii = _constraint_tables(diagram, vertex_cells, verts)
    return Crust2D(vertices=verts, segments=segments, base_sites=base_sites,
                   displaced_sites=displaced_sites, matched=matched,
                   constraint_indptr=indptr, constraint_points=cpts,
                   constraint_dirs=cdirs, constraint_radii=cradii)
