"""Power diagrams of weighted sites via the lifted convex hull.

A site (p, w) lifts to (p, |p|^2 - w).  The downward-facing facets of the
convex hull of the lifted sites are the cells of the regular triangulation,
whose dual is the power diagram.  Padding sites with weight zero on an
inflated bounding box keep every real cell bounded, so the dual facets we
care about are always closed polygons.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .sampling import SiteKind, WeightedSite


class PowerDiagramError(Exception):
    """Raised when a diagram cannot be built or queried."""


_DOWNWARD_TOL = 1e-10
_CERT_TOL = 1e-9


def _pad_corners(positions: np.ndarray, dim: int) -> np.ndarray:
    """Corners of the real-site bounding box inflated by three diagonals."""
    lo = positions.min(axis=0)
    hi = positions.max(axis=0)
    diag = float(np.linalg.norm(hi - lo))
    if diag <= 0:
        diag = 1.0
    center = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo) + 1.5 * diag
    corners = np.array(np.meshgrid(*[[-1.0, 1.0]] * dim, indexing="ij"))
    corners = corners.reshape(dim, -1).T
    return center[None, :] + corners * half[None, :]


@dataclass
class PowerDiagram:
    """Regular triangulation of weighted sites plus its dual vertices.

    positions : (n, dim) site positions (padding included, appended last)
    weights : (n,) power weights
    kinds / pair_ids / orientations / base_radii / directions : per-site
        metadata copied from the input sites
    simplices : (m, dim+1) site indices of the triangulation cells
    neighbors : (m, dim+1) cell adjacency, neighbors[c, k] shares the facet
        of cell c opposite vertex k; -1 on the outer boundary
    dual_vertices : (m, dim) power vertex of each cell
    """

    dim: int
    positions: np.ndarray
    weights: np.ndarray
    kinds: np.ndarray
    pair_ids: np.ndarray
    orientations: np.ndarray
    base_radii: np.ndarray
    directions: np.ndarray
    simplices: np.ndarray
    neighbors: np.ndarray
    dual_vertices: np.ndarray
    n_real: int

    @property
    def n_sites(self) -> int:
        return len(self.positions)

    @property
    def n_cells(self) -> int:
        return len(self.simplices)

    @cached_property
    def live_sites(self) -> np.ndarray:
        """Sites that own a non-empty cell (appear in some simplex)."""
        return np.unique(self.simplices)

    def power_distance(self, x: np.ndarray, ids=None) -> np.ndarray:
        """pow(x, s) = |x - p_s|^2 - w_s for the given site ids (all sites
        when ids is None).  x may be a single point or a batch."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        pos = self.positions if ids is None else self.positions[ids]
        w = self.weights if ids is None else self.weights[ids]
        diff = x[:, None, :] - pos[None, :, :]
        return np.einsum("ijk,ijk->ij", diff, diff) - w[None, :]

    @cached_property
    def _skeleton(self):
        """CSR neighbor lists over the triangulation 1-skeleton."""
        edges = self.rt_edge_array()
        both = np.vstack([edges, edges[:, ::-1]])
        order = np.lexsort((both[:, 1], both[:, 0]))
        both = both[order]
        counts = np.bincount(both[:, 0], minlength=self.n_sites)
        indptr = np.concatenate([[0], np.cumsum(counts)])
        return indptr, both[:, 1].copy()

    def rt_edge_array(self) -> np.ndarray:
        """Unique site-index pairs (i < j) joined by a triangulation edge."""
        keys = self._pair_keys
        uniq = np.unique(keys)
        n = self.n_sites
        return np.column_stack([uniq // n, uniq % n])

    @cached_property
    def _pair_sorted(self):
        """All per-cell site pairs encoded as i * n + j (i < j), sorted,
        with the owning cell ids in matching order."""
        d1 = self.dim + 1
        idx_pairs = [(a, b) for a in range(d1) for b in range(a + 1, d1)]
        cells = np.repeat(np.arange(self.n_cells), len(idx_pairs))
        pairs = np.empty((self.n_cells * len(idx_pairs), 2), dtype=np.int64)
        for k, (a, b) in enumerate(idx_pairs):
            pairs[k::len(idx_pairs), 0] = self.simplices[:, a]
            pairs[k::len(idx_pairs), 1] = self.simplices[:, b]
        pairs.sort(axis=1)
        keys = pairs[:, 0] * self.n_sites + pairs[:, 1]
        order = np.argsort(keys, kind="stable")
        return keys[order], cells[order]

    @cached_property
    def _pair_keys(self) -> np.ndarray:
        return self._pair_sorted[0]

    def edge_cells(self, i: int, j: int) -> np.ndarray:
        """Cells containing the triangulation edge (i, j)."""
        if i > j:
            i, j = j, i
        keys, cells = self._pair_sorted
        key = i * self.n_sites + j
        lo = np.searchsorted(keys, key, side="left")
        hi = np.searchsorted(keys, key, side="right")
        return cells[lo:hi]

    def cells_around_edge(self, i: int, j: int) -> np.ndarray:
        """Cells around edge (i, j) in cyclic fan order (3D only).

        Walks cell-to-cell through the shared facets that contain the edge.
        Raises if the fan is open, which padding rules out for real edges.
        """
        if self.dim != 3:
            raise PowerDiagramError("cell fans are a 3D query")
        ring = self.edge_cells(i, j)
        if len(ring) == 0:
            return ring
        if len(ring) < 3:
            # a closed fan needs at least three cells
            raise PowerDiagramError(f"open cell fan around edge ({i}, {j})")
        ring_set = set(int(c) for c in ring)
        start = int(ring[0])
        order = [start]
        prev = -1
        current = start
        for _ in range(len(ring)):
            nxt = None
            for k in range(4):
                v = int(self.simplices[current, k])
                if v == i or v == j:
                    continue
                cand = int(self.neighbors[current, k])
                if cand == -1:
                    raise PowerDiagramError(
                        f"open cell fan around edge ({i}, {j})")
                if cand != prev and cand in ring_set:
                    nxt = cand
                    break
            if nxt is None:
                raise PowerDiagramError(f"broken cell fan around edge ({i}, {j})")
            if nxt == start:
                if len(order) != len(ring):
                    raise PowerDiagramError(
                        f"split cell fan around edge ({i}, {j})")
                return np.array(order, dtype=np.int64)
            order.append(nxt)
            prev, current = current, nxt
        raise PowerDiagramError(f"cell fan around edge ({i}, {j}) does not close")

    def nearest_power_site(self, x: np.ndarray, start: int | None = None) -> int:
        """Site minimizing the power distance to x, by greedy descent on the
        triangulation 1-skeleton.  A local minimum of pow(x, .) over the
        skeleton neighbors is the global one on a regular triangulation."""
        x = np.asarray(x, dtype=float).reshape(-1)
        indptr, nbrs = self._skeleton
        live = self.live_sites
        current = int(live[0]) if start is None else int(start)
        if indptr[current + 1] == indptr[current]:
            current = int(live[0])
        diff = self.positions[current] - x
        best = float(diff @ diff) - self.weights[current]
        while True:
            around = nbrs[indptr[current]:indptr[current + 1]]
            diff = self.positions[around] - x[None, :]
            pows = np.einsum("ij,ij->i", diff, diff) - self.weights[around]
            k = int(np.argmin(pows))
            if pows[k] < best - 0.0:
                best = float(pows[k])
                current = int(around[k])
            else:
                return current

    def to_text(self) -> str:
        """Plain-text dump: a header line, then sites and simplices."""
        names = {int(SiteKind.BASE): "base", int(SiteKind.DISPLACED): "displaced",
                 int(SiteKind.PADDING): "padding"}
        lines = [f"powerdiagram dim {self.dim} sites {self.n_sites} "
                 f"cells {self.n_cells}"]
        for s in range(self.n_sites):
            p = np.zeros(3)
            p[:self.dim] = self.positions[s]
            lines.append(f"site {p[0]:.17g} {p[1]:.17g} {p[2]:.17g} "
                         f"{self.weights[s]:.17g} {names[int(self.kinds[s])]} "
                         f"{int(self.pair_ids[s])}")
        for c in range(self.n_cells):
            verts = " ".join(str(int(v)) for v in self.simplices[c])
            dual = " ".join(f"{x:.17g}" for x in self.dual_vertices[c])
            lines.append(f"cell {verts} dual {dual}")
        return "\n".join(lines) + "\n"


def build(sites: list[WeightedSite], dim: int = 3,
          add_padding: bool = True) -> PowerDiagram:
    """Build the regular triangulation of the sites.

    Sites carry 3D positions; pass dim=2 to use the first two coordinates.
    Padding corner sites (weight 0) are appended so all real cells are
    bounded; they are flagged with kind PADDING and pair_id -1.
    """
    if not sites:
        raise PowerDiagramError("no sites")
    if dim not in (2, 3):
        raise PowerDiagramError(f"dim must be 2 or 3, got {dim}")
    positions = np.array([s.position[:dim] for s in sites], dtype=float)
    weights = np.array([s.weight for s in sites], dtype=float)
    kinds = np.array([int(s.kind) for s in sites], dtype=np.int8)
    pair_ids = np.array([s.pair_id for s in sites], dtype=np.int64)
    orientations = np.array([s.orientation for s in sites], dtype=np.int8)
    base_radii = np.array([s.base_radius for s in sites], dtype=float)
    directions = np.zeros((len(sites), dim))
    for idx, s in enumerate(sites):
        if s.direction is not None:
            directions[idx] = np.asarray(s.direction, dtype=float)[:dim]
    n_real = len(sites)

    if add_padding:
        pads = _pad_corners(positions, dim)
        positions = np.vstack([positions, pads])
        weights = np.concatenate([weights, np.zeros(len(pads))])
        kinds = np.concatenate([kinds, np.full(len(pads), int(SiteKind.PADDING),
                                               dtype=np.int8)])
        pair_ids = np.concatenate([pair_ids, np.full(len(pads), -1, dtype=np.int64)])
        orientations = np.concatenate([orientations,
                                       np.zeros(len(pads), dtype=np.int8)])
        base_radii = np.concatenate([base_radii, np.zeros(len(pads))])
        directions = np.vstack([directions, np.zeros((len(pads), dim))])

    lifted = np.column_stack([
        positions,
        np.einsum("ij,ij->i", positions, positions) - weights,
    ])
    try:
        hull = ConvexHull(lifted)
    except QhullError:
        # joggle as a last resort for exactly degenerate inputs
        hull = ConvexHull(lifted, qhull_options="QJ")

    down = hull.equations[:, dim] < -_DOWNWARD_TOL
    if not np.any(down):
        raise PowerDiagramError("no downward facets; all sites degenerate")
    facet_map = np.full(len(hull.simplices), -1, dtype=np.int64)
    facet_map[down] = np.arange(int(down.sum()))
    simplices = hull.simplices[down].astype(np.int64)
    neighbors = facet_map[hull.neighbors[down]]

    eq = hull.equations[down]
    dual = -eq[:, :dim] / (2.0 * eq[:, dim][:, None])
    dual = _certify_duals(dual, simplices, positions, weights)

    return PowerDiagram(dim=dim, positions=positions, weights=weights,
                        kinds=kinds, pair_ids=pair_ids,
                        orientations=orientations, base_radii=base_radii,
                        directions=directions, simplices=simplices,
                        neighbors=neighbors, dual_vertices=dual,
                        n_real=n_real)


def _certify_duals(dual, simplices, positions, weights):
    """Check each dual vertex is power-equidistant from its defining sites;
    re-solve the offenders, exactly if needed."""
    p = positions[simplices]  # (m, d+1, dim)
    w = weights[simplices]
    diff = dual[:, None, :] - p
    pows = np.einsum("ijk,ijk->ij", diff, diff) - w
    spread = pows.max(axis=1) - pows.min(axis=1)
    scale = 1.0 + np.abs(pows).max(axis=1)
    bad = spread > _CERT_TOL * scale
    if not np.any(bad):
        return dual
    dual = dual.copy()
    for c in np.flatnonzero(bad):
        dual[c] = power_vertex(positions[simplices[c]], weights[simplices[c]])
    return dual


def power_vertex(positions: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Point with equal power distance to d+1 affinely independent sites.

    Solves 2 (p_k - p_0) . x = (|p_k|^2 - w_k) - (|p_0|^2 - w_0) and falls
    back to exact rational arithmetic when the floating solve cannot be
    certified.
    """
    p = np.asarray(positions, dtype=float)
    w = np.asarray(weights, dtype=float).reshape(-1)
    d = p.shape[1]
    if p.shape[0] != d + 1 or len(w) != d + 1:
        raise PowerDiagramError(f"need {d + 1} sites for a {d}D power vertex")
    a = 2.0 * (p[1:] - p[0])
    z = np.einsum("ij,ij->i", p, p) - w
    b = z[1:] - z[0]
    try:
        x = np.linalg.solve(a, b)
    except np.linalg.LinAlgError:
        return _power_vertex_exact(p, w)
    diff = x[None, :] - p
    pows = np.einsum("ij,ij->i", diff, diff) - w
    spread = float(pows.max() - pows.min())
    if spread <= _CERT_TOL * (1.0 + float(np.abs(pows).max())):
        return x
    return _power_vertex_exact(p, w)


def _power_vertex_exact(p: np.ndarray, w: np.ndarray) -> np.ndarray:
    d = p.shape[1]
    fp = [[Fraction(float(x)) for x in row] for row in p]
    fw = [Fraction(float(x)) for x in w]
    z = [sum(c * c for c in fp[i]) - fw[i] for i in range(d + 1)]
    rows = []
    for k in range(1, d + 1):
        rows.append([2 * (fp[k][j] - fp[0][j]) for j in range(d)]
                    + [z[k] - z[0]])
    # Gaussian elimination with exact rationals
    for col in range(d):
        pivot = None
        for r in range(col, d):
            if rows[r][col] != 0:
                pivot = r
                break
        if pivot is None:
            raise PowerDiagramError("degenerate site simplex (exact)")
        rows[col], rows[pivot] = rows[pivot], rows[col]
        for r in range(d):
            if r == col or rows[r][col] == 0:
                continue
            factor = rows[r][col] / rows[col][col]
            rows[r] = [rows[r][j] - factor * rows[col][j] for j in range(d + 1)]
    return np.array([float(rows[i][d] / rows[i][i]) for i in range(d)])


def brute_force_nearest(positions: np.ndarray, weights: np.ndarray,
                        x: np.ndarray) -> int:
    """Reference point location: argmin of the power distance over all sites."""
    x = np.asarray(x, dtype=float).reshape(-1)
    diff = positions - x[None, :]
    return int(np.argmin(np.einsum("ij,ij->i", diff, diff) - weights))
