"""Surface sampling and weighted-site generation for offset crusts.

Every base sample sits on the input surface and carries one or more unit
displacement directions.  A base site with weight R^2 and a displaced site
(at distance epsilon along each direction) with weight (R - epsilon)^2 make
the bisector between the pair coincide with the tangent plane of the offset
surface.  Flat regions get one direction per sample; sharp edges and
vertices get direction fans so the rounded parts of the offset are covered
(the 1-to-N strategy).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field as dc_field
from enum import Enum, IntEnum
from functools import lru_cache

import numpy as np

from .geom import normalize, rodrigues, slerp_fan
from .mesh import Polygon2D, TriangleMesh
from .radius import RadiusField, face_gradients


class SamplingError(Exception):
    """Raised for invalid sampling configurations or inputs."""


class ClearanceWarning(UserWarning):
    """Emitted when the clearance band is large relative to the sample spacing."""


class SiteKind(IntEnum):
    BASE = 0
    DISPLACED = 1
    PADDING = 2


class Side(Enum):
    OUTWARD = "outward"
    INWARD = "inward"
    BOTH = "both"


class SampleSource(IntEnum):
    TRIANGLE_INTERIOR = 0
    EDGE_TYPE = 1
    VERTEX_TYPE = 2


_SPHERE_LEVELS = {162: 2, 642: 3, 2562: 4}


@dataclass(frozen=True)
class SamplingConfig:
    """Knobs of the site generator.

    blue_noise_count : target number of triangle-interior samples
    rho : clearance band radius as a fraction of the average edge length
    epsilon : base-to-displaced separation (model units)
    sphere_level : direction-sphere resolution, one of 162, 642, 2562
    dihedral_threshold : edges at or above this angle (radians) are sharp;
        0 treats every edge as sharp
    side : which offset layer(s) to generate
    seed : RNG seed for the dart throwing
    feature_mode : "rounded" fans sharp features with intermediate
        directions; "preserved" keeps only the incident face directions so
        planar morphology reconstructs sharp creases
    """

    blue_noise_count: int = 70000
    rho: float = 0.05
    epsilon: float = 1e-6
    sphere_level: int = 642
    dihedral_threshold: float = 0.2
    side: Side = Side.OUTWARD
    seed: int = 0
    feature_mode: str = "rounded"

    def __post_init__(self):
        if self.feature_mode not in ("rounded", "preserved"):
            raise SamplingError(
                f"feature_mode must be rounded or preserved, got {self.feature_mode}")
        if self.blue_noise_count < 1:
            raise SamplingError("blue_noise_count must be >= 1")
        if not 0.0 <= self.rho < 1.0:
            raise SamplingError(f"rho must be in [0, 1), got {self.rho}")
        if self.epsilon <= 0:
            raise SamplingError("epsilon must be positive")
        if self.sphere_level not in _SPHERE_LEVELS:
            raise SamplingError(
                f"sphere_level must be one of {sorted(_SPHERE_LEVELS)}, got {self.sphere_level}")
        if self.dihedral_threshold < 0:
            raise SamplingError("dihedral_threshold must be >= 0")
        if not isinstance(self.side, Side):
            object.__setattr__(self, "side", Side(self.side))


@dataclass(frozen=True)
class WeightedSite:
    """One power-diagram site.

    position : (3,) point (z = 0 for planar problems)
    weight : power weight; R^2 for base sites, (R - epsilon)^2 for displaced
    kind : BASE, DISPLACED, or PADDING
    pair_id : index linking a base sample to its displaced children (-1 padding)
    base_radius : radius of the generating base sample
    direction : unit displacement direction (displaced sites only)
    orientation : +1 outward layer, -1 inward layer, 0 otherwise
    """

    position: np.ndarray
    weight: float
    kind: SiteKind
    pair_id: int
    base_radius: float = 0.0
    direction: np.ndarray | None = None
    orientation: int = 0


@dataclass
class BaseSample:
    """An on-surface sample with its displacement direction fan.

    oriented = False marks fans that are already complete (full circles,
    caps around curve endpoints); side expansion leaves them alone.
    """

    position: np.ndarray
    radius: float
    directions: np.ndarray  # (k, 3) unit vectors
    source: SampleSource
    element: int = -1  # face / edge / vertex id when applicable
    oriented: bool = True


# ---------------------------------------------------------------------------
# direction sphere


@lru_cache(maxsize=None)
def _sphere_cache(level_subdiv: int):
    from .shapes import icosphere

    m = icosphere(level_subdiv, radius=1.0)
    verts = np.asarray(m.vertices)
    e = m.edges
    dots = np.einsum("ij,ij->i", verts[e[:, 0]], verts[e[:, 1]])
    spacing = float(np.arccos(np.clip(dots, -1, 1)).mean())
    return verts, spacing


def sphere_directions(sphere_level: int) -> np.ndarray:
    """Unit direction set of the given resolution (162, 642, or 2562)."""
    if sphere_level not in _SPHERE_LEVELS:
        raise SamplingError(f"unsupported sphere_level {sphere_level}")
    return _sphere_cache(_SPHERE_LEVELS[sphere_level])[0]


def sphere_angular_spacing(sphere_level: int) -> float:
    """Mean angular edge length of the direction sphere (radians)."""
    if sphere_level not in _SPHERE_LEVELS:
        raise SamplingError(f"unsupported sphere_level {sphere_level}")
    return _sphere_cache(_SPHERE_LEVELS[sphere_level])[1]


def fan_steps(angle: float, sphere_level: int) -> int:
    """Number of fan directions for an arc, endpoints included."""
    theta = sphere_angular_spacing(sphere_level)
    return int(np.ceil(max(angle, 0.0) / theta)) + 1


# ---------------------------------------------------------------------------
# displacement directions


def displacement_direction(normal: np.ndarray, gradient: np.ndarray) -> np.ndarray:
    """Unit offset direction for a point with unit surface normal and
    tangential radius gradient.

    The normal is rotated by arcsin(|gradient|) about the axis
    (gradient / |gradient|) x normal, which tilts it away from the gradient
    so spheres of the growing radius stay tangent to a common plane.  A zero
    gradient returns the normal unchanged.
    """
    n = np.asarray(normal, dtype=float)
    g = np.asarray(gradient, dtype=float)
    nn = np.linalg.norm(n)
    if abs(nn - 1.0) > 1e-8:
        raise SamplingError(f"normal must be unit length, |n| = {nn:.12g}")
    gn = np.linalg.norm(g)
    if gn <= 1e-300:
        return n / nn
    if abs(float(np.dot(n, g))) > 1e-8 * gn:
        raise SamplingError("gradient must be tangential (perpendicular to the normal)")
    if gn > 1.0 + 1e-9:
        raise SamplingError(
            f"gradient magnitude {gn:.6g} exceeds 1; offset direction undefined")
    gn = min(gn, 1.0)
    alpha = np.arcsin(gn)
    axis = np.cross(g / gn, n / nn)
    out = rodrigues(n / nn, axis / np.linalg.norm(axis), alpha)
    return out / np.linalg.norm(out)


def face_displacement_directions(mesh: TriangleMesh, field: RadiusField,
                                 flip: bool = False) -> np.ndarray:
    """Per-face displacement directions, vectorized form of
    ``displacement_direction`` applied at every face."""
    normals = mesh.face_normals.copy()
    if flip:
        normals = -normals
    grads = face_gradients(field)
    slopes = np.linalg.norm(grads, axis=1)
    if np.any(slopes > 1.0 + 1e-6):
        raise SamplingError(
            f"radius slope up to {slopes.max():.6g} exceeds 1 on some face")
    slopes = np.minimum(slopes, 1.0)
    out = normals.copy()
    moving = slopes > 1e-300
    if np.any(moving):
        ghat = grads[moving] / slopes[moving][:, None]
        alpha = np.arcsin(slopes[moving])
        out[moving] = (np.cos(alpha)[:, None] * normals[moving]
                       - np.sin(alpha)[:, None] * ghat)
    return out / np.linalg.norm(out, axis=1, keepdims=True)


# ---------------------------------------------------------------------------
# blue-noise interior sampling


def target_spacing(total_area: float, count: int) -> float:
    """Nominal sample spacing so ``count`` darts fill ``total_area``."""
    if count < 1 or total_area <= 0:
        raise SamplingError("need positive area and count")
    return float(np.sqrt(total_area / (count * np.pi * 0.7)))


def rejection_radius(total_area: float, count: int) -> float:
    """Dart-throwing rejection distance, 0.65 of the nominal spacing."""
    return 0.65 * target_spacing(total_area, count)


_RELIABLE_ASPECT = 0.01


def reliable_faces(mesh: TriangleMesh) -> np.ndarray:
    """Mask of faces whose normals are trustworthy, area >= 0.01 * longest
    edge squared.

    Slivers below that ratio carry numerically meaningless normals.  Crust
    meshes fed back into the sampler (morphology chains, re-offsetting)
    contain many of them along facet seams, and treating their dihedral
    jumps as sharp features floods the site set with noise fans.
    """
    tri = mesh.vertices[mesh.faces]
    edge = tri[:, [1, 2, 0], :] - tri[:, [0, 1, 2], :]
    longest2 = (edge ** 2).sum(axis=2).max(axis=1)
    return mesh.face_areas >= _RELIABLE_ASPECT * longest2


def _area_weighted_points(mesh: TriangleMesh, n: int, rng: np.random.Generator,
                          areas: np.ndarray | None = None):
    if areas is None:
        areas = mesh.face_areas
    cum = np.cumsum(areas)
    total = cum[-1]
    face_ids = np.searchsorted(cum, rng.random(n) * total)
    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    bary = np.stack([1.0 - r1, r1 * (1.0 - r2), r1 * r2], axis=1)
    tri = mesh.vertices[mesh.faces[face_ids]]
    pts = np.einsum("ijk,ij->ik", tri, bary)
    return pts, face_ids, bary


def blue_noise_sample(mesh: TriangleMesh, field: RadiusField,
                      count: int | None = None, seed: int = 0,
                      config: SamplingConfig | None = None,
                      face_dirs: np.ndarray | None = None,
                      face_mask: np.ndarray | None = None) -> list[BaseSample]:
    """Poisson-disk samples on the surface by grid-accelerated dart throwing.

    Targets ``count`` samples with pairwise distance at least
    0.65 * sqrt(area / (count * pi * 0.7)).  Falls short only when the
    budget of candidate darts is exhausted, which raises a warning.
    ``face_dirs`` overrides the per-face displacement directions and
    ``face_mask`` restricts the dart pool (crust self-sampling, where the
    facet normals are exact but the triangle normals are not).
    """
    if config is not None and count is None:
        count = config.blue_noise_count
    if count is None or count < 1:
        raise SamplingError("blue_noise_sample needs a positive target count")
    rng = np.random.default_rng(seed if config is None else config.seed)
    total_area = float(mesh.face_areas.sum())
    r_min = rejection_radius(total_area, count)
    pool = mesh.face_areas * (reliable_faces(mesh) if face_mask is None
                              else np.asarray(face_mask, bool))
    if not pool.any():
        raise SamplingError("mesh has no reliably oriented faces to sample")
    cell = r_min
    grid: dict[tuple, list[int]] = {}
    kept_pts: list[np.ndarray] = []
    kept_face: list[int] = []
    kept_bary: list[np.ndarray] = []

    attempts = 0
    budget = 60 * count
    r2_min = r_min * r_min
    while len(kept_pts) < count and attempts < budget:
        batch = min(max(count, 1024), budget - attempts)
        pts, face_ids, bary = _area_weighted_points(mesh, batch, rng, areas=pool)
        cells = np.floor(pts / cell).astype(np.int64)
        for i in range(batch):
            c = (int(cells[i, 0]), int(cells[i, 1]), int(cells[i, 2]))
            p = pts[i]
            ok = True
            for dx in (-1, 0, 1):
                for dy in (-1, 0, 1):
                    for dz in (-1, 0, 1):
                        members = grid.get((c[0] + dx, c[1] + dy, c[2] + dz))
                        if not members:
                            continue
                        for m in members:
                            q = kept_pts[m]
                            d0 = p[0] - q[0]
                            d1 = p[1] - q[1]
                            d2 = p[2] - q[2]
                            if d0 * d0 + d1 * d1 + d2 * d2 < r2_min:
                                ok = False
                                break
                        if not ok:
                            break
                    if not ok:
                        break
                if not ok:
                    break
            if ok:
                grid.setdefault(c, []).append(len(kept_pts))
                kept_pts.append(p)
                kept_face.append(int(face_ids[i]))
                kept_bary.append(bary[i])
                if len(kept_pts) >= count:
                    break
        attempts += batch
    if len(kept_pts) < count:
        warnings.warn(
            f"dart throwing reached {len(kept_pts)} of {count} samples "
            f"within the attempt budget", ClearanceWarning)
    face_arr = np.array(kept_face, dtype=np.int64)
    bary_arr = np.array(kept_bary)
    radii = field.at_faces_barycentric(face_arr, bary_arr)
    dirs = face_displacement_directions(mesh, field) if face_dirs is None \
        else np.asarray(face_dirs, dtype=float)
    return [
        BaseSample(position=kept_pts[i], radius=float(radii[i]),
                   directions=dirs[face_arr[i]][None, :],
                   source=SampleSource.TRIANGLE_INTERIOR,
                   element=int(face_arr[i]))
        for i in range(len(kept_pts))
    ]


# ---------------------------------------------------------------------------
# sharp feature retention


def retained_edges(mesh: TriangleMesh, config: SamplingConfig) -> np.ndarray:
    """Edges given 1vN treatment: dihedral at or above the threshold, plus
    boundary and non-manifold edges.  A zero threshold retains everything.

    A dihedral measured through a sliver face is noise, so manifold edges
    only qualify when both incident faces are reliable."""
    counts = mesh.edge_face_counts
    keep = counts != 2
    dihedrals = mesh.edge_dihedrals
    manifold = counts == 2
    keep[manifold] = dihedrals[manifold] >= config.dihedral_threshold
    edge_reliable = np.ones(len(mesh.edges), dtype=bool)
    np.logical_and.at(edge_reliable, mesh.face_edges.reshape(-1),
                      np.repeat(reliable_faces(mesh), 3))
    keep[manifold] &= edge_reliable[manifold]
    return np.flatnonzero(keep)


def _interior_spacing(mesh: TriangleMesh, config: SamplingConfig) -> float:
    return rejection_radius(float(mesh.face_areas.sum()), config.blue_noise_count)


def _edge_vectors(mesh: TriangleMesh, eid: int):
    a, b = mesh.edges[eid]
    pa = mesh.vertices[a]
    pb = mesh.vertices[b]
    length = float(np.linalg.norm(pb - pa))
    return pa, pb, (pb - pa) / length, length


def _edge_radius(field: RadiusField, eid: int, t: float) -> float:
    a, b = field.mesh.edges[eid]
    return float((1.0 - t) * field.values[a] + t * field.values[b])


def _edge_fan(mesh: TriangleMesh, field: RadiusField, config: SamplingConfig,
              eid: int, face_dirs: np.ndarray,
              face_ok: np.ndarray | None = None) -> np.ndarray:
    """Direction fan for one retained edge (single outward orientation)."""
    pa, pb, ehat, length = _edge_vectors(mesh, eid)
    fids = mesh.edge_faces(eid)
    if face_ok is not None and len(fids) > 2:
        trusted = [f for f in fids if face_ok[f]]
        if len(trusted) >= 2:
            fids = np.asarray(trusted)
    if len(fids) == 2:
        d1 = face_dirs[fids[0]]
        d2 = face_dirs[fids[1]]
        if config.feature_mode == "preserved":
            return _dedupe_directions(np.vstack([d1, d2]))
        angle = float(np.arccos(np.clip(np.dot(d1, d2), -1.0, 1.0)))
        return slerp_fan(d1, d2, fan_steps(angle, config.sphere_level),
                         axis_hint=ehat)
    if len(fids) == 1:
        # boundary edge: half circle from the face direction, swept about the
        # edge so the mid direction points away from the face
        f = int(fids[0])
        n = mesh.face_normals[f]
        centroid = mesh.face_centroids[f]
        axis = ehat.copy()
        conormal = np.cross(axis, n)
        if np.dot(conormal, centroid - 0.5 * (pa + pb)) > 0:
            axis = -axis
        steps = fan_steps(np.pi, config.sphere_level)
        base_dir = face_dirs[f]
        return np.array([rodrigues(base_dir, axis, t)
                         for t in np.linspace(0.0, np.pi, steps)])
    # non-manifold: fan every incident wedge pair
    dirs = [face_dirs[f] for f in fids]
    fans = []
    for i in range(len(dirs)):
        for j in range(i + 1, len(dirs)):
            angle = float(np.arccos(np.clip(np.dot(dirs[i], dirs[j]), -1.0, 1.0)))
            fans.append(slerp_fan(dirs[i], dirs[j],
                                  fan_steps(angle, config.sphere_level),
                                  axis_hint=ehat))
    return _dedupe_directions(np.vstack(fans))


def _dedupe_directions(dirs: np.ndarray) -> np.ndarray:
    keys = np.round(dirs / 1e-9).astype(np.int64)
    _, idx = np.unique(keys, axis=0, return_index=True)
    return dirs[np.sort(idx)]


def sample_edges(mesh: TriangleMesh, field: RadiusField, config: SamplingConfig,
                 edge_ids: np.ndarray | None = None,
                 capped_vertices: set[int] | frozenset[int] = frozenset(),
                 face_dirs: np.ndarray | None = None,
                 face_ok: np.ndarray | None = None) -> list[BaseSample]:
    """Base points along retained edges with interpolated direction fans.

    Points are spaced at most the interior blue-noise spacing apart and the
    span is trimmed by the clearance radius next to vertices that carry
    their own vertex-type samples.
    """
    if edge_ids is None:
        edge_ids = retained_edges(mesh, config)
    if len(edge_ids) == 0:
        return []
    if face_dirs is None:
        face_dirs = face_displacement_directions(mesh, field)
    if face_ok is None:
        face_ok = reliable_faces(mesh)
    spacing = _interior_spacing(mesh, config)
    band = config.rho * mesh.average_edge_length()
    out: list[BaseSample] = []
    for eid in edge_ids:
        eid = int(eid)
        pa, pb, ehat, length = _edge_vectors(mesh, eid)
        a, b = mesh.edges[eid]
        t_lo = band / length if int(a) in capped_vertices else 0.0
        t_hi = 1.0 - band / length if int(b) in capped_vertices else 1.0
        if t_hi <= t_lo:
            t_lo, t_hi = 0.45, 0.55  # edge shorter than both bands: one midpoint
        span = t_hi - t_lo
        n_pts = max(1, int(np.ceil(span * length / spacing)))
        fan = _edge_fan(mesh, field, config, eid, face_dirs, face_ok)
        for k in range(n_pts):
            t = t_lo + span * (k + 0.5) / n_pts
            out.append(BaseSample(position=pa + t * (pb - pa),
                                  radius=_edge_radius(field, eid, t),
                                  directions=fan,
                                  source=SampleSource.EDGE_TYPE,
                                  element=eid))
    return out


def _vertex_cap_directions(mesh: TriangleMesh, field: RadiusField,
                           config: SamplingConfig, v: int,
                           face_dirs: np.ndarray,
                           face_ok: np.ndarray | None = None,
                           crease_ehat: np.ndarray | None = None) -> np.ndarray:
    """Directions opening the sphere cap at a vertex.

    A direction belongs to the cap when it points away from every incident
    edge, which reduces to the positive hull of the face normals at convex
    corners and to a wedge at sheet-boundary corners.  The cap boundary is
    filled with arcs between cyclically consecutive face directions where
    the fan is manifold.  Sliver faces contribute no directions.

    With ``crease_ehat`` (unit tangents of the incident crease edges) the
    cap is the dual cone of those tangents instead of the raw incident
    edges, and arcs run between the adjacent patch directions ordered by
    azimuth.  Crust meshes need this: their incident edges wobble at the
    terracing scale and would erase the cap, while the crease graph and
    the patch layer directions are exact.
    """
    incident_faces = mesh.vertex_faces(v)
    if face_ok is None:
        face_ok = reliable_faces(mesh)
    if config.feature_mode == "preserved":
        if len(incident_faces) == 0:
            return sphere_directions(config.sphere_level)
        trusted = incident_faces[face_ok[incident_faces]]
        if len(trusted) == 0:
            return np.empty((0, 3))
        return _dedupe_directions(face_dirs[trusted])
    if crease_ehat is not None:
        # every incident facet's layer direction is a genuine local patch
        # direction, including cross-pair walls excluded from sampling
        return _trusted_cap_directions(config, face_dirs[incident_faces],
                                       np.asarray(crease_ehat, dtype=float))
    lengths: dict[int, float] = {}
    for f in incident_faces:
        for w in mesh.faces[f]:
            if w != v:
                w = int(w)
                if w not in lengths:
                    lengths[w] = float(np.linalg.norm(mesh.vertices[w]
                                                      - mesh.vertices[v]))
    if not lengths:
        return sphere_directions(config.sphere_level)
    # zero-length spurs give meaningless edge directions, drop them
    floor = 1e-6 * max(lengths.values())
    neighbours = sorted(w for w, L in lengths.items() if L >= floor)
    ehat = normalize(mesh.vertices[neighbours] - mesh.vertices[v][None, :])
    sphere = sphere_directions(config.sphere_level)
    inside = np.all(sphere @ ehat.T <= 1e-12, axis=1)
    # saddle vertices leave spurious dual-cone leftovers pointing into the
    # solid; the cap must stay on the open side of the incident faces
    nbar = face_dirs[incident_faces].sum(axis=0)
    nlen = float(np.linalg.norm(nbar))
    if nlen > 1e-12:
        inside &= sphere @ (nbar / nlen) >= 1e-9
    parts = [sphere[inside]] if np.any(inside) else []
    ring = _ordered_faces_around(mesh, v)
    if ring is not None:
        # arcs bridge consecutive trusted faces; slivers in between are
        # dropped from the ring rather than breaking it apart
        ring = [f for f in ring if face_ok[f]]
    if ring is not None and len(ring) >= 2:
        dirs = face_dirs[ring]
        pairs = [(i, (i + 1) % len(ring)) for i in range(len(ring))] \
            if len(ring) > 2 else [(0, 1)]
        for i, j in pairs:
            angle = float(np.arccos(np.clip(np.dot(dirs[i], dirs[j]), -1, 1)))
            if angle < 1e-9:
                continue
            arc = slerp_fan(dirs[i], dirs[j], fan_steps(angle, config.sphere_level))
            keep = np.all(arc @ ehat.T <= 1e-9, axis=1)
            if np.any(keep):
                parts.append(arc[keep])
    if not parts:
        return np.empty((0, 3))
    return _dedupe_directions(np.vstack(parts))


def _trusted_cap_directions(config: SamplingConfig, incident_dirs: np.ndarray,
                            tangents: np.ndarray) -> np.ndarray:
    """Cap for a crease-graph vertex from exact feature data only.

    The sphere part is the dual cone of the crease tangents (the full
    normal cone at a polyhedral corner), arcs bridge the adjacent patch
    directions in azimuth order about their mean.  Directions on the
    solid side of the mean are dropped; anything surplus on the open
    side is occluded and trimmed by the diagram.
    """
    if len(incident_dirs) == 0:
        return np.empty((0, 3))
    dirs = _dedupe_directions(incident_dirs)
    mean = dirs.sum(axis=0)
    nm = np.linalg.norm(mean)
    if nm < 1e-12:
        return np.empty((0, 3))
    mean = mean / nm
    sphere = sphere_directions(config.sphere_level)
    inside = np.all(sphere @ tangents.T <= 1e-9, axis=1) & (sphere @ mean >= 0.05)
    parts = [sphere[inside]] if np.any(inside) else []
    if len(dirs) >= 2:
        basis = np.eye(3)[np.argmin(np.abs(mean))]
        u1 = normalize(np.cross(mean, basis)[None, :])[0]
        u2 = np.cross(mean, u1)
        order = np.argsort(np.arctan2(dirs @ u2, dirs @ u1))
        dirs = dirs[order]
        pairs = [(i, (i + 1) % len(dirs)) for i in range(len(dirs))] \
            if len(dirs) > 2 else [(0, 1)]
        for i, j in pairs:
            angle = float(np.arccos(np.clip(np.dot(dirs[i], dirs[j]), -1, 1)))
            if angle < 1e-9:
                continue
            arc = slerp_fan(dirs[i], dirs[j], fan_steps(angle, config.sphere_level))
            arc = arc[arc @ mean >= 0]
            if len(arc):
                parts.append(arc)
    if not parts:
        return np.empty((0, 3))
    return _dedupe_directions(np.vstack(parts))


def _ordered_faces_around(mesh: TriangleMesh, v: int):
    """Faces around a vertex in fan order, None if not a single manifold fan."""
    incident = [int(f) for f in mesh.vertex_faces(v)]
    if len(incident) < 2:
        return None
    edge_to_faces: dict[int, list[int]] = {}
    for f in incident:
        for w in mesh.faces[f]:
            if int(w) != v:
                edge_to_faces.setdefault(int(w), []).append(f)
    if any(len(fs) != 2 for fs in edge_to_faces.values()):
        return None  # boundary or non-manifold fan
    start = incident[0]
    order = [start]
    others = [int(w) for w in mesh.faces[start] if int(w) != v]
    prev_w = others[0]
    current = start
    while True:
        ws = [int(w) for w in mesh.faces[current] if int(w) != v]
        nxt_w = ws[0] if ws[1] == prev_w else ws[1]
        pair = edge_to_faces[nxt_w]
        nxt_f = pair[0] if pair[1] == current else pair[1]
        if nxt_f == start:
            break
        order.append(nxt_f)
        prev_w = nxt_w
        current = nxt_f
        if len(order) > len(incident):
            return None
    return np.array(order, dtype=np.int64) if len(order) == len(incident) else None


def sample_vertices(mesh: TriangleMesh, field: RadiusField, config: SamplingConfig,
                    edge_ids: np.ndarray | None = None,
                    face_dirs: np.ndarray | None = None,
                    face_ok: np.ndarray | None = None,
                    trusted_features: bool = False) -> list[BaseSample]:
    """Vertex-type samples: rings at distance rho * l around retained
    vertices, each carrying its share of the sphere-cap direction fan.

    ``trusted_features`` marks ``edge_ids`` / ``face_dirs`` as exact
    feature data (from a crust), so caps are bounded by the crease graph
    instead of the noisy incident mesh edges."""
    if edge_ids is None:
        edge_ids = retained_edges(mesh, config)
    if len(edge_ids) == 0:
        return []
    retained_v = sorted({int(x) for x in mesh.edges[edge_ids].reshape(-1)})
    if face_dirs is None:
        face_dirs = face_displacement_directions(mesh, field)
    if face_ok is None:
        face_ok = reliable_faces(mesh)
    tangents: dict[int, list[np.ndarray]] = {}
    if trusted_features:
        for a, b in mesh.edges[edge_ids]:
            a, b = int(a), int(b)
            t = normalize((mesh.vertices[b] - mesh.vertices[a])[None, :])[0]
            tangents.setdefault(a, []).append(t)
            tangents.setdefault(b, []).append(-t)
    band = config.rho * mesh.average_edge_length()
    spacing = _interior_spacing(mesh, config)
    out: list[BaseSample] = []
    clamped: list[int] = []
    for v in retained_v:
        ce = np.array(tangents[v]) if trusted_features else None
        cap = _vertex_cap_directions(mesh, field, config, v, face_dirs, face_ok,
                                     crease_ehat=ce)
        if len(cap) == 0:
            continue
        rings = _vertex_ring_points(mesh, field, v, band, spacing, clamped)
        if len(rings) == 1:
            pos, radius = rings[0]
            out.append(BaseSample(position=pos, radius=radius, directions=cap,
                                  source=SampleSource.VERTEX_TYPE, element=v))
            continue
        anchors = normalize(np.array([p for p, _ in rings]) - mesh.vertices[v][None, :])
        owner = np.argmax(cap @ anchors.T, axis=1)
        for k, (pos, radius) in enumerate(rings):
            mine = cap[owner == k]
            if len(mine) == 0:
                continue
            out.append(BaseSample(position=pos, radius=radius, directions=mine,
                                  source=SampleSource.VERTEX_TYPE, element=v))
    if clamped:
        warnings.warn(
            f"clearance radius {band:.4g} exceeds the shortest incident edge at "
            f"{len(clamped)} vertices; rings clamped there", ClearanceWarning)
    return out


def _vertex_ring_points(mesh: TriangleMesh, field: RadiusField, v: int,
                        band: float, spacing: float,
                        clamp_log: list | None = None) -> list[tuple[np.ndarray, float]]:
    """Ring base points at distance ``band`` from the vertex on its faces."""
    pv = mesh.vertices[v]
    if band <= 0:
        return [(pv.copy(), float(field.values[v]))]
    incident = mesh.vertex_faces(v)
    if len(incident) == 0:
        return [(pv.copy(), float(field.values[v]))]
    shortest = np.inf
    for f in incident:
        for w in mesh.faces[f]:
            if int(w) != v:
                shortest = min(shortest, float(np.linalg.norm(mesh.vertices[w] - pv)))
    radius = band
    if radius > 0.9 * shortest:
        if clamp_log is not None:
            clamp_log.append(v)
        radius = 0.9 * shortest
    rings = []
    for f in incident:
        tri = mesh.faces[f]
        others = [int(w) for w in tri if w != v]
        va = mesh.vertices[others[0]] - pv
        vb = mesh.vertices[others[1]] - pv
        la, lb = float(np.linalg.norm(va)), float(np.linalg.norm(vb))
        if la < 1e-14 or lb < 1e-14:
            continue
        ea, eb = va / la, vb / lb
        wedge = float(np.arccos(np.clip(np.dot(ea, eb), -1, 1)))
        n_pts = max(1, int(np.ceil(wedge * radius / spacing)))
        i0, i1, i2 = int(tri[0]), int(tri[1]), int(tri[2])
        for k in range(n_pts):
            t = (k + 0.5) / n_pts
            arc_dir = _slerp_single(ea, eb, t, wedge)
            pos = pv + radius * arc_dir
            bary = _barycentric(mesh.vertices[i0], mesh.vertices[i1],
                                mesh.vertices[i2], pos)
            r_val = float(bary[0] * field.values[i0] + bary[1] * field.values[i1]
                          + bary[2] * field.values[i2])
            if not np.isfinite(r_val):
                # sliver face: interpolation is singular, average instead
                r_val = float(field.values[i0] + field.values[i1]
                              + field.values[i2]) / 3.0
            rings.append((pos, r_val))
    if not rings:
        rings.append((pv.copy(), float(field.values[v])))
    return rings


def _slerp_single(a: np.ndarray, b: np.ndarray, t: float, omega: float) -> np.ndarray:
    if omega < 1e-9:
        return a
    so = np.sin(omega)
    return (np.sin((1 - t) * omega) * a + np.sin(t * omega) * b) / so


def _barycentric(p0, p1, p2, x) -> np.ndarray:
    e1 = p1 - p0
    e2 = p2 - p0
    w = x - p0
    a = np.dot(e1, e1)
    b = np.dot(e1, e2)
    c = np.dot(e2, e2)
    d1 = np.dot(w, e1)
    d2 = np.dot(w, e2)
    det = a * c - b * b
    u = (c * d1 - b * d2) / det
    v = (a * d2 - b * d1) / det
    return np.array([1.0 - u - v, u, v])


# ---------------------------------------------------------------------------
# clearance bands


def clearance_band_check(mesh: TriangleMesh, config: SamplingConfig) -> bool:
    """Warn when the clearance radius rho * l exceeds half the on-edge
    sample spacing; a band that large starts deleting useful samples."""
    band = config.rho * mesh.average_edge_length()
    spacing = _interior_spacing(mesh, config)
    if band > 0.5 * spacing:
        warnings.warn(
            f"clearance band {band:.4g} exceeds half the sample spacing "
            f"{spacing:.4g}; consider a smaller rho", ClearanceWarning)
        return False
    return True


def repair_fan_coverage(samples: list[BaseSample], config: SamplingConfig,
                        slack: float = 1.25) -> int:
    """Add fan directions where a base cell could slip past the layer.

    Along direction u from sample p, the base cell is sealed within
    distance t by p's own displaced site when u . d >= R / t and by a
    neighbour q's when u . (q - p) >= (|q - p|^2 - R_q^2 + R_p^2) / (2 t)
    (radical plane of the pair, epsilon terms dropped).  Directions
    sealed by neither within ``slack * R`` surface as facets far off the
    offset layer.  Fans built from clean geometry cover all such
    directions by construction; on re-sampled crusts positional noise
    makes samples protrude past their neighbours, so the uncovered
    directions are computed explicitly and appended.  Surplus directions
    are harmless: a tangent ball from an on-surface point never leaves
    the true offset volume.

    Mutates the fans in place and returns the number of added directions.
    """
    try:
        from scipy.spatial import cKDTree
    except ImportError:  # pragma: no cover
        return 0
    if not samples:
        return 0
    pos = np.array([s.position for s in samples])
    radii = np.array([s.radius for s in samples])
    tree = cKDTree(pos)
    sphere = sphere_directions(config.sphere_level)
    added = 0
    for i, s in enumerate(samples):
        t_req = slack * s.radius
        # emitted displacement directions for this sample under the side rule
        if not s.oriented or config.side is Side.OUTWARD:
            eff, flip, filt = s.directions, 1.0, True
        elif config.side is Side.INWARD:
            eff, flip, filt = -s.directions, -1.0, True
        else:
            eff = np.vstack([s.directions, -s.directions])
            flip, filt = 1.0, False
        cand = ~(sphere @ eff.T >= s.radius / t_req).any(axis=1)
        if filt:
            # never add directions that lean into the solid: an
            # epsilon-inside displaced site can own interior volume
            dbar = eff.sum(axis=0)
            nb_len = np.linalg.norm(dbar)
            if nb_len > 0:
                cand &= sphere @ (dbar / nb_len) >= 0.05
        if not cand.any():
            continue
        nb = tree.query_ball_point(pos[i], 2.0 * t_req)
        nb = [j for j in nb if j != i]
        if nb:
            diff = pos[nb] - pos[i]
            rhs = ((diff ** 2).sum(axis=1) - radii[nb] ** 2 + s.radius ** 2) \
                / (2.0 * t_req)
            blocked = (sphere[cand] @ diff.T >= rhs[None, :]).any(axis=1)
            free = sphere[cand][~blocked]
        else:
            free = sphere[cand]
        if len(free):
            s.directions = np.vstack([s.directions, flip * free])
            added += len(free)
    return added


def apply_clearance(interior: list[BaseSample], mesh: TriangleMesh,
                    config: SamplingConfig,
                    edge_ids: np.ndarray | None = None,
                    capped_vertices: set[int] | frozenset[int] = frozenset(),
                    ) -> list[BaseSample]:
    """Drop triangle-interior samples inside the clearance bands: cylinders
    of radius rho * l around retained edges and balls around vertices that
    carry vertex-type samples."""
    if edge_ids is None:
        edge_ids = retained_edges(mesh, config)
    band = config.rho * mesh.average_edge_length()
    if band <= 0 or (len(edge_ids) == 0 and not capped_vertices) or not interior:
        return list(interior)
    pts = np.array([s.position for s in interior])
    keep = np.ones(len(interior), dtype=bool)
    band2 = band * band
    for eid in edge_ids:
        a, b = mesh.edges[int(eid)]
        pa = mesh.vertices[a]
        d = mesh.vertices[b] - pa
        len2 = float(np.dot(d, d))
        t = np.clip((pts - pa) @ d / len2, 0.0, 1.0)
        closest = pa + t[:, None] * d
        keep &= np.einsum("ij,ij->i", pts - closest, pts - closest) > band2
    for v in capped_vertices:
        diff = pts - mesh.vertices[int(v)]
        keep &= np.einsum("ij,ij->i", diff, diff) > band2
    return [s for s, k in zip(interior, keep) if k]


# ---------------------------------------------------------------------------
# site emission


def emit_sites(samples: list[BaseSample], config: SamplingConfig) -> list[WeightedSite]:
    """Turn base samples into weighted site pairs.

    One base site per sample (weight R^2) and one displaced site per
    direction (at distance epsilon, weight (R - epsilon)^2).  For
    ``side = BOTH`` every direction fan is emitted in both orientations
    with the orientation recorded on the displaced sites.
    """
    if not samples:
        raise SamplingError("no base samples to emit")
    eps = config.epsilon
    sites: list[WeightedSite] = []
    for pid, s in enumerate(samples):
        if s.radius <= eps:
            raise SamplingError(
                f"sample {pid} radius {s.radius:.6g} is not larger than epsilon {eps:.6g}")
        pos = np.asarray(s.position, dtype=float)
        sites.append(WeightedSite(position=pos, weight=s.radius ** 2,
                                  kind=SiteKind.BASE, pair_id=pid,
                                  base_radius=s.radius))
        if not s.oriented or config.side is Side.OUTWARD:
            oriented = [(s.directions, 1)]
        elif config.side is Side.INWARD:
            oriented = [(-s.directions, -1)]
        else:
            oriented = [(s.directions, 1), (-s.directions, -1)]
        seen = set()
        w = (s.radius - eps) ** 2
        for dirs, orient in oriented:
            for d in dirs:
                key = tuple(np.round(d / 1e-9).astype(np.int64))
                if key in seen:
                    continue
                seen.add(key)
                sites.append(WeightedSite(position=pos + eps * d, weight=w,
                                          kind=SiteKind.DISPLACED, pair_id=pid,
                                          base_radius=s.radius, direction=d,
                                          orientation=orient))
    return sites


def sites_to_text(sites: list[WeightedSite]) -> str:
    """Serialize sites as `x y z weight kind pair_id` lines."""
    names = {SiteKind.BASE: "base", SiteKind.DISPLACED: "displaced",
             SiteKind.PADDING: "padding"}
    lines = []
    for s in sites:
        p = s.position
        lines.append(f"{p[0]:.17g} {p[1]:.17g} {p[2]:.17g} "
                     f"{s.weight:.17g} {names[s.kind]} {s.pair_id}")
    return "\n".join(lines) + "\n"


def sites_from_text(text: str) -> list[WeightedSite]:
    names = {"base": SiteKind.BASE, "displaced": SiteKind.DISPLACED,
             "padding": SiteKind.PADDING}
    sites = []
    for ln, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        parts = stripped.split()
        if len(parts) != 6:
            raise SamplingError(f"line {ln}: expected `x y z weight kind pair_id`")
        try:
            pos = np.array([float(parts[0]), float(parts[1]), float(parts[2])])
            weight = float(parts[3])
            kind = names[parts[4]]
            pid = int(parts[5])
        except (ValueError, KeyError) as exc:
            raise SamplingError(f"line {ln}: bad site field") from exc
        radius = float(np.sqrt(weight)) if kind == SiteKind.BASE else 0.0
        sites.append(WeightedSite(position=pos, weight=weight, kind=kind,
                                  pair_id=pid, base_radius=radius))
    return sites


def mesh_sites(mesh: TriangleMesh, field: RadiusField,
               config: SamplingConfig,
               edge_ids: np.ndarray | None = None,
               face_dirs: np.ndarray | None = None,
               face_mask: np.ndarray | None = None,
               trusted_caps: bool | None = None) -> tuple[list[WeightedSite], dict]:
    """Full sampling pass for a mesh: blue noise, sharp features, clearance,
    then site emission.  Returns the sites and a count breakdown.

    ``edge_ids`` overrides the dihedral-based feature detection with an
    explicit retained-edge set, and ``face_dirs`` / ``face_mask`` override
    the per-face displacement directions and the sampled-face pool (crusts
    know their own creases and facet normals exactly).  ``trusted_caps``
    selects crease-tangent vertex caps (default when both overrides are
    given); pass False when the mesh geometry itself is exact, as for a
    raw crust polyhedron, so caps come from the incident edges."""
    trusted = edge_ids is not None and face_dirs is not None
    if trusted_caps is not None:
        trusted = bool(trusted_caps)
    if edge_ids is None:
        edge_ids = retained_edges(mesh, config)
    else:
        edge_ids = np.asarray(edge_ids, dtype=np.int64)
    vertex_samples = sample_vertices(mesh, field, config, edge_ids,
                                     face_dirs=face_dirs, face_ok=face_mask,
                                     trusted_features=trusted)
    capped = {s.element for s in vertex_samples}
    edge_samples = sample_edges(mesh, field, config, edge_ids, capped,
                                face_dirs=face_dirs, face_ok=face_mask)
    interior = blue_noise_sample(mesh, field, config.blue_noise_count,
                                 config=config, face_dirs=face_dirs,
                                 face_mask=face_mask)
    clearance_band_check(mesh, config)
    kept = apply_clearance(interior, mesh, config, edge_ids, capped)
    samples = kept + edge_samples + vertex_samples
    repaired = repair_fan_coverage(samples, config)
    sites = emit_sites(samples, config)
    stats = {
        "interior": len(kept),
        "interior_removed": len(interior) - len(kept),
        "edge": len(edge_samples),
        "vertex": len(vertex_samples),
        "retained_edges": int(len(edge_ids)),
        "repaired_directions": repaired,
        "sites": len(sites),
    }
    return sites, stats


# ---------------------------------------------------------------------------
# planar polygons


def polygon_samples(polygon: Polygon2D, radii: np.ndarray | float,
                    config: SamplingConfig) -> list[BaseSample]:
    """Samples along a closed CCW polygon with per-vertex radii.

    Segment samples carry the tilted outward normal of their edge; vertex
    samples fan between the two incident edge directions.  Positions are
    embedded in 3D with z = 0.
    """
    v2 = polygon.vertices
    n = len(v2)
    if np.isscalar(radii):
        radii = np.full(n, float(radii))
    radii = np.asarray(radii, dtype=float).reshape(-1)
    if len(radii) != n:
        raise SamplingError(f"{len(radii)} radii for {n} polygon vertices")
    if np.any(radii <= 0):
        raise SamplingError("polygon radii must be positive")
    if not polygon.is_ccw():
        raise SamplingError("polygon must wind counter-clockwise")
    verts = np.column_stack([v2, np.zeros(n)])
    lengths = polygon.edge_lengths()
    spacing = polygon.perimeter() / max(config.blue_noise_count, 3)
    band = config.rho * float(lengths.mean())
    edge_dirs = []
    out: list[BaseSample] = []
    for i in range(n):
        j = (i + 1) % n
        t_hat = (verts[j] - verts[i]) / lengths[i]
        normal = np.array([t_hat[1], -t_hat[0], 0.0])
        slope = (radii[j] - radii[i]) / lengths[i]
        if abs(slope) > 1.0 + 1e-9:
            raise SamplingError(
                f"radius slope {slope:.4g} along polygon edge {i} exceeds 1")
        grad = np.clip(slope, -1, 1) * t_hat
        d = displacement_direction(normal, grad)
        edge_dirs.append(d)
        lo = min(band, 0.45 * lengths[i])
        span = lengths[i] - 2 * lo
        n_pts = max(1, int(np.ceil(span / spacing)))
        for k in range(n_pts):
            t = (lo + span * (k + 0.5) / n_pts) / lengths[i]
            pos = verts[i] + t * (verts[j] - verts[i])
            out.append(BaseSample(position=pos,
                                  radius=float((1 - t) * radii[i] + t * radii[j]),
                                  directions=d[None, :],
                                  source=SampleSource.EDGE_TYPE, element=i))
    z_axis = np.array([0.0, 0.0, 1.0])
    for i in range(n):
        d_prev = edge_dirs[(i - 1) % n]
        d_next = edge_dirs[i]
        angle = float(np.arccos(np.clip(np.dot(d_prev, d_next), -1, 1)))
        if angle < 1e-9:
            fan = d_next[None, :]
        else:
            fan = slerp_fan(d_prev, d_next, fan_steps(angle, config.sphere_level),
                            axis_hint=z_axis)
        out.append(BaseSample(position=verts[i], radius=float(radii[i]),
                              directions=fan, source=SampleSource.VERTEX_TYPE,
                              element=i))
    return out
