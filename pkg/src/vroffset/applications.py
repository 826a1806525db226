"""Offset-crust applications: channel surfaces swept along curves,
reconstruction from medial-axis transforms, and mesh morphology.

All three reduce to building the right base samples and running the shared
diagram / extraction / refinement stages.  A curve point emits a full
circle of directions perpendicular to the tangent, tilted against the
arc-length derivative of the radius; a medial sheet emits both sides of
its faces; morphology chains inward and outward offsets.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .geom import normalize, orthonormal_basis, rodrigues
from .mesh import MeshError, TriangleMesh
from .pipeline import OffsetResult, PipelineError, compute_offset, offset_from_samples
from .radius import RadiusField, validate_lipschitz
from .refine import RefinementConfig
from .sampling import (BaseSample, SamplingConfig, SampleSource, Side,
                       fan_steps, sphere_directions)


class ApplicationError(Exception):
    pass


# ---------------------------------------------------------------------------
# channel surfaces


@dataclass
class Directrix:
    """A sampled space curve with per-sample sphere radii."""

    points: np.ndarray  # (n, 3)
    radii: np.ndarray  # (n,)
    closed: bool = True

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        self.radii = np.asarray(self.radii, dtype=float).reshape(-1)
        if self.points.ndim != 2 or self.points.shape[1] != 3:
            raise ApplicationError("directrix points must be (n, 3)")
        if len(self.points) < 2:
            raise ApplicationError("directrix needs at least two points")
        if len(self.radii) != len(self.points):
            raise ApplicationError("one radius per directrix point required")
        if np.any(self.radii <= 0):
            raise ApplicationError("directrix radii must be positive")

    @cached_property
    def tangents(self) -> np.ndarray:
        p = self.points
        if self.closed:
            diff = np.roll(p, -1, axis=0) - np.roll(p, 1, axis=0)
        else:
            diff = np.empty_like(p)
            diff[1:-1] = p[2:] - p[:-2]
            diff[0] = p[1] - p[0]
            diff[-1] = p[-1] - p[-2]
        return normalize(diff)

    @cached_property
    def radius_slopes(self) -> np.ndarray:
        """dR/ds by central differences along arc length."""
        p = self.points
        r = self.radii
        if self.closed:
            dr = np.roll(r, -1) - np.roll(r, 1)
            ds = np.linalg.norm(np.roll(p, -1, axis=0) - p, axis=1)
            ds = ds + np.roll(ds, 1)
        else:
            dr = np.empty_like(r)
            dr[1:-1] = r[2:] - r[:-2]
            dr[0] = r[1] - r[0]
            dr[-1] = r[-1] - r[-2]
            seg = np.linalg.norm(p[1:] - p[:-1], axis=1)
            ds = np.empty_like(r)
            ds[1:-1] = seg[1:] + seg[:-1]
            ds[0] = seg[0]
            ds[-1] = seg[-1]
        return dr / ds


def _tilted_circle(tangent: np.ndarray, slope: float, steps: int) -> np.ndarray:
    """Directions sweeping a full circle perpendicular to the tangent,
    tilted by arcsin(slope) against the direction of radius growth."""
    t = tangent / np.linalg.norm(tangent)
    u, v = orthonormal_basis(t)
    angles = np.linspace(0.0, 2.0 * np.pi, steps, endpoint=False)
    circle = np.cos(angles)[:, None] * u[None, :] + np.sin(angles)[:, None] * v[None, :]
    if abs(slope) < 1e-300:
        return circle
    alpha = np.arcsin(min(abs(slope), 1.0))
    ghat = t if slope > 0 else -t
    return np.cos(alpha) * circle - np.sin(alpha) * ghat[None, :]


def _cap_fan(tangent_out: np.ndarray, sphere_level: int) -> np.ndarray:
    """Hemisphere of directions around an open curve endpoint."""
    sphere = sphere_directions(sphere_level)
    return sphere[sphere @ tangent_out >= -1e-12]


def curve_samples(directrix: Directrix, config: SamplingConfig,
                  circle_steps: int | None = None) -> list[BaseSample]:
    """Base samples along a directrix: one tilted circle fan per point,
    hemisphere caps on open endpoints."""
    slopes = directrix.radius_slopes
    worst = float(np.abs(slopes).max())
    if worst >= 1.0:
        raise ApplicationError(
            f"radius slope |dR/ds| reaches {worst:.6g}; channel surfaces "
            f"need slopes strictly below 1")
    if circle_steps is None:
        circle_steps = max(fan_steps(2.0 * np.pi, config.sphere_level) - 1, 3)
    out = []
    n = len(directrix.points)
    for i in range(n):
        dirs = _tilted_circle(directrix.tangents[i], float(slopes[i]), circle_steps)
        if not directrix.closed and i in (0, n - 1):
            outward = directrix.tangents[i] * (1.0 if i == n - 1 else -1.0)
            dirs = np.vstack([dirs, _cap_fan(outward, config.sphere_level)])
        out.append(BaseSample(position=directrix.points[i].copy(),
                              radius=float(directrix.radii[i]),
                              directions=dirs, source=SampleSource.EDGE_TYPE,
                              element=i, oriented=False))
    return out


def channel_surface(directrix: Directrix, config: SamplingConfig | None = None,
                    refinement: RefinementConfig | None = None,
                    circle_steps: int | None = None) -> OffsetResult:
    """Envelope of the moving sphere along the directrix."""
    config = config or SamplingConfig()
    samples = curve_samples(directrix, config, circle_steps)
    return offset_from_samples(samples, config, refinement)


_KNOT_RADII = {
    "knot-a": lambda u: np.full_like(u, 0.45),
    "knot-b": lambda u: 0.4 + 0.3 * np.cos(u),
    "knot-c": lambda u: 0.4 + 0.3 * np.exp(-5.0 * np.sin(u) ** 2),
    "knot-d": lambda u: (0.4 + 0.15 * np.cos(2 * u)
                         + 0.1 * np.sin(13 * u + np.cos(u))
                         + 0.05 * np.sin(20 * u)),
    "knot-e": lambda u: 0.3 + 0.1 * np.cos(2 * u) + 0.1 * np.cos(8 * u),
}


def knot_directrix(preset: str, count: int = 300) -> Directrix:
    """Trefoil-style closed space curves with preset radius profiles."""
    if preset not in _KNOT_RADII:
        raise ApplicationError(
            f"unknown preset {preset!r}; choose from {sorted(_KNOT_RADII)}")
    u = np.linspace(0.0, 2.0 * np.pi, count, endpoint=False)
    pts = np.column_stack([
        (2.0 + np.cos(2 * u)) * np.cos(3 * u),
        (2.0 + np.cos(2 * u)) * np.sin(3 * u),
        np.sin(4 * u),
    ])
    return Directrix(points=pts, radii=_KNOT_RADII[preset](u), closed=True)


def cyclide_directrix(ring_radius: float = 2.0, mean_radius: float = 0.6,
                      swing: float = 0.35, count: int = 200) -> Directrix:
    """Circle directrix with a cosine radius: a cyclide-style envelope."""
    if mean_radius - abs(swing) <= 0:
        raise ApplicationError("cyclide radius swing exceeds the mean radius")
    u = np.linspace(0.0, 2.0 * np.pi, count, endpoint=False)
    pts = np.column_stack([
        ring_radius * np.cos(u),
        ring_radius * np.sin(u),
        np.zeros_like(u),
    ])
    return Directrix(points=pts, radii=mean_radius + swing * np.cos(u), closed=True)


# ---------------------------------------------------------------------------
# medial-axis reconstruction


@dataclass
class MatInput:
    """A medial-axis transform: vertices with radii, sheet triangles, and
    free segments (spokes)."""

    vertices: np.ndarray  # (n, 3)
    radii: np.ndarray  # (n,)
    faces: np.ndarray  # (m, 3) possibly empty
    segments: np.ndarray  # (k, 2) possibly empty

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        self.radii = np.asarray(self.radii, dtype=float).reshape(-1)
        self.faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        self.segments = np.asarray(self.segments, dtype=np.int64).reshape(-1, 2)
        n = len(self.vertices)
        if len(self.radii) != n:
            raise ApplicationError("one radius per medial vertex required")
        if np.any(self.radii <= 0):
            raise ApplicationError("medial radii must be positive")
        for arr, label in ((self.faces, "face"), (self.segments, "segment")):
            if arr.size and (arr.min() < 0 or arr.max() >= n):
                raise ApplicationError(f"{label} index out of range")
        if self.faces.size == 0 and self.segments.size == 0 and n == 0:
            raise ApplicationError("empty medial axis")


def load_mat(path) -> MatInput:
    """Read the MATOFF format: header, counts, `x y z r` vertex lines,
    `3 a b c` faces, `2 a b` segments."""
    with open(path, "r", encoding="utf-8") as fh:
        tokens = []
        for line in fh:
            stripped = line.split("#", 1)[0].strip()
            if stripped:
                tokens.append(stripped.split())
    if not tokens or tokens[0][0].upper() != "MATOFF":
        raise ApplicationError(f"{path}: missing MATOFF header")
    try:
        nv, nf, ne = (int(x) for x in tokens[1][:3])
    except (IndexError, ValueError) as exc:
        raise ApplicationError(f"{path}: bad count line") from exc
    rows = tokens[2:]
    if len(rows) < nv + nf + ne:
        raise ApplicationError(f"{path}: truncated file")
    verts = np.array([[float(x) for x in rows[i][:4]] for i in range(nv)])
    faces = []
    for i in range(nv, nv + nf):
        if rows[i][0] != "3":
            raise ApplicationError(f"{path}: face lines must start with 3")
        faces.append([int(x) for x in rows[i][1:4]])
    segments = []
    for i in range(nv + nf, nv + nf + ne):
        if rows[i][0] != "2":
            raise ApplicationError(f"{path}: segment lines must start with 2")
        segments.append([int(x) for x in rows[i][1:3]])
    return MatInput(vertices=verts[:, :3], radii=verts[:, 3],
                    faces=np.array(faces, dtype=np.int64).reshape(-1, 3),
                    segments=np.array(segments, dtype=np.int64).reshape(-1, 2))


def save_mat(path, mat: MatInput) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("MATOFF\n")
        fh.write(f"{len(mat.vertices)} {len(mat.faces)} {len(mat.segments)}\n")
        for p, r in zip(mat.vertices, mat.radii):
            fh.write(f"{p[0]:.9g} {p[1]:.9g} {p[2]:.9g} {r:.9g}\n")
        for f in mat.faces:
            fh.write(f"3 {f[0]} {f[1]} {f[2]}\n")
        for s in mat.segments:
            fh.write(f"2 {s[0]} {s[1]}\n")


def _segment_samples(mat: MatInput, seg: np.ndarray, config: SamplingConfig,
                     free_ends: set[int], spacing: float) -> list[BaseSample]:
    a, b = int(seg[0]), int(seg[1])
    pa, pb = mat.vertices[a], mat.vertices[b]
    ra, rb = float(mat.radii[a]), float(mat.radii[b])
    length = float(np.linalg.norm(pb - pa))
    if length <= 0:
        raise ApplicationError(f"zero-length medial segment ({a}, {b})")
    slope = (rb - ra) / length
    if abs(slope) >= 1.0:
        raise ApplicationError(
            f"medial segment ({a}, {b}) radius slope {slope:.4g} reaches 1")
    t_hat = (pb - pa) / length
    steps = max(fan_steps(2.0 * np.pi, config.sphere_level) - 1, 3)
    count = max(2, int(np.ceil(length / spacing)) + 1)
    out = []
    for t in np.linspace(0.0, 1.0, count):
        dirs = _tilted_circle(t_hat, slope, steps)
        pieces = [dirs]
        if t == 0.0 and a in free_ends:
            pieces.append(_cap_fan(-t_hat, config.sphere_level))
        if t == 1.0 and b in free_ends:
            pieces.append(_cap_fan(t_hat, config.sphere_level))
        out.append(BaseSample(position=pa + t * (pb - pa),
                              radius=ra + t * (rb - ra),
                              directions=np.vstack(pieces),
                              source=SampleSource.EDGE_TYPE, element=a,
                              oriented=False))
    return out


def mat_samples(mat: MatInput, config: SamplingConfig) -> list[BaseSample]:
    """Base samples for a medial-axis transform.

    Sheets sample like meshes with both sides active; free segments get
    tilted circle fans with hemisphere caps at endpoints nothing else
    covers; isolated vertices become full spheres.
    """
    from .sampling import mesh_sites  # noqa: F401  (sheet path mirrors it)
    from .sampling import (apply_clearance, blue_noise_sample, retained_edges,
                           sample_edges, sample_vertices)

    samples: list[BaseSample] = []
    used = np.zeros(len(mat.vertices), dtype=bool)
    if len(mat.faces):
        sheet = TriangleMesh(mat.vertices, mat.faces)
        field = RadiusField(sheet, mat.radii)
        report = validate_lipschitz(field, limit=1.0, tol=-1e-9)
        if not report.ok:
            raise ApplicationError(
                f"medial radius slope {report.max_slope:.6g} must stay below 1")
        both = SamplingConfig(blue_noise_count=config.blue_noise_count,
                              rho=config.rho, epsilon=config.epsilon,
                              sphere_level=config.sphere_level,
                              dihedral_threshold=config.dihedral_threshold,
                              side=Side.BOTH, seed=config.seed,
                              feature_mode=config.feature_mode)
        edge_ids = retained_edges(sheet, both)
        vertex_samples = sample_vertices(sheet, field, both, edge_ids)
        capped = {s.element for s in vertex_samples}
        edge_samples = sample_edges(sheet, field, both, edge_ids, capped)
        interior = blue_noise_sample(sheet, field, both.blue_noise_count,
                                     config=both)
        kept = apply_clearance(interior, sheet, both, edge_ids, capped)
        samples.extend(kept + edge_samples + vertex_samples)
        used[np.unique(mat.faces)] = True

    degree = np.zeros(len(mat.vertices), dtype=np.int64)
    if len(mat.segments):
        for a, b in mat.segments:
            degree[int(a)] += 1
            degree[int(b)] += 1
        free_ends = {int(v) for v in np.flatnonzero((degree == 1) & ~used)}
        diag = float(np.linalg.norm(mat.vertices.max(axis=0)
                                    - mat.vertices.min(axis=0)))
        if diag <= 0:
            diag = float(mat.radii.max())
        spacing = max(diag, 1e-9) / max(np.sqrt(config.blue_noise_count), 8.0)
        for seg in mat.segments:
            samples.extend(_segment_samples(mat, seg, config, free_ends, spacing))
        used[np.unique(mat.segments)] = True

    for v in np.flatnonzero(~used):
        samples.append(BaseSample(position=mat.vertices[v].copy(),
                                  radius=float(mat.radii[v]),
                                  directions=sphere_directions(config.sphere_level),
                                  source=SampleSource.VERTEX_TYPE, element=int(v),
                                  oriented=False))
    if not samples:
        raise ApplicationError("medial axis produced no samples")
    return samples


def reconstruct_from_mat(mat: MatInput, config: SamplingConfig | None = None,
                         refinement: RefinementConfig | None = None) -> OffsetResult:
    """Boundary surface of the union of medial balls.

    The medial axis is unoriented, so both layers are generated and the
    extraction is merged rather than partitioned by side.
    """
    config = config or SamplingConfig()
    samples = mat_samples(mat, config)
    return offset_from_samples(samples, config, refinement)


# ---------------------------------------------------------------------------
# morphology


_MORPH_OPS = ("dilate", "erode", "open", "close")


def morphological_op(mesh: TriangleMesh, op: str, radius,
                     config: SamplingConfig | None = None,
                     refinement: RefinementConfig | None = None) -> OffsetResult:
    """Offset-based morphology on a closed solid.

    dilate / erode accept a scalar or a RadiusField; open (erode then
    dilate) and close (dilate then erode) are two-stage and therefore
    constant-radius only: the intermediate surface carries no radius field.
    """
    if op not in _MORPH_OPS:
        raise ApplicationError(f"op must be one of {_MORPH_OPS}, got {op!r}")
    config = config or SamplingConfig()
    refinement = refinement or RefinementConfig()
    variable = isinstance(radius, RadiusField) and not radius.is_constant()
    if op in ("open", "close") and variable:
        raise ApplicationError(
            f"{op} runs two offset stages; a variable radius field has no "
            f"meaning on the intermediate surface")

    def stage(m: TriangleMesh, r, side: Side, **hints) -> OffsetResult:
        cfg = SamplingConfig(blue_noise_count=config.blue_noise_count,
                             rho=config.rho, epsilon=config.epsilon,
                             sphere_level=config.sphere_level,
                             dihedral_threshold=config.dihedral_threshold,
                             side=side, seed=config.seed,
                             feature_mode=config.feature_mode)
        return compute_offset(m, r, cfg, refinement, **hints)

    if op == "dilate":
        return stage(mesh, radius, Side.OUTWARD)
    if op == "erode":
        try:
            return stage(mesh, radius, Side.INWARD)
        except PipelineError as exc:
            raise ApplicationError(f"erosion emptied the solid: {exc}") from exc
    scalar = radius.constant() if isinstance(radius, RadiusField) else float(radius)
    first = "erode" if op == "open" else "dilate"
    mid = morphological_op(mesh, first, scalar, config, refinement)
    # Stage two offsets the intermediate crust.  The crust approximates a
    # smooth intermediate surface with per-sample tangent plates joined by
    # corrugation walls, so its triangle dihedrals and literal facet
    # normals describe the corrugation, not the surface; the displacement
    # directions of the generating sites are the macroscopic normal field,
    # exact on every facet however degenerate.  Creases of the macro
    # surface are where that field jumps, and residual wedge gaps at
    # under-sampled steps are closed by the extraction seal loop.
    keys = mid.crust.feature_edges(0.45, use="layer")
    ids = mid.raw_mesh.edge_lookup(keys)
    tri_src = mid.crust.triangle_sources()
    sgn = -1.0 if first == "erode" else 1.0
    second = Side.OUTWARD if op == "open" else Side.INWARD
    try:
        return stage(mid.raw_mesh, scalar, second,
                     feature_edge_ids=ids[ids >= 0],
                     face_dirs=sgn * mid.crust.facet_layer_dirs[tri_src])
    except PipelineError as exc:
        raise ApplicationError(f"erosion emptied the solid: {exc}") from exc


def contains(outer: TriangleMesh, inner: TriangleMesh, count: int = 2000,
             seed: int = 0, tol: float = 0.0) -> bool:
    """True when sampled points of the inner surface lie inside the outer
    solid (winding number above one half, with slack for points within tol
    of the outer surface)."""
    from .metrics import point_mesh_distance, sample_surface, winding_number

    pts, _ = sample_surface(inner, count, seed)
    w = winding_number(pts, outer)
    ok = w > 0.5
    bad = ~ok
    if tol > 0 and bad.any():
        d = point_mesh_distance(pts[bad], outer)
        ok[bad] = d <= tol
    return bool(ok.all())
