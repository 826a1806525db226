"""Least-squares placement of crust vertices on their tangent planes.

Every crust vertex collects one plane per contributing site pair: the plane
through p + R * d with unit normal d.  The refined position minimizes

    lam * |v - v0|^2 + sum_i (d_i . v - (d_i . p_i + R_i))^2

whose minimizer solves (lam * I + sum d_i d_i^T) v = lam * v0 + sum t_i d_i.
The quadratic is strictly convex for lam > 0, so the solve is exact and a
vertex without contributors stays put.

Not every contributing plane describes the surface at the vertex.  On a
true crease or corner the power vertex is at tangency depth along each
contributing direction, so each residual d . v0 - t is zero no matter how
far apart the directions are, and solving the full set reconstructs the
sharp feature exactly.  Where cells merely meet across a rounded blend the
residual is -(1 - cos a) R for a direction a away from tangency, and
intersecting such planes would shoot the vertex toward their circumscribed
apex, far off the surface.  refine_crust therefore drops constraints whose
residual at the power vertex exceeds a small fraction of the pair radius
and solves the consistent remainder.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .crust import CrustSurface, Crust2D, VertexConstraint


class RefineError(Exception):
    pass


@dataclass(frozen=True)
class RefinementConfig:
    """lam balances data fidelity against staying near the power vertex;
    consistency_tol is the residual bound, as a fraction of the pair
    radius, above which a contributing plane is deemed off-surface at
    this vertex and excluded from the solve."""

    lam: float = 1e-4
    consistency_tol: float = 0.15

    def __post_init__(self):
        if not (self.lam > 0 and np.isfinite(self.lam)):
            raise RefineError(f"lam must be positive and finite, got {self.lam}")
        if not (self.consistency_tol > 0):
            raise RefineError(
                f"consistency_tol must be positive, got {self.consistency_tol}")


def constraint_targets(constraints: list[VertexConstraint]) -> np.ndarray:
    return np.array([c.target for c in constraints])


def objective(v: np.ndarray, v0: np.ndarray,
              constraints: list[VertexConstraint], lam: float) -> float:
    """The quadratic being minimized; used to check refinement progress."""
    v = np.asarray(v, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    total = lam * float(np.dot(v - v0, v - v0))
    for c in constraints:
        r = float(np.dot(c.direction, v)) - c.target
        total += r * r
    return total


def refine_vertex(v0: np.ndarray, constraints: list[VertexConstraint],
                  lam: float = 1e-4) -> np.ndarray:
    """Closed-form minimizer for a single vertex."""
    if lam <= 0:
        raise RefineError("lam must be positive")
    v0 = np.asarray(v0, dtype=float)
    d = len(v0)
    h = lam * np.eye(d)
    b = lam * v0.copy()
    for c in constraints:
        n = np.asarray(c.direction, dtype=float)
        h += np.outer(n, n)
        b += c.target * n
    return np.linalg.solve(h, b)


def refine_positions(vertices: np.ndarray, indptr: np.ndarray,
                     dirs: np.ndarray, points: np.ndarray, radii: np.ndarray,
                     lam: float,
                     consistency_tol: float | None = None) -> np.ndarray:
    """Batched closed-form solve over CSR constraint tables.

    With ``consistency_tol`` set, constraints whose plane residual at the
    input vertex exceeds that fraction of the pair radius are excluded
    before solving."""
    if lam <= 0:
        raise RefineError("lam must be positive")
    nv, d = vertices.shape
    counts = np.diff(indptr)
    vid = np.repeat(np.arange(nv), counts)
    cap = np.full(nv, np.inf)
    if len(vid):
        targets = np.einsum("ij,ij->i", dirs, points) + radii
        if consistency_tol is not None:
            res = np.einsum("ij,ij->i", dirs, vertices[vid]) - targets
            keep = np.abs(res) <= consistency_tol * radii
            vid, dirs, targets = vid[keep], dirs[keep], targets[keep]
            np.minimum.at(cap, vid, consistency_tol * radii[keep])
    h = np.zeros((nv, d, d))
    b = lam * vertices.copy()
    if len(vid):
        outer = dirs[:, :, None] * dirs[:, None, :]
        np.add.at(h, vid, outer)
        np.add.at(b, vid, targets[:, None] * dirs)
    h += lam * np.eye(d)[None, :, :]
    sol = np.linalg.solve(h, b[:, :, None])[:, :, 0]
    if consistency_tol is not None:
        # tangency corrections are small; larger steps mean the normal
        # matrix is near-singular and the step direction is noise
        disp = sol - vertices
        dist = np.linalg.norm(disp, axis=1)
        over = dist > cap
        if np.any(over):
            sol[over] = vertices[over] + disp[over] * (cap[over] / dist[over])[:, None]
    return sol


def refine_crust(crust: CrustSurface | Crust2D,
                 config: RefinementConfig | None = None) -> np.ndarray:
    """Refined vertex positions for a whole crust (original left untouched)."""
    config = config or RefinementConfig()
    return refine_positions(crust.vertices, crust.constraint_indptr,
                            crust.constraint_dirs, crust.constraint_points,
                            crust.constraint_radii, config.lam,
                            consistency_tol=config.consistency_tol)
