"""Parametric generators for closed test meshes.

All generators return watertight `TriangleMesh` instances with outward
normals.  They are used by the experiment scripts and the test suite as
ground-truth reference surfaces.
"""

from __future__ import annotations

import numpy as np

from .mesh import TriangleMesh


def icosphere(subdivisions: int = 3, radius: float = 1.0,
              center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    """Subdivided icosahedron: 12, 42, 162, 642, 2562 ... vertices."""
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array([
        [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
        [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
        [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
    ], dtype=float)
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    faces = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ], dtype=np.int64)
    for _ in range(subdivisions):
        edge_mid: dict[tuple, int] = {}
        verts_list = list(verts)

        def midpoint(a: int, b: int) -> int:
            key = (a, b) if a < b else (b, a)
            if key not in edge_mid:
                m = verts_list[a] + verts_list[b]
                m /= np.linalg.norm(m)
                edge_mid[key] = len(verts_list)
                verts_list.append(m)
            return edge_mid[key]

        new_faces = []
        for a, b, c in faces:
            ab = midpoint(a, b)
            bc = midpoint(b, c)
            ca = midpoint(c, a)
            new_faces.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]])
        verts = np.array(verts_list)
        faces = np.array(new_faces, dtype=np.int64)
    return TriangleMesh(verts * radius + np.asarray(center, dtype=float), faces)


def unit_cube(res: int = 1, size: float = 2.0, center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    """Axis-aligned cube of edge length ``size``; each face an res x res grid."""
    if res < 1:
        raise ValueError("res must be >= 1")
    h = size / 2.0
    verts: list[np.ndarray] = []
    faces: list[list[int]] = []
    index: dict[tuple, int] = {}

    def vid(p) -> int:
        key = tuple(np.round(p, 12))
        if key not in index:
            index[key] = len(verts)
            verts.append(np.asarray(p, dtype=float))
        return index[key]

    # each entry: origin corner, then the two in-plane axes (right-handed
    # so the normal points outward)
    sides = [
        (np.array([-h, -h, h]), np.array([1.0, 0, 0]), np.array([0, 1.0, 0])),   # +z
        (np.array([-h, h, -h]), np.array([1.0, 0, 0]), np.array([0, -1.0, 0])),  # -z
        (np.array([h, -h, -h]), np.array([0, 1.0, 0]), np.array([0, 0, 1.0])),   # +x
        (np.array([-h, -h, -h]), np.array([0, 0, 1.0]), np.array([0, 1.0, 0])),  # -x
        (np.array([-h, h, -h]), np.array([0, 0, 1.0]), np.array([1.0, 0, 0])),   # +y
        (np.array([-h, -h, -h]), np.array([1.0, 0, 0]), np.array([0, 0, 1.0])),  # -y
    ]
    step = size / res
    for origin, du, dv in sides:
        for i in range(res):
            for j in range(res):
                p00 = origin + du * (i * step) + dv * (j * step)
                p10 = p00 + du * step
                p01 = p00 + dv * step
                p11 = p10 + dv * step
                a, b, c, d = vid(p00), vid(p10), vid(p11), vid(p01)
                faces.append([a, b, c])
                faces.append([a, c, d])
    return TriangleMesh(np.array(verts) + np.asarray(center, dtype=float),
                        np.array(faces, dtype=np.int64))


def torus(major_radius: float = 1.0, minor_radius: float = 0.35,
          n_major: int = 64, n_minor: int = 32) -> TriangleMesh:
    u = np.arange(n_major) * (2 * np.pi / n_major)
    v = np.arange(n_minor) * (2 * np.pi / n_minor)
    uu, vv = np.meshgrid(u, v, indexing="ij")
    x = (major_radius + minor_radius * np.cos(vv)) * np.cos(uu)
    y = (major_radius + minor_radius * np.cos(vv)) * np.sin(uu)
    z = minor_radius * np.sin(vv)
    verts = np.stack([x.ravel(), y.ravel(), z.ravel()], axis=1)
    faces = []
    for i in range(n_major):
        for j in range(n_minor):
            a = i * n_minor + j
            b = ((i + 1) % n_major) * n_minor + j
            c = ((i + 1) % n_major) * n_minor + (j + 1) % n_minor
            d = i * n_minor + (j + 1) % n_minor
            faces.append([a, b, c])
            faces.append([a, c, d])
    return TriangleMesh(verts, np.array(faces, dtype=np.int64))


def capsule(half_length: float = 1.0, radius: float = 0.4,
            n_circ: int = 48, n_len: int = 16, n_cap: int = 12) -> TriangleMesh:
    """Cylinder of length 2*half_length along z with hemispherical caps."""
    theta = np.arange(n_circ) * (2 * np.pi / n_circ)
    rings = []
    for z in np.linspace(-half_length, half_length, n_len + 1):
        rings.append(np.stack([radius * np.cos(theta), radius * np.sin(theta),
                               np.full(n_circ, z)], axis=1))
    for sign in (1.0, -1.0):
        for k in range(1, n_cap):
            phi = k * (np.pi / 2) / n_cap
            r = radius * np.cos(phi)
            z = sign * (half_length + radius * np.sin(phi))
            ring = np.stack([r * np.cos(theta), r * np.sin(theta),
                             np.full(n_circ, z)], axis=1)
            if sign > 0:
                rings.append(ring)
            else:
                rings.insert(0, ring)
    verts = np.vstack(rings)
    poles = np.array([[0.0, 0.0, -(half_length + radius)],
                      [0.0, 0.0, half_length + radius]])
    verts = np.vstack([verts, poles])
    n_rings = len(rings)
    south, north = len(verts) - 2, len(verts) - 1
    faces = []
    for i in range(n_rings - 1):
        for j in range(n_circ):
            a = i * n_circ + j
            b = i * n_circ + (j + 1) % n_circ
            c = (i + 1) * n_circ + (j + 1) % n_circ
            d = (i + 1) * n_circ + j
            faces.append([a, b, c])
            faces.append([a, c, d])
    for j in range(n_circ):
        a = j
        b = (j + 1) % n_circ
        faces.append([south, b, a])
        a = (n_rings - 1) * n_circ + j
        b = (n_rings - 1) * n_circ + (j + 1) % n_circ
        faces.append([north, a, b])
    return TriangleMesh(verts, np.array(faces, dtype=np.int64))


def rounded_cone(c0, r0: float, c1, r1: float,
                 n_circ: int = 64, n_len: int = 24, n_cap: int = 24) -> TriangleMesh:
    """Envelope of the sphere family interpolating (c0, r0) and (c1, r1).

    A truncated cone tangent to both end spheres, closed by the sphere caps
    beyond the tangency circles.  Requires the small sphere to stick out of
    the big one (no engulfing).
    """
    c0 = np.asarray(c0, dtype=float)
    c1 = np.asarray(c1, dtype=float)
    axis = c1 - c0
    length = np.linalg.norm(axis)
    if length <= abs(r0 - r1):
        raise ValueError("one sphere engulfs the other, envelope is a sphere")
    axis = axis / length
    # tangency latitude: contact circle sits at angle beta behind the normal plane
    sin_beta = (r0 - r1) / length
    beta = np.arcsin(sin_beta)
    helper = np.array([1.0, 0, 0]) if abs(axis[0]) < 0.9 else np.array([0, 1.0, 0])
    u = np.cross(axis, helper)
    u /= np.linalg.norm(u)
    w = np.cross(axis, u)
    theta = np.arange(n_circ) * (2 * np.pi / n_circ)
    circ = np.cos(theta)[:, None] * u + np.sin(theta)[:, None] * w

    rings = []
    # cap behind c0: from just past the back pole to the tangency circle
    for k in range(1, n_cap + 1):
        phi = -np.pi / 2 + (np.pi / 2 + beta) * k / n_cap
        rings.append(c0 + r0 * (np.cos(phi) * circ + np.sin(phi) * axis))
    # cone section
    for k in range(1, n_len):
        t = k / n_len
        c = c0 + (length * t) * axis
        r = r0 + (r1 - r0) * t
        rings.append(c + r * (np.cos(beta) * circ + np.sin(beta) * axis))
    # cap beyond c1, stopping short of the front pole
    for k in range(n_cap):
        phi = beta + (np.pi / 2 - beta) * k / n_cap
        rings.append(c1 + r1 * (np.cos(phi) * circ + np.sin(phi) * axis))
    verts = np.vstack(rings)
    south = len(verts)
    north = len(verts) + 1
    verts = np.vstack([verts, (c0 - r0 * axis)[None, :], (c1 + r1 * axis)[None, :]])
    faces = []
    n_rings = len(rings)
    for i in range(n_rings - 1):
        for j in range(n_circ):
            a = i * n_circ + j
            b = i * n_circ + (j + 1) % n_circ
            c = (i + 1) * n_circ + (j + 1) % n_circ
            d = (i + 1) * n_circ + j
            faces.append([a, b, c])
            faces.append([a, c, d])
    for j in range(n_circ):
        faces.append([south, (j + 1) % n_circ, j])
        a = (n_rings - 1) * n_circ + j
        b = (n_rings - 1) * n_circ + (j + 1) % n_circ
        faces.append([north, a, b])
    return TriangleMesh(verts, np.array(faces, dtype=np.int64))


def extruded_polygon(poly_xy: np.ndarray, height: float = 1.0,
                     z0: float = 0.0) -> TriangleMesh:
    """Prism over a simple CCW polygon (ear-clip triangulated caps)."""
    poly = np.asarray(poly_xy, dtype=float)
    n = len(poly)
    if n < 3:
        raise ValueError("polygon needs at least 3 vertices")
    tris = _ear_clip(poly)
    bottom = np.column_stack([poly, np.full(n, z0)])
    top = np.column_stack([poly, np.full(n, z0 + height)])
    verts = np.vstack([bottom, top])
    faces = []
    for a, b, c in tris:
        faces.append([a, c, b])                 # bottom, normal -z
        faces.append([a + n, b + n, c + n])     # top, normal +z
    for i in range(n):
        j = (i + 1) % n
        faces.append([i, j, j + n])
        faces.append([i, j + n, i + n])
    return TriangleMesh(verts, np.array(faces, dtype=np.int64))


def _ear_clip(poly: np.ndarray) -> list[list[int]]:
    ids = list(range(len(poly)))
    tris = []

    def cross2(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    guard = 0
    while len(ids) > 3:
        guard += 1
        if guard > 10000:
            raise ValueError("ear clipping failed, polygon may self-intersect")
        n = len(ids)
        clipped = False
        for k in range(n):
            a, b, c = ids[(k - 1) % n], ids[k], ids[(k + 1) % n]
            if cross2(poly[a], poly[b], poly[c]) <= 1e-14:
                continue
            ear = True
            for other in ids:
                if other in (a, b, c):
                    continue
                p = poly[other]
                if (cross2(poly[a], poly[b], p) >= 0
                        and cross2(poly[b], poly[c], p) >= 0
                        and cross2(poly[c], poly[a], p) >= 0):
                    ear = False
                    break
            if ear:
                tris.append([a, b, c])
                ids.pop(k)
                clipped = True
                break
        if not clipped:
            raise ValueError("ear clipping failed, polygon may not be simple")
    tris.append(list(ids))
    return tris


def l_bracket(size: float = 2.0, height: float = 0.8) -> TriangleMesh:
    """L-shaped prism; has convex and concave sharp edges."""
    s = size / 2.0
    poly = np.array([
        [-s, -s], [s, -s], [s, 0.0], [0.0, 0.0], [0.0, s], [-s, s],
    ])
    return extruded_polygon(poly, height=height, z0=-height / 2.0)
