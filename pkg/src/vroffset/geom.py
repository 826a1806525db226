"""Small vector helpers shared by the geometry modules."""

from __future__ import annotations

import numpy as np


def normalize(v: np.ndarray, axis: int = -1) -> np.ndarray:
    """Unit vectors along ``axis``; zero vectors raise."""
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v, axis=axis, keepdims=True)
    if np.any(n == 0.0):
        raise ValueError("cannot normalize zero vector")
    return v / n


def rodrigues(v: np.ndarray, axis: np.ndarray, angle: float) -> np.ndarray:
    """Rotate ``v`` by ``angle`` radians about the unit vector ``axis``."""
    axis = np.asarray(axis, dtype=float)
    v = np.asarray(v, dtype=float)
    c, s = np.cos(angle), np.sin(angle)
    return v * c + np.cross(axis, v) * s + axis * np.dot(axis, v) * (1.0 - c)


def angle_between(a: np.ndarray, b: np.ndarray) -> float:
    """Angle in [0, pi] between two vectors (need not be unit)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ValueError("angle of zero vector is undefined")
    return float(np.arccos(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0)))


def slerp(a: np.ndarray, b: np.ndarray, t: float) -> np.ndarray:
    """Spherical interpolation between unit vectors along the shorter arc.

    Antipodal endpoints have no unique arc and raise; callers with a
    preferred rotation axis should use ``slerp_fan`` with ``axis_hint``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    omega = angle_between(a, b)
    if omega < 1e-12:
        return normalize(a + t * (b - a))
    if np.pi - omega < 1e-9:
        raise ValueError("slerp between antipodal directions is ambiguous")
    so = np.sin(omega)
    return (np.sin((1.0 - t) * omega) * a + np.sin(t * omega) * b) / so


def slerp_fan(a: np.ndarray, b: np.ndarray, count: int,
              axis_hint: np.ndarray | None = None) -> np.ndarray:
    """``count`` directions interpolated from ``a`` to ``b`` inclusive.

    For antipodal endpoints the arc is taken by rotating ``a`` about
    ``axis_hint``.
    """
    if count < 1:
        raise ValueError("fan needs at least one direction")
    if count == 1:
        return normalize(np.asarray(a, dtype=float))[None, :]
    omega = angle_between(a, b)
    ts = np.linspace(0.0, 1.0, count)
    if np.pi - omega < 1e-9:
        if axis_hint is None:
            raise ValueError("antipodal fan requires an axis hint")
        return np.array([rodrigues(a, axis_hint, float(t) * omega) for t in ts])
    return np.array([slerp(a, b, float(t)) for t in ts])


def orthonormal_basis(n: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Two unit vectors spanning the plane perpendicular to ``n``."""
    n = normalize(n)
    helper = np.array([1.0, 0.0, 0.0])
    if abs(n[0]) > 0.9:
        helper = np.array([0.0, 1.0, 0.0])
    u = normalize(np.cross(n, helper))
    v = np.cross(n, u)
    return u, v
