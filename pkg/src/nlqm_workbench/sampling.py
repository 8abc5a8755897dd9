"""Deterministic samplers for events and event pairs on the registered charts."""

from __future__ import annotations

import math

import numpy as np

from .charts import MetricChart, _rotation_x

# Schwarzschild-like charts: a box well outside the horizon and away from the poles
_STATIC_BOX = {"t": (0.0, 2.0), "r": (8.0, 12.0), "theta": (1.2, 1.9), "phi": (0.0, 0.6)}


def _sphere_frames(chart: MetricChart):
    """Rotation taking ambient vectors into this chart's frame, and the partner chart's frame."""
    if chart.kind == "sphere2rot":
        own = _rotation_x(-chart.params.get("alpha", math.pi / 2)).T
        return own, np.eye(3)
    return np.eye(3), _rotation_x(math.pi / 2)


def _angles(n):
    return np.stack([np.arccos(np.clip(n[..., 2], -1, 1)), np.arctan2(n[..., 1], n[..., 0])], axis=-1)


def sample_points(chart: MetricChart, rng: np.random.Generator, n: int) -> np.ndarray:
    """``n`` events comfortably inside the chart (and inside its registered partner charts)."""
    out = []
    while len(out) < n:
        out.append(_one_point(chart, rng))
    return np.array(out)


def _one_point(chart, rng):
    kind = chart.kind
    if kind in ("sphere2", "sphere2rot"):
        own, other = _sphere_frames(chart)
        while True:
            p = rng.normal(size=3)
            p /= np.linalg.norm(p)
            if abs((own @ p)[2]) <= 0.8 and abs((other @ p)[2]) <= 0.8:
                return _angles(own @ p)
    if kind in ("schwarzschild", "schwarzschild-ef"):
        M = chart.params["M"]
        t = rng.uniform(*_STATIC_BOX["t"])
        r = M * rng.uniform(*_STATIC_BOX["r"])
        th = rng.uniform(*_STATIC_BOX["theta"])
        ph = rng.uniform(*_STATIC_BOX["phi"])
        return np.array([t, r, th, ph])
    if kind == "desitter":
        L = chart.params["L"]
        return np.array([rng.uniform(0, 0.5 * L), L * rng.uniform(0.2, 0.6), rng.uniform(1.2, 1.9), rng.uniform(0, 0.6)])
    return rng.uniform(-2.0, 2.0, size=chart.dim)


def sample_pairs(chart: MetricChart, rng: np.random.Generator, n: int) -> np.ndarray:
    """``n`` pairs of distinct events, shape (n, 2, d).

    Sphere pairs are restricted so the whole great circle through them stays
    clear of the poles of both the standard and the rotated chart, and so the
    pair is neither too close nor near-antipodal.
    """
    if chart.kind not in ("sphere2", "sphere2rot"):
        return np.stack([sample_points(chart, rng, n), sample_points(chart, rng, n)], axis=1)
    own, other = _sphere_frames(chart)
    out = []
    while len(out) < n:
        p = rng.normal(size=(2, 3))
        p /= np.linalg.norm(p, axis=1, keepdims=True)
        angle = math.acos(float(np.clip(p[0] @ p[1], -1.0, 1.0)))
        if not 0.2 < angle < math.pi - 0.3:
            continue
        if max(np.abs(p @ own.T)[:, 2].max(), np.abs(p @ other.T)[:, 2].max()) > 0.8:
            continue
        normal = np.cross(p[0], p[1])
        normal /= np.linalg.norm(normal)
        # the great circle reaches |z| = sqrt(1 - n_z^2)
        if max(1 - (own @ normal)[2] ** 2, 1 - (other @ normal)[2] ** 2) > 0.97**2:
            continue
        out.append(_angles(p @ own.T))
    return np.array(out)


def antipode(chart: MetricChart, x) -> np.ndarray:
    """Antipodal point on a sphere chart."""
    x = np.asarray(x, dtype=float)
    return np.array([math.pi - x[0], x[1] + math.pi if x[1] <= 0 else x[1] - math.pi])
