"""Projected-orbit clouds and the distances that quantify recovery bias.

An orbit cloud is a dense sampling of {P g theta : g in G} on a uniform
group grid.  On top of it: nearest-point distances, the fraction of the
orbit farther than a threshold from another orbit, one-sided and full
Hausdorff distances, orbit-aligned relative error, and a numerical
self-intersection certificate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

from . import groups as gp
from . import harmonics as hm
from .models import ModelSpec, projected_stack

KDTREE_THRESHOLD = 10_000
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass
class OrbitCloud:
    model: ModelSpec
    theta: np.ndarray
    params: list
    weights: np.ndarray
    points: np.ndarray  # (N, d_tilde)

    def __len__(self):
        return len(self.params)

    def max_spacing(self) -> float:
        """Largest image distance between parameter-adjacent grid nodes."""
        pts = self.points
        if self.model.group == "z2":
            return 0.0
        return float(np.linalg.norm(np.diff(pts, axis=0), axis=1).max())

    def to_csv(self, path):
        group = self.model.group
        pcols = {"z2": 1, "so2": 1, "so3": 3, "so2xso2": 2}[group]
        names = [f"g_{i+1}" for i in range(pcols)] + [
            f"y_{j+1}" for j in range(self.points.shape[1])
        ]
        with open(path, "w") as fh:
            fh.write(",".join(names) + "\n")
            for p, row in zip(self.params, self.points):
                if group == "so3":
                    e = gp.as_euler(p)
                    pv = [e.alpha, e.beta, e.gamma]
                elif group == "so2xso2":
                    pv = [p[0], p[1]]
                else:
                    pv = [float(p)]
                fh.write(
                    ",".join(f"{v:.17g}" for v in list(pv) + list(row)) + "\n"
                )


def orbit_cloud(model: ModelSpec, theta, resolution: int) -> OrbitCloud:
    """Evaluate the projected orbit map on the uniform grid at `resolution`."""
    theta = np.asarray(theta, dtype=float)
    rule = model.haar_rule(resolution)
    pts = projected_stack(model, rule.nodes) @ theta
    return OrbitCloud(model, theta, rule.nodes, rule.weights, pts)


def _nearest_dists(queries: np.ndarray, points: np.ndarray) -> np.ndarray:
    queries = np.atleast_2d(queries)
    if len(points) > KDTREE_THRESHOLD:
        return cKDTree(points).query(queries, k=1)[0]
    return cdist(queries, points).min(axis=1)


def dist_to_orbit(y, cloud: OrbitCloud) -> float:
    """Euclidean distance from a point to the nearest cloud point."""
    return float(_nearest_dists(np.asarray(y, dtype=float), cloud.points)[0])


def m_measure(
    s: float, theta, theta_prime, model: ModelSpec, resolution: int
) -> float:
    """Haar mass of grid nodes whose image sits farther than s from the other orbit.

    The reference orbit is sampled at twice the resolution to keep
    discretization from inflating the distances.
    """
    if s <= 0:
        raise ValueError("threshold must be positive")
    src = orbit_cloud(model, theta, resolution)
    ref = orbit_cloud(model, theta_prime, 2 * resolution)
    far = _nearest_dists(src.points, ref.points) > s
    return float(src.weights[far].sum())


def hausdorff_one_sided(cloud_a: OrbitCloud, cloud_b: OrbitCloud) -> float:
    """sup over A of the distance to B."""
    return float(_nearest_dists(cloud_a.points, cloud_b.points).max())


def hausdorff(cloud_a: OrbitCloud, cloud_b: OrbitCloud) -> float:
    return max(
        hausdorff_one_sided(cloud_a, cloud_b), hausdorff_one_sided(cloud_b, cloud_a)
    )


def _golden_min(f, lo: float, hi: float, tol: float = 1e-9) -> tuple[float, float]:
    a, b = lo, hi
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while abs(b - a) > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
    x = (a + b) / 2.0
    return x, f(x)


def orbit_rel_error(
    model: ModelSpec, theta_hat, theta_star, resolution: int | None = None
) -> float:
    """min over g of ||theta_hat - g theta_star|| / ||theta_star||.

    Grid scan over the uniform rule followed by a local refinement: exact for
    the sign group, golden-section on the circle, coordinate descent on Euler
    angles for rotations.
    """
    theta_hat = np.asarray(theta_hat, dtype=float)
    theta_star = np.asarray(theta_star, dtype=float)
    norm = np.linalg.norm(theta_star)
    if norm == 0.0:
        raise ValueError("reference signal must be nonzero")
    if model.group == "z2":
        return float(
            min(
                np.linalg.norm(theta_hat - theta_star),
                np.linalg.norm(theta_hat + theta_star),
            )
            / norm
        )
    rule = model.haar_rule(resolution)
    cand = model.rep_stack(rule.nodes) @ theta_star
    dists = np.linalg.norm(theta_hat[None, :] - cand, axis=1)
    best = int(np.argmin(dists))

    def f_of(param):
        return float(np.linalg.norm(theta_hat - model.rep(param) @ theta_star))

    if model.group == "so2":
        g0 = rule.nodes[best]
        cell = gp.TWO_PI / len(rule)
        _, val = _golden_min(f_of, g0 - cell, g0 + cell)
    elif model.group == "so2xso2":
        g = list(rule.nodes[best])
        cell = gp.TWO_PI / rule.resolution
        val = dists[best]
        for _ in range(3):
            for k in (0, 1):
                def f1(a, k=k):
                    q = list(g)
                    q[k] = a
                    return f_of(tuple(q))
                g[k], val = _golden_min(f1, g[k] - cell, g[k] + cell)
    else:  # so3: coordinate descent on Euler angles
        e = gp.as_euler(rule.nodes[best])
        ang = [e.alpha, e.beta, e.gamma]
        cells = [
            gp.TWO_PI / (2 * rule.resolution),
            math.pi / rule.resolution,
            gp.TWO_PI / (2 * rule.resolution),
        ]
        val = dists[best]
        for _ in range(6):
            for k in range(3):
                def f1(a, k=k):
                    q = list(ang)
                    q[k] = a
                    return f_of(hm.Euler(*q))
                ang[k], val = _golden_min(f1, ang[k] - cells[k], ang[k] + cells[k])
    return float(min(val, dists[best]) / norm)


def _pairwise_gap(points, pdist_rows, separation) -> float:
    """Min image distance over pairs with parameter distance >= separation."""
    n = len(points)
    best = math.inf
    chunk = max(1, min(512, n))
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        dmat = cdist(points[lo:hi], points)
        mask = pdist_rows(lo, hi) >= separation
        if mask.any():
            best = min(best, float(dmat[mask].min()))
    return best


def self_intersection_gap(
    model: ModelSpec, theta, resolution: int, separation: float | None = None
) -> float:
    """Smallest image distance between parameter-separated grid nodes.

    A strictly positive gap that is stable under grid refinement certifies
    numerically that the projected orbit does not self-intersect; a gap that
    keeps shrinking as the grid refines flags a self-crossing.  `separation`
    is a group-parameter distance; the default is ten grid cells.
    """
    cloud = orbit_cloud(model, theta, resolution)
    group = model.group
    if group == "so2":
        angles = np.asarray(cloud.params)
        if separation is None:
            separation = 10.0 * gp.TWO_PI / len(cloud)

        def rows(lo, hi):
            d = np.abs(angles[lo:hi, None] - angles[None, :]) % gp.TWO_PI
            return np.minimum(d, gp.TWO_PI - d)

    elif group == "so2xso2":
        a1 = np.array([p[0] for p in cloud.params])
        a2 = np.array([p[1] for p in cloud.params])
        if separation is None:
            separation = 10.0 * gp.TWO_PI / cloud.model.haar_rule(resolution).resolution

        def rows(lo, hi):
            d1 = np.abs(a1[lo:hi, None] - a1[None, :]) % gp.TWO_PI
            d1 = np.minimum(d1, gp.TWO_PI - d1)
            d2 = np.abs(a2[lo:hi, None] - a2[None, :]) % gp.TWO_PI
            d2 = np.minimum(d2, gp.TWO_PI - d2)
            return np.hypot(d1, d2)

    elif group == "so3":
        mats = np.stack(
            [hm.rot3_from_euler(gp.as_euler(p)) for p in cloud.params]
        ).reshape(len(cloud), 9)
        if separation is None:
            separation = 10.0 * math.pi / resolution
        msq = (mats**2).sum(axis=1)

        def rows(lo, hi):
            d2 = msq[lo:hi, None] + msq[None, :] - 2.0 * mats[lo:hi] @ mats.T
            return np.sqrt(np.clip(d2, 0.0, None))

    elif group == "z2":
        signs = np.asarray(cloud.params, dtype=float)
        if separation is None:
            separation = 1.0

        def rows(lo, hi):
            return np.abs(signs[lo:hi, None] - signs[None, :])

    else:
        raise ValueError(f"unknown group {group!r}")
    gap = _pairwise_gap(cloud.points, rows, separation)
    return 0.0 if gap is math.inf else gap


def ball_mass_exponent(
    model: ModelSpec,
    radii=(0.3, 0.45, 0.6, 0.9),
    n_samples: int = 100_000,
    seed: int = 0,
) -> float:
    """Estimate the growth exponent of Haar mass in small representation balls.

    Fits log-mass against log-radius around the identity; the slope estimates
    the group's manifold dimension.
    """
    rng = np.random.default_rng(seed)
    params = gp.sample_measure(gp.Haar(model.group), n_samples, rng)
    reps = model.rep_stack(params)
    dists = np.linalg.norm(
        reps - np.eye(model.d)[None, :, :], axis=(1, 2)
    )
    scale = np.quantile(dists, 0.25)
    radii = np.asarray(radii) * scale
    masses = np.array([(dists <= r).mean() for r in radii])
    if (masses <= 0).any():
        raise ValueError("no samples in the smallest ball; increase n_samples")
    slope = np.polyfit(np.log(radii), np.log(masses), 1)[0]
    return float(slope)
