"""Mean-field increments and Lyapunov diagnostics for the quantile, geometric
median and penalized 0-neighbour Kohonen problems."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numba
import numpy as np

from .core import EPS_ZERO, DimensionMismatch, EmptySamples, SALabError


class DegenerateDictionary(SALabError, ValueError):
    pass


# ---------------------------------------------------------------- quantiles


def identity(x):
    return x


@dataclass(frozen=True)
class QuantileSpec:
    q: float
    phi: Callable = identity

    def __post_init__(self) -> None:
        if not (0.0 < self.q < 1.0):
            raise ValueError(f"q must lie in (0, 1), got {self.q}")


def quantile_field(spec: QuantileSpec, theta: float, x) -> float:
    """``q - 1{phi(x) <= theta}``; the boundary counts as below."""
    return spec.q - (1.0 if spec.phi(x) <= theta else 0.0)


def quantile_lyap_deriv(spec: QuantileSpec, theta: float, samples) -> float:
    """Monte Carlo estimate of the Lyapunov derivative P(phi(X) <= theta) - q.

    ``samples`` are already-scored values phi(X_i).
    """
    s = np.asarray(samples, dtype=float).reshape(-1)
    if s.size == 0:
        raise EmptySamples("quantile_lyap_deriv needs at least one sample")
    return float(np.count_nonzero(s <= theta)) / s.size - spec.q


def quantile_lyap(spec: QuantileSpec, theta: float, samples) -> float:
    """MC estimate of ``0.5 E|theta - phi(X)| + (0.5 - q) theta``."""
    s = np.asarray(samples, dtype=float).reshape(-1)
    if s.size == 0:
        raise EmptySamples("quantile_lyap needs at least one sample")
    return 0.5 * float(np.mean(np.abs(theta - s))) + (0.5 - spec.q) * theta


class QuantileField:
    """Engine adapter: parameter is a length-1 vector."""

    def __init__(self, spec: QuantileSpec):
        self.spec = spec
        self._q = spec.q
        self._phi = spec.phi

    def __call__(self, theta: np.ndarray, x) -> np.ndarray:
        return np.array([self._q - (1.0 if self._phi(x) <= theta[0] else 0.0)])


# ------------------------------------------------------------------- median


def median_field(theta, x) -> np.ndarray:
    """Unit vector from theta towards x; zero when the two (nearly) coincide."""
    theta = np.asarray(theta, dtype=float)
    x = np.asarray(x, dtype=float)
    if theta.shape != x.shape:
        raise DimensionMismatch(f"theta has shape {theta.shape}, x has {x.shape}")
    diff = x - theta
    r = math.sqrt(float(diff @ diff))
    if r <= EPS_ZERO:
        return np.zeros_like(diff)
    return diff / r


def median_lyap(theta, samples) -> float:
    """MC estimate of E||X - theta||."""
    samples = np.asarray(samples, dtype=float)
    if len(samples) == 0:
        raise EmptySamples("median_lyap needs at least one sample")
    return float(np.mean(np.linalg.norm(samples - np.asarray(theta, dtype=float), axis=1)))


# ------------------------------------------------------------------ Kohonen


@dataclass(frozen=True)
class Dictionary:
    """Codebook of N points in R^d living in the ball of radius ``delta``.

    ``points`` has shape (N, d).  ``lam`` weights the repulsion penalty.
    """

    points: np.ndarray
    delta: float = 1.0
    lam: float = 0.0

    def __post_init__(self) -> None:
        pts = np.array(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] < 1:
            raise ValueError("points must have shape (N, d)")
        object.__setattr__(self, "points", pts)
        if self.delta <= 0:
            raise ValueError("delta must be positive")
        if self.lam < 0:
            raise ValueError("lam must be nonnegative")

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def with_points(self, points) -> "Dictionary":
        return Dictionary(np.asarray(points, dtype=float).reshape(self.n_points, self.dim), self.delta, self.lam)

    def flat(self) -> np.ndarray:
        return self.points.reshape(-1).copy()


def _sq_dists(points: np.ndarray, u: np.ndarray) -> np.ndarray:
    diff = points - u
    return np.einsum("ij,ij->i", diff, diff)


def voronoi_index(dictionary: Dictionary, u) -> int:
    """Nearest codebook entry; ties go to the lowest index."""
    u = np.asarray(u, dtype=float).reshape(-1)
    if u.size != dictionary.dim:
        raise DimensionMismatch(f"u has dimension {u.size}, codebook has {dictionary.dim}")
    # argmin returns the first minimiser
    return int(np.argmin(_sq_dists(dictionary.points, u)))


def assign(points: np.ndarray, samples: np.ndarray) -> np.ndarray:
    """Vectorised Voronoi assignment of many samples (lowest index on ties)."""
    d2 = (
        np.einsum("ij,ij->i", samples, samples)[:, None]
        - 2.0 * samples @ points.T
        + np.einsum("ij,ij->i", points, points)[None, :]
    )
    return np.argmin(d2, axis=1)


def _pairwise(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    diff = points[:, None, :] - points[None, :, :]
    dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    return diff, dist


def _check_separated(points: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    diff, dist = _pairwise(points)
    n = points.shape[0]
    off = ~np.eye(n, dtype=bool)
    if n > 1 and dist[off].min() < EPS_ZERO:
        raise DegenerateDictionary("two codebook points coincide")
    return diff, dist, off


def repulsion(dictionary: Dictionary) -> np.ndarray:
    """``lam * sum_{j != i} (theta_i - theta_j) / ||theta_i - theta_j||^4`` per block, shape (N, d).

    This is minus the gradient of the ordered-pair penalty
    ``(lam/4) sum_{i != j} ||theta_i - theta_j||^-2``.
    """
    pts = dictionary.points
    diff, dist, off = _check_separated(pts)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv4 = np.where(off, dist, 1.0) ** -4
    inv4[~off] = 0.0
    return dictionary.lam * np.einsum("ij,ijk->ik", inv4, diff)


def kohonen_field(dictionary: Dictionary, u) -> np.ndarray:
    """Penalized 0-neighbour Kohonen increment, flattened to length N*d.

    Block i is ``2 (u - theta_i) 1{u in cell i}`` plus the repulsion term.
    """
    u = np.asarray(u, dtype=float).reshape(-1)
    if u.size != dictionary.dim:
        raise DimensionMismatch(f"u has dimension {u.size}, codebook has {dictionary.dim}")
    out = repulsion(dictionary) if dictionary.lam > 0 else np.zeros_like(dictionary.points)
    if dictionary.lam == 0:
        _check_separated(dictionary.points)
    i = voronoi_index(dictionary, u)
    out[i] += 2.0 * (u - dictionary.points[i])
    return out.reshape(-1)


def kohonen_mean_field(dictionary: Dictionary, samples) -> np.ndarray:
    """Average of `kohonen_field` over many samples, flattened to length N*d."""
    samples = np.asarray(samples, dtype=float)
    if samples.ndim == 1:
        samples = samples[:, None]
    if len(samples) == 0:
        raise EmptySamples("kohonen_mean_field needs at least one sample")
    pts = dictionary.points
    out = repulsion(dictionary) if dictionary.lam > 0 else np.zeros_like(pts)
    if dictionary.lam == 0:
        _check_separated(pts)
    idx = assign(pts, samples)
    for i in range(dictionary.n_points):
        members = samples[idx == i]
        out[i] += 2.0 * (members.sum(axis=0) - len(members) * pts[i]) / len(samples)
    return out.reshape(-1)


def distortion(dictionary: Dictionary, samples) -> float:
    """Mean squared distance of samples to their nearest codebook entry."""
    samples = np.asarray(samples, dtype=float)
    if samples.ndim == 1:
        samples = samples[:, None]
    if len(samples) == 0:
        raise EmptySamples("distortion needs at least one sample")
    idx = assign(dictionary.points, samples)
    diff = samples - dictionary.points[idx]
    return float(np.mean(np.einsum("ij,ij->i", diff, diff)))


def penalty(dictionary: Dictionary) -> float:
    """``(lam/4) sum over ordered pairs i != j of ||theta_i - theta_j||^-2``."""
    _, dist, off = _check_separated(dictionary.points)
    return dictionary.lam / 4.0 * float(np.sum(dist[off] ** -2.0))


def penalized_lyap(dictionary: Dictionary, samples) -> float:
    return distortion(dictionary, samples) + penalty(dictionary)


@numba.njit(cache=True)
def _kohonen_nb(pts, u, lam, eps):
    n, d = pts.shape
    out = np.zeros((n, d))
    best, arg = np.inf, 0
    for i in range(n):
        s = 0.0
        for k in range(d):
            s += (pts[i, k] - u[k]) ** 2
        if s < best:
            best, arg = s, i
    if lam > 0.0 or n > 1:
        for i in range(n):
            for j in range(i + 1, n):
                r2 = 0.0
                for k in range(d):
                    r2 += (pts[i, k] - pts[j, k]) ** 2
                if r2 < eps * eps:
                    return out, False
                c = lam / (r2 * r2)
                for k in range(d):
                    g = c * (pts[i, k] - pts[j, k])
                    out[i, k] += g
                    out[j, k] -= g
    for k in range(d):
        out[arg, k] += 2.0 * (u[k] - pts[arg, k])
    return out, True


class KohonenField:
    """Engine adapter over flattened codebooks (compiled; same values as `kohonen_field`)."""

    def __init__(self, n_points: int, dim: int, delta: float, lam: float):
        self.n_points, self.dim, self.delta, self.lam = n_points, dim, delta, lam

    def __call__(self, theta: np.ndarray, x) -> np.ndarray:
        pts = theta.reshape(self.n_points, self.dim)
        u = np.asarray(x, dtype=np.float64).reshape(-1)
        out, ok = _kohonen_nb(pts, u, float(self.lam), EPS_ZERO)
        if not ok:
            raise DegenerateDictionary("two codebook points coincide")
        return out.reshape(-1)
