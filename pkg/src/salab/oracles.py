"""Brute-force reference computations, written without touching the SA engine."""

from __future__ import annotations

import math

import numpy as np
from scipy.special import ndtri

from .core import SALabError


class NoConvergence(SALabError, RuntimeError):
    pass


def empirical_quantile(values, q: float) -> float:
    """Lower (type-1) empirical quantile: the smallest v with F_n(v) >= q."""
    v = np.sort(np.asarray(values, dtype=float).reshape(-1))
    k = max(0, math.ceil(q * v.size) - 1)
    return float(v[k])


def mc_quantile(sampler, phi, q: float, n: int, rng, chunk: int = 1 << 20) -> float:
    """Empirical q-quantile of ``phi`` over ``n`` i.i.d. draws.

    ``sampler(rng, m)`` returns m draws; ``phi`` maps a batch of draws to a
    batch of scores.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    parts = []
    left = n
    while left > 0:
        m = min(chunk, left)
        parts.append(np.asarray(phi(sampler(rng, m)), dtype=float).reshape(-1))
        left -= m
    return empirical_quantile(np.concatenate(parts), q)


def normal_quantile(q: float, mean: float = 0.0, sd: float = 1.0) -> float:
    return mean + sd * float(ndtri(q))


def quantile_ci_halfwidth(q: float, n: int, density_at_quantile: float, z: float = 1.96) -> float:
    """Asymptotic half-width of the empirical-quantile CI: z sqrt(q(1-q)/n) / f."""
    return z * math.sqrt(q * (1.0 - q) / n) / density_at_quantile


def weiszfeld(samples, tol: float = 1e-10, max_iter: int = 1000) -> np.ndarray:
    """Geometric median by iteratively reweighted means.

    Samples within 1e-12 of the current iterate are dropped from the
    reweighting for that sweep.
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    m = x.mean(axis=0)
    for _ in range(max_iter):
        d = np.linalg.norm(x - m, axis=1)
        keep = d >= 1e-12
        if not np.any(keep):
            return m
        w = 1.0 / d[keep]
        new = (x[keep] * w[:, None]).sum(axis=0) / w.sum()
        step = np.linalg.norm(new - m)
        m = new
        if step <= tol * max(1.0, np.linalg.norm(m)):
            return m
    raise NoConvergence(f"Weiszfeld did not converge in {max_iter} iterations")


def finite_diff_grad(f, theta, h: float = 1e-5) -> np.ndarray:
    """Central differences ``(f(theta + h e_i) - f(theta - h e_i)) / 2h``."""
    if h <= 0:
        raise ValueError("h must be positive")
    theta = np.asarray(theta, dtype=float)
    g = np.empty_like(theta)
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e.flat[i] = h
        g.flat[i] = (f(theta + e) - f(theta - e)) / (2.0 * h)
    return g


def _lloyd_assign(samples, centers):
    d2 = ((samples[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    idx = d2.argmin(axis=1)
    return idx, d2[np.arange(len(samples)), idx]


def lloyd(samples, n_centers: int, iters: int, rng, init=None):
    """Batch k-means.  Returns ``(centers, distortions)`` with one distortion per sweep.

    Empty cells are re-seeded at a random sample.
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if n_centers > len(np.unique(x, axis=0)):
        raise ValueError("more centers than distinct samples")
    if init is None:
        centers = x[rng.choice(len(x), n_centers, replace=False)].copy()
    else:
        centers = np.array(init, dtype=float).reshape(n_centers, x.shape[1])
    history = []
    for _ in range(iters):
        idx, d2 = _lloyd_assign(x, centers)
        history.append(float(d2.mean()))
        for k in range(n_centers):
            members = x[idx == k]
            if len(members):
                centers[k] = members.mean(axis=0)
            else:
                centers[k] = x[rng.integers(len(x))]
    _, d2 = _lloyd_assign(x, centers)
    history.append(float(d2.mean()))
    return centers, history
