"""Markov kernels and data distributions used to drive the experiments.

Kernels follow the engine's calling convention ``kernel(theta, x, rng) -> x'``
and never mutate ``x`` in place.  The stock kernels here ignore ``theta``;
the controlled kernel of the cross-entropy experiment lives in `salab.sace`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np


# ------------------------------------------------------------ distributions


@dataclass(frozen=True)
class PointMass:
    value: float | tuple[float, ...]

    @property
    def dim(self) -> int:
        return 1 if np.ndim(self.value) == 0 else len(self.value)

    def sample(self, rng):
        return self.value if np.ndim(self.value) == 0 else np.array(self.value, dtype=float)

    def sample_n(self, rng, n: int) -> np.ndarray:
        v = np.asarray(self.value, dtype=float)
        return np.full(n, float(v)) if v.ndim == 0 else np.tile(v, (n, 1))


@dataclass(frozen=True)
class Normal:
    """Scalar N(mean, sd^2) when ``dim`` is 0, otherwise isotropic in R^dim."""

    mean: float = 0.0
    sd: float = 1.0
    dim: int = 0

    def sample(self, rng):
        if self.dim == 0:
            return self.mean + self.sd * rng.standard_normal()
        return self.mean + self.sd * rng.standard_normal(self.dim)

    def sample_n(self, rng, n: int) -> np.ndarray:
        shape = (n,) if self.dim == 0 else (n, self.dim)
        return self.mean + self.sd * rng.standard_normal(shape)


@dataclass(frozen=True)
class GaussianMixture:
    """Equal-covariance mixture ``sum_k w_k N(means[k], sd^2 I)``."""

    means: tuple[tuple[float, ...], ...]
    sd: float = 1.0
    weights: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "_means", np.array(self.means, dtype=float))
        w = np.full(len(self.means), 1.0 / len(self.means)) if self.weights is None else np.array(self.weights)
        object.__setattr__(self, "_cdf", np.cumsum(w / w.sum()))

    @property
    def dim(self) -> int:
        return self._means.shape[1]

    def sample(self, rng) -> np.ndarray:
        k = int(np.searchsorted(self._cdf, rng.random(), side="right"))
        k = min(k, len(self._cdf) - 1)
        return self._means[k] + self.sd * rng.standard_normal(self.dim)

    def sample_n(self, rng, n: int) -> np.ndarray:
        k = np.minimum(np.searchsorted(self._cdf, rng.random(n), side="right"), len(self._cdf) - 1)
        return self._means[k] + self.sd * rng.standard_normal((n, self.dim))


@dataclass(frozen=True)
class UniformBox:
    low: tuple[float, ...]
    high: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "_lo", np.array(self.low, dtype=float))
        object.__setattr__(self, "_hi", np.array(self.high, dtype=float))
        if self._lo.shape != self._hi.shape or np.any(self._hi <= self._lo):
            raise ValueError("need low < high componentwise")

    @property
    def dim(self) -> int:
        return self._lo.size

    def sample(self, rng) -> np.ndarray:
        return self._lo + (self._hi - self._lo) * rng.random(self.dim)

    def sample_n(self, rng, n: int) -> np.ndarray:
        return self._lo + (self._hi - self._lo) * rng.random((n, self.dim))

    def density(self, x) -> float:
        x = np.asarray(x)
        return 1.0 if bool(np.all(x >= self._lo) and np.all(x <= self._hi)) else 0.0


@dataclass(frozen=True)
class UniformBall:
    radius: float
    dim: int

    def sample(self, rng) -> np.ndarray:
        return self.sample_n(rng, 1)[0]

    def sample_n(self, rng, n: int) -> np.ndarray:
        g = rng.standard_normal((n, self.dim))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        r = self.radius * rng.random(n) ** (1.0 / self.dim)
        return g * r[:, None]

    def density(self, x) -> float:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return 1.0 if float(x @ x) <= self.radius**2 else 0.0


# ------------------------------------------------------------------ kernels


def iid_step(sampler, rng):
    """Fresh draw from the sampler's law, independent of the current state."""
    return sampler.sample(rng)


def ar1_step(rho: float, sigma: float, x, rng):
    """``rho * x + sigma * eps`` with standard normal noise of x's shape."""
    if np.ndim(x) == 0:
        return rho * x + sigma * rng.standard_normal()
    x = np.asarray(x, dtype=float)
    return rho * x + sigma * rng.standard_normal(x.shape)


def _fold(y: float, delta: float) -> float:
    # repeated mirror reflection into [-delta, delta]
    period = 4.0 * delta
    t = (y + delta) % period
    if t > 2.0 * delta:
        t = period - t
    return t - delta


def _radial_reflect(y: np.ndarray, delta: float):
    r = math.sqrt(float(y @ y))
    if r <= delta:
        return y
    if r > 2.0 * delta:
        return None
    return y * ((2.0 * delta - r) / r)


def _reflected_proposal_density(x: np.ndarray, y: np.ndarray, delta: float, scale: float) -> float:
    """Density (up to the common Gaussian constant) of landing on ``y`` from ``x``
    under Gaussian proposal + radial reflection, summing over both preimages."""
    d = x.size
    diff = y - x
    dens = math.exp(-0.5 * float(diff @ diff) / scale**2)
    r = math.sqrt(float(y @ y))
    if 0.0 < r < delta:
        pre = y * ((2.0 * delta - r) / r)
        diff = pre - x
        jac = ((2.0 * delta - r) / r) ** (d - 1)
        dens += jac * math.exp(-0.5 * float(diff @ diff) / scale**2)
    return dens


def rwm_reflected_step(density: Callable, delta: float, scale: float, x, rng):
    """Random-walk Metropolis on ball(0, delta) with a reflected Gaussian proposal.

    In one dimension the proposal is folded into [-delta, delta]; folding is an
    isometry so the proposal stays symmetric and the acceptance ratio is
    ``density(y) / density(x)``.  In higher dimension the radial reflection
    is not volume preserving, so the Hastings ratio carries the reflected
    proposal densities (with their Jacobian) in both directions.
    """
    scalar = np.ndim(x) == 0
    xv = np.atleast_1d(np.asarray(x, dtype=float))
    step = scale * rng.standard_normal(xv.size)
    u = rng.random()
    if xv.size == 1:
        y = np.array([_fold(float(xv[0] + step[0]), delta)])
        num = density(y[0] if scalar else y)
        den = density(x)
        ratio = num / den if den > 0 else 1.0
    else:
        y = _radial_reflect(xv + step, delta)
        if y is None:
            return x
        px, py = density(xv), density(y)
        if py <= 0:
            return x
        q_xy = _reflected_proposal_density(xv, y, delta, scale)
        q_yx = _reflected_proposal_density(y, xv, delta, scale)
        ratio = (py * q_yx) / (px * q_xy) if px > 0 else 1.0
    if u < ratio:
        return float(y[0]) if scalar else y
    return x


class IidKernel:
    def __init__(self, sampler):
        self.sampler = sampler
        self._sample = sampler.sample

    def __call__(self, theta, x, rng):
        return self._sample(rng)


class AR1Kernel:
    def __init__(self, rho: float, sigma: float):
        if not abs(rho) < 1:
            raise ValueError("AR(1) needs |rho| < 1")
        if sigma < 0:
            raise ValueError("sigma must be nonnegative")
        self.rho, self.sigma = rho, sigma

    def __call__(self, theta, x, rng):
        return ar1_step(self.rho, self.sigma, x, rng)

    def stationary_sd(self) -> float:
        return self.sigma / math.sqrt(1.0 - self.rho**2)


class ReflectedRWMKernel:
    def __init__(self, density: Callable, delta: float, scale: float):
        if delta <= 0 or scale <= 0:
            raise ValueError("delta and scale must be positive")
        self.density, self.delta, self.scale = density, delta, scale

    def __call__(self, theta, x, rng):
        return rwm_reflected_step(self.density, self.delta, self.scale, x, rng)
