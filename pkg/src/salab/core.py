"""Step schedules, compact families, RNG streams and shared error types."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Any, Callable, Protocol

import numba
import numpy as np

EPS_ZERO = 1e-12

# Stable component tags xor-ed into the run seed (see `make_rng`).
STREAM_MAIN = 0x5A_11_AB_00
STREAM_PILOT = 0x5A_11_AB_01
STREAM_DIAG = 0x5A_11_AB_02

_MASK64 = (1 << 64) - 1


class SALabError(Exception):
    """Base class for every error raised by the library."""


class NonFiniteField(SALabError):
    pass


class InitOutsideSet(SALabError):
    pass


class AnchorOutsideSet(SALabError):
    pass


class TruncationCapExceeded(SALabError):
    pass


class EmptySamples(SALabError, ValueError):
    pass


class DimensionMismatch(SALabError, ValueError):
    pass


def make_rng(seed: int, tag: int = STREAM_MAIN) -> np.random.Generator:
    """Counter-based Philox generator keyed by ``seed ^ tag``.

    Each consumer of randomness gets its own tag so that adding a new
    diagnostic stream never shifts the draws of the main run.
    """
    return np.random.Generator(np.random.Philox(key=(int(seed) ^ int(tag)) & _MASK64))


def as_param(theta: Any) -> np.ndarray:
    arr = np.array(theta, dtype=np.float64).reshape(-1)
    if arr.size == 0:
        raise DimensionMismatch("parameter must have at least one coordinate")
    if not np.isfinite(arr).all():
        raise ValueError(f"parameter has non-finite coordinates: {arr}")
    return arr


@dataclass(frozen=True)
class StepSchedule:
    """Polynomial step sizes ``gamma0 / (offset + n + 1) ** beta``.

    ``beta`` is restricted to (1/2, 1]; the sharper lower bound that
    depends on the field's Hoelder constants is not checkable for an
    arbitrary plugged-in field.
    """

    gamma0: float
    beta: float
    offset: int = 0

    def __post_init__(self) -> None:
        if not (self.gamma0 > 0 and math.isfinite(self.gamma0)):
            raise ValueError(f"gamma0 must be positive, got {self.gamma0}")
        if not (0.5 < self.beta <= 1.0):
            raise ValueError(f"beta must lie in (1/2, 1], got {self.beta}")
        if int(self.offset) != self.offset or self.offset < 0:
            raise ValueError(f"offset must be a nonnegative integer, got {self.offset}")

    def gamma_at(self, n: int) -> float:
        return self.gamma0 / (self.offset + n + 1) ** self.beta

    def shift(self, q: int) -> "StepSchedule":
        if q < 0:
            raise ValueError("shift must be nonnegative")
        return replace(self, offset=self.offset + int(q))


def gamma_at(s: StepSchedule, n: int) -> float:
    if n < 0:
        raise ValueError("step index must be nonnegative")
    return s.gamma_at(n)


def shift(s: StepSchedule, q: int) -> StepSchedule:
    return s.shift(q)


class CompactFamily(Protocol):
    """Nested sequence of compact sets K_0 ⊂ K_1 ⊂ ... covering the parameter space."""

    def contains(self, i: int, theta: np.ndarray) -> bool: ...


class Kernel(Protocol):
    def __call__(self, theta: np.ndarray, x: Any, rng: np.random.Generator) -> Any: ...


Field = Callable[[np.ndarray, Any], np.ndarray]


@dataclass(frozen=True)
class BoxFamily:
    """K_i = [-r_i, r_i]^d with r_i = radius0 * growth**i."""

    radius0: float = 2.0
    growth: float = 2.0

    def __post_init__(self) -> None:
        if self.radius0 <= 0 or self.growth <= 1:
            raise ValueError("need radius0 > 0 and growth > 1")

    def radius(self, i: int) -> float:
        return self.radius0 * self.growth**i

    def contains(self, i: int, theta: np.ndarray) -> bool:
        r = self.radius0 * self.growth**i
        if theta.size <= 32:
            vals = theta.tolist()
            return -r <= min(vals) and max(vals) <= r
        return bool(np.abs(theta).max() <= r)


@dataclass(frozen=True)
class BallFamily:
    """Euclidean balls of radius radius0 * growth**i around ``center`` (origin by default)."""

    radius0: float = 2.0
    growth: float = 2.0
    center: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if self.radius0 <= 0 or self.growth <= 1:
            raise ValueError("need radius0 > 0 and growth > 1")

    def radius(self, i: int) -> float:
        return self.radius0 * self.growth**i

    def contains(self, i: int, theta: np.ndarray) -> bool:
        v = theta if self.center is None else theta - np.asarray(self.center)
        return math.sqrt(float(v @ v)) <= self.radius(i)


@dataclass(frozen=True)
class SeparationFamily:
    """Codebooks of N points in ball(0, delta) whose minimal pairwise distance is
    at least ``1 / (i + q0)``.

    ``theta`` is the flattened (N*d,) codebook.
    """

    n_points: int
    dim: int
    delta: float
    q0: float

    def __post_init__(self) -> None:
        if self.q0 <= 0:
            raise ValueError("q0 must be positive")

    def separation(self, i: int) -> float:
        return 1.0 / (i + self.q0)

    def contains(self, i: int, theta: np.ndarray) -> bool:
        max_sq, min_sep_sq = _codebook_stats(theta.reshape(self.n_points, self.dim))
        if max_sq > self.delta**2:
            return False
        return self.n_points < 2 or min_sep_sq >= self.separation(i) ** 2


@numba.njit(cache=True)
def _codebook_stats(pts):
    # (largest squared norm, smallest squared pairwise distance)
    n, d = pts.shape
    max_sq, min_sq = 0.0, np.inf
    for i in range(n):
        s = 0.0
        for k in range(d):
            s += pts[i, k] ** 2
        max_sq = max(max_sq, s)
        for j in range(i + 1, n):
            r = 0.0
            for k in range(d):
                r += (pts[i, k] - pts[j, k]) ** 2
            min_sq = min(min_sq, r)
    return max_sq, min_sq


@dataclass(frozen=True)
class SaceFamily:
    """Boxes for the composite (theta, sigma) parameter of the cross-entropy run:
    |theta| <= theta_max0 * growth**i and -s_i <= sigma_l <= -1/s_i with
    s_i = s_max0 * growth**i.
    """

    theta_max0: float
    s_max0: float
    growth: float = 2.0

    def __post_init__(self) -> None:
        if self.theta_max0 <= 0 or self.s_max0 <= 1 or self.growth <= 1:
            raise ValueError("need theta_max0 > 0, s_max0 > 1, growth > 1")

    def contains(self, i: int, theta: np.ndarray) -> bool:
        g = self.growth**i
        if abs(theta[0]) > self.theta_max0 * g:
            return False
        s = self.s_max0 * g
        sig = theta[1:].tolist()
        return -s <= min(sig) and max(sig) <= -1.0 / s
