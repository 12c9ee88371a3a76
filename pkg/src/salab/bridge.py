"""Shortest-path score on a weighted edge network and a Gibbs sampler for the
uniform law on the unit cube restricted to ``{phi >= theta}``."""

from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np

from .core import SALabError


class StateOutsideSupport(SALabError, ValueError):
    pass


DEFAULT_WEIGHTS = (1.0, 2.0, 3.0, 1.0, 2.0)
# classic 5-edge bridge: two side routes and two routes through the middle edge
DEFAULT_PATHS = ((0, 3), (1, 4), (0, 2, 4), (1, 2, 3))


@dataclass(frozen=True)
class BridgeNetwork:
    weights: tuple[float, ...] = DEFAULT_WEIGHTS
    paths: tuple[tuple[int, ...], ...] = DEFAULT_PATHS
    _a: np.ndarray = field(init=False, repr=False, compare=False)
    _incidence: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        w = tuple(float(a) for a in self.weights)
        paths = tuple(tuple(int(j) for j in p) for p in self.paths)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "paths", paths)
        d = len(w)
        if d == 0 or any(a <= 0 for a in w):
            raise ValueError("edge weights must be positive")
        if not paths or any(len(p) == 0 for p in paths):
            raise ValueError("need a nonempty list of nonempty paths")
        if any(j < 0 or j >= d for p in paths for j in p):
            raise ValueError("path references an unknown edge")
        if set(j for p in paths for j in p) != set(range(d)):
            raise ValueError("every edge must lie on at least one path")
        object.__setattr__(self, "_a", np.array(w))
        inc = np.zeros((d, len(paths)))
        for k, p in enumerate(paths):
            inc[list(p), k] = 1.0
        object.__setattr__(self, "_incidence", inc)

    @property
    def d(self) -> int:
        return len(self.weights)

    @classmethod
    def from_config(cls, cfg: dict) -> "BridgeNetwork":
        return cls(tuple(cfg["weights"]), tuple(tuple(p) for p in cfg["paths"]))

    def to_config(self) -> dict:
        return {"weights": list(self.weights), "paths": [list(p) for p in self.paths]}

    def max_score(self) -> float:
        return float(((self._a) @ self._incidence).min())


@numba.njit(cache=True)
def _phi_nb(u, a, inc):
    best = np.inf
    for k in range(inc.shape[1]):
        c = 0.0
        for j in range(inc.shape[0]):
            if inc[j, k] > 0.0:
                c += a[j] * u[j]
        if c < best:
            best = c
    return best


@numba.njit(cache=True)
def _min_through_nb(u, a, inc, ell):
    best = np.inf
    for k in range(inc.shape[1]):
        if inc[ell, k] > 0.0:
            c = 0.0
            for j in range(inc.shape[0]):
                if j != ell and inc[j, k] > 0.0:
                    c += a[j] * u[j]
            if c < best:
                best = c
    return best


@numba.njit(cache=True)
def _sweep_nb(u, theta, a, inc, draws):
    out = u.copy()
    for ell in range(out.shape[0]):
        t = (theta - _min_through_nb(out, a, inc, ell)) / a[ell]
        if t < 0.0:
            t = 0.0
        elif t > 1.0:
            t = 1.0
        # 1 - U lies in (0, 1], keeps log(u) finite
        out[ell] = t + (1.0 - t) * (1.0 - draws[ell])
    return out


def phi(net: BridgeNetwork, u) -> float:
    """Length of the shortest path when edge ``l`` has length ``a_l * u_l``."""
    return float(_phi_nb(np.asarray(u, dtype=np.float64), net._a, net._incidence))


def phi_batch(net: BridgeNetwork, u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    return ((u * np.asarray(net.weights)) @ net._incidence).min(axis=1)


def _min_through(net: BridgeNetwork, u, ell: int) -> float:
    return float(_min_through_nb(np.asarray(u, dtype=np.float64), net._a, net._incidence, ell))


def gibbs_threshold(net: BridgeNetwork, theta: float, u, ell: int) -> float:
    """Lower end ``t*`` of ``{t in [0,1] : phi(u with u_ell = t) >= theta} = [t*, 1]``.

    Paths avoiding ``ell`` already clear ``theta`` (since ``phi(u) >= theta``),
    so only the cheapest path through ``ell`` constrains ``u_ell``.
    """
    if phi(net, u) < theta:
        raise StateOutsideSupport(f"phi(u) = {phi(net, u)} < theta = {theta}")
    t = (theta - _min_through(net, u, ell)) / net.weights[ell]
    return min(max(t, 0.0), 1.0)


def gibbs_sweep(net: BridgeNetwork, theta: float, u, rng) -> np.ndarray:
    """One systematic-scan sweep; coordinate ``l`` is redrawn uniformly on its
    conditional support ``[t*, 1]``."""
    u = np.asarray(u, dtype=np.float64)
    if _phi_nb(u, net._a, net._incidence) < theta:
        raise StateOutsideSupport(f"phi(u) = {phi(net, u)} < theta = {theta}")
    return _sweep_nb(u, float(theta), net._a, net._incidence, rng.random(u.shape[0]))


def gibbs_sweep_batch(net: BridgeNetwork, theta: float, u: np.ndarray, rng) -> np.ndarray:
    """`gibbs_sweep` applied independently to every row of ``u`` (shape (m, d))."""
    u = np.array(u, dtype=float)
    if np.any(phi_batch(net, u) < theta):
        raise StateOutsideSupport("some chains start outside {phi >= theta}")
    a = np.asarray(net.weights)
    inc = net._incidence
    draws = rng.random(u.shape)
    for ell in range(net.d):
        cols = inc[ell] > 0
        partial = (u * a) @ inc[:, cols] - a[ell] * u[:, [ell]]
        t = np.clip((theta - partial.min(axis=1)) / a[ell], 0.0, 1.0)
        u[:, ell] = t + (1.0 - t) * (1.0 - draws[:, ell])
    return u


def enter_support(net: BridgeNetwork, theta: float, u) -> np.ndarray:
    """Deterministically raise coordinates of ``u`` until ``phi(u) >= theta``.

    Each coordinate is lifted to the smallest value that makes every path
    through it reach ``theta`` (capped at 1).  Points already in the support
    are returned unchanged; if ``theta`` exceeds the largest attainable
    score the all-ones corner is returned.
    """
    u = np.array(u, dtype=np.float64)
    if phi(net, u) >= theta:
        return u
    if net.max_score() < theta:
        return np.ones(net.d)
    for _ in range(net.d + 1):
        for ell in range(net.d):
            t = (theta - _min_through(net, u, ell)) / net.weights[ell]
            u[ell] = max(u[ell], min(t, 1.0))
        if phi(net, u) >= theta:
            return u
    return np.ones(net.d)


def rejection_sample(net: BridgeNetwork, theta: float, n: int, rng, batch: int = 1 << 16) -> np.ndarray:
    """``n`` exact draws from the uniform law on the cube restricted to ``{phi >= theta}``."""
    out = []
    have = 0
    while have < n:
        u = rng.random((batch, net.d))
        keep = u[phi_batch(net, u) >= theta]
        out.append(keep)
        have += len(keep)
    return np.concatenate(out)[:n]
