"""Stochastic-approximation cross-entropy (SACE) for extreme quantiles of a
bridge-network score under the uniform law on [0, 1]^d.

The instrumental family is the product of Beta(nu_l, 1) laws, a canonical
exponential family with sufficient statistic ``S(u) = log u`` and
log-partition term ``B(nu) = sum log nu``; the cross-entropy maximiser of
``B(nu) + <nu, s>`` is ``nu_l = -1 / s_l``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from .bridge import BridgeNetwork, _phi_nb, enter_support, gibbs_sweep, phi, phi_batch, rejection_sample
from .core import EPS_ZERO, SaceFamily, SALabError


class NonNegativeSufficientStat(SALabError, ValueError):
    pass


class DegenerateDraw(SALabError, ValueError):
    pass


DEFAULT_WEIGHT_CAP = 1e12


class BetaProductFamily:
    """Product of Beta(nu_l, 1) densities ``prod_l nu_l u_l^(nu_l - 1)`` on [0, 1]^d."""

    def __init__(self, d: int):
        self.d = d

    @staticmethod
    def suff_stat(u) -> np.ndarray:
        return np.log(np.asarray(u, dtype=float))

    @staticmethod
    def log_partition(nu) -> float:
        return float(np.sum(np.log(nu)))

    @staticmethod
    def nu_hat(s) -> np.ndarray:
        return nu_hat(s)

    @staticmethod
    def log_density(u, nu) -> float:
        u = np.asarray(u, dtype=float)
        nu = np.asarray(nu, dtype=float)
        return float(np.sum(np.log(nu) + (nu - 1.0) * np.log(u)))


def nu_hat(s) -> np.ndarray:
    """Cross-entropy parameter ``nu_l = -1 / s_l``; needs every ``s_l < 0``."""
    s = np.asarray(s, dtype=float)
    if np.any(~(s < 0)):
        raise NonNegativeSufficientStat(f"sufficient statistic must be componentwise negative, got {s}")
    return -1.0 / s


def importance_weight(z, nu) -> float:
    """Uniform density over Beta-product density at ``z``."""
    z = np.asarray(z, dtype=float)
    nu = np.asarray(nu, dtype=float)
    if np.any(z <= EPS_ZERO):
        raise DegenerateDraw(f"draw {z} touches the boundary of the cube")
    return 1.0 / float(np.prod(nu * z ** (nu - 1.0)))


def sample_beta_product(nu, rng) -> np.ndarray:
    """Inverse-CDF draw: the Beta(nu, 1) CDF is ``x ** nu`` so ``U ** (1 / nu)`` works."""
    nu = np.asarray(nu, dtype=float)
    return rng.random(nu.shape) ** (1.0 / nu)


@dataclass(frozen=True)
class SaceState:
    theta: float
    sigma: np.ndarray
    y: np.ndarray
    z: np.ndarray
    n: int = 0


def gibbs_kernel(net: BridgeNetwork):
    """Q_theta: one Gibbs sweep targeting uniform * 1{phi >= theta}.

    A state outside the support (which happens when theta has just moved
    up) is first lifted into it; above the attainable maximum the kernel
    collapses onto the all-ones corner.
    """

    def q_theta(theta: float, y, rng) -> np.ndarray:
        if _phi_nb(y, net._a, net._incidence) < theta:
            y = enter_support(net, theta, y)
            if phi(net, y) < theta:
                return y
        return gibbs_sweep(net, theta, y, rng)

    return q_theta


ESTIMATORS = ("above", "below")


def tail_increment(net: BridgeNetwork, q: float, theta: float, z, nu, cap: float, estimator: str = "above"):
    """Noisy quantile increment at ``theta`` from one instrumental draw ``z``.

    ``"below"``:  q - 1{phi(z) < theta} w(z)
    ``"above"``:  q - 1 + 1{phi(z) >= theta} w(z)

    with ``w = p / g_nu``.  Both have mean ``P(phi >= theta) - (1 - q)``
    because ``E_g[w] = 1``.  The "below" form weights the bulk of the
    uniform law, where a tail-fitted Beta product has vanishing density, so
    its weights have infinite variance; the "above" form weights only the
    tail that the instrumental law was fitted to.

    Returns ``(increment, clipped)``.
    """
    above = _phi_nb(z, net._a, net._incidence) >= theta
    if estimator == "below":
        if above:
            return q, False
        w, clipped = _capped_weight(z, nu, cap)
        return q - w, clipped
    if estimator != "above":
        raise ValueError(f"unknown estimator {estimator!r}")
    if not above:
        return q - 1.0, False
    w, clipped = _capped_weight(z, nu, cap)
    return q - 1.0 + w, clipped


@numba.njit(cache=True)
def _log_weight_nb(z, nu):
    s = 0.0
    for ell in range(z.shape[0]):
        if z[ell] <= 0.0:
            # ln 0: weight is 0 when nu < 1, infinite when nu > 1
            if nu[ell] > 1.0:
                return np.inf
            if nu[ell] < 1.0:
                return -np.inf
            continue
        s += math.log(nu[ell]) + (nu[ell] - 1.0) * math.log(z[ell])
    return -s


def _capped_weight(z, nu, cap: float):
    log_w = _log_weight_nb(z, nu)
    if not log_w < math.log(cap):
        return cap, True
    return math.exp(log_w), False


def sace_step(state: SaceState, q: float, kernel, net: BridgeNetwork, step: float, rng,
              weight_cap: float = DEFAULT_WEIGHT_CAP, estimator: str = "above") -> SaceState:
    """One SACE iteration.

    Y moves under ``kernel(theta_n, Y_n, rng)`` and Z is drawn from the Beta
    product with ``nu_hat(sigma_n)``, i.e. the parameter *before* this
    update; theta and sigma then move with the same ``step``.
    """
    nu = nu_hat(state.sigma)
    y = kernel(state.theta, state.y, rng)
    z = sample_beta_product(nu, rng)
    inc, _ = tail_increment(net, q, state.theta, z, nu, weight_cap, estimator)
    theta = state.theta + step * inc
    sigma = (1.0 - step) * state.sigma + step * np.log(y)
    return SaceState(theta, sigma, y, z, state.n + 1)


def _fast_nu(sigma: np.ndarray) -> np.ndarray:
    if not max(sigma.tolist()) < 0.0:
        raise NonNegativeSufficientStat(f"sufficient statistic must be componentwise negative, got {sigma}")
    return -1.0 / sigma


class SaceKernel:
    """Controlled kernel on ``x = (y, z)``: Gibbs move for y, fresh Beta-product draw for z."""

    def __init__(self, net: BridgeNetwork):
        self.net = net
        self._q = gibbs_kernel(net)

    def __call__(self, theta: np.ndarray, x, rng):
        y, _ = x
        y = self._q(theta[0], y, rng)
        z = sample_beta_product(_fast_nu(theta[1:]), rng)
        return (y, z)


class SaceField:
    """Increment for the composite parameter (theta, sigma).

    Counts weight clip events in ``clip_events``; that counter is the only
    state it carries.
    """

    def __init__(self, net: BridgeNetwork, q: float, weight_cap: float = DEFAULT_WEIGHT_CAP,
                 estimator: str = "above"):
        if not 0.0 < q < 1.0:
            raise ValueError("q must lie in (0, 1)")
        if estimator not in ESTIMATORS:
            raise ValueError(f"unknown estimator {estimator!r}")
        self.net, self.q, self.weight_cap, self.estimator = net, q, weight_cap, estimator
        self.clip_events = 0

    def __call__(self, vartheta: np.ndarray, x) -> np.ndarray:
        y, z = x
        sigma = vartheta[1:]
        inc, clipped = tail_increment(
            self.net, self.q, float(vartheta[0]), z, _fast_nu(sigma), self.weight_cap, self.estimator
        )
        self.clip_events += clipped
        out = np.log(y) - sigma
        return np.concatenate(([inc], out))


@dataclass(frozen=True)
class SaceInit:
    theta0: float
    sigma0: np.ndarray
    y0: np.ndarray
    family: SaceFamily


def pilot_init(net: BridgeNetwork, q: float, rng, *, n_theta: int = 1000, n_sigma: int = 100,
               theta0: float | None = None, sigma0=None, growth: float = 2.0) -> SaceInit:
    """Pilot-run defaults for the anchor and the compact family.

    theta0 is the empirical q-quantile of ``n_theta`` uniform draws; sigma0 the
    mean of log u over ``n_sigma`` exact draws from ``{phi >= theta0}``.
    """
    if theta0 is None:
        scores = np.sort(phi_batch(net, rng.random((n_theta, net.d))))
        theta0 = float(scores[max(0, math.ceil(q * n_theta) - 1)])
    tail = rejection_sample(net, theta0, n_sigma, rng, batch=max(4096, 20 * n_sigma))
    if sigma0 is None:
        sigma0 = np.log(tail).mean(axis=0)
    sigma0 = np.asarray(sigma0, dtype=float)
    nu_hat(sigma0)
    y0 = tail[0]
    theta_max0 = 2.0 * max(abs(theta0), net.max_score())
    s_max0 = 2.0 * max(float(np.max(-sigma0)), float(np.max(-1.0 / sigma0)), 1.0)
    return SaceInit(float(theta0), sigma0, y0, SaceFamily(theta_max0, s_max0, growth))


def final_nu(vartheta) -> np.ndarray:
    return nu_hat(np.asarray(vartheta)[1:])
