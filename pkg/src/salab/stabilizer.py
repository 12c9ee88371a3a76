"""Robbins-Monro iterations with Markovian noise, plain and truncation-stabilized.

`run_sa_until_exit` is the bare loop that stops as soon as the iterate leaves a
given set.  `run_stable_sa` wraps it in the restart scheme: every time the
iterate escapes the active set K_I, the active set is enlarged to K_{I+1},
the chain and parameter are reset to the anchor, and the step sequence keeps
advancing so that the restarted run uses a shifted (smaller) schedule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .core import (
    AnchorOutsideSet,
    CompactFamily,
    InitOutsideSet,
    NonFiniteField,
    StepSchedule,
    TruncationCapExceeded,
    as_param,
)


@dataclass(frozen=True)
class TraceRecord:
    n: int
    I: int
    zeta: int
    restart: bool
    theta: tuple[float, ...]


@dataclass
class Trace:
    """Column store of the iteration log.

    Row ``k`` describes the state right after iteration ``n[k]``.  On restart
    rows ``theta`` holds the rejected proposal, i.e. the value that left the
    active set.  ``gamma`` is the step size that produced the row.
    """

    n: np.ndarray
    I: np.ndarray
    zeta: np.ndarray
    restart: np.ndarray
    theta: np.ndarray
    gamma: np.ndarray
    tail_mean: np.ndarray
    final_theta: np.ndarray
    truncation_count: int
    budget: int
    thin: int = 1
    extras: dict[str, Any] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.n)

    def records(self):
        for k in range(len(self.n)):
            yield TraceRecord(
                int(self.n[k]),
                int(self.I[k]),
                int(self.zeta[k]),
                bool(self.restart[k]),
                tuple(float(v) for v in self.theta[k]),
            )


def _all_finite(v: np.ndarray) -> bool:
    # numpy reductions cost ~2us on tiny arrays; the engine calls this every step
    if v.size <= 32:
        return all(map(math.isfinite, v.tolist()))
    return bool(np.isfinite(v).all())


def sa_step(theta, x, kernel, field_fn, rho: float, rng):
    """One Robbins-Monro move: draw the next chain state, then step along the field."""
    x_new = kernel(theta, x, rng)
    h = field_fn(theta, x_new)
    if not _all_finite(h):
        raise NonFiniteField(f"field returned non-finite value {h!r} at theta={theta!r}")
    return theta + rho * h, x_new


@dataclass
class SAExit:
    """Outcome of `run_sa_until_exit`: ``exited_at`` is None when the budget ran out."""

    thetas: np.ndarray
    exited_at: int | None

    @property
    def exhausted(self) -> bool:
        return self.exited_at is None


def run_sa_until_exit(
    init: tuple[Any, Any],
    contains: Callable[[np.ndarray], bool],
    schedule: StepSchedule,
    kernel,
    field_fn,
    max_iters: int,
    rng,
) -> SAExit:
    """Iterate with ``rho_{n+1} = schedule.gamma_at(n)`` until the iterate leaves the set.

    ``thetas[0]`` is the initial point; ``thetas[-1]`` the exiting iterate
    when the set was left.
    """
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    x, theta = init
    theta = as_param(theta)
    if not contains(theta):
        raise InitOutsideSet(f"initial theta {theta} is outside the set")
    thetas = [theta]
    for n in range(max_iters):
        theta, x = sa_step(theta, x, kernel, field_fn, schedule.gamma_at(n), rng)
        thetas.append(theta)
        if not contains(theta):
            return SAExit(np.array(thetas), n + 1)
    return SAExit(np.array(thetas), None)


def _tail_start(budget: int, tail_fraction: float) -> int:
    # iterations n > start form the tail
    return budget - max(1, int(math.ceil(tail_fraction * budget)))


def run_stable_sa(
    family: CompactFamily,
    kernel,
    field_fn,
    schedule: StepSchedule,
    anchor: tuple[Any, Any],
    budget: int,
    rng,
    *,
    thin: int = 1,
    max_truncations: int = 10_000,
    tail_fraction: float = 0.1,
) -> Trace:
    """Self-stabilized stochastic approximation with truncations and restarts.

    Iteration ``n`` (1-based) uses the step ``schedule.gamma_at(I + zeta + 1)``
    where ``I`` counts truncations so far and ``zeta`` the iterations spent
    in the current active set.  When ``zeta == 0`` both the chain and the
    parameter restart from ``anchor = (x_star, theta_star)``.

    Every ``thin``-th iteration is stored, restart rows always.  The tail
    mean averages the accepted iterates of the last ``tail_fraction`` of the
    budget and is accumulated online, so it does not depend on ``thin``.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    if thin < 1:
        raise ValueError("thin must be >= 1")
    x_star, theta_star = anchor
    theta_star = as_param(theta_star)
    if not family.contains(0, theta_star):
        raise AnchorOutsideSet(f"anchor {theta_star} is outside K_0")

    dim = theta_star.size
    rows_n: list[int] = []
    rows_I: list[int] = []
    rows_z: list[int] = []
    rows_r: list[bool] = []
    rows_g: list[float] = []
    rows_t: list[np.ndarray] = []

    tail_start = _tail_start(budget, tail_fraction)
    tail_sum = np.zeros(dim)
    tail_count = 0
    last_accepted = theta_star

    contains = family.contains
    gamma0, beta, offset = schedule.gamma0, schedule.beta, schedule.offset
    I = 0
    zeta = 0
    x = x_star
    theta = theta_star
    for n in range(1, budget + 1):
        if zeta == 0:
            x, theta = x_star, theta_star
        rho = gamma0 / (offset + I + zeta + 2) ** beta
        # inlined sa_step
        x = kernel(theta, x, rng)
        h = field_fn(theta, x)
        if not _all_finite(h):
            raise NonFiniteField(f"field returned non-finite value {h!r} at theta={theta!r}")
        theta = theta + rho * h
        if contains(I, theta):
            zeta += 1
            restart = False
            last_accepted = theta
            if n > tail_start:
                tail_sum += theta
                tail_count += 1
        else:
            I += 1
            zeta = 0
            restart = True
            if I > max_truncations:
                raise TruncationCapExceeded(
                    f"{I} truncations after {n} iterations; the run is diverging "
                    "or the compact family / step schedule is misconfigured"
                )
        if restart or n % thin == 0:
            rows_n.append(n)
            rows_I.append(I)
            rows_z.append(zeta)
            rows_r.append(restart)
            rows_g.append(rho)
            rows_t.append(theta)

    tail_mean = tail_sum / tail_count if tail_count else last_accepted.copy()
    return Trace(
        n=np.array(rows_n, dtype=np.int64),
        I=np.array(rows_I, dtype=np.int64),
        zeta=np.array(rows_z, dtype=np.int64),
        restart=np.array(rows_r, dtype=bool),
        theta=np.array(rows_t, dtype=np.float64).reshape(len(rows_n), dim),
        gamma=np.array(rows_g, dtype=np.float64),
        tail_mean=tail_mean,
        final_theta=np.array(last_accepted, dtype=float),
        truncation_count=I,
        budget=budget,
        thin=thin,
    )


class TraceError(ValueError):
    pass


def check_bookkeeping(n, I, zeta, restart, theta=None, contains=None) -> None:
    """Validate restart/I/zeta relations of a (possibly thinned) trace.

    Raises `TraceError` naming the first offending row.  Between two stored
    rows no restart can be hidden, since restart rows are always stored.
    When ``contains(i, theta)`` is given, accepted rows are also checked for
    membership in their active set.
    """
    prev_n, prev_I, prev_z = 0, 0, 0
    for k in range(len(n)):
        nk, Ik, zk, rk = int(n[k]), int(I[k]), int(zeta[k]), bool(restart[k])
        gap = nk - prev_n
        if gap < 1:
            raise TraceError(f"row {k}: n={nk} does not increase")
        if rk:
            if Ik != prev_I + 1:
                raise TraceError(f"row {k}: restart must increment I by 1 ({prev_I} -> {Ik})")
            if zk != 0:
                raise TraceError(f"row {k}: restart row must have zeta=0, got {zk}")
        else:
            if Ik != prev_I:
                raise TraceError(f"row {k}: I changed without a restart ({prev_I} -> {Ik})")
            if zk != prev_z + gap:
                raise TraceError(f"row {k}: zeta={zk}, expected {prev_z + gap}")
            if contains is not None and theta is not None and not contains(Ik, np.asarray(theta[k])):
                raise TraceError(f"row {k}: accepted theta outside K_{Ik}")
        prev_n, prev_I, prev_z = nk, Ik, zk


def constant_over_final_half(trace: Trace) -> bool:
    """True when no truncation happened in the second half of the budget."""
    half = trace.budget / 2
    return not bool(np.any(trace.restart[trace.n > half]))
