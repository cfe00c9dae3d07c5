"""Joint offloading index, transmit power and CPU frequency under slow fading.

The channel gain ``h`` is constant for the whole task. For a fixed offload
index n the problem is convex in the upload time tau_t once the transmit
power is written as a function of tau_t. The local frequencies then have a
closed form (one common frequency that makes the deadline tight), and the
remaining scalar problem in tau_t is solved with a golden-section search.
The offload index is picked by enumeration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import (
    Duration,
    Energy,
    InfeasibleError,
    SystemParams,
    TaskProfile,
    block_energy,
    edge_suffix_time,
    local_prefix_time,
)

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0  # 0.618...
TAU_FLOOR = 1e-9
DEFAULT_TOL = 1e-6


@dataclass(frozen=True)
class InnerResult:
    n: int
    feasible: bool
    energy: Energy
    tau_t: Duration
    iterations: int = 0


@dataclass(frozen=True)
class SlowSolution:
    n_star: int
    tau_t: Duration
    p_t: float
    freqs: tuple[float, ...]
    energy: Energy
    time_total: Duration
    per_index: tuple[InnerResult, ...] = field(repr=False)

    def to_dict(self) -> dict:
        return {
            "n_star": self.n_star,
            "tau_t": self.tau_t,
            "p_t": self.p_t,
            "freqs": list(self.freqs),
            "energy": self.energy,
            "time_total": self.time_total,
            "per_index": [
                {"n": r.n, "feasible": r.feasible, "energy": r.energy if r.feasible else None,
                 "tau_t": r.tau_t if r.feasible else None, "iterations": r.iterations}
                for r in self.per_index
            ],
        }


def tau_budget(profile: TaskProfile, params: SystemParams, n: int) -> Duration:
    """Largest upload time compatible with the deadline when the local prefix
    runs at f_max. A value <= 0 marks n as infeasible."""
    return (
        params.deadline_s
        - local_prefix_time(profile, n, params.f_max)
        - edge_suffix_time(profile, n, params.f_e)
    )


def _local_window(profile: TaskProfile, params: SystemParams, n: int, tau_t: float) -> float:
    return params.deadline_s - edge_suffix_time(profile, n, params.f_e) - tau_t


def optimal_freqs(profile: TaskProfile, params: SystemParams, n: int, tau_t: float):
    """Optimal local frequency and local energy for a given upload time.

    All sub-tasks before n share one frequency, chosen so the local prefix
    exactly fills the time left by the upload and the edge suffix. Returns
    ``(None, 0.0)`` when n == 1 since nothing runs locally.
    """
    budget = tau_budget(profile, params, n)
    if not (0 < tau_t <= budget * (1 + 1e-12)):
        raise ValueError(f"tau_t={tau_t!r} outside (0, {budget!r}] for n={n}")
    cycles = profile.prefix_cycles(n)
    if n == 1 or cycles == 0:
        return None, 0.0
    window = _local_window(profile, params, n, tau_t)
    f = min(cycles / window, params.f_max)
    e_loc = params.k0 * cycles**3 / window**2
    return f, e_loc


def inner_objective(profile: TaskProfile, params: SystemParams, n: int, h: float):
    """The convex function of tau_t minimized for offload index n."""
    d = profile.data(n)
    cycles = profile.prefix_cycles(n)
    fixed = params.deadline_s - edge_suffix_time(profile, n, params.f_e)
    k0, w = params.k0, params.bandwidth_hz

    def objective(tau: float) -> float:
        upload = block_energy(d, h, tau, w)
        if cycles == 0:
            return upload
        window = fixed - tau
        if window <= 0:
            return math.inf
        return upload + k0 * cycles**3 / window**2

    return objective


def golden_section(func, lo: float, hi: float, tol: float):
    """Minimize a unimodal ``func`` on [lo, hi] to an interval width of ``tol``.

    Returns ``(x, f(x), iterations)``. The endpoint ``hi`` is also checked so
    that boundary minimizers are returned exactly.
    """
    if not hi > lo:
        raise ValueError("empty search interval")
    a, b = lo, hi
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = func(c), func(d)
    iterations = 0
    while b - a > tol:
        iterations += 1
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = func(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = func(d)
    x, fx = (c, fc) if fc <= fd else (d, fd)
    f_hi = func(hi)
    if f_hi <= fx:
        x, fx = hi, f_hi
    return x, fx, iterations


def iteration_bound(budget: float, tol: float) -> int:
    return math.ceil(math.log(budget / tol) / math.log(1.0 / INV_PHI))


def inner_solve(profile: TaskProfile, params: SystemParams, n: int, h: float, tol: float = DEFAULT_TOL) -> InnerResult:
    """Minimal energy E_I(n) and upload time for a fixed offload index."""
    if h <= 0:
        raise ValueError("channel gain must be positive")
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    budget = tau_budget(profile, params, n)
    if budget <= TAU_FLOOR:
        return InnerResult(n, False, math.inf, math.nan)
    objective = inner_objective(profile, params, n, h)
    tau, energy, iters = golden_section(objective, TAU_FLOOR, budget, tol)
    return InnerResult(n, bool(np.isfinite(energy)), energy, tau, iters)


def solve(profile: TaskProfile, params: SystemParams, h: float, tol: float = DEFAULT_TOL) -> SlowSolution:
    """Energy-optimal offload index, power and frequencies for gain ``h``.

    Every feasible index is solved; ties go to the smaller index. Raises
    :class:`InfeasibleError` when no index meets the deadline.
    """
    if h <= 0:
        raise ValueError("channel gain must be positive")
    results = tuple(inner_solve(profile, params, n, h, tol) for n in range(1, profile.n_subtasks + 1))
    feasible = [r for r in results if r.feasible]
    if not feasible:
        fastest = edge_suffix_time(profile, 1, params.f_e)
        raise InfeasibleError(
            f"deadline T_th={params.deadline_s:g} s cannot be met by any offload index "
            f"(edge time of the full task alone is {fastest:g} s)"
        )
    best = min(feasible, key=lambda r: (r.energy, r.n))
    n = best.n
    d = profile.data(n)
    p_t = math.expm1(d / (params.bandwidth_hz * best.tau_t)) / h
    f, _ = optimal_freqs(profile, params, n, best.tau_t)
    freqs = () if f is None else (f,) * (n - 1)
    local = sum(l / f for l in profile.cycles[: n - 1]) if f is not None else 0.0
    time_total = local + best.tau_t + edge_suffix_time(profile, n, params.f_e)
    return SlowSolution(n, best.tau_t, p_t, freqs, best.energy, time_total, results)


def full_local_energy(profile: TaskProfile, params: SystemParams) -> Energy:
    """Energy of running the whole chain on the device at the slowest common
    frequency that meets the deadline; ``inf`` if that exceeds f_max."""
    cycles = math.fsum(profile.cycles)
    f = cycles / params.deadline_s
    if f > params.f_max * (1 + 1e-12):
        return math.inf
    return params.k0 * cycles * f * f
