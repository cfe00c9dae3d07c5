"""Brute-force reference solutions for small instances.

Everything here is written directly from the model with plain loops and
exhaustive scans. Only the shared primitives in ``core`` and ``channel`` are
used, so a bug in a solver cannot hide behind the same bug in its check.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np

from .channel import Discrete
from .core import SystemParams, TaskProfile, block_energy

PATH_CAP = 10_000_000


def _stamp(*parts) -> str:
    blob = json.dumps(parts, sort_keys=True, default=str, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _params_dict(params: SystemParams) -> dict:
    return {k: getattr(params, k) for k in params.__dataclass_fields__}


# -- slow fading ------------------------------------------------------------


@dataclass(frozen=True)
class SlowOracleResult:
    n: int | None
    tau_t: float
    energy: float
    energy_freq_scan: float
    per_index: tuple  # (n, energy by tau scan, energy by frequency scan)
    stamp: str

    @property
    def feasible(self) -> bool:
        return self.n is not None


def slow_grid(
    profile: TaskProfile,
    params: SystemParams,
    h: float,
    tau_points: int = 100_000,
    freq_points: int = 100_000,
) -> SlowOracleResult:
    """Scan every offload index and a uniform grid of upload times.

    For each index two independent inner scans are run: one over the upload
    time with the common local frequency that fills the remaining window,
    and one over the common local frequency itself, with the upload taking
    whatever time is left.
    """
    T, W, k0 = params.deadline_s, params.bandwidth_hz, params.k0
    rows = []
    best = (math.inf, None, math.nan, math.inf)
    for n in range(1, profile.n_subtasks + 1):
        L = sum(profile.cycles[: n - 1])
        edge = sum(profile.cycles[n - 1 :]) / params.f_e
        d = profile.input_nats[n - 1]
        top = T - edge - (L / params.f_max if L > 0 else 0.0)
        if top <= 0:
            rows.append((n, math.inf, math.inf))
            continue
        tau = top * np.arange(1, tau_points + 1) / tau_points
        with np.errstate(divide="ignore"):
            local = k0 * L**3 / (T - edge - tau) ** 2 if L > 0 else np.zeros_like(tau)
        e_tau = block_energy(d, h, tau, W) + local
        j = int(np.argmin(e_tau))

        if L > 0:
            f_lo = L / (T - edge)
            f = np.linspace(f_lo, params.f_max, freq_points + 1)[1:]
            tau_f = T - edge - L / f
            e_f = block_energy(d, h, tau_f, W) + k0 * L * f * f
            e_freq = float(np.min(e_f))
        else:
            e_freq = block_energy(d, h, top, W)
        rows.append((n, float(e_tau[j]), e_freq))
        if e_tau[j] < best[0]:
            best = (float(e_tau[j]), n, float(tau[j]), e_freq)
    stamp = _stamp(profile.cycles, profile.input_nats, _params_dict(params), h, tau_points, freq_points)
    return SlowOracleResult(best[1], best[2], best[0], best[3], tuple(rows), stamp)


# -- fast fading DP on a finite channel -------------------------------------


def tiny_instance():
    """Three sub-tasks, two channel states, at most four blocks per stage.

    Small enough to enumerate, and the optimal stopping rule depends on the
    observed gain, so it is strictly better than any fixed offload stage.
    """
    profile = TaskProfile.from_units([30, 20, 40], [40, 20, 30])
    params = SystemParams(1e6, 1e-28, 5e8, 5e8, 3e9, 0.2, 0.05)
    return profile, params, Discrete((5.0, 40.0), (0.4, 0.6))


@dataclass(frozen=True)
class DPOracleResult:
    z: tuple  # z[n] for n = 1..N+1, index 0 unused
    optimum: float
    static: dict  # offload stage (N+1 = never) -> expected energy
    stamp: str


def _blocks(profile, params, n):
    air = (
        params.deadline_s
        - sum(profile.cycles[: n - 1]) / params.f_l
        - sum(profile.cycles[n - 1 :]) / params.f_e
    )
    if air <= 0:
        return None
    tau = params.coherence_s
    m = max(1, math.ceil(air / tau - 1e-9))
    last = min(air - (m - 1) * tau, tau)
    return [tau] * (m - 1) + [last]


def dp_enumerate(
    profile: TaskProfile,
    params: SystemParams,
    dist: Discrete,
    d_intervals: int = 64,
) -> DPOracleResult:
    """Exact stopping value on a finite channel, remainders restricted to the
    grid ``linspace(0, d_n, d_intervals + 1)`` of each stage.

    Every block scans every admissible remainder for every channel state.
    """
    if not isinstance(dist, Discrete):
        raise TypeError("enumeration needs a discrete channel")
    states = [(g, p) for g, p in zip(dist.gains, dist.probs) if p > 0]
    schedules = {n: _blocks(profile, params, n) for n in range(1, profile.n_subtasks + 1)}
    paths = sum(len(states) ** len(b) for b in schedules.values() if b)
    if paths > PATH_CAP:
        raise ValueError(f"{paths} channel paths exceed the enumeration cap of {PATH_CAP}")
    W = params.bandwidth_hz

    first = {}
    for n, durations in schedules.items():
        if durations is None:
            continue
        d_n = profile.input_nats[n - 1]
        grid = list(np.linspace(0.0, d_n, d_intervals + 1)) if d_n > 0 else [0.0]
        # expected cost-to-go before the gain of the next block is seen
        ahead = [sum(p * block_energy(g_j, h, durations[-1], W) for h, p in states) for g_j in grid]
        for t in reversed(durations[1:-1]):
            ahead = [
                sum(p * min(block_energy(grid[j] - grid[k], h, t, W) + ahead[k] for k in range(j + 1))
                    for h, p in states)
                for j in range(len(grid))
            ]
        top = len(grid) - 1
        if len(durations) == 1:
            first[n] = {h: block_energy(grid[top], h, durations[0], W) for h, _ in states}
        else:
            t = durations[0]
            first[n] = {
                h: min(block_energy(grid[top] - grid[k], h, t, W) + ahead[k] for k in range(top + 1))
                for h, _ in states
            }

    n_sub = profile.n_subtasks
    local = [params.k0 * l * params.f_l**2 for l in profile.cycles]
    z = [math.nan] * (n_sub + 2)
    z[n_sub + 1] = 0.0 if sum(profile.cycles) / params.f_l <= params.deadline_s else math.inf
    for n in range(n_sub, 0, -1):
        stay = local[n - 1] + z[n + 1]
        total = 0.0
        for h, p in states:
            go = first[n][h] if n in first else math.inf
            total += p * min(go, stay)
        z[n] = total
    static = {}
    for n in range(1, n_sub + 2):
        prefix = sum(local[: n - 1])
        if n == n_sub + 1:
            static[n] = prefix if z[n_sub + 1] == 0.0 else math.inf
        elif n in first:
            static[n] = prefix + sum(p * first[n][h] for h, p in states)
        else:
            static[n] = math.inf
    stamp = _stamp(profile.cycles, profile.input_nats, _params_dict(params), dist.to_dict(), d_intervals)
    return DPOracleResult(tuple(z), z[1], static, stamp)


# -- shape checks -----------------------------------------------------------

MODES = ("convex", "nonincreasing", "nondecreasing")


def convexity_scan(values, axis: int = 0, mode: str = "convex") -> float:
    """Extreme difference of tabulated ``values`` along ``axis``.

    ``convex``: the most negative second difference (>= 0 means convex).
    ``nonincreasing``: the largest forward difference (<= 0 means OK).
    ``nondecreasing``: the most negative forward difference (>= 0 means OK).
    Differences involving non-finite entries are skipped.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    v = np.moveaxis(np.asarray(values, dtype=float), axis, 0)
    need = 3 if mode == "convex" else 2
    if v.shape[0] < need:
        raise ValueError(f"{mode} check needs at least {need} points along the axis")
    with np.errstate(invalid="ignore"):
        diff = np.diff(v, n=2 if mode == "convex" else 1, axis=0)
    diff = diff[np.isfinite(diff)]
    if diff.size == 0:
        return 0.0
    return float(diff.max() if mode == "nonincreasing" else diff.min())


def violation(values, axis: int = 0, mode: str = "convex") -> float:
    """Size of the worst shape violation, 0 when the shape holds."""
    ext = convexity_scan(values, axis, mode)
    return max(ext, 0.0) if mode == "nonincreasing" else max(-ext, 0.0)
