"""Short-coherence limit: water-filling over the gain distribution.

When blocks are very short, the energy of uploading d nats within T seconds
approaches that of a power profile p(h) that depends only on the current
gain. The optimal profile has the threshold form p(h) = max(zeta - 1/h, 0)
and the water level zeta is the multiplier of the mean-rate constraint
E[ln(1 + p h)] >= d / (T W). The level is found by projected dual ascent
with a diminishing c/i step, safeguarded by a bracket so it cannot stall.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import DEFAULT_NODES, DEFAULT_TRUNCATION, GainDistribution, QuadratureRule
from .core import InfeasibleError, SystemParams, TaskProfile, local_energy, offload_budget

DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITER = 100_000
DEFAULT_GAP_TOL = 1e-7


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, residual: float, zeta: float):
        super().__init__(message)
        self.residual = residual
        self.zeta = zeta


def power_at(zeta, h):
    """Water-filling power at gain ``h`` for level ``zeta``."""
    zeta = np.asarray(zeta, dtype=float)
    h = np.asarray(h, dtype=float)
    if np.any(zeta < 0):
        raise ValueError("water level must be non-negative")
    if np.any(h <= 0):
        raise ValueError("channel gain must be positive")
    out = np.maximum(zeta - 1.0 / h, 0.0)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class WaterFillingSolution:
    zeta: float
    gains: np.ndarray
    weights: np.ndarray
    power: np.ndarray
    mean_power: float
    energy: float
    rate_residual: float
    iterations: int
    dual_value: float

    @property
    def duality_gap(self) -> float:
        return self.mean_power - self.dual_value

    def to_dict(self) -> dict:
        return {
            "zeta": self.zeta,
            "mean_power": self.mean_power,
            "energy": self.energy,
            "rate_residual": self.rate_residual,
            "iterations": self.iterations,
            "dual_value": self.dual_value,
            "gains": self.gains.tolist(),
            "weights": self.weights.tolist(),
            "power": self.power.tolist(),
        }


def _rate(zeta: float, nodes: np.ndarray, weights: np.ndarray) -> float:
    # ln(1 + p h) = ln(zeta h) wherever the power is on
    with np.errstate(divide="ignore"):
        return float(np.maximum(np.log(zeta * nodes), 0.0) @ weights)


def solve_wf(
    channel: GainDistribution | QuadratureRule,
    rate_target: float,
    duration_s: float = 1.0,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    gap_tol: float = DEFAULT_GAP_TOL,
    node_count: int = DEFAULT_NODES,
    truncation: float = DEFAULT_TRUNCATION,
) -> WaterFillingSolution:
    """Minimum mean power meeting a mean rate of ``rate_target`` nats/s/Hz.

    Stops once the rate residual is within ``tol`` and the duality gap is
    within ``gap_tol`` of the mean power. ``energy`` is the mean power times
    ``duration_s``.
    """
    if not rate_target > 0:
        raise ValueError("rate target must be positive")
    if tol <= 0 or max_iter < 1:
        raise ValueError("tol must be positive and max_iter at least 1")
    rule = channel if isinstance(channel, QuadratureRule) else channel.rule(node_count, truncation)
    nodes, weights = rule.nodes, rule.weights
    mean_h = float(nodes @ weights)
    step = rate_target
    zeta = 1.0 / mean_h + rate_target
    lo, hi = 0.0, math.inf
    width_mark, mark_iter = math.inf, 0
    res = math.nan
    for i in range(1, max_iter + 1):
        res = _rate(zeta, nodes, weights) - rate_target
        mean_p = float(np.maximum(zeta - 1.0 / nodes, 0.0) @ weights)
        if abs(res) <= tol and zeta * abs(res) <= gap_tol * mean_p:
            break
        if res < 0:
            lo = max(lo, zeta)
        else:
            hi = min(hi, zeta)
        width = hi - lo
        if width <= 0.5 * width_mark:
            width_mark, mark_iter = width, i
        proposal = max(zeta - (step / i) * res, 0.0)
        stalled = i - mark_iter > 3
        if lo < proposal < hi and not stalled:
            zeta = proposal
        elif math.isinf(hi):
            zeta = 2.0 * max(zeta, 1.0 / nodes[-1])
        else:
            zeta = 0.5 * (lo + hi)
            width_mark, mark_iter = hi - lo, i
        if zeta == lo or zeta == hi:
            # bracket collapsed to machine precision
            break
    else:
        raise ConvergenceError(
            f"water level did not converge in {max_iter} iterations (rate residual {res:.3e})", res, zeta
        )
    power = np.maximum(zeta - 1.0 / nodes, 0.0)
    mean_p = float(power @ weights)
    rate = _rate(zeta, nodes, weights)
    with np.errstate(divide="ignore"):
        lagr = power - zeta * np.log1p(power * nodes)
    dual = float(lagr @ weights) + zeta * rate_target
    if abs(rate - rate_target) > tol:
        raise ConvergenceError(
            f"water level stalled at {zeta!r} with rate residual {rate - rate_target:.3e}", rate - rate_target, zeta
        )
    return WaterFillingSolution(
        zeta, nodes, weights, power, mean_p, mean_p * duration_s, rate - rate_target, i, dual
    )


@dataclass(frozen=True)
class OfflineSelection:
    n_star: int
    total: float
    per_stage: tuple  # (n, budget_s, offload energy, total) for feasible n


def stage_energy(data_nats: float, budget_s: float, params: SystemParams, dist, **kw) -> float:
    """Limit energy of uploading ``data_nats`` within ``budget_s`` seconds."""
    if data_nats == 0:
        return 0.0
    sol = solve_wf(dist, data_nats / (budget_s * params.bandwidth_hz), budget_s, **kw)
    return sol.energy


def offline_select(profile: TaskProfile, params: SystemParams, dist, **kw) -> OfflineSelection:
    """Offload index minimizing local prefix energy at f_l plus the
    water-filling upload energy over the stage's budget. Ties go to the
    smaller index."""
    rows = []
    for n in range(1, profile.n_subtasks + 1):
        budget = offload_budget(profile, params, n, params.f_l)
        if budget <= 0:
            continue
        upload = stage_energy(profile.data(n), budget, params, dist, **kw)
        prefix = math.fsum(local_energy(l, params.f_l, params.k0) for l in profile.cycles[: n - 1])
        rows.append((n, budget, upload, prefix + upload))
    if not rows:
        raise InfeasibleError("no offload index has a positive upload budget")
    best = min(rows, key=lambda r: (r[3], r[0]))
    return OfflineSelection(best[0], best[3], tuple(rows))
