"""Offline value tables for offloading under fast fading.

Offloading the input of sub-task n spans M fading blocks: M-1 blocks of the
coherence time tau followed by a last block of length t in (0, tau]. The
schedule is chosen so the whole task finishes exactly at the deadline, which
is never worse than any shorter schedule.

For one stage the tables hold, per block m,

* ``q[m](d, h)``  least expected energy to finish d nats from block m on,
  after observing gain h in block m,
* ``q_bar[m](d)`` the same before observing h (expectation over h),
* ``policy[m](d, h)`` the nats to send in block m.

They are filled backwards from the last block, where everything left must go
out. On top of the per-stage tables, the stopping values ``z_h[n](h)`` and
``z[n]`` give the least expected energy still to be spent when the device
has finished sub-task n-1, with and without knowledge of the first-block gain.

Data amounts live on a uniform grid per stage, from 0 to d_n. Between grid
points ``q_bar`` is linear. Two inner minimizers are available:

``"continuous"``
    exact minimum over any amount in [0, d] against the piecewise-linear
    ``q_bar``; the remainder may fall between grid points.
``"grid"``
    remainders restricted to grid points, i.e. a discrete scan.

Both exploit convexity: the optimum is located with one binary search per
entry instead of a scan. A layer whose ``q_bar`` fails the convexity check
falls back to a full scan.
"""

from __future__ import annotations

import hashlib
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .channel import DEFAULT_NODES, DEFAULT_TRUNCATION, GainDistribution, QuadratureRule, from_dict
from .core import (
    InfeasibleError,
    SystemParams,
    TaskProfile,
    block_energy,
    local_energy,
    offload_budget,
)

INNER_MODES = ("continuous", "grid")
DEFAULT_INTERVALS = 256


@dataclass(frozen=True)
class BlockSchedule:
    n: int
    budget_s: float
    m_star: int
    t_star: float

    @property
    def feasible(self) -> bool:
        return self.budget_s > 0 and self.m_star >= 1

    def durations(self, tau: float) -> tuple[float, ...]:
        return (tau,) * (self.m_star - 1) + (self.t_star,)


def split_budget(budget: float, tau: float) -> tuple[int, float]:
    """Block count and last-block length filling ``budget`` exactly.

    A budget that is an exact multiple k*tau (to 1e-9 relative) gives k full
    blocks rather than k blocks plus an empty one.
    """
    if budget <= 0:
        return 0, 0.0
    ratio = budget / tau
    m = max(1, math.ceil(ratio - 1e-9))
    t = budget - (m - 1) * tau
    return m, min(t, tau)


def schedule(profile: TaskProfile, params: SystemParams, n: int) -> BlockSchedule:
    """Deadline-tight block schedule for offloading at stage n, with the
    local prefix run at f_l."""
    budget = offload_budget(profile, params, n, params.f_l)
    m, t = split_budget(budget, params.coherence_s)
    return BlockSchedule(n, budget, m, t)


def full_local_feasible(profile: TaskProfile, params: SystemParams) -> bool:
    return math.fsum(profile.cycles) / params.f_l <= params.deadline_s


# -- inner minimization -----------------------------------------------------


def _safe_log(x):
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(x)
    return np.where(np.isnan(out), -np.inf, out)


def _segment_slopes(grid: np.ndarray, qbar: np.ndarray) -> np.ndarray:
    with np.errstate(invalid="ignore"):
        slopes = np.diff(qbar) / np.diff(grid)
    return np.where(np.isnan(slopes), np.inf, slopes)


@dataclass
class _Layer:
    """Precomputed search keys for minimizing against one ``q_bar``."""

    grid: np.ndarray
    qbar: np.ndarray
    duration: float
    bandwidth: float
    mode: str
    slopes: np.ndarray = field(init=False)
    keys: np.ndarray = field(init=False)
    convex: bool = field(init=False)

    def __post_init__(self):
        g, wt = self.grid, self.bandwidth * self.duration
        self.slopes = _segment_slopes(g, self.qbar)
        if self.mode == "continuous":
            # right derivative of e(d - r) + q_bar(r) at breakpoint g_k is >= 0
            # iff keys[k] >= d/(W t) - log(W h)
            self.keys = _safe_log(self.slopes) + g[:-1] / wt
        else:
            # forward difference of the same objective between g_k and g_{k+1}
            with np.errstate(invalid="ignore"):
                steps = np.diff(self.qbar)
            steps = np.where(np.isnan(steps), np.inf, steps)
            self.keys = _safe_log(steps) + g[1:] / wt
        self.convex = bool(np.all(self.keys[1:] >= self.keys[:-1]))

    def minimize(self, d, h):
        """Return ``(value, sent, remaining)`` for data ``d`` and gain ``h``."""
        d, h = np.broadcast_arrays(np.asarray(d, dtype=float), np.asarray(h, dtype=float))
        if not self.convex:
            return scan_minimize(self.grid, self.qbar, d, h, self.duration, self.bandwidth, self.mode)
        if self.mode == "continuous":
            return self._continuous(d, h)
        return self._grid(d, h)

    def _continuous(self, d, h):
        g, q, s = self.grid, self.qbar, self.slopes
        wt = self.bandwidth * self.duration
        n_seg = g.size - 1
        target = d / wt - np.log(self.bandwidth * h)
        reach = np.minimum(np.searchsorted(g, d, side="left"), n_seg)
        k = np.minimum(np.searchsorted(self.keys, target, side="left"), reach)
        km1 = np.maximum(k - 1, 0)
        slope = s[km1]
        with np.errstate(divide="ignore", invalid="ignore"):
            stationary = d - wt * np.log(slope * self.bandwidth * h)
        lo = g[km1]
        hi = np.minimum(g[k], d)
        r = np.where(k > 0, np.clip(stationary, lo, hi), 0.0)
        with np.errstate(invalid="ignore"):
            future = np.where(k > 0, q[km1] + slope * (r - lo), q[0])
        sent = d - r
        value = block_energy(sent, h, self.duration, self.bandwidth) + future
        return value, sent, r

    def _grid(self, d, h):
        g, q = self.grid, self.qbar
        wt = self.bandwidth * self.duration
        step = g[1] - g[0]
        target = d / wt + np.log(self.duration / h) + math.log(math.expm1(step / wt))
        last = np.searchsorted(g, d * (1 + 1e-12), side="right") - 1
        k = np.minimum(np.searchsorted(self.keys, target, side="left"), last)
        r = g[k]
        sent = np.maximum(d - r, 0.0)
        value = block_energy(sent, h, self.duration, self.bandwidth) + q[k]
        return value, sent, r


def scan_minimize(grid, qbar, d, h, duration, bandwidth, mode="continuous"):
    """Brute-force version of the inner minimization (no convexity assumed).

    Scans every breakpoint and, in continuous mode, every clipped stationary
    point. O(grid) work per entry.
    """
    d, h = np.broadcast_arrays(np.asarray(d, dtype=float), np.asarray(h, dtype=float))
    shape = d.shape
    d, h = d.reshape(-1, 1), h.reshape(-1, 1)
    g = grid[None, :]
    wt = bandwidth * duration
    cand = np.broadcast_to(g, (d.shape[0], grid.size)).copy()
    if mode == "continuous":
        slopes = _segment_slopes(grid, qbar)[None, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            stat = d - wt * np.log(slopes * bandwidth * h)
        # a decreasing segment has no interior stationary point
        stat = np.where(np.isnan(stat), g[:, :-1], stat)
        stat = np.clip(stat, g[:, :-1], np.minimum(g[:, 1:], d))
        cand = np.concatenate([cand, stat, d], axis=1)
    valid = cand <= d * (1 + 1e-12)
    cand = np.where(valid, np.minimum(cand, d), 0.0)
    future = _interp_safe(grid, qbar, cand)
    value = block_energy(d - cand, h, duration, bandwidth) + future
    value = np.where(valid, value, np.inf)
    best = np.argmin(value, axis=1)
    rows = np.arange(d.shape[0])
    r = cand[rows, best]
    v = value[rows, best]
    return v.reshape(shape), (d[:, 0] - r).reshape(shape), r.reshape(shape)


def _interp_safe(grid, values, x):
    """Linear interpolation that tolerates ``inf`` table entries."""
    x = np.asarray(x, dtype=float)
    idx = np.clip(np.searchsorted(grid, x, side="right") - 1, 0, grid.size - 2)
    x0, x1 = grid[idx], grid[idx + 1]
    v0, v1 = values[idx], values[idx + 1]
    frac = (x - x0) / (x1 - x0)
    with np.errstate(invalid="ignore"):
        out = v0 + frac * (v1 - v0)
    out = np.where(frac <= 0, v0, out)
    out = np.where(frac >= 1, v1, out)
    return out


# -- per-stage tables -------------------------------------------------------


@dataclass
class StageTables:
    """Value and policy tables of one offloading stage."""

    data: float
    grid: np.ndarray
    durations: tuple[float, ...]
    nodes: np.ndarray
    weights: np.ndarray
    bandwidth: float
    mode: str
    q: list
    policy: list
    q_bar: list = field(init=False)
    warnings: list = field(default_factory=list)
    _layers: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        self.q_bar = [q @ self.weights for q in self.q]

    @property
    def n_blocks(self) -> int:
        return len(self.durations)

    def layer(self, m: int) -> _Layer:
        """Minimizer for block m (1-based) against the next block's q_bar."""
        if not 1 <= m < self.n_blocks:
            raise IndexError(f"block {m} has no successor in a {self.n_blocks}-block stage")
        if m not in self._layers:
            self._layers[m] = _Layer(self.grid, self.q_bar[m], self.durations[m - 1], self.bandwidth, self.mode)
        return self._layers[m]

    def evaluate(self, m: int, d, h):
        """``(value, sent, remaining)`` at block m for any data ``d`` and gain ``h``."""
        if not 1 <= m <= self.n_blocks:
            raise IndexError(f"block {m} outside 1..{self.n_blocks}")
        if m == self.n_blocks:
            d, h = np.broadcast_arrays(np.asarray(d, dtype=float), np.asarray(h, dtype=float))
            return block_energy(d, h, self.durations[-1], self.bandwidth), d.copy(), np.zeros_like(d)
        return self.layer(m).minimize(d, h)

    def first_block_value(self, h):
        """Q_{n,1}(d_n, h) at arbitrary gains."""
        value, _, _ = self.evaluate(1, self.data, h)
        return value


def build_stage(
    data_nats: float,
    durations,
    bandwidth: float,
    rule: QuadratureRule,
    d_intervals: int = DEFAULT_INTERVALS,
    inner: str = "continuous",
) -> StageTables:
    """Fill the tables of one stage for the given block durations.

    ``durations`` lists the length of every block in order; the usual call
    passes ``BlockSchedule.durations(tau)``.
    """
    if inner not in INNER_MODES:
        raise ValueError(f"inner must be one of {INNER_MODES}, got {inner!r}")
    if d_intervals < 1:
        raise ValueError("need at least one grid interval")
    durations = tuple(float(t) for t in durations)
    if not durations or any(t <= 0 for t in durations):
        raise ValueError("block durations must be positive")
    if data_nats < 0:
        raise ValueError("data amount must be non-negative")
    # a stage without data still gets a proper grid so every lookup works
    grid = np.linspace(0.0, float(data_nats) if data_nats > 0 else 1.0, d_intervals + 1)
    nodes, weights = rule.nodes, rule.weights
    n_blocks = len(durations)
    q = [None] * n_blocks
    policy = [None] * n_blocks
    notes = []

    terminal = block_energy(grid[:, None], nodes[None, :], durations[-1], bandwidth)
    overflow = ~np.isfinite(terminal)
    if overflow.any():
        notes.append(
            f"last block ({durations[-1]:.3g} s) overflows for {int(overflow.sum())} entries; "
            "stored as +inf"
        )
    q[-1] = terminal
    policy[-1] = np.broadcast_to(grid[:, None], terminal.shape).copy()

    d_col = grid[:, None]
    h_row = nodes[None, :]
    next_bar = terminal @ weights
    for m in range(n_blocks - 1, 0, -1):
        layer = _Layer(grid, next_bar, durations[m - 1], bandwidth, inner)
        if not layer.convex:
            notes.append(f"block {m}: expected cost not convex in data; used full scan")
        value, sent, _ = layer.minimize(d_col, h_row)
        q[m - 1] = value
        policy[m - 1] = sent
        next_bar = value @ weights
    stage = StageTables(
        float(data_nats), grid, durations, np.asarray(nodes), np.asarray(weights), bandwidth, inner, q, policy
    )
    stage.warnings.extend(notes)
    return stage


# -- whole-task tables ------------------------------------------------------


def params_hash(profile: TaskProfile, params: SystemParams, dist: GainDistribution, grid_config: dict) -> str:
    payload = {
        "cycles": list(profile.cycles),
        "input_nats": list(profile.input_nats),
        "params": {k: getattr(params, k) for k in params.__dataclass_fields__},
        "channel": dist.to_dict(),
        "grid": grid_config,
    }
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class QZTables:
    """Everything the online policy needs: per-stage tables and stopping values."""

    profile: TaskProfile
    params: SystemParams
    dist: GainDistribution
    rule: QuadratureRule
    grid_config: dict
    schedules: tuple[BlockSchedule, ...]
    stages: dict
    z_h: dict
    z: np.ndarray
    warnings: list = field(default_factory=list)

    @property
    def n_subtasks(self) -> int:
        return self.profile.n_subtasks

    @property
    def params_hash(self) -> str:
        return params_hash(self.profile, self.params, self.dist, self.grid_config)

    @property
    def h_nodes(self) -> np.ndarray:
        return self.rule.nodes

    def schedule(self, n: int) -> BlockSchedule:
        return self.schedules[n - 1]

    def stage(self, n: int) -> StageTables:
        self.profile.check_index(n)
        if n not in self.stages:
            raise KeyError(f"stage {n} is infeasible (no offload budget)")
        return self.stages[n]

    def local_cost(self, n: int) -> float:
        """Energy of computing sub-task n on the device at f_l."""
        return local_energy(self.profile.cycles[n - 1], self.params.f_l, self.params.k0)

    def continue_value(self, n: int) -> float:
        return self.local_cost(n) + self.z[n + 1]

    def offload_value(self, n: int, h):
        """Q_{n,1}(d_n, h), or +inf where stage n cannot offload."""
        h = np.asarray(h, dtype=float)
        if n not in self.stages:
            return np.full(h.shape, np.inf) if h.ndim else math.inf
        out = self.stages[n].first_block_value(h)
        return out if np.ndim(out) else float(out)

    @property
    def expected_energy(self) -> float:
        """Z_1: optimal expected energy of the whole task."""
        return float(self.z[1])

    def q(self, n: int, m: int) -> np.ndarray:
        return self.stage(n).q[m - 1]

    def q_bar(self, n: int, m: int) -> np.ndarray:
        return self.stage(n).q_bar[m - 1]

    def policy(self, n: int, m: int) -> np.ndarray:
        return self.stage(n).policy[m - 1]

    def d_grid(self, n: int) -> np.ndarray:
        return self.stage(n).grid


def build_z(profile: TaskProfile, params: SystemParams, rule: QuadratureRule, stages: dict):
    """Backward stopping recursion over stages.

    The continue-locally branch after the last sub-task is only admitted when
    running everything on the device meets the deadline; otherwise it costs
    +inf, which also blocks any earlier stage whose every continuation is
    infeasible.
    """
    n_sub = profile.n_subtasks
    z = np.full(n_sub + 2, np.nan)
    z[n_sub + 1] = 0.0 if full_local_feasible(profile, params) else math.inf
    z_h = {}
    for n in range(n_sub, 0, -1):
        stay = local_energy(profile.cycles[n - 1], params.f_l, params.k0) + z[n + 1]
        if n in stages:
            go = stages[n].first_block_value(rule.nodes)
        else:
            go = np.full(rule.node_count, math.inf)
        z_h[n] = np.minimum(go, stay)
        z[n] = float(z_h[n] @ rule.weights) if np.all(np.isfinite(z_h[n])) else math.inf
    return z_h, z


def build_tables(
    profile: TaskProfile,
    params: SystemParams,
    dist: GainDistribution,
    d_intervals: int = DEFAULT_INTERVALS,
    h_nodes: int = DEFAULT_NODES,
    truncation: float = DEFAULT_TRUNCATION,
    inner: str = "continuous",
) -> QZTables:
    """Build per-stage tables for every feasible stage, then the stopping values.

    Raises :class:`InfeasibleError` when no policy meets the deadline.
    """
    rule = dist.rule(h_nodes, truncation)
    grid_config = {"d_intervals": d_intervals, "h_nodes": h_nodes, "truncation": truncation, "inner": inner}
    schedules = tuple(schedule(profile, params, n) for n in range(1, profile.n_subtasks + 1))
    stages = {}
    notes = []
    for sch in schedules:
        if not sch.feasible:
            continue
        st = build_stage(
            profile.data(sch.n), sch.durations(params.coherence_s), params.bandwidth_hz, rule, d_intervals, inner
        )
        stages[sch.n] = st
        notes.extend(f"stage {sch.n}: {w}" for w in st.warnings)
    z_h, z = build_z(profile, params, rule, stages)
    for note in notes:
        warnings.warn(note, RuntimeWarning, stacklevel=2)
    if not math.isfinite(z[1]):
        raise InfeasibleError(
            f"no offloading policy meets T_th={params.deadline_s:g} s "
            f"(feasible offload stages: {sorted(stages) or 'none'}; "
            f"full local {'feasible' if full_local_feasible(profile, params) else 'infeasible'})"
        )
    return QZTables(profile, params, dist, rule, grid_config, schedules, stages, z_h, z, notes)


def q_lookup(tables: QZTables, n: int, m: int, d: float, h: float) -> float:
    """Bilinear read of Q_{n,m}(d, h) from the stored grid.

    Exact at grid/node points; constant in h outside the node range.
    """
    st = tables.stage(n)
    if not 1 <= m <= st.n_blocks:
        raise IndexError(f"block {m} outside 1..{st.n_blocks}")
    table = st.q[m - 1]
    grid, nodes = st.grid, st.nodes
    if not (0 <= d <= grid[-1] * (1 + 1e-12)):
        raise ValueError(f"d={d} outside the table range [0, {grid[-1]}]")
    col = np.array([_interp_safe(grid, table[:, j], min(d, grid[-1])) for j in range(nodes.size)])
    if h <= nodes[0]:
        return float(col[0])
    if h >= nodes[-1]:
        return float(col[-1])
    j = int(np.searchsorted(nodes, h, side="right") - 1)
    frac = (h - nodes[j]) / (nodes[j + 1] - nodes[j])
    if frac == 0:
        return float(col[j])
    return float(col[j] + frac * (col[j + 1] - col[j]))


# -- persistence ------------------------------------------------------------

FORMAT = "seqoff-tables/1"


class StaleTablesError(RuntimeError):
    """Stored tables do not belong to the requested configuration."""


def _finite_or_none(values):
    return [float(v) if math.isfinite(v) else None for v in values]


def save_tables(tables: QZTables, directory) -> None:
    """Write a manifest plus one CSV per (stage, block) value and policy matrix.

    Rows index the stage's data grid, columns the gain nodes; values carry 17
    significant digits so a reload reproduces them bit for bit.
    """
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "format": FORMAT,
        "params_hash": tables.params_hash,
        "profile": {"cycles": list(tables.profile.cycles), "input_nats": list(tables.profile.input_nats)},
        "params": {k: getattr(tables.params, k) for k in tables.params.__dataclass_fields__},
        "channel": tables.dist.to_dict(),
        "grid": tables.grid_config,
        "h_nodes": tables.rule.nodes.tolist(),
        "h_weights": tables.rule.weights.tolist(),
        "schedules": [
            {"n": s.n, "budget_s": s.budget_s, "m_star": s.m_star, "t_star": s.t_star} for s in tables.schedules
        ],
        "stages": {
            str(n): {"data": st.data, "durations": list(st.durations), "grid": st.grid.tolist()}
            for n, st in tables.stages.items()
        },
        "z": _finite_or_none(tables.z[1:]),
        "warnings": list(tables.warnings),
    }
    for n, st in tables.stages.items():
        for m in range(1, st.n_blocks + 1):
            np.savetxt(out / f"q_n{n}_m{m}.csv", st.q[m - 1], fmt="%.17g", delimiter=",")
            np.savetxt(out / f"policy_n{n}_m{m}.csv", st.policy[m - 1], fmt="%.17g", delimiter=",")
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")


def load_tables(directory, expected_hash: str | None = None) -> QZTables:
    """Read tables written by :func:`save_tables`.

    Raises :class:`StaleTablesError` when the stored hash does not match the
    stored inputs or ``expected_hash``.
    """
    src = Path(directory)
    manifest = json.loads((src / "manifest.json").read_text())
    if manifest.get("format") != FORMAT:
        raise StaleTablesError(f"unknown table format {manifest.get('format')!r}")
    profile = TaskProfile(tuple(manifest["profile"]["cycles"]), tuple(manifest["profile"]["input_nats"]))
    params = SystemParams(**manifest["params"])
    dist = from_dict(manifest["channel"])
    grid_config = manifest["grid"]
    actual = params_hash(profile, params, dist, grid_config)
    if actual != manifest["params_hash"]:
        raise StaleTablesError("manifest contents do not match its recorded hash")
    if expected_hash is not None and expected_hash != actual:
        raise StaleTablesError(
            f"tables were built for configuration {actual}, not {expected_hash}; rebuild them"
        )
    rule = QuadratureRule(np.array(manifest["h_nodes"]), np.array(manifest["h_weights"]))
    schedules = tuple(
        BlockSchedule(s["n"], s["budget_s"], s["m_star"], s["t_star"]) for s in manifest["schedules"]
    )
    stages = {}
    for key, info in manifest["stages"].items():
        n = int(key)
        durations = tuple(info["durations"])
        q, pol = [], []
        for m in range(1, len(durations) + 1):
            q.append(np.loadtxt(src / f"q_n{n}_m{m}.csv", delimiter=",", ndmin=2))
            pol.append(np.loadtxt(src / f"policy_n{n}_m{m}.csv", delimiter=",", ndmin=2))
        stages[n] = StageTables(
            info["data"], np.array(info["grid"]), durations, rule.nodes, rule.weights,
            params.bandwidth_hz, grid_config["inner"], q, pol,
        )
    z_h, z = build_z(profile, params, rule, stages)
    return QZTables(profile, params, dist, rule, grid_config, schedules, stages, z_h, z, manifest["warnings"])
