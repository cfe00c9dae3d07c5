"""Online execution of the stopping policy, Monte-Carlo evaluation and the
two reference baselines.

At each stage boundary the device measures the gain of the current block
and compares the cost of uploading now against the cost of computing one
more sub-task locally and acting optimally afterwards. Once it uploads, the
amount sent in every block comes from the value tables and the last block
sends whatever is left.

Episodes are independent: episode i draws all of its gains from sub-stream
``(seed, i)``, so results do not depend on batching or worker count.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import slow
from .channel import GainDistribution, QuadratureRule, sample_paths
from .core import (
    InfeasibleError,
    SystemParams,
    TaskProfile,
    block_energy,
    edge_suffix_time,
    local_energy,
    offload_budget,
)
from .fastdp import DEFAULT_INTERVALS, QZTables, _interp_safe, schedule

CHUNK = 4096
OFFLOAD = "offload"
CONTINUE = "continue"


def decide(tables: QZTables, n: int, h: float) -> str:
    """``"offload"`` iff uploading at stage n is strictly cheaper than
    continuing locally. Ties continue."""
    tables.profile.check_index(n)
    if h <= 0:
        raise ValueError("channel gain must be positive")
    go = tables.offload_value(n, h)
    stay = tables.continue_value(n)
    if math.isinf(go) and math.isinf(stay):
        raise InfeasibleError(f"stage {n}: neither offloading nor continuing meets the deadline")
    return OFFLOAD if go < stay else CONTINUE


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("SEQOFF_THREADS", "1")))
    except ValueError:
        return 1


def path_width(tables: QZTables) -> int:
    """Gains drawn per episode: one per stage, then one per extra block."""
    longest = max((s.n_blocks for s in tables.stages.values()), default=1)
    return tables.n_subtasks + longest - 1


@dataclass
class EpisodeTrace:
    episode: int
    seed: int
    decisions: tuple[str, ...]
    offload_stage: int | None
    per_block: list = field(default_factory=list)  # (block, gain, nats, joules)
    energy_total: float = 0.0
    time_total: float = 0.0
    rows: list = field(default_factory=list, repr=False)

    @property
    def nats_sent(self) -> float:
        return math.fsum(b[2] for b in self.per_block)


@dataclass
class _Batch:
    energy: np.ndarray
    time: np.ndarray
    stage: np.ndarray  # offload stage, 0 = everything local
    infeasible: np.ndarray
    blocks: list  # per block: (gain, nats, joules) arrays over episodes


def _simulate(tables: QZTables, paths: np.ndarray, keep_blocks: bool = False) -> _Batch:
    profile, params = tables.profile, tables.params
    n_sub = profile.n_subtasks
    k = paths.shape[0]
    energy = np.zeros(k)
    time = np.zeros(k)
    stage = np.zeros(k, dtype=int)
    infeasible = np.zeros(k, dtype=bool)
    active = np.ones(k, dtype=bool)
    blocks = []
    for n in range(1, n_sub + 1):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        h = paths[idx, n - 1]
        go = np.asarray(tables.offload_value(n, h), dtype=float)
        go = np.broadcast_to(go, h.shape)
        stay = tables.continue_value(n)
        dead = np.isinf(go) & math.isinf(stay)
        infeasible[idx[dead]] = True
        active[idx[dead]] = False
        off = idx[(go < stay) & ~dead]
        if off.size:
            stage[off] = n
            active[off] = False
            e, info = _offload(tables, n, paths[off], keep_blocks)
            energy[off] += e
            time[off] += offload_budget(profile, params, n, params.f_l) + edge_suffix_time(profile, n, params.f_e)
            if keep_blocks:
                blocks.append((n, off, info))
        stay_idx = np.setdiff1d(idx[~dead], off)
        energy[stay_idx] += tables.local_cost(n)
        time[stay_idx] += profile.cycles[n - 1] / params.f_l
    energy[infeasible] = math.inf
    return _Batch(energy, time, stage, infeasible, blocks)


def _offload(tables: QZTables, n: int, paths: np.ndarray, keep: bool):
    st = tables.stage(n)
    n_sub = tables.n_subtasks
    left = np.full(paths.shape[0], st.data)
    total = np.zeros(paths.shape[0])
    info = []
    for m in range(1, st.n_blocks + 1):
        h = paths[:, n - 1] if m == 1 else paths[:, n_sub + m - 2]
        if m < st.n_blocks:
            _, sent, rest = st.evaluate(m, left, h)
            sent = np.minimum(sent, left)
        else:
            sent, rest = left, np.zeros_like(left)
        joules = block_energy(sent, h, st.durations[m - 1], st.bandwidth)
        total += joules
        if keep:
            info.append((h.copy(), np.asarray(sent, dtype=float).copy(), np.asarray(joules, dtype=float)))
        left = np.maximum(rest, 0.0)
    return total, info


def run_episode(tables: QZTables, dist: GainDistribution, seed: int, episode: int = 0) -> EpisodeTrace:
    """Play one episode on sub-stream ``(seed, episode)`` and record every step."""
    paths = sample_paths(dist, seed, [episode], path_width(tables))
    batch = _simulate(tables, paths, keep_blocks=True)
    if batch.infeasible[0]:
        raise InfeasibleError(f"episode {episode}: no branch meets the deadline")
    profile, params = tables.profile, tables.params
    n_off = int(batch.stage[0]) or None
    last_local = (n_off - 1) if n_off else profile.n_subtasks
    decisions = tuple([CONTINUE] * last_local + ([OFFLOAD] if n_off else []))
    rows = []
    clock = 0.0
    for n in range(1, last_local + 1):
        clock += profile.cycles[n - 1] / params.f_l
        rows.append((episode, n, "local", paths[0, n - 1], 0.0, tables.local_cost(n), clock))
    per_block = []
    if n_off:
        st = tables.stage(n_off)
        _, _, info = batch.blocks[0]
        for m, (h, sent, joules) in enumerate(info, start=1):
            clock += st.durations[m - 1]
            per_block.append((m, float(h[0]), float(sent[0]), float(joules[0])))
            rows.append((episode, n_off, "offload", float(h[0]), float(sent[0]), float(joules[0]), clock))
        clock += edge_suffix_time(profile, n_off, params.f_e)
        rows.append((episode, n_off, "edge", math.nan, 0.0, 0.0, clock))
    return EpisodeTrace(
        episode, seed, decisions, n_off, per_block, float(batch.energy[0]), float(batch.time[0]), rows
    )


TRACE_COLUMNS = ("episode", "stage", "action", "gain", "nats_sent", "joules", "cum_time_s")


def write_trace(traces, path, header_comment: str | None = None) -> None:
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        writer = csv.writer(fh)
        writer.writerow(TRACE_COLUMNS)
        for tr in traces:
            for row in tr.rows:
                writer.writerow([row[0], row[1], row[2]] + [f"{v:.17g}" for v in row[3:]])


@dataclass(frozen=True)
class Evaluation:
    mean: float
    stderr: float
    violations: int
    infeasible: int
    episodes: int
    offload_counts: tuple[int, ...]


def _chunk(tables, dist, seed, start, stop):
    width = path_width(tables)
    paths = sample_paths(dist, seed, range(start, stop), width)
    return _simulate(tables, paths)


def evaluate(tables: QZTables, dist: GainDistribution, episodes: int, seed: int) -> Evaluation:
    """Monte-Carlo estimate of the expected energy of the online policy."""
    if episodes < 1:
        raise ValueError("need at least one episode")
    bounds = [(s, min(s + CHUNK, episodes)) for s in range(0, episodes, CHUNK)]
    workers = min(worker_count(), len(bounds))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            batches = list(pool.map(lambda b: _chunk(tables, dist, seed, *b), bounds))
    else:
        batches = [_chunk(tables, dist, seed, *b) for b in bounds]
    energy = np.concatenate([b.energy for b in batches])
    time = np.concatenate([b.time for b in batches])
    stage = np.concatenate([b.stage for b in batches])
    bad = np.concatenate([b.infeasible for b in batches])
    good = energy[~bad]
    mean = float(good.mean()) if good.size else math.nan
    stderr = float(good.std(ddof=1) / math.sqrt(good.size)) if good.size > 1 else 0.0
    deadline = tables.params.deadline_s
    violations = int(np.count_nonzero(time[~bad] > deadline * (1 + 1e-9)))
    counts = tuple(int(c) for c in np.bincount(stage[~bad], minlength=tables.n_subtasks + 1))
    return Evaluation(mean, stderr, violations, int(bad.sum()), episodes, counts)


def static_value(tables: QZTables, n: int) -> float:
    """Expected energy of always offloading at stage n (n = N+1: never)."""
    profile = tables.profile
    prefix = math.fsum(tables.local_cost(i) for i in range(1, n))
    if n == profile.n_subtasks + 1:
        return prefix if math.isfinite(tables.z[n]) else math.inf
    if n not in tables.stages:
        return math.inf
    q = tables.offload_value(n, tables.rule.nodes)
    return prefix + float(q @ tables.rule.weights)


# -- baselines (approximate reconstructions of the reference schemes) -----


def _full_local(profile: TaskProfile, params: SystemParams) -> float:
    return slow.full_local_energy(profile, params)


def baseline_binary(profile: TaskProfile, params: SystemParams, channel, d_intervals: int = DEFAULT_INTERVALS,
                    h_nodes: int = 128) -> float:
    """Cheaper of running everything locally and offloading everything.

    ``channel`` is a gain (slow fading, optimal power for that gain) or a
    distribution (fast fading, expected optimal cost over the block fading).
    """
    local = _full_local(profile, params)
    if isinstance(channel, GainDistribution):
        remote = _fast_offload_first(profile, params, channel, d_intervals, h_nodes)
    else:
        res = slow.inner_solve(profile, params, 1, float(channel))
        remote = res.energy if res.feasible else math.inf
    best = min(local, remote)
    if math.isinf(best):
        raise InfeasibleError("neither full local nor full offload meets the deadline")
    return best


def _fast_offload_first(profile, params, dist, d_intervals, h_nodes) -> float:
    from .fastdp import build_stage

    sch = schedule(profile, params, 1)
    if not sch.feasible:
        return math.inf
    rule = dist.rule(h_nodes)
    st = build_stage(profile.data(1), sch.durations(params.coherence_s), params.bandwidth_hz, rule, d_intervals)
    return float(st.first_block_value(rule.nodes) @ rule.weights)


def default_fixed_power(profile: TaskProfile, params: SystemParams, dist: GainDistribution) -> float:
    """Transmit power of the slow-fading optimum at the mean gain."""
    return slow.solve(profile, params, dist.mean).p_t


def fixed_power_slow(profile: TaskProfile, params: SystemParams, h: float, p_fix: float, n: int) -> float:
    """Energy of offloading at n with local CPUs at f_l and power ``p_fix``."""
    rate = params.bandwidth_hz * math.log1p(p_fix * h)
    upload = profile.data(n) / rate
    time = (
        math.fsum(profile.cycles[: n - 1]) / params.f_l + upload + edge_suffix_time(profile, n, params.f_e)
    )
    if time > params.deadline_s * (1 + 1e-12):
        return math.inf
    prefix = math.fsum(local_energy(l, params.f_l, params.k0) for l in profile.cycles[: n - 1])
    return prefix + p_fix * upload


def fixed_power_stage_value(data: float, durations, bandwidth: float, rule: QuadratureRule, p_fix: float,
                            d_intervals: int = DEFAULT_INTERVALS) -> float:
    """Expected upload energy at constant power ``p_fix``.

    Each block sends as much as the power allows; the last block must flush
    the remainder and pays whatever power that takes.
    """
    if data <= 0:
        return 0.0
    grid = np.linspace(0.0, data, d_intervals + 1)
    nodes, weights = rule.nodes, rule.weights
    q = block_energy(grid[:, None], nodes[None, :], durations[-1], bandwidth)
    q_bar = q @ weights
    rate = bandwidth * np.log1p(p_fix * nodes)[None, :]
    for t in reversed(durations[:-1]):
        x = np.minimum(grid[:, None], rate * t)
        value = p_fix * x / rate + _interp_safe(grid, q_bar, grid[:, None] - x)
        q_bar = value @ weights
    return float(q_bar[-1])


def baseline_fixed(profile: TaskProfile, params: SystemParams, channel, p_fix: float,
                   d_intervals: int = DEFAULT_INTERVALS, h_nodes: int = 128) -> float:
    """Best offload index when CPUs run at f_l and the radio at ``p_fix``."""
    if p_fix <= 0:
        raise ValueError("fixed power must be positive")
    n_sub = profile.n_subtasks
    costs = []
    if isinstance(channel, GainDistribution):
        rule = channel.rule(h_nodes)
        for n in range(1, n_sub + 1):
            sch = schedule(profile, params, n)
            if not sch.feasible:
                costs.append(math.inf)
                continue
            prefix = math.fsum(local_energy(l, params.f_l, params.k0) for l in profile.cycles[: n - 1])
            costs.append(prefix + fixed_power_stage_value(
                profile.data(n), sch.durations(params.coherence_s), params.bandwidth_hz, rule, p_fix, d_intervals
            ))
        if math.fsum(profile.cycles) / params.f_l <= params.deadline_s:
            costs.append(math.fsum(local_energy(l, params.f_l, params.k0) for l in profile.cycles))
    else:
        costs = [fixed_power_slow(profile, params, float(channel), p_fix, n) for n in range(1, n_sub + 1)]
    best = min(costs)
    if math.isinf(best):
        raise InfeasibleError(f"no offload index meets the deadline at fixed power {p_fix:g} W")
    return best
