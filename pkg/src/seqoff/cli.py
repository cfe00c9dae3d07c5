"""Command-line entry point: ``seqoff <command> [options]``.

Exit codes: 0 success, 1 usage or configuration error, 2 infeasible
instance, 3 verification failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import ergodic, fastdp, oracle, policy, slow
from .channel import Discrete
from .config import ConfigError, ExperimentConfig, load_config
from .core import InfeasibleError, offload_budget

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_VERIFY = 0, 1, 2, 3
SWEEP_PARAMS = {"fe": "f_e_hz", "tth": "deadline_s"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def write_csv(path, config_hash: str, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_hash={config_hash}\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _emit_json(obj, out) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(type(o).__name__)


def _clean(obj):
    """Replace non-finite floats so the output stays strict JSON."""
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def _info(msg: str) -> None:
    print(msg, file=sys.stderr)


# -- commands ---------------------------------------------------------------


def cmd_solve_slow(args, cfg: ExperimentConfig) -> int:
    if args.h <= 0:
        raise UsageError("--h must be positive")
    tol = args.tol if args.tol is not None else cfg.solver["tol"]
    start = time.perf_counter()
    sol = slow.solve(cfg.profile, cfg.params, args.h, tol)
    elapsed = time.perf_counter() - start
    out = sol.to_dict()
    out["config_hash"] = cfg.config_hash
    out["h"] = args.h
    local = slow.full_local_energy(cfg.profile, cfg.params)
    out["full_local_energy"] = local
    _emit_json(_clean(out), args.out)
    _info(f"solved in {elapsed * 1e3:.2f} ms (informational)")
    if local < sol.energy:
        _info(f"note: running everything locally would cost {local:.6g} J, less than {sol.energy:.6g} J")
    return EXIT_OK


def _build(cfg: ExperimentConfig):
    return fastdp.build_tables(cfg.profile, cfg.params, cfg.channel, **cfg.grid_kwargs)


def cmd_build_tables(args, cfg: ExperimentConfig) -> int:
    start = time.perf_counter()
    tables = _build(cfg)
    fastdp.save_tables(tables, args.out)
    _info(f"built tables {tables.params_hash} in {time.perf_counter() - start:.2f} s; Z_1 = {tables.expected_energy:.6g} J")
    for w in tables.warnings:
        _info(f"warning: {w}")
    return EXIT_OK


def cmd_simulate(args, cfg: ExperimentConfig) -> int:
    expected = fastdp.params_hash(cfg.profile, cfg.params, cfg.channel, cfg.grid_kwargs)
    tables = fastdp.load_tables(args.tables, expected_hash=expected)
    episodes = args.episodes or cfg.solver["episodes"]
    seed = cfg.solver["seed"] if args.seed is None else args.seed
    ev = policy.evaluate(tables, cfg.channel, episodes, seed)
    n_trace = min(episodes, args.trace_episodes)
    start = time.perf_counter()
    traces = [policy.run_episode(tables, cfg.channel, seed, i) for i in range(n_trace)]
    per_decision = (time.perf_counter() - start) / max(1, sum(len(t.decisions) for t in traces))
    prefix = Path(args.out)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    policy.write_trace(traces, f"{prefix}_trace.csv", f"config_hash={cfg.config_hash}")
    header = ["episodes", "seed", "mean_energy_J", "stderr_J", "violations", "infeasible", "expected_energy_J"]
    row = [episodes, seed, ev.mean, ev.stderr, ev.violations, ev.infeasible, tables.expected_energy]
    write_csv(f"{prefix}_summary.csv", cfg.config_hash, header, [row])
    _info(f"mean {ev.mean:.6g} J +- {ev.stderr:.2g} over {episodes} episodes (Z_1 = {tables.expected_energy:.6g} J)")
    _info(f"about {per_decision * 1e3:.3f} ms per online decision (informational)")
    return EXIT_OK


def cmd_ergodic(args, cfg: ExperimentConfig) -> int:
    tol = cfg.solver["tol"]
    kw = {"node_count": cfg.solver["h_nodes"], "truncation": cfg.solver["truncation"], "tol": tol}
    if args.n is None:
        sel = ergodic.offline_select(cfg.profile, cfg.params, cfg.channel, **kw)
        out = {
            "n_star": sel.n_star,
            "total_energy": sel.total,
            "per_stage": [{"n": r[0], "budget_s": r[1], "upload_energy": r[2], "total": r[3]} for r in sel.per_stage],
        }
    else:
        cfg.profile.check_index(args.n)
        budget = offload_budget(cfg.profile, cfg.params, args.n, cfg.params.f_l)
        if budget <= 0:
            raise InfeasibleError(f"stage {args.n} has no upload budget")
        target = cfg.profile.data(args.n) / (budget * cfg.params.bandwidth_hz)
        sol = ergodic.solve_wf(cfg.channel, target, budget, **kw)
        out = sol.to_dict()
        out.update({"n": args.n, "budget_s": budget, "rate_target": target})
    out["config_hash"] = cfg.config_hash
    _emit_json(_clean(out), args.out)
    return EXIT_OK


def sweep_point(cfg: ExperimentConfig, method: str, regime: str, h: float, p_fix: float, episodes: int, seed: int):
    """Mean energy and its standard error for one configuration."""
    prof, par, dist = cfg.profile, cfg.params, cfg.channel
    grid = {"d_intervals": cfg.solver["d_intervals"], "h_nodes": cfg.solver["h_nodes"]}
    try:
        if regime == "slow":
            if method == "proposed":
                return slow.solve(prof, par, h, cfg.solver["tol"]).energy, 0.0
            if method == "binary":
                return policy.baseline_binary(prof, par, h), 0.0
            return policy.baseline_fixed(prof, par, h, p_fix), 0.0
        if method == "proposed":
            tables = _build(cfg)
            if episodes:
                ev = policy.evaluate(tables, dist, episodes, seed)
                return ev.mean, ev.stderr
            return tables.expected_energy, 0.0
        if method == "binary":
            return policy.baseline_binary(prof, par, dist, **grid), 0.0
        return policy.baseline_fixed(prof, par, dist, p_fix, **grid), 0.0
    except InfeasibleError:
        return math.inf, 0.0


def cmd_sweep(args, cfg: ExperimentConfig) -> int:
    key = SWEEP_PARAMS[args.param]
    h = args.h if args.h is not None else cfg.channel.mean
    if h <= 0:
        raise UsageError("--h must be positive")
    methods = args.method
    p_fix = policy.default_fixed_power(cfg.profile, cfg.params, cfg.channel) if "fixed" in methods else math.nan
    seed = cfg.solver["seed"] if args.seed is None else args.seed
    rows = []
    for value in args.values:
        point = cfg.with_system(**{key: value})
        for method in methods:
            mean, se = sweep_point(point, method, args.regime, h, p_fix, args.episodes, seed)
            rows.append([value, method, mean, se])
    out = args.out or "-"
    if out == "-":
        writer = csv.writer(sys.stdout)
        sys.stdout.write(f"# config_hash={cfg.config_hash}\n")
        writer.writerow(["param_value", "method", "mean_energy_J", "stderr_J"])
        for r in rows:
            writer.writerow([_fmt(v) for v in r])
    else:
        write_csv(out, cfg.config_hash, ["param_value", "method", "mean_energy_J", "stderr_J"], rows)
    return EXIT_OK


# -- verification suites ----------------------------------------------------


class _Checks:
    def __init__(self):
        self.failed = 0

    def __call__(self, name: str, ok: bool, detail: str = "") -> None:
        if not ok:
            self.failed += 1
        print(f"{'PASS' if ok else 'FAIL'}  {name}" + (f"  ({detail})" if detail else ""))


def verify_slow(cfg: ExperimentConfig, check: _Checks) -> None:
    for h in (20.0, 40.0, 60.0, 100.0):
        try:
            sol = slow.solve(cfg.profile, cfg.params, h, cfg.solver["tol"])
        except InfeasibleError:
            ref = oracle.slow_grid(cfg.profile, cfg.params, h)
            check(f"slow h={h:g} infeasible in both", not ref.feasible)
            continue
        ref = oracle.slow_grid(cfg.profile, cfg.params, h)
        rel = abs(sol.energy - ref.energy) / ref.energy
        check(f"slow h={h:g} matches grid oracle", rel <= 1e-3, f"rel diff {rel:.2e}")
        if sol.freqs:
            spread = (max(sol.freqs) - min(sol.freqs)) / max(sol.freqs)
            check(f"slow h={h:g} equal local frequencies", spread <= 1e-9)
        slack = abs(sol.time_total - cfg.params.deadline_s) / cfg.params.deadline_s
        check(f"slow h={h:g} deadline active", slack <= 1e-9, f"slack {slack:.1e}")


def verify_dp(cfg: ExperimentConfig, check: _Checks) -> None:
    profile, params, dist = oracle.tiny_instance()
    tab = fastdp.build_tables(profile, params, dist, d_intervals=64, inner="grid")
    ref = oracle.dp_enumerate(profile, params, dist, d_intervals=64)
    rel = abs(tab.expected_energy - ref.optimum) / ref.optimum
    check("dp tiny instance matches enumeration", rel <= 1e-9, f"rel diff {rel:.1e}")
    check("dp stopping value <= every static stage", ref.optimum <= min(ref.static.values()) + 1e-15)

    tables = _build(cfg)
    worst_d = worst_h = worst_cvx = worst_zero = 0.0
    for n, st in tables.stages.items():
        scale = max(float(np.max(st.q_bar[0])), 1e-300)
        for m in range(st.n_blocks):
            worst_d = max(worst_d, oracle.violation(st.q[m], 0, "nondecreasing"))
            worst_h = max(worst_h, oracle.violation(st.q[m], 1, "nonincreasing"))
            worst_cvx = max(worst_cvx, oracle.violation(st.q_bar[m], 0, "convex") / scale)
            worst_zero = max(worst_zero, abs(float(st.q_bar[m][0])))
    check("dp Q nondecreasing in data", worst_d <= 1e-12, f"{worst_d:.1e}")
    check("dp Q nonincreasing in gain", worst_h <= 1e-12, f"{worst_h:.1e}")
    check("dp expected Q convex in data", worst_cvx <= 1e-6, f"{worst_cvx:.1e}")
    check("dp expected Q is zero without data", worst_zero == 0.0)
    ok = all(
        np.all(tables.z_h[n] <= tables.continue_value(n)) for n in range(1, tables.n_subtasks + 1)
        if math.isfinite(tables.continue_value(n))
    )
    check("dp stopping values bounded by the local branch", ok)


def verify_ergodic(cfg: ExperimentConfig, check: _Checks) -> None:
    sol = ergodic.solve_wf(Discrete((1.0, 3.0), (0.5, 0.5)), 0.5 * math.log(3.0), tol=1e-12)
    check("water level on the two-state channel", abs(sol.zeta - 1) <= 1e-9 and abs(sol.mean_power - 1 / 3) <= 1e-9)
    sel = ergodic.offline_select(cfg.profile, cfg.params, cfg.channel, node_count=cfg.solver["h_nodes"])
    worst_res = worst_gap = 0.0
    for n, budget, _, _ in sel.per_stage:
        d = cfg.profile.data(n)
        if d == 0:
            continue
        s = ergodic.solve_wf(cfg.channel, d / (budget * cfg.params.bandwidth_hz), budget,
                             node_count=cfg.solver["h_nodes"])
        worst_res = max(worst_res, abs(s.rate_residual))
        worst_gap = max(worst_gap, abs(s.duality_gap) / s.mean_power)
    check("water-filling rate residuals", worst_res <= 1e-6, f"{worst_res:.1e}")
    check("water-filling duality gaps", worst_gap <= 1e-6, f"{worst_gap:.1e}")


SUITES = {"slow": verify_slow, "dp": verify_dp, "ergodic": verify_ergodic}


def cmd_verify(args, cfg: ExperimentConfig) -> int:
    check = _Checks()
    names = list(SUITES) if args.suite == "all" else [args.suite]
    for name in names:
        SUITES[name](cfg, check)
    print(f"{check.failed} check(s) failed")
    return EXIT_VERIFY if check.failed else EXIT_OK


# -- wiring -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="seqoff", description="Energy-aware offloading of sequential tasks.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="JSON config (default: bundled example)")
        p.set_defaults(func=func)
        return p

    p = add("solve-slow", cmd_solve_slow, "optimal offloading for one constant gain")
    p.add_argument("--h", type=float, required=True, help="channel gain")
    p.add_argument("--tol", type=float)
    p.add_argument("--out", help="output JSON (default: stdout)")

    p = add("build-tables", cmd_build_tables, "offline value tables for block fading")
    p.add_argument("--out", required=True, help="table directory")

    p = add("simulate", cmd_simulate, "Monte-Carlo run of the online policy")
    p.add_argument("--tables", required=True, help="directory written by build-tables")
    p.add_argument("--episodes", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--trace-episodes", type=int, default=100, help="episodes written to the trace CSV")
    p.add_argument("--out", required=True, help="output prefix for <prefix>_trace.csv and <prefix>_summary.csv")

    p = add("ergodic", cmd_ergodic, "water-filling limit for short coherence times")
    p.add_argument("--n", type=int, help="offload stage (default: pick the best)")
    p.add_argument("--out", help="output JSON (default: stdout)")

    p = add("sweep", cmd_sweep, "energy versus edge frequency or deadline")
    p.add_argument("--param", choices=sorted(SWEEP_PARAMS), required=True)
    p.add_argument("--values", type=float, nargs="+", required=True)
    p.add_argument("--method", choices=["proposed", "binary", "fixed"], nargs="+", default=["proposed"])
    p.add_argument("--regime", choices=["slow", "fast"], default="fast")
    p.add_argument("--h", type=float, help="gain for the slow regime (default: channel mean)")
    p.add_argument("--episodes", type=int, default=0, help="Monte-Carlo episodes for fast 'proposed' (0: exact)")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output CSV (default: stdout)")

    p = add("verify", cmd_verify, "run brute-force property checks")
    p.add_argument("--suite", choices=["slow", "dp", "ergodic", "all"], default="all")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = load_config(args.config)
        return args.func(args, cfg)
    except (ConfigError, UsageError, fastdp.StaleTablesError, IndexError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
