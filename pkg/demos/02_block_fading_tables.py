"""
Block fading: offline tables, online decisions
==============================================

Gains change every 20 ms. The tables are built once, offline. Online, the
device only compares two numbers at each sub-task boundary.
"""

import time

import numpy as np

from seqoff import fastdp, policy
from seqoff.config import load_config

cfg = load_config()
profile, params, dist = cfg.profile, cfg.params, cfg.channel

start = time.perf_counter()
tables = fastdp.build_tables(profile, params, dist)
print(f"tables built in {time.perf_counter() - start:.2f} s")
print(f"optimal expected energy Z_1 = {tables.expected_energy * 1e3:.4f} mJ")

for n in range(1, profile.n_subtasks + 1):
    s = tables.schedule(n)
    if s.feasible:
        print(f"  stage {n:2d}: {s.m_star:2d} blocks, last one {s.t_star * 1e3:5.2f} ms")
    else:
        print(f"  stage {n:2d}: no time left to upload")

# the gain where offloading at stage 1 starts to pay off
hs = np.geomspace(1, 300, 400)
go = np.array([policy.decide(tables, 1, h) == policy.OFFLOAD for h in hs])
print(f"stage 1 offloads once h exceeds about {hs[go.argmax()]:.1f}")

# one episode, step by step
trace = policy.run_episode(tables, dist, seed=2024)
for row in trace.rows:
    ep, n, action, h, nats, joules, clock = row
    print(f"  t={clock * 1e3:6.1f} ms  stage {n}  {action:7s}  h={h:7.2f}  sent {nats:8.0f} nats  {joules * 1e6:8.2f} uJ")
print(f"episode energy {trace.energy_total * 1e3:.4f} mJ, finished at {trace.time_total * 1e3:.1f} ms")

# many episodes
ev = policy.evaluate(tables, dist, episodes=20_000, seed=1)
print(f"Monte-Carlo {ev.mean * 1e3:.4f} +- {ev.stderr * 1e3:.4f} mJ, deadline misses {ev.violations}")
print("offload stage histogram", ev.offload_counts[1:])
