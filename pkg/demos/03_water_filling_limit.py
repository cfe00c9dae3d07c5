"""
Short blocks and water-filling
==============================

As the coherence time shrinks, the first-block gain matters less and less,
and the upload energy approaches that of the water-filling power profile.
"""

import math

import numpy as np

from seqoff import ergodic, fastdp
from seqoff.channel import Exponential
from seqoff.config import load_config

dist = Exponential(50.0)
data = 1.2e6 * math.log(2)  # 1.2 Mbit in nats
horizon, bandwidth = 0.84, 1e6

wf = ergodic.solve_wf(dist, data / (horizon * bandwidth), horizon)
print(f"water level {wf.zeta:.5f}, mean power {wf.mean_power:.5f} W, energy {wf.energy * 1e3:.3f} mJ")
print(f"power is off below h = {1 / wf.zeta:.2f}")

gains = np.array([30.0, 50.0, 70.0])
rule = dist.rule()
for tau in (0.020, 0.010, 0.005, 0.002):
    m, t = fastdp.split_budget(horizon, tau)
    q = fastdp.build_stage(data, [tau] * (m - 1) + [t], bandwidth, rule).first_block_value(gains)
    print(f"tau={tau * 1e3:4.0f} ms ({m:3d} blocks)  " + "  ".join(f"h={h:.0f}: {v * 1e3:.3f} mJ" for h, v in zip(gains, q)))

# the same idea picks an offload point without looking at any gain
cfg = load_config()
sel = ergodic.offline_select(cfg.profile, cfg.params, dist)
print(f"offline choice: offload at sub-task {sel.n_star}, {sel.total * 1e3:.4f} mJ")
