"""
Offloading when the channel stays put
=====================================

The gain is measured once and holds for the whole task. For every possible
offload point the solver finds the best upload time; local frequencies then
follow in closed form.
"""

import numpy as np

from seqoff import policy, slow
from seqoff.config import load_config

cfg = load_config()  # the bundled ten sub-task example
profile, params = cfg.profile, cfg.params

# one gain, every candidate offload point
sol = slow.solve(profile, params, h=60.0)
print(f"offload at sub-task {sol.n_star}, energy {sol.energy * 1e3:.4f} mJ")
print(f"upload time {sol.tau_t * 1e3:.2f} ms at {sol.p_t:.4f} W")
print(f"local CPU {sol.freqs[0] / 1e6:.1f} MHz for the first {sol.n_star - 1} sub-task(s)")
for r in sol.per_index:
    mark = "<-" if r.n == sol.n_star else ""
    print(f"  n={r.n:2d}  {r.energy * 1e3:10.4f} mJ {mark}" if r.feasible else f"  n={r.n:2d}  infeasible")

# the two reference schemes on the same gain
p_fix = policy.default_fixed_power(profile, params, cfg.channel)
print(f"binary offloading   {policy.baseline_binary(profile, params, 60.0) * 1e3:.4f} mJ")
print(f"fixed power/CPU     {policy.baseline_fixed(profile, params, 60.0, p_fix) * 1e3:.4f} mJ")

# a better channel moves the offload point earlier
for h in np.geomspace(5, 500, 7):
    s = slow.solve(profile, params, h)
    print(f"h={h:7.1f}  n*={s.n_star}  E={s.energy * 1e3:.4f} mJ")
