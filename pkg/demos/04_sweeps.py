"""
Energy against edge speed and deadline
======================================

Sweeps the edge CPU frequency and the deadline for the proposed scheme and
the two baselines, in both channel regimes.
"""

from seqoff import policy
from seqoff.cli import sweep_point
from seqoff.config import load_config

cfg = load_config()
p_fix = policy.default_fixed_power(cfg.profile, cfg.params, cfg.channel)
methods = ("proposed", "binary", "fixed")

for key, values, unit, scale in (
    ("f_e_hz", [2.4e9, 2.7e9, 3.0e9, 3.3e9, 3.6e9], "GHz", 1e-9),
    ("deadline_s", [0.30, 0.325, 0.35, 0.375, 0.40], "s", 1.0),
):
    for regime, h in (("slow", 40.0), ("fast", None)):
        print(f"\n{key} sweep, {regime} fading" + (f" (h={h:g})" if h else ""))
        print(f"{unit:>8s} " + " ".join(f"{m:>10s}" for m in methods) + "   [mJ]")
        for v in values:
            point = cfg.with_system(**{key: v})
            row = [sweep_point(point, m, regime, h, p_fix, 0, 0)[0] for m in methods]
            print(f"{v * scale:8.3f} " + " ".join(f"{e * 1e3:10.4f}" for e in row))
