"""Empirical ratios on random order-respecting inputs.

For small instances the exact optimum is cheap, so this prints the spread
of OPT / V_policy for each policy next to MF's guaranteed bound.
"""

import sys
from collections import Counter

from kframe.generators import gen_random_order_respecting
from kframe.harness import mf_upper_bound, ratio
from kframe.opt import solve
from kframe.policies import run_policy

seeds = int(sys.argv[1]) if len(sys.argv) > 1 else 300
for k, B in [(2, 4), (2, 8), (3, 6)]:
    hist = {p: Counter() for p in ("mf", "sp", "greedy")}
    for s in range(seeds):
        inst = gen_random_order_respecting(k, 1 + s % 12, seed=s)
        opt = solve(inst, B).gain
        for p in hist:
            r = ratio(opt, run_policy(inst, B, p).gain)
            hist[p][r if r == float("inf") else round(float(r), 2)] += 1
    print(f"k={k} B={B}  ({seeds} instances, MF bound {float(mf_upper_bound(k, B)):.1f})")
    for p, h in hist.items():
        worst = max(h)
        share = h[1.0] / seeds
        print(f"  {p:6s} optimal on {share:5.1%}  worst ratio {worst}")
