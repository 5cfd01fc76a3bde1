"""Adversarial inputs against MF, SP and greedy.

1. The adaptive three-burst construction: for each (k, B) it drives the
   policy down to at most floor(B/(k-1)) frames while OPT keeps 2B + that.
2. The doubling construction on which SP completes only floor(B/k) frames.
3. The staggered-group construction aimed at the group a policy serves least.
"""

from fractions import Fraction

from kframe.generators import choose_z, gen_det_lower_bound, gen_rand_lower_bound, gen_sp_killer
from kframe.harness import det_lower_bound, ratio
from kframe.opt import feasible
from kframe.policies import run_policy


def fmt(x):
    return "inf" if x == float("inf") else f"{float(x):.2f}"


print("adaptive adversary: OPT / V_policy vs the guaranteed lower bound")
print(f"{'k':>2} {'B':>3} {'OPT':>4} {'MF':>3} {'SP':>3} {'GR':>3}   bound")
for k in (2, 3, 4):
    for B in (k - 1, 2 * k, 12):
        if B < 1:
            continue
        row = []
        for alg in ("mf", "sp", "greedy"):
            case = gen_det_lower_bound(k, B, alg)
            assert feasible(case.instance, case.opt_witness, B)
            row.append(run_policy(case.instance, B, alg).gain)
        opt = len(case.opt_witness)
        print(f"{k:>2} {B:>3} {opt:>4} {row[0]:>3} {row[1]:>3} {row[2]:>3}   {fmt(det_lower_bound(k, B))}")

print("\nSP worst case: V_SP stays at floor(B/k)")
for k, B in [(2, 6), (3, 6), (4, 8), (5, 10)]:
    case = gen_sp_killer(k, B)
    g = {p: run_policy(case.instance, B, p).gain for p in ("sp", "mf", "greedy")}
    opt = len(case.opt_witness)
    print(f"  k={k} B={B:>2}: OPT >= {opt:>2}  SP {g['sp']} (ratio {fmt(ratio(opt, g['sp']))})"
          f"  MF {g['mf']}  greedy {g['greedy']}")

print("\nstaggered groups, k=3 y=6 B=4: policy gain vs yB/(k-1) + (k-2)B")
cap = Fraction(6 * 4, 2) + 4
for alg in ("mf", "sp", "greedy"):
    z = choose_z(3, 4, 6, alg)
    case = gen_rand_lower_bound(3, 4, 6, z)
    print(f"  {alg:6s} z={z}: gain {run_policy(case.instance, 4, alg).gain:>2} <= {cap}, OPT >= {len(case.opt_witness)}")
