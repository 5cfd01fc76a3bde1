"""Step through MF on the 120-frame worked example (k=3, B=12).

Prints MF's decisions grouped by phase and case, checks them against the
frozen golden trace and compares the gain with the exact optimum.
"""

from collections import Counter, defaultdict

from kframe.generators import gen_appendix_b
from kframe.harness import check_invariants, compare_trace
from kframe.opt import opt_branch_bound
from kframe.policies import run_policy

case = gen_appendix_b()
inst, B = case.instance, case.B
sim = run_policy(inst, B, "mf")

print(f"k={inst.k}  B={B}  A={B // inst.k}  frames={inst.n_frames}\n")
by_phase = defaultdict(Counter)
for e in sim.trace:
    if e.actor == "MF" and e.action != "transmit":
        by_phase[e.phase][(e.j, e.action, e.case, e.block)] += 1
for t in sorted(by_phase):
    print(f"phase {t}")
    for (j, action, label, block), n in sorted(by_phase[t].items()):
        print(f"  {n:3d} x  j={j}  {action:8s} case {label:8s} block {block}")

print("\nflushes:", [str(e.packet) for e in sim.trace if e.action == "flush"])
print("golden diff:", compare_trace(sim.trace, case.golden) or "none")
print("invariant violations:", check_invariants(sim, inst, B) or "none")

opt = opt_branch_bound(inst, B)
print(f"\nMF completes {sorted(sim.completed)}  (gain {sim.gain})")
print(f"OPT completes {opt.gain} frames, e.g. {sorted(opt.witness)}")
