"""Ratio reports and trace checks, plus parameter sweeps built on them."""

from __future__ import annotations

import bisect
import csv
import itertools
import json
import math
import time
from collections import Counter, defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import NamedTuple

from .generators import GeneratedCase, generate, gen_random_order_respecting
from .model import Instance, validate_order_respecting
from .opt import feasible, solve
from .policies import SimResult, run_policy


class CertificateError(RuntimeError):
    """A generator's OPT witness failed the feasibility check."""


class InvariantViolation(NamedTuple):
    check: str
    phase: int
    seq: int
    detail: str


# --- bounds -----------------------------------------------------------------


def mf_upper_bound(k, B) -> Fraction:
    """Guaranteed ratio of MF for B >= 2k: (5B + floor(B/k) - 4) / floor(B/2k)."""
    if B < 2 * k:
        raise ValueError("bound stated only for B >= 2k")
    return Fraction(5 * B + B // k - 4, B // (2 * k))


def det_lower_bound(k, B):
    """2B / floor(B/(k-1)) + 1 for B >= k-1; infinite below."""
    X = B // (k - 1)
    if X == 0:
        return math.inf
    return Fraction(2 * B, X) + 1


def ratio(opt_gain, gain):
    if gain == 0:
        return math.inf if opt_gain > 0 else Fraction(1)
    return Fraction(opt_gain, gain)


def _enc(x):
    if x == math.inf:
        return "inf"
    if isinstance(x, Fraction):
        return float(x)
    return x


# --- invariants -------------------------------------------------------------


def check_invariants(sim: SimResult, instance: Instance, B: int) -> list[InvariantViolation]:
    """Replay the trace and test every runtime invariant that applies to the policy.

    All policies: FIFO discipline and occupancy <= B. SP and MF: at most
    floor(B/k) buffered packets per index. MF only: no packet of a dropped
    frame is accepted again; buffered same-index packets are queued by
    non-decreasing block number (and no later-decided packet of that index
    has a smaller block); the GR1-accepted 1-packets numbered
    3Bu+1 .. 3Bu+A are exactly the ones MF takes, with block u+1; those are
    transmitted before GR1 accepts 2B-1 further 1-packets; a flush leaves
    no buffered packet of the flushed block.
    """
    out = []
    name, k = sim.policy, instance.k
    A = B // k
    is_mf = name == "MF"
    capped = name in ("MF", "SP")

    def bad(check, e, detail):
        out.append(InvariantViolation(check, e.phase, e.seq, detail))

    block = {}
    decided = {}
    for e in sim.trace:
        if e.actor == name and e.action in ("accept", "reject"):
            decided.setdefault(e.packet, (e.phase, e.seq))
        if e.block is not None and e.actor in (name, "GR1"):
            block.setdefault(e.frame, e.block)

    # per index: decision times in order and suffix minimum of block numbers
    pending = {}
    if is_mf:
        for j in range(1, k + 1):
            items = sorted((decided[p], block.get(p.frame, math.inf))
                           for p in decided if p.j == j)
            times = [t for t, _ in items]
            sfx = [math.inf] * (len(items) + 1)
            for i in range(len(items) - 1, -1, -1):
                sfx[i] = min(items[i][1], sfx[i + 1])
            pending[j] = (times, sfx)

    queue = []
    dropped = set()
    groups = itertools.groupby(sim.trace, key=lambda e: (e.phase, e.seq))
    for (phase, seq), events in groups:
        events = [e for e in events if e.actor == name]
        if not events:
            continue
        flushed_blocks = set()
        for e in events:
            p = e.packet
            if e.action == "accept":
                if is_mf and p.frame in dropped:
                    bad("dropped-frame", e, f"{p} accepted after its frame was dropped")
                queue.append(p)
            elif e.action == "reject":
                dropped.add(p.frame)
            elif e.action in ("preempt", "flush"):
                if p not in queue:
                    bad("fifo", e, f"{e.action} of {p}, which is not buffered")
                else:
                    queue.remove(p)
                dropped.add(p.frame)
                if e.action == "flush":
                    flushed_blocks.add(e.block)
            elif e.action == "transmit":
                if not queue or queue[0] != p:
                    bad("fifo", e, f"transmitted {p} but head is {queue[0] if queue else None}")
                else:
                    queue.pop(0)
        e = events[-1]
        if len(queue) > B:
            bad("occupancy", e, f"{len(queue)} packets buffered, B={B}")
        per_index = Counter(q.j for q in queue)
        if capped:
            for j, c in per_index.items():
                if c > A:
                    bad("index-cap", e, f"{c} buffered {j}-packets, cap {A}")
        if is_mf:
            for u in flushed_blocks:
                left = [q for q in queue if block.get(q.frame) == u]
                if left:
                    bad("flush-complete", e, f"block {u} flushed but {left} remain")
            _check_block_order(queue, block, pending, (phase, seq), e, bad)

    if is_mf:
        _check_first_packets(sim, instance, B, A, bad)
    return out


def _check_block_order(queue, block, pending, now, e, bad):
    last = {}
    for q in queue:
        g = block.get(q.frame)
        if g is None:
            bad("block-order", e, f"buffered {q} has no block number")
            continue
        if q.j in last and g < last[q.j][1]:
            bad("block-order", e,
                f"{q} (block {g}) queued behind {last[q.j][0]} (block {last[q.j][1]})")
        last[q.j] = (q, g)
    for j, (q, g) in last.items():
        times, sfx = pending[j]
        i = bisect.bisect_right(times, now)
        if sfx[i] < g:
            bad("block-order", e, f"buffered {q} has block {g} but a later {j}-packet has block {sfx[i]}")


def _check_first_packets(sim, instance, B, A, bad):
    gr1 = []
    mf_action = {}
    sent = {}
    for e in sim.trace:
        if e.j != 1:
            continue
        if e.actor == "GR1" and e.action == "accept":
            gr1.append(e)
        elif e.actor == sim.policy and e.action in ("accept", "reject"):
            mf_action[e.packet] = e
        elif e.actor == sim.policy and e.action == "transmit":
            sent[e.packet] = e.phase
    gr1_set = {e.packet for e in gr1}
    for p, e in mf_action.items():
        if e.action == "accept" and p not in gr1_set:
            bad("first-packet-quota", e, f"{p} accepted although GR1 rejected it")
    for i, g in enumerate(gr1, 1):
        u, r = divmod(i - 1, 3 * B)
        e = mf_action.get(g.packet)
        want = "accept" if r < A else "reject"
        if e is None or e.action != want:
            bad("first-packet-quota", g,
                f"GR1's {i}-th 1-packet {g.packet} should be {want}ed by MF")
        elif e.block != u + 1:
            bad("first-packet-quota", g, f"{g.packet} has block {e.block}, expected {u + 1}")
    z = len(gr1)
    if z >= 2 * B:
        arrival = instance.arrival
        for i in range(1, z - 2 * B + 2):
            p = gr1[i - 1].packet
            if mf_action.get(p) is None or mf_action[p].action != "accept":
                continue
            later = gr1[i + 2 * B - 2].packet
            if p not in sent:
                bad("first-packet-latency", gr1[i - 1], f"{p} accepted but never transmitted")
            elif not sent[p] < arrival[later]:
                bad("first-packet-latency", gr1[i - 1],
                    f"{p} transmitted at {sent[p]}, not before {later} arrives at {arrival[later]}")


# --- golden trace ------------------------------------------------------------


class TraceDiff(NamedTuple):
    phase: int
    seq: int
    missing: tuple  # in golden, absent from the trace
    unexpected: tuple  # in the trace, absent from golden


def compare_trace(trace, golden, include_transmit=None) -> list[TraceDiff]:
    """Compare decisions as multisets of (packet, actor, action, case, block) per (phase, seq).

    Row order inside one decision is not significant. Transmissions are
    compared only if the golden trace contains any (or include_transmit=True).
    """
    if include_transmit is None:
        include_transmit = any(e.action == "transmit" for e in golden)

    def group(tr):
        out = defaultdict(Counter)
        for e in tr:
            if e.action == "transmit" and not include_transmit:
                continue
            out[(e.phase, e.seq)][(e.frame, e.j, e.actor, e.action, e.case, e.block)] += 1
        return out

    a, b = group(trace), group(golden)
    diffs = []
    for key in sorted(set(a) | set(b)):
        if a[key] != b[key]:
            diffs.append(TraceDiff(*key, tuple(sorted((b[key] - a[key]).elements())),
                                   tuple(sorted((a[key] - b[key]).elements()))))
    return diffs


# --- ratio reports -------------------------------------------------------------


@dataclass
class RatioReport:
    name: str
    meta: dict
    k: int
    B: int
    gains: dict
    opt_gain: int
    opt_source: str  # "oracle" or "certificate"
    witness: frozenset = field(repr=False)
    ratios: dict = field(default_factory=dict)
    violations: dict = field(default_factory=dict)
    claims: dict = field(default_factory=dict)  # "V_SP == 2" -> bool
    runtime: float = 0.0

    @property
    def ok(self):
        return not any(self.violations.values()) and all(self.claims.values())

    def to_json(self):
        return {
            "name": self.name, "meta": self.meta, "k": self.k, "B": self.B,
            "gains": self.gains, "opt_gain": self.opt_gain, "opt_source": self.opt_source,
            "witness": sorted(self.witness),
            "ratios": {p: _enc(r) for p, r in self.ratios.items()},
            "violations": {p: [v._asdict() for v in vs] for p, vs in self.violations.items()},
            "claims": self.claims, "ok": self.ok, "runtime_s": round(self.runtime, 4),
        }


def run_ratio(instance, B, policies=("mf", "sp", "greedy"), opt_mode="oracle",
              case: GeneratedCase | None = None, opt_method="auto") -> RatioReport:
    """Run policies, obtain OPT, and check invariants and any generator claims.

    opt_mode="certificate" takes OPT from case.opt_witness after checking it
    is feasible; "oracle" solves OPT exactly.
    """
    t0 = time.perf_counter()
    sims = {}
    for pol in policies:
        sim = run_policy(instance, B, pol)
        sims[sim.policy] = sim
    if opt_mode == "certificate":
        if case is None:
            raise ValueError("certificate mode needs the generated case")
        if not feasible(instance, case.opt_witness, B):
            raise CertificateError(f"{instance.name}: OPT witness is infeasible for B={B}")
        witness = case.opt_witness
        source = "certificate"
    elif opt_mode == "oracle":
        res = solve(instance, B, opt_method)
        witness = res.witness
        source = "oracle"
    else:
        raise ValueError(f"unknown opt mode {opt_mode!r}")
    opt_gain = len(witness)
    report = RatioReport(instance.name, dict(instance.meta), instance.k, B,
                         {p: s.gain for p, s in sims.items()}, opt_gain, source, witness)
    for p, s in sims.items():
        report.ratios[p] = ratio(opt_gain, s.gain)
        report.violations[p] = check_invariants(s, instance, B)
        if source == "oracle":
            report.claims[f"V_OPT >= V_{p}"] = opt_gain >= s.gain
    if case is not None:
        for c in case.claims:
            measured = opt_gain if c.quantity == "V_OPT" else report.gains.get(c.quantity[2:])
            if measured is None:
                continue
            report.claims[f"{c.quantity} {c.relation} {c.value}"] = c.holds(measured)
    report.runtime = time.perf_counter() - t0
    return report


# --- sweeps ---------------------------------------------------------------------


def _b_values(b_cfg, k):
    if isinstance(b_cfg, list):
        return b_cfg
    if isinstance(b_cfg, int):
        return [b_cfg]
    lo = max(b_cfg.get("min", 1), k + b_cfg.get("min_k_offset", -10**9))
    if b_cfg.get("min_k_factor") is not None:
        lo = max(lo, b_cfg["min_k_factor"] * k)
    return list(range(lo, b_cfg["max"] + 1))


def expand(config) -> list[dict]:
    """Flatten a sweep config into job dicts, one per (family, k, B, ...) point."""
    jobs = []
    for entry in config.get("entries", []):
        fam = entry["family"]
        for k in entry.get("k", [None]):
            for B in _b_values(entry.get("B", [None]), k or 0):
                base = {"family": fam, "k": k, "B": B,
                        "policies": entry.get("policies", ["mf"]),
                        "opt": entry.get("opt", "certificate" if fam != "random" else "oracle")}
                if fam == "random":
                    lo, hi = entry.get("seeds", [0, 10])
                    fmin, fmax = entry.get("frames", [1, 12])
                    for s in range(lo, hi):
                        jobs.append({**base, "seed": config.get("seed", 0) * 1_000_003 + s,
                                     "frames": fmin + s % (fmax - fmin + 1)})
                elif fam == "rand-lb":
                    for y in entry.get("y", [4]):
                        jobs.append({**base, "y": y, "z": entry.get("z"), "alg": entry.get("alg", "mf")})
                elif fam == "det-lb":
                    jobs.append({**base, "alg": entry.get("alg", "mf")})
                else:
                    jobs.append(base)
    return jobs


def run_job(job) -> dict:
    fam, k, B = job["family"], job["k"], job["B"]
    if fam == "random":
        inst = gen_random_order_respecting(k, job["frames"], job["seed"])
        case = GeneratedCase(inst, B, frozenset(), [])
    else:
        case = generate(fam, k=k, B=B, y=job.get("y"), z=job.get("z"), alg=job.get("alg", "mf"))
        B = case.B
    rep = run_ratio(case.instance, B, job["policies"], job["opt"],
                    case if job["opt"] == "certificate" or case.claims else None)
    checks = dict(rep.claims)
    checks["order-respecting"] = not validate_order_respecting(case.instance)
    if case.opt_witness:
        checks["witness-feasible"] = feasible(case.instance, case.opt_witness, B)
    mf = rep.ratios.get("MF")
    if mf is not None:
        if fam == "det-lb":
            lb = det_lower_bound(k, B)
            checks["ratio >= det bound"] = (mf == math.inf) if lb == math.inf else mf >= lb
        if fam == "random" and B >= 2 * k and rep.opt_source == "oracle":
            checks["ratio <= MF bound"] = mf != math.inf and mf <= mf_upper_bound(k, B)
    row = {key: job[key] for key in job if key != "policies"}
    row.update(name=rep.name, opt_gain=rep.opt_gain, gains=rep.gains,
               ratios={p: _enc(r) for p, r in rep.ratios.items()},
               violations=sum(len(v) for v in rep.violations.values()),
               checks=checks, ok=rep.ok and all(checks.values()))
    return row


def _key(row):
    return (row["family"], row.get("k") or 0, row.get("B") or 0, row.get("y") or 0,
            row.get("seed") or 0)


def sweep(config, workers=None) -> list[dict]:
    """Run every grid point; rows come back sorted by (family, k, B, y, seed)."""
    jobs = expand(config)
    workers = workers or config.get("workers", 1)
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(workers) as ex:
            rows = list(ex.map(run_job, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        rows = [run_job(j) for j in jobs]
    return sorted(rows, key=_key)


def write_sweep(rows, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "sweep.json").write_text(json.dumps(rows, indent=1, default=str))
    cols = ["family", "k", "B", "y", "seed", "frames", "name", "opt_gain", "gains",
            "ratios", "violations", "ok"]
    with (out / "sweep.csv").open("w", newline="") as fh:
        w = csv.DictWriter(fh, cols, extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({c: (json.dumps(r[c]) if isinstance(r.get(c), dict) else r.get(c, ""))
                        for c in cols})
