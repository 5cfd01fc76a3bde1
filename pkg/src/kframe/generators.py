"""Instance families for exercising the policies.

Each constructor returns a GeneratedCase: the instance with the buffer size
it targets, a frame subset OPT can complete, and the claims the construction
should exhibit when simulated.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import NamedTuple

import numpy as np

from .model import Instance, PacketId
from .policies import TraceEvent, run_policy


class Claim(NamedTuple):
    quantity: str  # e.g. "V_OPT", "V_MF", "V_SP"
    relation: str  # "==", "<=", ">="
    value: object  # int or Fraction
    source: str  # "construction" (argued analytically) or "witness" (checked by oracle)

    def holds(self, measured):
        if self.relation == "==":
            return measured == self.value
        if self.relation == "<=":
            return measured <= self.value
        if self.relation == ">=":
            return measured >= self.value
        raise ValueError(self.relation)


@dataclass
class GeneratedCase:
    instance: Instance
    B: int
    opt_witness: frozenset
    claims: list = field(default_factory=list)
    golden: list | None = field(default=None, repr=False)

    def claim(self, quantity):
        return [c for c in self.claims if c.quantity == quantity]

    def sidecar(self):
        def enc(v):
            return str(v) if isinstance(v, Fraction) else v

        return {
            "name": self.instance.name,
            "B": self.B,
            "opt_witness": sorted(self.opt_witness),
            "claims": [c._replace(value=enc(c.value))._asdict() for c in self.claims],
            "meta": self.instance.meta,
        }


# --- deterministic adaptive lower bound -----------------------------------


def gen_det_lower_bound(k, B, alg="mf", **alg_opts) -> GeneratedCase:
    """Adaptive three-burst adversary against a deterministic policy.

    1-packet bursts of 2B, B+X and 2B frames arrive at phases 0, B, 2B with
    X = floor(B/(k-1)). From each burst the adversary keeps, as OPT's frames,
    the lowest-numbered frames the policy did not carry to transmission
    (B, X and B of them: D, F, H). D's later packets arrive one index per B
    phases from 3B on; every frame outside D and H gets all its later packets
    in one burst at (k+2)B, where at most X frames fit; H's later packets
    follow at (k+3)B, (k+4)B, ...
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    if B < 1:
        raise ValueError("B must be >= 1")
    X = B // (k - 1)
    bursts = [(0, range(1, 2 * B + 1)),
              (B, range(2 * B + 1, 3 * B + X + 1)),
              (2 * B, range(3 * B + X + 1, 5 * B + X + 1))]
    n = 5 * B + X
    first = [(t, PacketId(f, 1)) for t, frames in bursts for f in frames]

    # The 1-packet bursts do not depend on the policy's choices, so a single
    # online run over them yields exactly the decisions the adversary observes.
    probe = Instance.from_arrivals(k, n, first)
    sim = run_policy(probe, B, alg, **alg_opts)
    kept = {e.frame for e in sim.trace if e.action == "transmit" and e.actor == sim.policy}
    picks = []
    for (t, frames), size in zip(bursts, (B, X, B)):
        lost = [f for f in frames if f not in kept]
        if len(lost) < size:
            raise RuntimeError(f"policy kept {len(frames) - len(lost)} of {len(frames)} "
                               f"packets from the phase-{t} burst; buffer bound violated")
        picks.append(lost[:size])
    D, F, H = picks

    arrivals = list(first)
    for j in range(2, k + 1):
        arrivals += [((j + 1) * B, PacketId(f, j)) for f in D]
    rest = [f for f in range(1, n + 1) if f not in set(D) | set(H)]
    for j in range(2, k + 1):
        arrivals += [((k + 2) * B, PacketId(f, j)) for f in rest]
    for j in range(2, k + 1):
        arrivals += [((k + 1 + j) * B, PacketId(f, j)) for f in H]

    name = sim.policy.lower()
    meta = {"family": "det-lb", "k": k, "B": B, "X": X, "alg": name,
            "D": D, "F": F, "H": H, "H_spacing": "index j at phase (k+1+j)B"}
    inst = Instance.from_arrivals(k, n, arrivals, name=f"det-lb-k{k}-B{B}-{name}", meta=meta)
    claims = [Claim("V_OPT", "==", 2 * B + X, "construction"),
              Claim(f"V_{sim.policy}", "<=", X, "construction")]
    return GeneratedCase(inst, B, frozenset(D + F + H), claims)


# --- oblivious randomized lower bound -------------------------------------


def _rlb_frame(i, j, m, y, B):
    return (i - 1) * y * B + (j - 1) * B + m


def _rlb_arrivals(k, B, y, z):
    out = []
    for i in range(1, k):
        for x in range(1, k + 1):
            start = (i + x - 2) * y * B
            burst = x == k and i != z
            for j in range(1, y + 1):
                t = start if burst else start + (j - 1) * B
                out += [(t, PacketId(_rlb_frame(i, j, m, y, B), x)) for m in range(1, B + 1)]
    return out


def gen_rand_lower_bound(k, B, y, z) -> GeneratedCase:
    """Groups of yB frames fed in staggered rounds; only group z's last packets trickle.

    Group i's x-packets (x < k) arrive as a round of y subrounds (B packets,
    then B-1 quiet phases) starting at phase (i+x-2)yB. Group i's k-packets
    arrive in one burst at (i+k-2)yB unless i == z, which gets a full round.
    """
    if k < 3:
        raise ValueError("k must be >= 3")
    if not 1 <= z <= k - 1:
        raise ValueError(f"z must lie in [1, {k - 1}]")
    n = (k - 1) * y * B
    meta = {"family": "rand-lb", "k": k, "B": B, "y": y, "z": z}
    inst = Instance.from_arrivals(k, n, _rlb_arrivals(k, B, y, z),
                                  name=f"rand-lb-k{k}-B{B}-y{y}-z{z}", meta=meta)
    witness = frozenset(_rlb_frame(z, j, m, y, B) for j in range(1, y + 1) for m in range(1, B + 1))
    claims = [Claim("V_OPT", ">=", y * B, "witness"),
              Claim("V_ALG", "<=", Fraction(y * B, k - 1) + (k - 2) * B, "construction")]
    return GeneratedCase(inst, B, witness, claims)


def group_acceptances(k, B, y, alg="mf", trials=1, seed=0, **alg_opts):
    """Mean number of packets of P(i, ., k-i) the policy accepts, for i = 1..k-1.

    Only the z-independent prefix (phases before (k-1)yB) is simulated. With
    trials > 1, `alg` must be a callable (B, k, rng) -> Policy and runs draw
    from one generator seeded with `seed`.
    """
    horizon = (k - 1) * y * B
    prefix = [(t, p) for t, p in _rlb_arrivals(k, B, y, 1) if t < horizon]
    inst = Instance.from_arrivals(k, (k - 1) * y * B, prefix)
    lo = (k - 2) * y * B
    group_size = y * B
    totals = np.zeros(k - 1)
    rng = np.random.default_rng(seed)
    for _ in range(trials):
        policy = alg
        if trials > 1:
            policy = alg(B, k, rng=rng, **alg_opts)
        sim = run_policy(inst, B, policy, **({} if trials > 1 else alg_opts))
        for e in sim.trace:
            if e.actor == sim.policy and e.action == "accept" and lo <= e.phase < horizon:
                i = (e.frame - 1) // group_size + 1
                if e.j == k - i:
                    totals[i - 1] += 1
    return totals / trials


def choose_z(k, B, y, alg="mf", trials=1, seed=0, **alg_opts) -> int:
    """Group whose (k-i)-packets the policy accepts least often; smallest index on ties."""
    acc = group_acceptances(k, B, y, alg, trials, seed, **alg_opts)
    return int(np.flatnonzero(acc == acc.min())[0]) + 1


# --- SP-killer --------------------------------------------------------------


def gen_sp_killer(k, B) -> GeneratedCase:
    """Input on which static partitioning completes only floor(B/k) frames.

    All 1-packets come first in bursts of B every B phases, then all
    2-packets, and so on; j-packets come in bursts over frame ranges that
    double with j, so the few frames SP keeps are repeatedly the wrong ones.
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    if B < k:
        raise ValueError("B must be >= k")
    D = 3 * B
    N = 3 * 2 ** (k - 1)
    A = B // k
    arrivals = []

    def burst(t, lo, hi, j):
        arrivals.extend((t, PacketId(f, j)) for f in range(lo, hi + 1))

    t = 0
    for w in range(1, N + 1):
        burst(t, (w - 1) * B + 1, w * B, 1)
        t += B
    for j in range(2, k + 1):
        t = (j - 1) * N * B
        for y in range(2 ** (k - j)):
            base = y * 2 ** (j - 1) * D
            burst(t, base + 1, base + 2 ** (j - 2) * D + D, j)
            t += B
            for x in range(1, 2 ** (j - 2)):
                lo = base + 2 ** (j - 2) * D + x * D
                burst(t, lo + 1, lo + D, j)
                t += B

    offsets = [0] + [sum(2 ** (k - j - 1) * D for j in range(1, z)) for z in range(2, k)]
    witness = frozenset(f for b in offsets for f in range(b + D + 1, b + D + B + 1))
    meta = {"family": "sp-killer", "k": k, "B": B, "D": D, "N": N, "offsets": offsets}
    inst = Instance.from_arrivals(k, N * B, arrivals, name=f"sp-killer-k{k}-B{B}", meta=meta)
    claims = [Claim("V_SP", "==", A, "construction"),
              Claim("V_OPT", ">=", (k - 1) * B, "witness"),
              Claim("V_MF", ">=", k * (A // 2), "construction")]
    return GeneratedCase(inst, B, witness, claims)


# --- worked MF example (k=3, B=12) ----------------------------------------

# (phase, first frame, last frame, GR1 action, MF action, case, block)
_FIRST_PACKETS = [
    (0, 1, 4, "accept", "accept", "1.2.1", 1),
    (0, 5, 12, "accept", "reject", "1.2.2", 1),
    (0, 13, 24, "reject", "reject", "1.1", 1),
    (12, 25, 36, "accept", "reject", "1.2.2", 1),
    (24, 37, 47, "accept", "reject", "1.2.2", 1),
    (24, 48, 48, "accept", "reject", "1.2.3", 1),
    (36, 49, 52, "accept", "accept", "1.2.1", 2),
    (36, 53, 60, "accept", "reject", "1.2.2", 2),
    (48, 61, 72, "accept", "reject", "1.2.2", 2),
    (60, 73, 83, "accept", "reject", "1.2.2", 2),
    (60, 84, 84, "accept", "reject", "1.2.3", 2),
    (72, 85, 88, "accept", "accept", "1.2.1", 3),
    (72, 89, 96, "accept", "reject", "1.2.2", 3),
    (84, 97, 108, "accept", "reject", "1.2.2", 3),
    (96, 109, 119, "accept", "reject", "1.2.2", 3),
    (96, 120, 120, "accept", "reject", "1.2.3", 3),
]

# (phase, j, first frame, last frame, MF action, case, preempted, flushed)
_LATER_PACKETS = [
    (108, 2, 1, 4, "accept", "2.2.1", (), ()),
    (108, 2, 5, 48, "reject", "2.1", (), ()),
    (120, 2, 49, 52, "accept", "2.2.1", (), ()),
    (120, 2, 53, 84, "reject", "2.1", (), ()),
    (120, 2, 85, 85, "accept", "2.2.2", ((51, 2),), ()),
    (120, 2, 86, 86, "accept", "2.2.2", ((52, 2),), ()),
    (120, 3, 1, 4, "accept", "2.2.1", (), ()),
    (120, 3, 5, 48, "reject", "2.1", (), ()),
    (120, 3, 49, 49, "accept", "2.2.2", ((3, 3),), ()),
    (120, 3, 50, 50, "accept", "2.2.2", ((4, 3),), ()),
    (120, 3, 51, 84, "reject", "2.1", (), ()),
    (120, 3, 85, 85, "accept", "2.2.2", ((49, 3), (49, 2)), ((50, 3), (50, 2))),
    (120, 3, 86, 86, "accept", "2.2.1", (), ()),
    (121, 2, 87, 88, "accept", "2.2.1", (), ()),
    (121, 2, 89, 120, "reject", "2.1", (), ()),
    (121, 3, 87, 87, "accept", "2.2.2", ((85, 3),), ()),
    (121, 3, 88, 88, "accept", "2.2.2", ((86, 2), (86, 3)), ()),
    # frames 89..120 need 3-packets too; they are already dead for MF
    (121, 3, 89, 120, "reject", "2.1", (), ()),
]


def gen_appendix_b() -> GeneratedCase:
    """120 frames, k=3, B=12, with MF's expected decisions as a golden trace."""
    k, B = 3, 12
    block = {}
    arrivals = []
    golden = []
    seq = {}

    def next_seq(t):
        seq[t] = seq.get(t, -1) + 1
        return seq[t]

    for t, lo, hi, gr1, act, case, g in _FIRST_PACKETS:
        for f in range(lo, hi + 1):
            block[f] = g
            arrivals.append((t, PacketId(f, 1)))
            s = next_seq(t)
            golden.append(TraceEvent(t, s, f, 1, "GR1", gr1, "", g))
            golden.append(TraceEvent(t, s, f, 1, "MF", act, case, g))
    for t, j, lo, hi, act, case, pre, fl in _LATER_PACKETS:
        for f in range(lo, hi + 1):
            arrivals.append((t, PacketId(f, j)))
            s = next_seq(t)
            golden.append(TraceEvent(t, s, f, j, "GR1", "reject", "", block[f]))
            golden += [TraceEvent(t, s, pf, pj, "MF", "preempt", case, block[pf]) for pf, pj in pre]
            golden.append(TraceEvent(t, s, f, j, "MF", act, case if not fl else "2.2.2", block[f]))
            golden += [TraceEvent(t, s, pf, pj, "MF", "flush", "2.2.2.1", block[pf]) for pf, pj in fl]

    meta = {"family": "appendix-b", "k": k, "B": B, "A": B // k}
    inst = Instance.from_arrivals(k, 120, arrivals, name="appendix-b", meta=meta)
    # MF completes f1, f2 (block 1) and f87, f88 (block 3); OPT keeps the first B frames
    claims = [Claim("V_MF", "==", 4, "construction"), Claim("V_OPT", "==", B, "exact search")]
    witness = frozenset(range(1, B + 1))
    return GeneratedCase(inst, B, witness, claims, golden=golden)


# --- random order-respecting ----------------------------------------------


@dataclass(frozen=True)
class BurstParams:
    p_same: float = 0.5  # chance the next frame's j-packet shares the previous one's phase
    max_gap: int = 3  # otherwise advance by 1..max_gap phases
    max_lag: int = 4  # extra delay (0..max_lag) of a j-packet after the frame's (j-1)-packet


def gen_random_order_respecting(k, n_frames, seed, burst_params=None, name=None) -> Instance:
    """Per-index arrival sequences that are non-decreasing in frame number.

    Every index orders the frames the same way (frame number, ties allowed),
    so any pair of frames is order-respecting by construction.
    """
    bp = burst_params or BurstParams()
    rng = np.random.default_rng(seed)
    arr = np.zeros((n_frames, k), dtype=np.int64)
    for j in range(k):
        prev = 0
        for f in range(n_frames):
            step = 0 if (f == 0 or rng.random() < bp.p_same) else int(rng.integers(1, bp.max_gap + 1))
            t = prev + step
            if j > 0:
                t = max(t, arr[f, j - 1] + int(rng.integers(0, bp.max_lag + 1)))
            arr[f, j] = t
            prev = t
    arrivals = sorted(((int(arr[f, j]), j + 1, f + 1) for f in range(n_frames) for j in range(k)))
    meta = {"family": "random", "k": k, "seed": seed,
            "burst": {"p_same": bp.p_same, "max_gap": bp.max_gap, "max_lag": bp.max_lag}}
    return Instance.from_arrivals(k, n_frames, [(t, PacketId(f, j)) for t, j, f in arrivals],
                                  name=name or f"random-k{k}-n{n_frames}-s{seed}", meta=meta)


FAMILIES = ("det-lb", "rand-lb", "sp-killer", "appendix-b", "random")


def generate(family, k=None, B=None, y=None, z=None, seed=0, alg="mf", frames=None) -> GeneratedCase:
    """Dispatch by family name, filling defaults the way the command line does."""
    if family == "det-lb":
        return gen_det_lower_bound(k, B, alg)
    if family == "rand-lb":
        if z is None:
            z = choose_z(k, B, y, alg)
        case = gen_rand_lower_bound(k, B, y, z)
        case.instance.meta["z_alg"] = alg
        case.claims = [c._replace(quantity=f"V_{alg.upper()}") if c.quantity == "V_ALG" else c
                       for c in case.claims]
        return case
    if family == "sp-killer":
        return gen_sp_killer(k, B)
    if family == "appendix-b":
        return gen_appendix_b()
    if family == "random":
        inst = gen_random_order_respecting(k, frames or 8, seed)
        return GeneratedCase(inst, B, frozenset(), [])
    raise ValueError(f"unknown family {family!r}; choose from {FAMILIES}")
