"""Online admission policies and the phase-by-phase simulator.

Every policy owns a FIFO buffer of capacity B. Per phase the simulator hands
the arriving packets to the policy, which decides them one at a time in its
own processing order, then transmits the head of every queue it owns.

Decisions are recorded as TraceEvent rows. A single decision may produce
several rows (e.g. MF's preempt + accept + flush) sharing one (phase, seq).
"""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

from .model import Instance, PacketId, append_drain

ACTIONS = ("accept", "reject", "preempt", "flush", "transmit")


class TraceEvent(NamedTuple):
    phase: int
    seq: int
    frame: int
    j: int
    actor: str
    action: str
    case: str = ""
    block: int | None = None

    @property
    def packet(self):
        return PacketId(self.frame, self.j)


class PolicyDecision(NamedTuple):
    action: str  # "accept" | "reject"
    preemptions: tuple  # PacketIds removed while deciding, in removal order
    case_label: str


class ConsistencyError(RuntimeError):
    """A policy reached a state its own guarantees rule out."""


@dataclass
class SimResult:
    policy: str
    B: int
    k: int
    completed: frozenset
    trace: list = field(repr=False)

    @property
    def gain(self):
        return len(self.completed)


class Policy:
    """Base class: FIFO buffer, validity bookkeeping, per-index counts.

    Subclasses implement `decide`. `step` wraps it and returns the trace rows
    (without phase/seq, which the simulator stamps).
    """

    name = "BASE"

    def __init__(self, B, k):
        if B < 1:
            raise ValueError(f"buffer size must be >= 1, got {B}")
        self.B = B
        self.k = k
        self.queue: list[PacketId] = []
        self.count = Counter()
        self.invalid: set[int] = set()
        self._rows: list = []

    # buffer primitives

    def _accept(self, p, case="", block=None):
        if len(self.queue) >= self.B:
            raise ConsistencyError(f"{self.name}: accepting {p} into a full buffer")
        self.queue.append(p)
        self.count[p.j] += 1
        self._rows.append((p, self.name, "accept", case, block))

    def _reject(self, p, case="", block=None):
        self.invalid.add(p.frame)
        self._rows.append((p, self.name, "reject", case, block))

    def _remove(self, p, action="preempt", case="", block=None):
        self.queue.remove(p)
        self.count[p.j] -= 1
        self.invalid.add(p.frame)
        self._rows.append((p, self.name, action, case, block))

    def order(self, arrivals):
        return list(arrivals)

    def decide(self, p: PacketId) -> PolicyDecision:
        raise NotImplementedError

    def step(self, p):
        self._rows = []
        self.decide(p)
        return self._rows

    def process_phase(self, arrivals):
        """Yield (packet, rows) in processing order."""
        for p in self.order(arrivals):
            yield p, self.step(p)

    def deliver(self):
        """Transmit queue heads; return rows for transmitted packets."""
        rows = []
        if self.queue:
            p = self.queue.pop(0)
            self.count[p.j] -= 1
            rows.append((p, self.name, "transmit", "", self.block_number(p)))
        return rows

    def block_number(self, p):
        return None


class Greedy(Policy):
    """Non-preemptive greedy: accept whenever the buffer has room."""

    name = "GREEDY"

    def decide(self, p):
        if len(self.queue) < self.B:
            self._accept(p)
            return PolicyDecision("accept", (), "")
        self._reject(p, "full")
        return PolicyDecision("reject", (), "full")


class StaticPartitioning(Policy):
    """Tail-drop into k virtual sub-buffers of floor(B/k) slots each.

    With skip_invalid=True, packets of frames already broken are rejected
    instead of occupying a slot.
    """

    name = "SP"

    def __init__(self, B, k, skip_invalid=False):
        super().__init__(B, k)
        self.A = B // k
        self.skip_invalid = skip_invalid

    def decide(self, p):
        if self.skip_invalid and p.frame in self.invalid:
            self._reject(p, "invalid")
            return PolicyDecision("reject", (), "invalid")
        if self.count[p.j] < self.A:
            self._accept(p)
            return PolicyDecision("accept", (), "")
        self._reject(p, "tail-drop")
        return PolicyDecision("reject", (), "tail-drop")


class GR1:
    """Shadow greedy over 1-packets only, with its own size-B FIFO."""

    name = "GR1"

    def __init__(self, B):
        self.B = B
        self.queue: list[PacketId] = []

    def step(self, p) -> bool:
        if p.j == 1 and len(self.queue) < self.B:
            self.queue.append(p)
            return True
        return False

    def deliver(self):
        return self.queue.pop(0) if self.queue else None


def decision_order(arrivals, block_of):
    """Stable sort by packet index, then by block number for j >= 2."""

    def key(p):
        if p.j == 1:
            return (1, 0)
        try:
            return (p.j, block_of[p.frame])
        except KeyError:
            raise ConsistencyError(
                f"{p} is being decided before its frame's 1-packet") from None

    return sorted(arrivals, key=key)


class MiddleDropFlush(Policy):
    """MIDDLE-DROP AND FLUSH.

    1-packets: a shadow GR1 decides which 1-packets count; the counter runs
    over GR1 acceptances modulo 3B, MF keeps only the first A of every 3B and
    tags each frame with the current block number. j-packets (j >= 2) of valid
    frames go into a j-sub-buffer of A slots; on overflow the
    (floor(A/2)+1)-th buffered j-packet is dropped together with its frame,
    and if that leaves at most floor(A/2) valid frames in the dropped frame's
    block, every buffered packet of that block is flushed.

    `A` may be overridden for fault-injection; by default A = floor(B/k).
    With A = 0 (B < k) no 1-packet is ever accepted and MF completes nothing.
    """

    name = "MF"

    def __init__(self, B, k, A=None):
        super().__init__(B, k)
        self.A = B // k if A is None else A
        self.gr1 = GR1(B)
        self.counter = 0
        self.block = 1
        self.block_of: dict[int, int] = {}
        self.valid_in_block = Counter()

    def block_number(self, p):
        return self.block_of.get(p.frame)

    def _invalidate(self, frame):
        if frame not in self.invalid:
            self.invalid.add(frame)
            u = self.block_of.get(frame)
            if u is not None:
                self.valid_in_block[u] -= 1

    def _reject(self, p, case="", block=None):
        self._invalidate(p.frame)
        self._rows.append((p, self.name, "reject", case, block))

    def _remove(self, p, action="preempt", case="", block=None):
        self.queue.remove(p)
        self.count[p.j] -= 1
        self._invalidate(p.frame)
        self._rows.append((p, self.name, action, case, block))

    def process_phase(self, arrivals):
        ones = [p for p in arrivals if p.j == 1]
        for p in ones:
            yield p, self.step(p)
        rest = [p for p in arrivals if p.j != 1]
        for p in decision_order(rest, self.block_of):
            yield p, self.step(p)

    def step(self, p):
        self._rows = []
        gr1_accepts = self.gr1.step(p)
        g = self.block if p.j == 1 else self.block_of.get(p.frame)
        self._rows.append((p, "GR1", "accept" if gr1_accepts else "reject", "", g))
        self.decide(p, gr1_accepts)
        return self._rows

    def decide(self, p, gr1_accepts=None):
        if gr1_accepts is None:
            gr1_accepts = self.gr1.step(p)
        if p.j == 1:
            return self._decide_first(p, gr1_accepts)
        return self._decide_later(p)

    def _decide_first(self, p, gr1_accepts):
        g = self.block
        self.block_of[p.frame] = g
        self.valid_in_block[g] += 1
        if not gr1_accepts:
            self._reject(p, "1.1", g)
            return PolicyDecision("reject", (), "1.1")
        self.counter += 1
        if self.counter <= self.A:
            if len(self.queue) >= self.B or self.count[1] >= self.A:
                raise ConsistencyError(
                    f"MF: no room for {p} with Counter={self.counter} <= A={self.A} "
                    f"(occupancy {len(self.queue)}, 1-packets {self.count[1]})")
            self._accept(p, "1.2.1", g)
            return PolicyDecision("accept", (), "1.2.1")
        if self.counter < 3 * self.B:
            self._reject(p, "1.2.2", g)
            return PolicyDecision("reject", (), "1.2.2")
        self._reject(p, "1.2.3", g)
        self.counter = 0
        self.block += 1
        return PolicyDecision("reject", (), "1.2.3")

    def _decide_later(self, p):
        g = self.block_of.get(p.frame)
        if g is None:
            raise ConsistencyError(f"MF: {p} arrives before its frame's 1-packet was decided")
        if p.frame in self.invalid:
            self._reject(p, "2.1", g)
            return PolicyDecision("reject", (), "2.1")
        if self.count[p.j] < self.A:
            self._accept(p, "2.2.1", g)
            return PolicyDecision("accept", (), "2.2.1")

        same_index = [q for q in self.queue if q.j == p.j]
        victim = same_index[self.A // 2]
        u = self.block_of[victim.frame]
        h = self.valid_in_block[u]  # valid frames of block u at t-, victim's included
        removed = [victim]
        self._remove(victim, "preempt", "2.2.2", u)
        for q in [q for q in self.queue if q.frame == victim.frame]:
            self._remove(q, "preempt", "2.2.2", u)
            removed.append(q)
        self._accept(p, "2.2.2", g)
        if h <= self.A // 2:
            for q in [q for q in self.queue if self.block_of[q.frame] == u]:
                self._remove(q, "flush", "2.2.2.1", u)
                removed.append(q)
            return PolicyDecision("accept", tuple(removed), "2.2.2.1")
        return PolicyDecision("accept", tuple(removed), "2.2.2")

    def deliver(self):
        rows = super().deliver()
        q = self.gr1.deliver()
        if q is not None:
            rows.append((q, "GR1", "transmit", "", self.block_of.get(q.frame)))
        return rows


POLICIES = {
    "mf": MiddleDropFlush,
    "sp": StaticPartitioning,
    "greedy": Greedy,
}


def make_policy(policy, B, k, **opts) -> Policy:
    if isinstance(policy, Policy):
        return policy
    if isinstance(policy, str):
        try:
            cls = POLICIES[policy.lower()]
        except KeyError:
            raise ValueError(f"unknown policy {policy!r}; choose from {sorted(POLICIES)}") from None
        return cls(B, k, **opts)
    return policy(B, k, **opts)


def run_policy(instance: Instance, B: int, policy="mf", **opts) -> SimResult:
    """Simulate `policy` over the instance plus a drain of B empty phases.

    `policy` is a name from POLICIES, a Policy subclass, or any callable
    (B, k) -> Policy. Extra keyword arguments go to the constructor.
    """
    pol = make_policy(policy, B, instance.k, **opts)
    trace = []
    transmitted = Counter()
    for t, arrivals in enumerate(append_drain(instance, B).phases):
        seq = 0
        for seq, (p, rows) in enumerate(pol.process_phase(arrivals)):
            trace.extend(TraceEvent(t, seq, q.frame, q.j, actor, action, case, block)
                         for q, actor, action, case, block in rows)
        dseq = len(arrivals)
        for q, actor, action, case, block in pol.deliver():
            trace.append(TraceEvent(t, dseq, q.frame, q.j, actor, action, case, block))
            if actor == pol.name:
                transmitted[q.frame] += 1
    completed = frozenset(f for f, c in transmitted.items() if c == instance.k)
    return SimResult(pol.name, B, instance.k, completed, trace)


TRACE_COLUMNS = ("phase", "seq", "frame", "j", "actor", "action", "case", "block")


def write_trace(trace, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for e in trace:
            w.writerow([e.phase, e.seq, e.frame, e.j, e.actor, e.action, e.case,
                        "" if e.block is None else e.block])


def read_trace(path) -> list[TraceEvent]:
    out = []
    with Path(path).open(newline="") as fh:
        r = csv.DictReader(fh)
        for row in r:
            out.append(TraceEvent(
                int(row["phase"]), int(row["seq"]), int(row["frame"]), int(row["j"]),
                row["actor"], row["action"], row["case"],
                int(row["block"]) if row["block"] else None))
    return out
