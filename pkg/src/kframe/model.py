"""Domain types for the k-frame FIFO buffer model.

An instance is a dense list of phases. Each phase carries the ordered list of
packets arriving in its arrival subphase; a delivery subphase follows every
arrival subphase. List order inside a phase is the tie-break order used by
policies that do not impose their own processing order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np


class PacketId(NamedTuple):
    frame: int
    j: int

    def __str__(self):
        return f"f{self.frame}.{self.j}"


class Violation(NamedTuple):
    """Frames `first` < `second` whose j-packets and j2-packets disagree on order."""

    first: int
    second: int
    j: int
    j2: int


class InstanceError(ValueError):
    """Structural problem with an instance (missing/duplicate packets, bad j-order)."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class ParseError(ValueError):
    def __init__(self, path, lineno, msg):
        self.path = path
        self.lineno = lineno
        super().__init__(f"{path}:{lineno}: {msg}")


@dataclass(frozen=True)
class Instance:
    k: int
    n_frames: int
    phases: tuple  # tuple[tuple[PacketId, ...], ...]
    name: str = ""
    meta: dict = field(default_factory=dict, compare=False)

    @classmethod
    def from_arrivals(cls, k, n_frames, arrivals, name="", meta=None):
        """Build from an iterable of (phase, PacketId-or-(frame, j)) pairs.

        Pairs sharing a phase keep the order in which they are given.
        """
        buckets = {}
        for phase, pkt in arrivals:
            buckets.setdefault(int(phase), []).append(PacketId(*pkt))
        last = max(buckets) if buckets else -1
        phases = tuple(tuple(buckets.get(t, ())) for t in range(last + 1))
        return cls(k, n_frames, phases, name, dict(meta or {}))

    @property
    def n_phases(self):
        return len(self.phases)

    @cached_property
    def arrival(self) -> dict:
        """PacketId -> arrival phase."""
        return {p: t for t, ps in enumerate(self.phases) for p in ps}

    @cached_property
    def last_arrival(self) -> int:
        for t in range(len(self.phases) - 1, -1, -1):
            if self.phases[t]:
                return t
        return -1

    def arrival_matrix(self) -> np.ndarray:
        """(n_frames, k) array of arrival phases; -1 where a packet is missing."""
        arr = np.full((self.n_frames, self.k), -1, dtype=np.int64)
        for p, t in self.arrival.items():
            if 1 <= p.frame <= self.n_frames and 1 <= p.j <= self.k:
                arr[p.frame - 1, p.j - 1] = t
        return arr

    def frame_counts(self) -> np.ndarray:
        """(n_frames, n_phases) count of each frame's packets arriving per phase."""
        counts = np.zeros((self.n_frames, max(self.n_phases, 1)), dtype=np.int64)
        for t, ps in enumerate(self.phases):
            for p in ps:
                counts[p.frame - 1, t] += 1
        return counts

    def packets(self) -> Iterable[tuple[int, PacketId]]:
        for t, ps in enumerate(self.phases):
            for p in ps:
                yield t, p

    def same_schedule(self, other: "Instance") -> bool:
        """Equal packet schedule, ignoring trailing empty phases and metadata."""
        a = self.phases[: self.last_arrival + 1]
        b = other.phases[: other.last_arrival + 1]
        return (self.k, self.n_frames, a) == (other.k, other.n_frames, b)


def check_structure(instance: Instance) -> list[str]:
    """Return every structural problem; empty list means well-formed."""
    problems = []
    k, n = instance.k, instance.n_frames
    if k < 1:
        problems.append(f"k must be >= 1, got {k}")
    if n < 1:
        problems.append(f"n_frames must be >= 1, got {n}")
    seen = {}
    for t, p in instance.packets():
        if not (1 <= p.frame <= n):
            problems.append(f"phase {t}: frame {p.frame} outside [1, {n}]")
            continue
        if not (1 <= p.j <= k):
            problems.append(f"phase {t}: {p} has j outside [1, {k}]")
            continue
        if p in seen:
            problems.append(f"duplicate packet {p} at phases {seen[p]} and {t}")
            continue
        seen[p] = t
    if not seen and not problems:
        problems.append("no packet arrives")
    for f in range(1, n + 1):
        missing = [j for j in range(1, k + 1) if (f, j) not in seen]
        if missing:
            problems.append(f"frame {f} is missing packets j={missing}")
            continue
        for j in range(2, k + 1):
            if seen[PacketId(f, j)] < seen[PacketId(f, j - 1)]:
                problems.append(
                    f"frame {f}: {j}-packet arrives at phase {seen[PacketId(f, j)]} "
                    f"before its {j - 1}-packet at {seen[PacketId(f, j - 1)]}"
                )
    return problems


def validate_structure(instance: Instance) -> None:
    problems = check_structure(instance)
    if problems:
        raise InstanceError(problems)


def validate_order_respecting(instance: Instance) -> list[Violation]:
    """All (f, f', j, j') where f precedes f' strictly at j and f' precedes f strictly at j'.

    Equal arrival phases are compatible with either order and never violate.
    Raises InstanceError if the instance is structurally malformed.
    """
    validate_structure(instance)
    arr = instance.arrival_matrix()
    n = instance.n_frames
    out = []
    chunk = max(1, 2_000_000 // max(1, n * instance.k))
    for lo in range(0, n, chunk):
        hi = min(n, lo + chunk)
        diff = np.sign(arr[lo:hi, None, :] - arr[None, :, :])  # (c, n, k)
        before = (diff < 0).any(axis=2)
        after = (diff > 0).any(axis=2)
        bad = before & after
        for a, b in zip(*np.nonzero(bad)):
            f, g = lo + int(a), int(b)
            if f >= g:
                continue
            js = np.flatnonzero(diff[a, b] < 0) + 1
            j2s = np.flatnonzero(diff[a, b] > 0) + 1
            for j in js:
                for j2 in j2s:
                    out.append(Violation(f + 1, g + 1, int(j), int(j2)))
    out.sort()
    return out


def append_drain(instance: Instance, B: int) -> Instance:
    """Pad with empty phases so at least B delivery-only phases follow the last arrival."""
    target = instance.last_arrival + 1 + B
    if instance.n_phases >= target:
        return instance
    phases = instance.phases + ((),) * (target - instance.n_phases)
    return Instance(instance.k, instance.n_frames, phases, instance.name, dict(instance.meta))


def write_instance(instance: Instance, path) -> None:
    """JSON Lines: header record, then one record per phase that has arrivals."""
    path = Path(path)
    with path.open("w") as fh:
        header = {"k": instance.k, "frames": instance.n_frames,
                  "name": instance.name, "meta": instance.meta}
        fh.write(json.dumps(header) + "\n")
        for t, ps in enumerate(instance.phases):
            if not ps:
                continue
            rec = {"phase": t, "arrivals": [{"frame": p.frame, "j": p.j} for p in ps]}
            fh.write(json.dumps(rec) + "\n")


def read_instance(path, validate=True) -> Instance:
    path = Path(path)
    header = None
    arrivals = []
    seen_phases = set()
    with path.open() as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise ParseError(path, lineno, f"invalid JSON: {e.msg}") from None
            if not isinstance(rec, dict):
                raise ParseError(path, lineno, "record must be a JSON object")
            if header is None:
                try:
                    header = (int(rec["k"]), int(rec["frames"]),
                              str(rec.get("name", "")), dict(rec.get("meta") or {}))
                except (KeyError, TypeError, ValueError) as e:
                    raise ParseError(path, lineno, f"bad header: {e!r}") from None
                continue
            try:
                t = int(rec["phase"])
                arr = rec["arrivals"]
                pkts = [PacketId(int(a["frame"]), int(a["j"])) for a in arr]
            except (KeyError, TypeError, ValueError) as e:
                raise ParseError(path, lineno, f"bad phase record: {e!r}") from None
            if t < 0:
                raise ParseError(path, lineno, f"negative phase {t}")
            if t in seen_phases:
                raise ParseError(path, lineno, f"phase {t} listed twice")
            seen_phases.add(t)
            arrivals.extend((t, p) for p in pkts)
    if header is None:
        raise ParseError(path, 1, "missing header record")
    k, n, name, meta = header
    inst = Instance.from_arrivals(k, n, arrivals, name=name, meta=meta)
    if validate:
        validate_structure(inst)
    return inst


