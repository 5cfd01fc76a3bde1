"""Exact offline optimum over whole-frame subsets.

OPT can be taken to never preempt and never accept a packet of a frame it
does not complete, so V_OPT is the largest set of frames whose packets can
all be accepted without the buffer ever holding more than B packets.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .model import Instance, append_drain

DEFAULT_BRUTE_LIMIT = 22
LIMIT_ENV = "KFRAME_ORACLE_LIMIT"


class OracleLimitError(ValueError):
    pass


@dataclass(frozen=True)
class OptResult:
    gain: int
    witness: frozenset
    profile: tuple = field(repr=False)
    proven: bool = True
    nodes: int = 0

    def to_json(self):
        return {"gain": self.gain, "witness": sorted(self.witness),
                "profile": list(self.profile), "proven": self.proven}


def brute_limit():
    return int(os.environ.get(LIMIT_ENV, DEFAULT_BRUTE_LIMIT))


def occupancy_profile(instance: Instance, subset, B: int) -> list[int]:
    """Occupancy right after each arrival subphase when exactly `subset` is accepted.

    Runs over the drained timeline, so the final entries show the buffer
    emptying. Values are not clamped: an entry above B marks an overflow.
    """
    chosen = set(subset)
    o = 0
    out = []
    for arrivals in append_drain(instance, B).phases:
        o += sum(1 for p in arrivals if p.frame in chosen)
        out.append(o)
        if o > 0:
            o -= 1
    return out


def feasible(instance: Instance, subset, B: int) -> bool:
    chosen = set(subset)
    o = 0
    for arrivals in append_drain(instance, B).phases:
        o += sum(1 for p in arrivals if p.frame in chosen)
        if o > B:
            return False
        if o > 0:
            o -= 1
    return True


def _peak_load(load: np.ndarray) -> np.ndarray:
    """Peak occupancy of FIFO loads, vectorised over the leading axes.

    With W(t) = (arrivals up to t) - t, the occupancy after arrivals at t is
    W(t) - min_{r < t} W(r) + 1, taking W(-1) = 1.
    """
    T = load.shape[-1]
    w = np.cumsum(load, axis=-1) - np.arange(T)
    prev = np.concatenate([np.ones(load.shape[:-1] + (1,), dtype=w.dtype), w[..., :-1]], axis=-1)
    return (w - np.minimum.accumulate(prev, axis=-1) + 1).max(axis=-1)


def _result(instance, witness, B, **kw):
    w = frozenset(int(f) for f in witness)
    return OptResult(len(w), w, tuple(occupancy_profile(instance, w, B)), **kw)


def opt_bruteforce(instance: Instance, B: int, limit=None) -> OptResult:
    """Enumerate all 2^n frame subsets; lexicographically smallest best witness."""
    n = instance.n_frames
    limit = brute_limit() if limit is None else limit
    if n > limit:
        raise OracleLimitError(
            f"{n} frames exceed the brute-force limit {limit}; use opt_branch_bound "
            f"or raise {LIMIT_ENV}")
    counts = instance.frame_counts()[:, : instance.last_arrival + 1]
    best_size, best = -1, []
    bits = np.arange(n)
    chunk = 1 << 16
    for lo in range(0, 1 << n, chunk):
        masks = np.arange(lo, min(lo + chunk, 1 << n), dtype=np.int64)
        member = ((masks[:, None] >> bits) & 1).astype(np.int64)
        ok = _peak_load(member @ counts) <= B
        sizes = member.sum(axis=1)
        sizes[~ok] = -1
        top = sizes.max()
        if top < best_size:
            continue
        cands = masks[sizes == top]
        if top > best_size:
            best_size, best = top, []
        best.extend(int(m) for m in cands)
    witnesses = [tuple(i + 1 for i in range(n) if (m >> i) & 1) for m in best]
    return _result(instance, min(witnesses), B)


def window_constraints(instance: Instance):
    """Rows (s, t) over arrival phases: chosen packets arriving in [s, t] <= B + t - s.

    Together these are equivalent to feasibility. Returns (matrix, slack)
    where matrix[r, f] counts frame f's packets in window r and slack[r] is
    t - s, so the constraint reads matrix @ x <= B + slack.
    """
    T = instance.last_arrival + 1
    counts = instance.frame_counts()[:, :T]
    active = np.flatnonzero(counts.sum(axis=0))
    prefix = np.concatenate([np.zeros((instance.n_frames, 1), dtype=np.int64),
                             np.cumsum(counts, axis=1)], axis=1)
    s_idx, t_idx = np.triu_indices(len(active))
    s, t = active[s_idx], active[t_idx]
    matrix = (prefix[:, t + 1] - prefix[:, s]).T
    return matrix, (t - s)


def opt_branch_bound(instance: Instance, B: int, node_limit=None) -> OptResult:
    """Depth-first include/exclude search over frames ordered by first arrival.

    Frames that no longer fit next to the chosen ones leave the candidate
    pool (the feasible family is downward closed). A node is cut when
    chosen + |pool| cannot beat the incumbent, or when the LP relaxation of
    the window-capacity constraints restricted to the pool cannot. An
    integral LP optimum closes the node outright; otherwise the search
    branches on the earliest-arriving fractional frame.

    With node_limit set the search may stop early; the result then has
    proven=False and the witness is the best found.
    """
    n = instance.n_frames
    T = instance.last_arrival + 1
    counts = instance.frame_counts()[:, :T]
    first = instance.arrival_matrix()[:, 0]
    rank = np.empty(n, dtype=np.int64)
    rank[sorted(range(n), key=lambda f: (first[f], f))] = np.arange(n)
    matrix, slack = window_constraints(instance)
    cap = B + slack

    load = np.zeros(T, dtype=np.int64)
    best = []
    for f in sorted(range(n), key=lambda f: rank[f]):
        if _peak_load(load + counts[f]) <= B:
            load += counts[f]
            best.append(f)
    nodes = 0
    aborted = False

    def relax(chosen, pool):
        rhs = cap - matrix[:, chosen].sum(axis=1)
        sub = matrix[:, pool]
        keep = sub.any(axis=1)
        if not keep.any():
            return float(len(pool)), np.ones(len(pool))
        res = linprog(-np.ones(len(pool)), A_ub=sub[keep], b_ub=rhs[keep],
                      bounds=(0, 1), method="highs")
        if res.status != 0:
            return float(len(pool)), None
        return -res.fun, res.x

    def dfs(chosen, load, pool):
        nonlocal best, nodes, aborted
        nodes += 1
        if node_limit is not None and nodes > node_limit:
            aborted = True
            return
        if len(chosen) > len(best):
            best = list(chosen)
        if len(chosen) + len(pool) <= len(best):
            return
        value, x = relax(chosen, pool)
        if len(chosen) + int(np.floor(value + 1e-7)) <= len(best):
            return
        frac = [pool[i] for i in np.flatnonzero(np.abs(x - np.round(x)) > 1e-7)] if x is not None else pool
        if not frac:
            picked = [pool[i] for i in np.flatnonzero(np.round(x) == 1)]
            if _peak_load(load + counts[picked].sum(axis=0)) <= B:
                if len(chosen) + len(picked) > len(best):
                    best = chosen + picked
                return
            frac = pool
        f = min(frac, key=lambda g: rank[g])
        rest = [g for g in pool if g != f]
        new_load = load + counts[f]
        compat = [g for g in rest if _peak_load(new_load + counts[g]) <= B]
        dfs(chosen + [f], new_load, compat)
        if aborted:
            return
        dfs(chosen, load, rest)

    pool = sorted((f for f in range(n) if _peak_load(counts[f]) <= B), key=lambda f: rank[f])
    dfs([], np.zeros(T, dtype=np.int64), pool)
    return _result(instance, [f + 1 for f in best], B, proven=not aborted, nodes=nodes)


def solve(instance: Instance, B: int, mode="auto", **kw) -> OptResult:
    if mode == "brute" or (mode == "auto" and instance.n_frames <= min(brute_limit(), 16)):
        return opt_bruteforce(instance, B, **kw)
    return opt_branch_bound(instance, B, **kw)

