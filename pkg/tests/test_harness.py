import json
import math
from dataclasses import replace
from fractions import Fraction

import pytest

from kframe.generators import gen_appendix_b, gen_det_lower_bound, gen_sp_killer, GeneratedCase
from kframe.harness import (CertificateError, check_invariants, compare_trace, det_lower_bound,
                            expand, mf_upper_bound, ratio, run_ratio, sweep, write_sweep)
from kframe.model import Instance
from kframe.policies import MiddleDropFlush, read_trace, run_policy, write_trace


@pytest.fixture(scope="module")
def appb():
    case = gen_appendix_b()
    return case, run_policy(case.instance, case.B, "mf")


def checks(violations):
    return {v.check for v in violations}


def test_bounds():
    assert mf_upper_bound(2, 4) == Fraction(5 * 4 + 2 - 4, 1)
    assert mf_upper_bound(3, 12) == Fraction(60, 2)
    with pytest.raises(ValueError):
        mf_upper_bound(3, 5)
    assert det_lower_bound(2, 4) == 3
    assert det_lower_bound(3, 7) == Fraction(14, 3) + 1
    assert det_lower_bound(4, 2) == math.inf


def test_ratio_conventions():
    assert ratio(24, 2) == 12
    assert ratio(3, 0) == math.inf
    assert ratio(0, 0) == 1


def test_clean_runs_have_no_violations(appb):
    case, sim = appb
    assert check_invariants(sim, case.instance, case.B) == []
    sp = gen_sp_killer(4, 8)
    for pol in ("sp", "mf", "greedy"):
        assert check_invariants(run_policy(sp.instance, 8, pol), sp.instance, 8) == []


# --- fault injection: each checker must be able to fail --------------------


def test_swapped_blocks_break_block_order(appb):
    case, sim = appb
    swap = {1: 2, 2: 1}
    bad = replace(sim, trace=[e._replace(block=swap.get(e.block, e.block)) for e in sim.trace])
    assert "block-order" in checks(check_invariants(bad, case.instance, case.B))


def test_reordered_transmissions_break_fifo(appb):
    case, sim = appb
    tx = [i for i, e in enumerate(sim.trace) if e.actor == "MF" and e.action == "transmit"]
    tr = list(sim.trace)
    a, b = tx[0], tx[1]
    tr[a], tr[b] = tr[a]._replace(frame=tr[b].frame, j=tr[b].j), tr[b]._replace(frame=tr[a].frame, j=tr[a].j)
    assert "fifo" in checks(check_invariants(replace(sim, trace=tr), case.instance, case.B))


def test_smaller_buffer_breaks_occupancy(appb):
    case, _ = appb
    sim = run_policy(case.instance, 12, "greedy")
    assert "occupancy" in checks(check_invariants(sim, case.instance, 11))


def test_uncapped_policy_breaks_index_cap(appb):
    case, _ = appb
    sim = run_policy(case.instance, 12, "greedy")
    tr = [e._replace(actor="SP") if e.actor == "GREEDY" else e for e in sim.trace]
    assert "index-cap" in checks(check_invariants(replace(sim, policy="SP", trace=tr), case.instance, 12))


def test_reaccepting_dead_frame_is_caught(appb):
    case, sim = appb
    i = next(i for i, e in enumerate(sim.trace) if e.actor == "MF" and e.case == "2.1")
    tr = list(sim.trace)
    tr[i] = tr[i]._replace(action="accept")
    assert "dropped-frame" in checks(check_invariants(replace(sim, trace=tr), case.instance, 12))


def test_partial_flush_is_caught(appb):
    case, sim = appb
    i = next(i for i, e in enumerate(sim.trace) if e.action == "flush")
    tr = sim.trace[:i] + sim.trace[i + 1:]
    assert "flush-complete" in checks(check_invariants(replace(sim, trace=tr), case.instance, 12))


def test_wrong_partition_breaks_first_packet_quota(appb):
    case, _ = appb
    sim = run_policy(case.instance, 12, MiddleDropFlush(12, 3, A=5))
    assert "first-packet-quota" in checks(check_invariants(sim, case.instance, 12))


def test_lost_transmission_breaks_latency(appb):
    case, sim = appb
    i = next(i for i, e in enumerate(sim.trace)
             if e.actor == "MF" and e.action == "transmit" and e.j == 1)
    tr = sim.trace[:i] + sim.trace[i + 1:]
    assert "first-packet-latency" in checks(check_invariants(replace(sim, trace=tr), case.instance, 12))


# --- golden traces -----------------------------------------------------------


def test_golden_trace_matches(appb):
    case, sim = appb
    assert compare_trace(sim.trace, case.golden) == []


def test_golden_guard_catches_wrong_partition(appb):
    case, _ = appb
    # ceil(12/3) == floor(12/3), so the guard uses one more slot instead
    sim = run_policy(case.instance, 12, MiddleDropFlush(12, 3, A=5))
    diffs = compare_trace(sim.trace, case.golden)
    assert diffs and diffs[0].phase == 0


def test_ceil_partition_differs_when_k_does_not_divide_B():
    case = gen_det_lower_bound(3, 10)
    good = run_policy(case.instance, 10, "mf")
    bad = run_policy(case.instance, 10, MiddleDropFlush(10, 3, A=-(-10 // 3)))
    assert compare_trace(bad.trace, good.trace) != []


def test_trace_roundtrip_gives_empty_diff(tmp_path, appb):
    case, sim = appb
    write_trace(sim.trace, tmp_path / "t.csv")
    assert compare_trace(read_trace(tmp_path / "t.csv"), case.golden) == []


def test_transmissions_compared_only_when_golden_has_them(appb):
    case, sim = appb
    no_tx = [e for e in sim.trace if e.action != "transmit"]
    assert compare_trace(no_tx, sim.trace) != []
    assert compare_trace(sim.trace, no_tx) == []


# --- ratio reports ------------------------------------------------------------


def test_sp_killer_certificate_ratios():
    case = gen_sp_killer(4, 8)
    rep = run_ratio(case.instance, 8, ["mf", "sp"], "certificate", case)
    assert rep.ok
    assert rep.ratios["SP"] == 12 and rep.ratios["MF"] <= 6
    assert rep.to_json()["claims"] == {"V_SP == 2": True, "V_OPT >= 24": True, "V_MF >= 4": True}


def test_single_frame_ratios_are_one():
    inst = Instance.from_arrivals(2, 1, [(0, (1, 1)), (1, (1, 2))])
    rep = run_ratio(inst, 2, ["mf", "sp", "greedy"], "oracle")
    assert set(rep.ratios.values()) == {1}


def test_det_lb_ratio_and_inf_encoding():
    rep = run_ratio(gen_det_lower_bound(2, 4).instance, 4, ["mf"], "oracle")
    assert rep.ratios["MF"] >= 3
    case = gen_det_lower_bound(4, 2)
    rep = run_ratio(case.instance, 2, ["mf"], "certificate", case)
    assert rep.to_json()["ratios"]["MF"] == "inf"
    json.dumps(rep.to_json())


def test_infeasible_certificate_is_fatal():
    case = gen_sp_killer(2, 4)
    bad = GeneratedCase(case.instance, 4, frozenset(range(1, 25)), [])
    with pytest.raises(CertificateError):
        run_ratio(case.instance, 4, ["sp"], "certificate", bad)
    with pytest.raises(ValueError):
        run_ratio(case.instance, 4, ["sp"], "certificate")


def test_failed_claim_marks_report_not_ok():
    case = gen_sp_killer(2, 4)
    case.claims[0] = case.claims[0]._replace(value=99)
    assert not run_ratio(case.instance, 4, ["sp"], "certificate", case).ok


# --- sweeps ---------------------------------------------------------------------

GRID = {"entries": [
    {"family": "det-lb", "k": [2, 3], "B": {"min": 1, "min_k_offset": -1, "max": 5}},
    {"family": "random", "k": [2], "B": [4], "seeds": [0, 12], "frames": [1, 12],
     "policies": ["mf", "sp"]},
    {"family": "sp-killer", "k": [2], "B": [4, 6], "policies": ["sp", "mf"]},
    {"family": "rand-lb", "k": [3], "B": [4], "y": [6]},
]}


def test_expand_b_ranges():
    jobs = expand({"entries": [{"family": "det-lb", "k": [4], "B": {"min": 2, "min_k_offset": -1, "max": 5}}]})
    assert [j["B"] for j in jobs] == [3, 4, 5]
    jobs = expand({"entries": [{"family": "random", "k": [2], "B": {"min_k_factor": 2, "max": 5}, "seeds": [0, 2]}]})
    assert [(j["B"], j["seed"]) for j in jobs] == [(4, 0), (4, 1), (5, 0), (5, 1)]


def test_sweep_is_deterministic_and_order_independent(tmp_path):
    serial = sweep(GRID, workers=1)
    parallel = sweep(GRID, workers=3)
    assert serial == parallel
    assert len(serial) == 9 + 12 + 2 + 1
    assert all(r["ok"] for r in serial), [r for r in serial if not r["ok"]]
    write_sweep(serial, tmp_path)
    assert json.loads((tmp_path / "sweep.json").read_text())[0]["family"] == "det-lb"
    assert len((tmp_path / "sweep.csv").read_text().splitlines()) == len(serial) + 1


def test_empty_sweep():
    assert sweep({"entries": []}) == []
    assert sweep({}) == []
