import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from kframe.generators import gen_random_order_respecting
from kframe.model import (Instance, InstanceError, PacketId, ParseError, Violation, append_drain,
                          check_structure, read_instance, validate_order_respecting, write_instance)

from conftest import make


def test_arrival_views(tiny):
    assert tiny.n_phases == 3
    assert tiny.last_arrival == 2
    assert tiny.arrival[PacketId(2, 2)] == 2
    assert tiny.arrival_matrix().tolist() == [[0, 1], [0, 2]]
    assert tiny.frame_counts().tolist() == [[1, 1, 0], [1, 0, 1]]


def test_from_arrivals_keeps_within_phase_order():
    inst = Instance.from_arrivals(1, 3, [(0, (3, 1)), (0, (1, 1)), (0, (2, 1))])
    assert [p.frame for p in inst.phases[0]] == [3, 1, 2]


def test_structure_problems_are_all_reported():
    inst = Instance.from_arrivals(2, 2, [(0, (1, 2)), (1, (1, 1)), (1, (1, 1)), (0, (3, 1))])
    problems = check_structure(inst)
    text = " | ".join(problems)
    assert "outside" in text and "duplicate" in text
    assert "frame 2 is missing" in text
    assert "before its 1-packet" in text


def test_no_arrivals_is_malformed():
    assert check_structure(Instance(1, 1, ())) != []


def test_order_violation_reported_with_indices():
    # frame 1 leads at j=1, frame 2 leads at j=2
    inst = make(2, 2, {(1, 1): 0, (2, 1): 1, (2, 2): 2, (1, 2): 3})
    assert validate_order_respecting(inst) == [Violation(1, 2, 1, 2)]


def test_ties_never_violate():
    inst = make(2, 2, {(1, 1): 0, (2, 1): 0, (2, 2): 1, (1, 2): 1})
    assert validate_order_respecting(inst) == []


def test_malformed_instance_raises_in_order_check():
    inst = Instance.from_arrivals(2, 1, [(0, (1, 1))])
    with pytest.raises(InstanceError) as ei:
        validate_order_respecting(inst)
    assert ei.value.problems


def test_order_check_matches_pairwise_definition():
    rng = np.random.default_rng(5)
    for _ in range(30):
        n, k = 6, 3
        arr = np.sort(rng.integers(0, 6, size=(n, k)), axis=1)
        inst = Instance.from_arrivals(k, n, [(int(arr[f, j]), (f + 1, j + 1))
                                             for f in range(n) for j in range(k)])
        want = sorted(Violation(f + 1, g + 1, j + 1, j2 + 1)
                      for f in range(n) for g in range(f + 1, n)
                      for j in range(k) for j2 in range(k)
                      if arr[f, j] < arr[g, j] and arr[f, j2] > arr[g, j2])
        assert validate_order_respecting(inst) == want


def test_append_drain(tiny):
    d = append_drain(tiny, 4)
    assert d.n_phases == tiny.last_arrival + 1 + 4
    assert d.same_schedule(tiny)
    assert append_drain(d, 4) is d


def test_roundtrip(tmp_path, tiny):
    p = tmp_path / "x.jsonl"
    write_instance(tiny, p)
    back = read_instance(p)
    assert back == tiny
    lines = p.read_text().splitlines()
    assert json.loads(lines[0])["k"] == 2
    assert len(lines) == 4  # header + three non-empty phases


@given(st.integers(1, 4), st.integers(1, 10), st.integers(0, 10**6))
def test_roundtrip_random(tmp_path_factory, k, n, seed):
    inst = gen_random_order_respecting(k, n, seed)
    p = tmp_path_factory.mktemp("rt") / "i.jsonl"
    write_instance(inst, p)
    back = read_instance(p)
    assert back == inst and back.meta == inst.meta


@pytest.mark.parametrize("body, needle, line", [
    ('{"k": 1, "frames": 1}\nnot json\n', "invalid JSON", 2),
    ('{"frames": 1}\n', "bad header", 1),
    ('{"k": 1, "frames": 1}\n{"phase": 0, "arrivals": [{"frame": 1}]}\n', "bad phase record", 2),
    ('{"k": 1, "frames": 1}\n{"phase": 0, "arrivals": []}\n{"phase": 0, "arrivals": []}\n',
     "listed twice", 3),
    ('{"k": 1, "frames": 1}\n{"phase": -1, "arrivals": []}\n', "negative", 2),
    ('', "missing header", 1),
])
def test_parse_errors_carry_line_numbers(tmp_path, body, needle, line):
    p = tmp_path / "bad.jsonl"
    p.write_text(body)
    with pytest.raises(ParseError) as ei:
        read_instance(p)
    assert needle in str(ei.value)
    assert ei.value.lineno == line


def test_read_validates_structure(tmp_path):
    p = tmp_path / "s.jsonl"
    p.write_text('{"k": 2, "frames": 1}\n{"phase": 0, "arrivals": [{"frame": 1, "j": 1}]}\n')
    with pytest.raises(InstanceError):
        read_instance(p)
    assert read_instance(p, validate=False).n_frames == 1


def test_crossing_pair_example():
    inst = make(2, 2, {(1, 1): 0, (1, 2): 5, (2, 1): 1, (2, 2): 4})
    assert validate_order_respecting(inst) == [Violation(1, 2, 1, 2)]


def test_everything_at_phase_zero_is_order_respecting():
    inst = make(3, 4, {(f, j): 0 for f in range(1, 5) for j in range(1, 4)})
    assert validate_order_respecting(inst) == []


def test_drain_length_when_last_arrival_is_phase_zero():
    inst = make(1, 1, {(1, 1): 0})
    d = append_drain(inst, 3)
    assert d.phases[1:] == ((), (), ())


def test_extra_drain_keeps_worked_example_outcome():
    from kframe.generators import gen_appendix_b
    from kframe.policies import run_policy

    inst = gen_appendix_b().instance
    longer = append_drain(inst, 40)
    assert run_policy(inst, 12, "mf").completed == run_policy(longer, 12, "mf").completed
