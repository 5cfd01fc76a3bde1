from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from kframe.generators import (BurstParams, Claim, choose_z, gen_appendix_b, gen_det_lower_bound,
                               gen_rand_lower_bound, gen_random_order_respecting, gen_sp_killer,
                               generate, group_acceptances)
from kframe.harness import compare_trace
from kframe.model import validate_order_respecting
from kframe.opt import feasible, opt_branch_bound
from kframe.policies import Greedy, run_policy


def assert_certified(case):
    assert validate_order_respecting(case.instance) == []
    assert feasible(case.instance, case.opt_witness, case.B)


def test_claim_relations():
    assert Claim("V_MF", "<=", Fraction(7, 2), "x").holds(3)
    assert not Claim("V_MF", "==", 2, "x").holds(3)
    assert Claim("V_OPT", ">=", 4, "x").holds(4)
    with pytest.raises(ValueError):
        Claim("V_MF", "<", 1, "x").holds(0)


@pytest.mark.parametrize("alg", ["mf", "sp", "greedy"])
@pytest.mark.parametrize("k", [2, 3, 4])
def test_det_lower_bound_any_policy(alg, k):
    for B in range(max(1, k - 1), 11):
        case = gen_det_lower_bound(k, B, alg)
        X = B // (k - 1)
        assert_certified(case)
        assert len(case.opt_witness) == 2 * B + X
        assert run_policy(case.instance, B, alg).gain <= X


def test_det_lower_bound_small_buffer_starves_policy():
    case = gen_det_lower_bound(4, 2)
    assert case.instance.meta["X"] == 0
    assert run_policy(case.instance, 2, "mf").gain == 0
    assert len(case.opt_witness) == 4
    assert_certified(case)


def test_det_lower_bound_sets_are_disjoint_and_sized():
    m = gen_det_lower_bound(3, 6).instance.meta
    D, F, H = set(m["D"]), set(m["F"]), set(m["H"])
    assert (len(D), len(F), len(H)) == (6, 3, 6)
    assert not (D & F or D & H or F & H)
    assert max(D) <= 12 < min(F) and max(F) <= 21 < min(H)


def test_rand_lower_bound_shape():
    case = gen_rand_lower_bound(3, 4, 6, 2)
    assert case.instance.n_frames == 2 * 6 * 4
    assert len(case.opt_witness) == 24
    assert_certified(case)
    with pytest.raises(ValueError):
        gen_rand_lower_bound(2, 4, 6, 1)
    with pytest.raises(ValueError):
        gen_rand_lower_bound(3, 4, 6, 3)


@pytest.mark.parametrize("alg", ["mf", "sp", "greedy"])
@pytest.mark.parametrize("k,B,y", [(3, 4, 6), (4, 4, 3), (3, 6, 4), (5, 5, 2)])
def test_rand_lower_bound_against_chosen_group(alg, k, B, y):
    z = choose_z(k, B, y, alg)
    case = gen_rand_lower_bound(k, B, y, z)
    assert_certified(case)
    bound = Fraction(y * B, k - 1) + (k - 2) * B
    assert run_policy(case.instance, B, alg).gain <= bound


def test_group_acceptances_with_randomised_factory():
    det = group_acceptances(3, 4, 6, "greedy")
    rnd = group_acceptances(3, 4, 6, lambda B, k, rng: Greedy(B, k), trials=3, seed=1)
    assert list(det) == list(rnd)
    assert choose_z(3, 4, 6, "greedy") == int(det.argmin()) + 1


@pytest.mark.parametrize("k", [2, 3, 4, 5])
def test_sp_killer_grid(k):
    for B in range(k, 13):
        case = gen_sp_killer(k, B)
        A = B // k
        assert case.instance.n_frames == 3 * 2 ** (k - 1) * B
        assert len(case.opt_witness) == (k - 1) * B
        assert_certified(case)
        assert run_policy(case.instance, B, "sp").gain == A
        assert run_policy(case.instance, B, "mf").gain >= k * (A // 2)


def test_worked_example_case():
    case = gen_appendix_b()
    assert (case.instance.k, case.B, case.instance.meta["A"]) == (3, 12, 4)
    assert case.instance.n_frames == 120
    assert_certified(case)
    sim = run_policy(case.instance, 12, "mf")
    assert compare_trace(sim.trace, case.golden) == []
    opt = opt_branch_bound(case.instance, 12)
    assert opt.proven and opt.gain == len(case.opt_witness) == 12


@given(st.integers(1, 5), st.integers(1, 30), st.integers(0, 2**32 - 1),
       st.floats(0, 1), st.integers(1, 5), st.integers(0, 5))
def test_random_family_is_order_respecting(k, n, seed, p_same, gap, lag):
    inst = gen_random_order_respecting(k, n, seed, BurstParams(p_same, gap, lag))
    assert validate_order_respecting(inst) == []
    assert inst == gen_random_order_respecting(k, n, seed, BurstParams(p_same, gap, lag))


def test_random_family_seeds_differ():
    assert gen_random_order_respecting(3, 10, 1) != gen_random_order_respecting(3, 10, 2)


def test_generate_dispatch():
    assert generate("sp-killer", k=2, B=4).instance.name == "sp-killer-k2-B4"
    rl = generate("rand-lb", k=3, B=4, y=6, alg="sp")
    assert [c.quantity for c in rl.claims] == ["V_OPT", "V_SP"]
    assert generate("random", k=2, frames=5, seed=3).instance.n_frames == 5
    with pytest.raises(ValueError):
        generate("nope")


def test_sidecar_encodes_fractions():
    sc = gen_rand_lower_bound(5, 5, 2, 1).sidecar()
    assert {"quantity": "V_ALG", "relation": "<=", "value": "35/2", "source": "construction"} in sc["claims"]
