import math

import numpy as np
import pytest

from qcmatch import oracle
from qcmatch.engine import AlgorithmConfig
from qcmatch.instance import make_graph
from qcmatch.lpmatch import solve_lp_match
from qcmatch.oracle import (
    EnumerationBudgetError,
    SizeCapError,
    exact_event_probabilities,
    expected_opt_exact,
    max_weight_matching,
    monte_carlo_estimate,
)
from util import (
    b_unmatched_closed_form,
    matched_prob_closed_form,
    random_feasible_x,
    random_instance,
)


def test_max_weight_matching_examples():
    assert max_weight_matching([]) == ((), 0.0)
    assert max_weight_matching([(0, 0, 3.0)]) == ((0,), 3.0)
    sel, w = max_weight_matching([(0, 0, 1.0), (1, 0, 2.0)])
    assert sel == (1,) and w == 2.0
    sel, w = max_weight_matching([(0, 0, 1.0), (1, 1, 1.0), (0, 1, 1.9)])
    assert w == pytest.approx(2.0)


def test_expected_opt_examples():
    assert expected_opt_exact(make_graph(1, 1, [(0, 0, 2.0, 0.3)])) == pytest.approx(0.6)
    g = make_graph(2, 1, [(0, 0, 1.0, 0.5), (1, 0, 1.0, 0.5)])
    assert expected_opt_exact(g) == pytest.approx(0.75)
    g2 = make_graph(2, 2, [(0, 0, 1.0, 1.0), (0, 1, 1.0, 1.0), (1, 0, 1.0, 1.0), (1, 1, 1.0, 1.0)])
    assert expected_opt_exact(g2) == pytest.approx(2.0)


def test_expected_opt_matches_naive_enumeration():
    import itertools

    rng = np.random.default_rng(17)
    for _ in range(10):
        g = random_instance(rng, max_edges=5)
        naive = 0.0
        for bits in itertools.product([0, 1], repeat=len(g.edges)):
            prob = 1.0
            for e, bit in zip(g.edges, bits):
                prob *= e.p if bit else 1.0 - e.p
            realized = [(e.a, e.b, e.w) for e, bit in zip(g.edges, bits) if bit]
            naive += prob * max_weight_matching(realized)[1]
        assert expected_opt_exact(g) == pytest.approx(naive, abs=1e-12)


def test_expected_opt_size_cap():
    g = make_graph(21, 1, [])
    triples = [(a, 0, 1.0, 0.5) for a in range(21)]
    g = make_graph(21, 21, [(a, a, 1.0, 0.5) for a in range(21)])
    with pytest.raises(SizeCapError):
        expected_opt_exact(g)


def test_single_sure_edge_events():
    g = make_graph(1, 1, [(0, 0, 1.0, 1.0)])
    rep = exact_event_probabilities(g, [1.0], 1.0)
    one_minus = 1 - 1 / math.e
    assert rep.edge_matched[0] == pytest.approx(one_minus, abs=1e-12)
    assert rep.edge_examined[0] == pytest.approx(one_minus, abs=1e-12)
    assert rep.edge_available[0] == pytest.approx(1 / math.e, abs=1e-12)
    assert rep.expected_weight == pytest.approx(one_minus, abs=1e-12)


def test_a_side_partition_sums_to_one():
    rng = np.random.default_rng(19)
    for _ in range(15):
        g = random_instance(rng)
        x = random_feasible_x(g, rng, sigma=1.0)
        rep = exact_event_probabilities(g, x, 1.0)
        for v in range(g.a_count):
            total = rep.a_unmatched[v] + sum(
                rep.edge_matched[e] for e in g.edges_at_a[v]
            )
            assert total == pytest.approx(1.0, abs=1e-12)


def test_matched_probabilities_match_closed_form():
    rng = np.random.default_rng(20)
    for _ in range(15):
        g = random_instance(rng)
        for sigma in (0.5, 1.0):
            x = random_feasible_x(g, rng, sigma=sigma)
            rep = exact_event_probabilities(g, x, sigma)
            for e in range(len(g.edges)):
                want = matched_prob_closed_form(g, x, sigma, e)
                assert rep.edge_matched[e] == pytest.approx(want, abs=1e-9)
            for u in range(g.b_count):
                assert rep.b_unmatched[u] == pytest.approx(
                    b_unmatched_closed_form(g, x, sigma, u), abs=1e-9
                )


def test_vertex_outcome_masses_conserved():
    # every vertex's enumerated walk outcomes carry exactly the full mass
    from qcmatch.engine import DistributionCache, _compile_round
    from qcmatch.oracle import _vertex_outcomes

    rng = np.random.default_rng(18)
    for _ in range(10):
        g = random_instance(rng)
        x = random_feasible_x(g, rng, sigma=1.0)
        rnd = _compile_round(g, x, 1.0, range(len(g.edges)), DistributionCache(g, x))
        for v in range(rnd.aug.a_count):
            total = sum(q for _, _, q in _vertex_outcomes(rnd, v))
            assert total == pytest.approx(1.0, abs=1e-12)


def test_conditional_with_null_condition_equals_unconditional():
    g = make_graph(2, 2, [(0, 0, 1.0, 0.8), (1, 1, 1.0, 0.8), (0, 1, 1.0, 0.5)])
    x = [0.5, 0.5, 0.0]  # edge 2 never enters any permutation
    cond = [((("b_unmatched", 1),), (("not_examined", 2),))]
    rep = exact_event_probabilities(g, x, 1.0, cond)
    val = rep.conditionals[((("b_unmatched", 1),), (("not_examined", 2),))]
    assert val == pytest.approx(rep.b_unmatched[1], abs=1e-12)


def test_conditional_undefined_when_mass_zero():
    # b1's budget is fully owned by a0 (so no dummy pads it), making a0 the
    # only possible proposer there: a beaten proposal at b1 has mass zero
    g = make_graph(2, 2, [(0, 0, 1.0, 1.0), (0, 1, 1.0, 1.0)])
    x = [0.0, 1.0]
    cond = [((("not_proposed", 0, 0),), (("beaten_proposal", 0, 1), ("not_examined", 0)))]
    rep = exact_event_probabilities(g, x, 1.0, cond)
    (val,) = rep.conditionals.values()
    assert val is None


def test_budget_guard():
    g = make_graph(3, 3, [(a, b, 1.0, 0.5) for a in range(3) for b in range(3)])
    x = random_feasible_x(g, np.random.default_rng(0), sigma=1.0)
    with pytest.raises(EnumerationBudgetError):
        exact_event_probabilities(g, x, 1.0, budget=10)


def test_monte_carlo_deterministic_instance():
    g = make_graph(1, 1, [(0, 0, 2.5, 1.0)])
    est = monte_carlo_estimate(g, AlgorithmConfig("greedy"), 1000, 5)
    assert est.mean == 2.5 and est.stderr == 0.0


def test_monte_carlo_reproducible():
    g = make_graph(2, 2, [(0, 0, 1.0, 0.7), (1, 1, 1.0, 0.7), (0, 1, 1.0, 0.4)])
    sol = solve_lp_match(g)
    a = monte_carlo_estimate(g, AlgorithmConfig("alg1"), 50000, 9, x=sol.x)
    b = monte_carlo_estimate(g, AlgorithmConfig("alg1"), 50000, 9, x=sol.x)
    assert a == b


def test_monte_carlo_agrees_with_exact():
    g = make_graph(1, 1, [(0, 0, 1.0, 1.0)])
    est = monte_carlo_estimate(g, AlgorithmConfig("alg1"), 10**6, 13, x=[1.0])
    assert abs(est.mean - (1 - 1 / math.e)) <= 4 * est.stderr


def test_conditional_bundles():
    g = make_graph(2, 2, [(0, 0, 1.0, 0.8), (1, 0, 1.0, 0.8), (0, 1, 1.0, 0.8)])
    l7 = oracle.conditional_bundles(g, "unmatched-given-unexamined")
    assert len(l7) == 3
    assert l7[0] == ((("a_unmatched", 0),), (("not_examined", 0),))
    l8 = oracle.conditional_bundles(g, "correlation")
    assert l8[0] == ((("b_unmatched", 0),), (("a_unmatched", 0), ("not_examined", 0)))
    pc = oracle.conditional_bundles(g, "proposal-correlation")
    # edge 0=(a0,b0): other target b1, rivals at b0 are a0 and a1
    assert ((("not_proposed", 1, 0),), (("beaten_proposal", 0, 1), ("not_examined", 0))) in pc
