import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mpir.chart import kbest_trees, score_heads, tree_parts

from oracles import brute_kbest, part_score, trees


def _random_scores(rng, n, integer=False, second_order=True):
    if integer:
        arc = rng.integers(-2, 3, (n + 1, n + 1)).astype(float)
        sib = rng.integers(-2, 3, (n + 1, n + 1, n + 1)).astype(float)
    else:
        arc = rng.normal(size=(n + 1, n + 1))
        sib = rng.normal(size=(n + 1, n + 1, n + 1))
    return arc, (sib if second_order else None)


@pytest.mark.parametrize("second_order", [True, False])
@pytest.mark.parametrize("integer", [False, True])
def test_kbest_matches_enumeration(integer, second_order):
    rng = np.random.default_rng(7 + integer + 2 * second_order)
    for _ in range(60):
        n = int(rng.integers(1, 6))
        arc, sib = _random_scores(rng, n, integer, second_order)
        k = int(rng.integers(1, 12))
        got = kbest_trees(arc, sib, k)
        want = brute_kbest(arc, sib, k, n)
        assert [h for _, h in got] == [h for _, h in want]
        assert np.allclose([s for s, _ in got], [s for s, _ in want], atol=1e-9, rtol=0)


def test_returns_every_tree_when_k_is_large():
    rng = np.random.default_rng(1)
    arc, sib = _random_scores(rng, 4)
    got = kbest_trees(arc, sib, k=1000)
    assert len(got) == len(trees(4)) == 30
    assert len({h for _, h in got}) == 30


def test_all_ties_ordered_by_head_vector():
    n = 4
    got = kbest_trees(np.zeros((n + 1, n + 1)), np.zeros((n + 1, n + 1, n + 1)), k=50)
    assert [h for _, h in got] == sorted(trees(n))


def test_single_token():
    assert kbest_trees(np.zeros((2, 2)), None, k=3) == [(0.0, (0,))]


def test_tree_parts_first_child_marker():
    # 1 <- 2 -> 3, 2 -> 4, root -> 2
    parts = set(tree_parts((2, 0, 2, 2)))
    assert parts == {(0, 0, 2), (2, 2, 1), (2, 2, 3), (2, 3, 4)}


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_scores_agree_with_direct_sum(n, seed):
    rng = np.random.default_rng(seed)
    arc, sib = _random_scores(rng, n)
    for score, heads in kbest_trees(arc, sib, k=5):
        assert score == pytest.approx(score_heads(heads, arc, sib), abs=1e-9)
        assert score == pytest.approx(part_score(heads, arc, sib), abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 7), st.integers(0, 2**32 - 1), st.integers(2, 15))
def test_kbest_sorted_distinct_and_prefix_stable(n, seed, k):
    rng = np.random.default_rng(seed)
    arc, sib = _random_scores(rng, n)
    got = kbest_trees(arc, sib, k)
    scores = [s for s, _ in got]
    assert scores == sorted(scores, reverse=True)
    assert len({h for _, h in got}) == len(got)
    assert kbest_trees(arc, sib, 1)[0] == got[0]
