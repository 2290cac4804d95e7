import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mpir.corpus import DepTree, Sentence, Treebank, loads_conll
from mpir.evaluation import (EvalError, bin_counts, bin_label, dda, dda_at, evaluate,
                             head_distance_report, pos_accuracy_report)

from strategies import projective_heads, treebanks

GOLD = loads_conll("1\tthe\tDT\t2\n2\tdog\tNN\t3\n3\tbarks\tVB\t0\n\n"
                   "1\tcats\tNN\t2\n2\tsleep\tVB\t0\n3\ttoday\tNN\t2\n")
PRED = loads_conll("1\tthe\tDT\t2\n2\tdog\tNN\t3\n3\tbarks\tVB\t0\n\n"
                   "1\tcats\tNN\t0\n2\tsleep\tVB\t1\n3\ttoday\tNN\t2\n")


def test_dda_by_hand():
    assert dda(GOLD, PRED) == pytest.approx(4 / 6)
    assert dda(GOLD, PRED, exclude_pos=["VB"]) == pytest.approx(3 / 4)
    assert dda_at(GOLD, PRED, cap=3) == dda(GOLD, PRED)


def test_errors():
    with pytest.raises(EvalError, match="sentences"):
        dda(GOLD, Treebank(PRED.sentences[:1], PRED.trees[:1]))
    with pytest.raises(EvalError, match="no tokens"):
        dda(GOLD, PRED, exclude_pos=["DT", "NN", "VB"])
    with pytest.raises(EvalError, match="length <= 2"):
        dda_at(GOLD, PRED, cap=2)
    other = loads_conll("1\tx\tDT\t2\n2\ty\tNN\t3\n3\tz\tVB\t0\n\n"
                        "1\tcats\tNN\t2\n2\tsleep\tVB\t0\n3\ttoday\tNN\t2\n")
    with pytest.raises(EvalError, match="differs"):
        dda(GOLD, other)


def test_bins():
    assert bin_label(0, 3) == "ROOT"
    assert [bin_label(5, d) for d in (4, 7, 12, 20)] == ["1", "2", ">=7", ">=7"]
    rows = {b: (p, r, f) for b, p, r, f in head_distance_report(GOLD, PRED)}
    assert list(rows)[:2] == ["ROOT", "1"] and list(rows)[-1] == ">=7"
    # gold ROOT arcs: 2, predicted ROOT arcs: 2, one correct
    assert rows["ROOT"] == pytest.approx((0.5, 0.5, 0.5))
    assert rows["3"] == (0.0, 0.0, 0.0)


def test_report_formats():
    rep = evaluate(GOLD, PRED, caps=(2, 10))
    assert set(rep.dda_at) == {10}  # no sentence fits cap 2
    doc = json.loads(rep.to_json())
    assert doc["dda"] == pytest.approx(4 / 6)
    assert [r["pos"] for r in doc["pos_accuracy"]] == ["NN", "VB", "DT"]
    assert rep.to_tsv().startswith("dda\t0.6667\n")


def _perturb(tb, seed):
    rng = np.random.default_rng(seed)
    return Treebank(tb.sentences, [DepTree(projective_heads(rng, len(s))) for s in tb.sentences])


@settings(max_examples=100, deadline=None)
@given(treebanks(max_sents=6, annotated=True).filter(lambda tb: len(tb) > 0),
       st.integers(0, 2**32 - 1))
def test_metric_invariants(gold, seed):
    pred = _perturb(gold, seed)
    assert dda(gold, gold) == 1.0
    assert dda_at(gold, pred, cap=10 ** 9) == dda(gold, pred)
    g, p = bin_counts(gold, pred)
    n = sum(len(s) for s in gold.sentences)
    assert sum(g.values()) == n == sum(p.values())
    rows = pos_accuracy_report(gold, pred)
    assert sum(c for _, c, _, _ in rows) / sum(t for _, _, t, _ in rows) == \
        pytest.approx(dda(gold, pred))
    perm = np.random.default_rng(seed).permutation(len(gold))
    shuf = lambda tb: Treebank([tb.sentences[i] for i in perm], [tb.trees[i] for i in perm])
    assert dda(shuf(gold), shuf(pred)) == pytest.approx(dda(gold, pred))
