"""Directed dependency accuracy and the breakdowns used to analyse it."""

import json
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

from .corpus import Treebank

DEFAULT_BINS = (1, 2, 3, 4, 5, 6, 7)  # last bin is open-ended: >= 7
ROOT_BIN = "ROOT"


class EvalError(ValueError):
    pass


def _pairs(gold: Treebank, pred: Treebank, exclude_pos=()):
    """Yield (sentence index, token position, pos, gold head, pred head)."""
    if len(gold) != len(pred):
        raise EvalError(f"gold has {len(gold)} sentences, prediction {len(pred)}")
    exclude = set(exclude_pos)
    for i, ((gs, gt), (ps, pt)) in enumerate(zip(gold, pred)):
        if [t.surface for t in gs.tokens] != [t.surface for t in ps.tokens]:
            raise EvalError(f"sentence {i} differs between gold and prediction")
        if gt is None or pt is None:
            raise EvalError(f"sentence {i} lacks a tree")
        for j, tok in enumerate(gs.tokens):
            if tok.pos in exclude:
                continue
            yield i, j + 1, tok.pos, gt.heads[j], pt.heads[j]


def dda(gold: Treebank, pred: Treebank, exclude_pos=()) -> float:
    """Fraction of tokens whose predicted head is the gold head."""
    total = correct = 0
    for _, _, _, g, p in _pairs(gold, pred, exclude_pos):
        total += 1
        correct += g == p
    if total == 0:
        raise EvalError("no tokens to score")
    return correct / total


def dda_at(gold: Treebank, pred: Treebank, cap: int, exclude_pos=()) -> float:
    """DDA over sentences of at most ``cap`` tokens."""
    if len(gold) != len(pred):
        raise EvalError(f"gold has {len(gold)} sentences, prediction {len(pred)}")
    keep = [i for i, s in enumerate(gold.sentences) if len(s) <= cap]
    if not keep:
        raise EvalError(f"no sentence of length <= {cap}")
    sub = lambda tb: Treebank([tb.sentences[i] for i in keep], [tb.trees[i] for i in keep])
    return dda(sub(gold), sub(pred), exclude_pos)


def bin_label(head: int, dep: int, bins: Sequence[int] = DEFAULT_BINS) -> str:
    if head == 0:
        return ROOT_BIN
    dist = abs(head - dep)
    if dist >= bins[-1]:
        return f">={bins[-1]}"
    return str(dist)


def head_distance_report(gold: Treebank, pred: Treebank, bins: Sequence[int] = DEFAULT_BINS,
                         exclude_pos=()) -> List[Tuple[str, float, float, float]]:
    """(bin, precision, recall, f1) per head-distance bin; ROOT arcs form their own bin.

    Empty denominators give 0.0.
    """
    gold_n, pred_n, gold_ok, pred_ok = Counter(), Counter(), Counter(), Counter()
    for _, d, _, g, p in _pairs(gold, pred, exclude_pos):
        gb, pb = bin_label(g, d, bins), bin_label(p, d, bins)
        gold_n[gb] += 1
        pred_n[pb] += 1
        if g == p:
            gold_ok[gb] += 1
            pred_ok[pb] += 1
    labels = [ROOT_BIN] + [str(b) for b in bins[:-1]] + [f">={bins[-1]}"]
    rows = []
    for b in labels:
        prec = pred_ok[b] / pred_n[b] if pred_n[b] else 0.0
        rec = gold_ok[b] / gold_n[b] if gold_n[b] else 0.0
        f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
        rows.append((b, prec, rec, f1))
    return rows


def bin_counts(gold: Treebank, pred: Treebank, bins: Sequence[int] = DEFAULT_BINS):
    """Gold and predicted arc counts per bin."""
    gold_n, pred_n = Counter(), Counter()
    for _, d, _, g, p in _pairs(gold, pred):
        gold_n[bin_label(g, d, bins)] += 1
        pred_n[bin_label(p, d, bins)] += 1
    return gold_n, pred_n


def pos_accuracy_report(gold: Treebank, pred: Treebank, exclude_pos=()
                        ) -> List[Tuple[str, int, int, float]]:
    """(tag, correct, total, accuracy), most frequent tag first."""
    total, correct = Counter(), Counter()
    for _, _, tag, g, p in _pairs(gold, pred, exclude_pos):
        total[tag] += 1
        correct[tag] += g == p
    order = sorted(total, key=lambda t: (-total[t], t))
    return [(t, correct[t], total[t], correct[t] / total[t]) for t in order]


@dataclass
class EvalReport:
    dda: float
    dda_at: Dict[int, float] = field(default_factory=dict)
    head_distance_bins: List[Tuple[str, float, float, float]] = field(default_factory=list)
    pos_accuracy: Dict[str, Tuple[int, int, float]] = field(default_factory=dict)

    def to_json(self) -> str:
        """Schema: {"dda": float, "dda_at": {cap: float},
        "head_distance_bins": [{"bin", "precision", "recall", "f1"}],
        "pos_accuracy": [{"pos", "correct", "total", "accuracy"}]} (frequency order)."""
        doc = {
            "dda": self.dda,
            "dda_at": {str(k): v for k, v in self.dda_at.items()},
            "head_distance_bins": [dict(bin=b, precision=p, recall=r, f1=f)
                                   for b, p, r, f in self.head_distance_bins],
            "pos_accuracy": [dict(pos=t, correct=c, total=n, accuracy=a)
                             for t, (c, n, a) in self.pos_accuracy.items()],
        }
        return json.dumps(doc, indent=2)

    def to_tsv(self) -> str:
        lines = [f"dda\t{self.dda:.4f}"]
        lines += [f"dda@{k}\t{v:.4f}" for k, v in self.dda_at.items()]
        lines.append("bin\tprecision\trecall\tf1")
        lines += [f"{b}\t{p:.4f}\t{r:.4f}\t{f:.4f}" for b, p, r, f in self.head_distance_bins]
        lines.append("pos\tcorrect\ttotal\taccuracy")
        lines += [f"{t}\t{c}\t{n}\t{a:.4f}" for t, (c, n, a) in self.pos_accuracy.items()]
        return "\n".join(lines) + "\n"


def evaluate(gold: Treebank, pred: Treebank, caps: Sequence[int] = (10,),
             bins: Sequence[int] = DEFAULT_BINS, exclude_pos=()) -> EvalReport:
    at = {}
    for cap in caps:
        try:
            at[cap] = dda_at(gold, pred, cap, exclude_pos)
        except EvalError:
            pass
    return EvalReport(
        dda=dda(gold, pred, exclude_pos),
        dda_at=at,
        head_distance_bins=head_distance_report(gold, pred, bins, exclude_pos),
        pos_accuracy={t: (c, n, a) for t, c, n, a in pos_accuracy_report(gold, pred, exclude_pos)},
    )

