"""Dependency Model with Valence over POS tags: harmonic initialization,
Viterbi decoding and hard (Viterbi) EM.

Generative story for a tree: ROOT picks one tag with ``root``; every head
then generates dependents outward on each side, first the left side then
the right, each time deciding to stop or continue with ``stop[h, dir, v]``
(``v`` is 0 before the first dependent on that side and 1 afterwards) and,
on continue, drawing the dependent's tag from ``choose[h, dir, :]``.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Sequence

import numpy as np

from .chart import kbest_trees
from .corpus import UNKNOWN, DepTree, Sentence, Treebank

log = logging.getLogger(__name__)

LEFT, RIGHT = 0, 1
DIRS = ("L", "R")
STOP_FLOOR = 1e-12


class DmvParams:
    """Probability tables indexed by tag id.

    ``choose[h, dir, d]``, ``stop[h, dir, v]`` and ``root[d]``.  The last tag
    is always ``<UNKNOWN>`` and stands in for tags never seen in training.
    """

    def __init__(self, tags: Sequence[str], choose, stop, root):
        tags = [t for t in tags if t != UNKNOWN] + [UNKNOWN]
        self.tags: List[str] = tags
        self.tag_ids = {t: i for i, t in enumerate(tags)}
        K = len(tags)
        self.choose = np.asarray(choose, dtype=float).reshape(K, 2, K)
        self.stop = np.clip(np.asarray(stop, dtype=float).reshape(K, 2, 2),
                            STOP_FLOOR, 1.0 - STOP_FLOOR)
        self.root = np.asarray(root, dtype=float).reshape(K)
        self.history: List[float] = []

    @property
    def n_tags(self):
        return len(self.tags)

    def tag_id(self, tag: str) -> int:
        return self.tag_ids.get(tag, self.n_tags - 1)

    def check(self, atol=1e-9):
        sums = self.choose.sum(axis=2)
        if not np.allclose(sums, 1.0, atol=atol, rtol=0):
            raise ValueError("choose distributions are not normalized")
        if not abs(self.root.sum() - 1.0) <= atol:
            raise ValueError("root distribution is not normalized")
        if (self.stop < 0).any() or (self.stop > 1).any():
            raise ValueError("stop probabilities out of range")

    def copy(self):
        p = DmvParams(self.tags, self.choose.copy(), self.stop.copy(), self.root.copy())
        p.history = list(self.history)
        return p

    def dumps(self) -> str:
        lines = []
        for d, t in enumerate(self.tags):
            lines.append(f"root\t{t}\t{float(self.root[d])!r}")
        for h, th in enumerate(self.tags):
            for di, dn in enumerate(DIRS):
                for v in (0, 1):
                    lines.append(f"stop|{th}|{dn}|{v}\tSTOP\t{float(self.stop[h, di, v])!r}")
                for d, td in enumerate(self.tags):
                    lines.append(f"choose|{th}|{dn}\t{td}\t{float(self.choose[h, di, d])!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "DmvParams":
        rows = []
        tags = []
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip() or line.startswith("#"):
                continue
            cols = line.split("\t")
            if len(cols) != 3:
                raise ValueError(f"line {lineno}: expected context<TAB>outcome<TAB>prob")
            ctx, outcome, prob = cols
            rows.append((ctx.split("|"), outcome, float(prob)))
            if ctx == "root" and outcome not in tags:
                tags.append(outcome)
        K = len([t for t in tags if t != UNKNOWN]) + 1
        choose = np.zeros((K, 2, K))
        stop = np.full((K, 2, 2), 0.5)
        root = np.zeros(K)
        p = cls(tags, choose, stop, root)
        for ctx, outcome, prob in rows:
            kind = ctx[0]
            if kind == "root":
                p.root[p.tag_ids[outcome]] = prob
            elif kind == "stop":
                p.stop[p.tag_ids[ctx[1]], DIRS.index(ctx[2]), int(ctx[3])] = prob
            elif kind == "choose":
                p.choose[p.tag_ids[ctx[1]], DIRS.index(ctx[2]), p.tag_ids[outcome]] = prob
            else:
                raise ValueError(f"unknown context kind {kind!r}")
        p.stop = np.clip(p.stop, STOP_FLOOR, 1.0 - STOP_FLOOR)
        # contexts left empty in the file back off to uniform
        empty = p.choose.sum(axis=2) == 0
        p.choose[empty] = 1.0 / K
        if p.root.sum() == 0:
            p.root[:] = 1.0 / K
        return p

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            f.write(self.dumps())

    @classmethod
    def load(cls, path) -> "DmvParams":
        with open(path, encoding="utf-8") as f:
            return cls.loads(f.read())


def _tagset(sentences):
    return sorted({t for s in sentences for t in s.tags})


def harmonic_init(sentences: Sequence[Sentence], smoothing: float = 0.1) -> DmvParams:
    """Parameters re-estimated from a pseudo posterior in which every word is
    equally likely to be the root and otherwise attaches to each other word
    with weight inversely proportional to their distance.

    Stop counts treat a head's expected number of dependents on a side, ``c``,
    as Poisson: it stops without any dependent with probability ``exp(-c)``.
    """
    if not sentences:
        raise ValueError("harmonic initialization needs a non-empty corpus")
    tags = _tagset(sentences)
    K = len(tags) + 1
    params = DmvParams(tags, np.full((K, 2, K), 1.0 / K), np.full((K, 2, 2), 0.5),
                       np.full(K, 1.0 / K))
    c_choose = np.zeros((K, 2, K))
    c_stop = np.zeros((K, 2, 2))
    c_go = np.zeros((K, 2, 2))
    c_root = np.zeros(K)
    for s in sentences:
        ids = np.array([params.tag_id(t) for t in s.tags])
        n = len(ids)
        pos = np.arange(1, n + 1)
        dist = np.abs(pos[:, None] - pos[None, :]).astype(float)  # [head, dep]
        with np.errstate(divide="ignore"):
            w = np.where(dist > 0, 1.0 / dist, 0.0)
        z = w.sum(axis=0) + 1.0 / n
        post = w / z
        np.add.at(c_root, ids, (1.0 / n) / z)
        for h in range(n):
            th = ids[h]
            for di, mass in ((LEFT, post[h, :h]), (RIGHT, post[h, h + 1:])):
                deps = ids[:h] if di == LEFT else ids[h + 1:]
                np.add.at(c_choose[th, di], deps, mass)
                c = mass.sum()
                none = math.exp(-c)
                c_stop[th, di, 0] += none
                c_go[th, di, 0] += 1.0 - none
                c_stop[th, di, 1] += 1.0 - none
                c_go[th, di, 1] += max(c - (1.0 - none), 0.0)
    a = smoothing
    params.choose = (c_choose + a) / (c_choose.sum(axis=2, keepdims=True) + K * a)
    params.stop = np.clip((c_stop + a) / (c_stop + c_go + 2 * a), STOP_FLOOR, 1.0 - STOP_FLOOR)
    params.root = (c_root + a) / (c_root.sum() + K * a)
    return params


def tree_logprob(params: DmvParams, s: Sentence, tree: DepTree) -> float:
    """Log probability of ``tree`` by replaying the generative story."""
    ids = [params.tag_id(t) for t in s.tags]
    kids = tree.children()
    total = _log(params.root[ids[kids[0][0] - 1]])
    for h in range(1, len(ids) + 1):
        th = ids[h - 1]
        left = [d for d in kids[h] if d < h][::-1]
        right = [d for d in kids[h] if d > h]
        for di, side in ((LEFT, left), (RIGHT, right)):
            v = 0
            for d in side:
                total += _log(1.0 - params.stop[th, di, v]) + _log(params.choose[th, di, ids[d - 1]])
                v = 1
            total += _log(params.stop[th, di, v])
    return total


def _log(x):
    return math.log(x) if x > 0 else -math.inf


def part_scores(params: DmvParams, s: Sentence):
    """Arc and sibling log-scores plus a constant such that the chart score
    of any tree plus the constant equals its log probability."""
    ids = np.array([params.tag_id(t) for t in s.tags])
    n = len(ids)
    with np.errstate(divide="ignore"):
        lchoose = np.log(params.choose)
        lroot = np.log(params.root)
        lstop = np.log(params.stop)
        lgo = np.log1p(-params.stop)
    arc = np.full((n + 1, n + 1), -np.inf)
    sib = np.zeros((n + 1, n + 1, n + 1))
    arc[0, 1:] = lroot[ids]
    const = 0.0
    for h in range(1, n + 1):
        th = ids[h - 1]
        for d in range(1, n + 1):
            if d == h:
                continue
            di = LEFT if d < h else RIGHT
            arc[h, d] = lchoose[th, di, ids[d - 1]]
            # first child: continue at valence 0 and swap the final stop term
            sib[h, h, d] = lgo[th, di, 0] + lstop[th, di, 1] - lstop[th, di, 0]
            lo, hi = (d + 1, h) if d < h else (h + 1, d)
            sib[h, lo:hi, d] = lgo[th, di, 1]
        const += lstop[th, LEFT, 0] + lstop[th, RIGHT, 0]
    return arc, sib, const


def viterbi_parse(params: DmvParams, s: Sentence):
    """Most probable projective tree and its log probability.

    Ties go to the lexicographically smallest head vector.
    """
    arc, sib, const = part_scores(params, s)
    (score, heads), = kbest_trees(arc, sib, k=1)
    return DepTree(heads), float(score + const)


def annotate(params: DmvParams, sentences: Sequence[Sentence], threads: int = 1) -> Treebank:
    sentences = list(sentences)
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            trees = [t for t, _ in ex.map(lambda s: viterbi_parse(params, s), sentences)]
    else:
        trees = [viterbi_parse(params, s)[0] for s in sentences]
    return Treebank(sentences, trees)


def estimate(tb: Treebank, tags: Sequence[str], smoothing: float = 0.1) -> DmvParams:
    """Relative frequencies of a fixed treebank with additive smoothing."""
    tags = [t for t in tags if t != UNKNOWN]
    params = DmvParams(tags, np.zeros((len(tags) + 1, 2, len(tags) + 1)),
                       np.zeros((len(tags) + 1, 2, 2)), np.zeros(len(tags) + 1))
    K = params.n_tags
    c_choose = np.zeros((K, 2, K))
    c_stop = np.zeros((K, 2, 2))
    c_go = np.zeros((K, 2, 2))
    c_root = np.zeros(K)
    for s, tree in tb:
        ids = [params.tag_id(t) for t in s.tags]
        kids = tree.children()
        c_root[ids[kids[0][0] - 1]] += 1
        for h in range(1, len(ids) + 1):
            th = ids[h - 1]
            left = [d for d in kids[h] if d < h]
            right = [d for d in kids[h] if d > h]
            for di, side in ((LEFT, left), (RIGHT, right)):
                for j, d in enumerate(side):
                    c_go[th, di, min(j, 1)] += 1
                    c_choose[th, di, ids[d - 1]] += 1
                c_stop[th, di, min(len(side), 1)] += 1
    a = smoothing
    # contexts without any mass (unseen heads, no smoothing) fall back to uniform
    with np.errstate(invalid="ignore"):
        choose = (c_choose + a) / (c_choose.sum(axis=2, keepdims=True) + K * a)
        stop = (c_stop + a) / (c_stop + c_go + 2 * a)
        root = (c_root + a) / (c_root.sum() + K * a)
    params.choose = np.nan_to_num(choose, nan=1.0 / K)
    params.stop = np.clip(np.nan_to_num(stop, nan=0.5), STOP_FLOOR, 1.0 - STOP_FLOOR)
    params.root = np.nan_to_num(root, nan=1.0 / K)
    return params


def corpus_logprob(params: DmvParams, sentences: Sequence[Sentence]) -> float:
    """Sum over sentences of the best tree's log probability."""
    return sum(viterbi_parse(params, s)[1] for s in sentences)


def hard_em_train(sentences: Sequence[Sentence], init: DmvParams, iters: int,
                  smoothing: float = 0.1, threads: int = 1) -> DmvParams:
    """Alternate Viterbi decoding of the corpus and closed-form re-estimation.

    ``params.history`` receives the corpus objective before every M-step and
    once more for the returned parameters.
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    sentences = list(sentences)
    tags = [t for t in init.tags if t != UNKNOWN]
    params = init
    history = []
    for it in range(iters):
        tb, objective = _decode(params, sentences, threads)
        history.append(objective)
        log.info("hard-EM iteration %d: corpus log-prob %.6f", it + 1, objective)
        params = estimate(tb, tags, smoothing)
    _, objective = _decode(params, sentences, threads)
    history.append(objective)
    log.info("hard-EM final corpus log-prob %.6f", objective)
    params.history = history
    return params


def _decode(params, sentences, threads):
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            results = list(ex.map(lambda s: viterbi_parse(params, s), sentences))
    else:
        results = [viterbi_parse(params, s) for s in sentences]
    tb = Treebank(list(sentences), [t for t, _ in results])
    return tb, float(sum(lp for _, lp in results))


def sample(params: DmvParams, rng: np.random.Generator, max_len: Optional[int] = None,
           max_tries: int = 1000):
    """Draw a tag sequence and its tree; rejects draws longer than ``max_len``."""
    K = params.n_tags
    real = K - 1  # never generate the <UNKNOWN> tag
    choose = params.choose[:, :, :real]
    choose = choose / choose.sum(axis=2, keepdims=True)
    root = params.root[:real] / params.root[:real].sum()
    limit = max_len if max_len is not None else 10 ** 6
    for _ in range(max_tries):
        try:
            top = _grow(params, choose, int(rng.choice(real, p=root)), rng, [0], limit)
        except _TooLong:
            continue
        order = []
        _inorder(top, order)
        pos = {id(node): i for i, node in enumerate(order, start=1)}
        heads = [pos[id(node[3])] if node[3] is not None else 0 for node in order]
        return [params.tags[node[0]] for node in order], DepTree(heads)
    raise RuntimeError(f"no sample of length <= {max_len} in {max_tries} tries")


class _TooLong(Exception):
    pass


def _grow(params, choose, tag, rng, size, limit, parent=None):
    """Node = [tag, left kids (inside-out), right kids, parent]."""
    size[0] += 1
    if size[0] > limit:
        raise _TooLong
    node = [tag, [], [], parent]
    for di in (LEFT, RIGHT):
        v = 0
        while rng.random() >= params.stop[tag, di, v]:
            d = int(rng.choice(choose.shape[2], p=choose[tag, di]))
            node[1 + di].append(_grow(params, choose, d, rng, size, limit, node))
            v = 1
    return node


def _inorder(node, out):
    for child in reversed(node[1]):
        _inorder(child, out)
    out.append(node)
    for child in node[2]:
        _inorder(child, out)
