"""Projective k-best dependency parser trained with the averaged perceptron.

Parts are arcs plus adjacent-sibling pairs (see :mod:`mpir.features`);
decoding uses the exact k-best chart in :mod:`mpir.chart`.  Training uses
1-best decoding to find the violating tree (training-k = 1).
"""

import io
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .chart import kbest_trees
from .corpus import (ConllError, DepTree, Sentence, Treebank, TreeError, Vocabulary,
                     _format_block, build_vocab, iter_conll_blocks, tree_problem)
from .features import DEFAULT_BITS, TEMPLATE_VERSION, FeatureCache

log = logging.getLogger(__name__)

MAGIC = b"MPIR-KBEST"
FORMAT_VERSION = 1


class WeightModel:
    """Hashed weight vector plus its running average.

    Scoring always uses ``averaged_weights`` once training has finalized
    them; a model built by hand can set them directly.
    """

    def __init__(self, vocab: Vocabulary, bits: int = DEFAULT_BITS, second_order: bool = True):
        self.vocab = vocab
        self.bits = bits
        self.second_order = second_order
        self.weights = np.zeros(1 << bits)
        self.averaged_weights = np.zeros(1 << bits)
        self.feature_template_version = TEMPLATE_VERSION
        self.finalized = False
        self.mistakes: List[int] = []
        self.cache = FeatureCache()

    def features(self, s: Sentence):
        return self.cache.get(s, self.vocab, self.bits)

    def tables(self, s: Sentence):
        arc, sib = self.features(s).score_tables(self.averaged_weights)
        return arc, (sib if self.second_order else None)

    # -- persistence -------------------------------------------------------
    def save(self, path):
        """Binary container: one text header line, then an ``.npz`` payload."""
        nz = np.flatnonzero(self.averaged_weights)
        nzr = np.flatnonzero(self.weights)
        buf = io.BytesIO()
        np.savez_compressed(buf, avg_idx=nz, avg_val=self.averaged_weights[nz],
                            raw_idx=nzr, raw_val=self.weights[nzr],
                            vocab=np.array(self.vocab.dumps()))
        header = (f"{MAGIC.decode()} v{FORMAT_VERSION} bits={self.bits} "
                  f"order={2 if self.second_order else 1} "
                  f"templates={self.feature_template_version} vocab={self.vocab.digest()}\n")
        with open(path, "wb") as f:
            f.write(header.encode("ascii"))
            f.write(buf.getvalue())

    @classmethod
    def load(cls, path) -> "WeightModel":
        with open(path, "rb") as f:
            header = f.readline().decode("ascii").split()
            payload = f.read()
        if not header or header[0] != MAGIC.decode():
            return cls.load_text(path)
        meta = dict(x.split("=", 1) for x in header[2:])
        if header[1] != f"v{FORMAT_VERSION}":
            raise ValueError(f"{path}: unsupported model version {header[1]}")
        data = np.load(io.BytesIO(payload))
        vocab = Vocabulary.loads(str(data["vocab"]))
        m = cls(vocab, int(meta["bits"]), meta["order"] == "2")
        if meta["templates"] != TEMPLATE_VERSION:
            raise ValueError(f"{path}: feature templates {meta['templates']} != {TEMPLATE_VERSION}")
        m.averaged_weights[data["avg_idx"]] = data["avg_val"]
        m.weights[data["raw_idx"]] = data["raw_val"]
        m.finalized = True
        return m

    def save_text(self, path):
        """``featureid<TAB>weight`` lines for non-zero averaged weights,
        preceded by ``#`` header lines carrying the settings and vocabulary."""
        with open(path, "w", encoding="utf-8") as f:
            f.write(f"#bits\t{self.bits}\n#order\t{2 if self.second_order else 1}\n")
            f.write(f"#templates\t{self.feature_template_version}\n")
            for line in self.vocab.dumps().splitlines():
                f.write(f"#vocab\t{line}\n")
            for i in np.flatnonzero(self.averaged_weights):
                f.write(f"{i}\t{float(self.averaged_weights[i])!r}\n")

    @classmethod
    def load_text(cls, path) -> "WeightModel":
        meta, vocab_lines, rows = {}, [], []
        with open(path, encoding="utf-8") as f:
            for line in f:
                line = line.rstrip("\n")
                if line.startswith("#vocab\t"):
                    vocab_lines.append(line[len("#vocab\t"):])
                elif line.startswith("#"):
                    k, v = line[1:].split("\t", 1)
                    meta[k] = v
                elif line:
                    i, w = line.split("\t")
                    rows.append((int(i), float(w)))
        if "bits" not in meta:
            raise ValueError(f"{path}: not a parser model")
        m = cls(Vocabulary.loads("\n".join(vocab_lines)), int(meta["bits"]), meta["order"] == "2")
        for i, w in rows:
            m.averaged_weights[i] = w
        m.finalized = True
        return m


@dataclass
class KBestList:
    sentence: Sentence
    candidates: List[Tuple[DepTree, float]] = field(default_factory=list)

    def __len__(self):
        return len(self.candidates)

    @property
    def trees(self) -> List[DepTree]:
        return [t for t, _ in self.candidates]


def _check_trees(tb: Treebank):
    for i, (s, t) in enumerate(tb):
        if t is None:
            raise TreeError(f"sentence {i} has no tree")
        problem = tree_problem(t.heads)
        if problem:
            raise TreeError(f"sentence {i} ({' '.join(tok.surface for tok in s.tokens)}): {problem}")


def train(tb: Treebank, iters: int = 1, seed: int = 0, vocab: Optional[Vocabulary] = None,
          bits: int = DEFAULT_BITS, cache: Optional[FeatureCache] = None) -> WeightModel:
    """Averaged structured perceptron over shuffled epochs."""
    if iters < 1:
        raise ValueError("iters must be >= 1")
    _check_trees(tb)
    model = WeightModel(vocab if vocab is not None else build_vocab(tb.sentences), bits)
    if cache is not None:
        model.cache = cache
    rng = np.random.default_rng(seed)
    w = model.weights
    u = np.zeros_like(w)
    c = 1
    feats = [model.features(s) for s in tb.sentences]
    gold_ids = [f.tree_ids(t.heads) for f, t in zip(feats, tb.trees)]
    for epoch in range(iters):
        mistakes = 0
        for i in rng.permutation(len(tb)):
            f = feats[i]
            arc, sib = f.score_tables(w)
            (_, pred), = kbest_trees(arc, sib, k=1)
            if pred != tb.trees[i].heads:
                mistakes += 1
                g, p = gold_ids[i], f.tree_ids(pred)
                np.add.at(w, g, 1.0)
                np.add.at(w, p, -1.0)
                np.add.at(u, g, float(c))
                np.add.at(u, p, -float(c))
            c += 1
        model.mistakes.append(mistakes)
        log.info("perceptron epoch %d: %d/%d mistakes", epoch + 1, mistakes, len(tb))
    model.averaged_weights = w - u / c
    model.finalized = True
    return model


def parse_kbest(model: WeightModel, s: Sentence, k: int = 10) -> KBestList:
    arc, sib = model.tables(s)
    return KBestList(s, [(DepTree(h), float(sc)) for sc, h in kbest_trees(arc, sib, k)])


def parse_kbest_all(model: WeightModel, sentences: Sequence[Sentence], k: int = 10,
                    threads: int = 1) -> List[KBestList]:
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            return list(ex.map(lambda s: parse_kbest(model, s, k), sentences))
    return [parse_kbest(model, s, k) for s in sentences]


def score_tree(model: WeightModel, s: Sentence, d: DepTree) -> float:
    """Sum of the weights of every feature the tree fires."""
    f = model.features(s)
    if model.second_order:
        return float(model.averaged_weights[f.tree_ids(d.heads)].sum())
    ids = np.concatenate([f.part_ids("arc", a) for a in d.arcs()])
    return float(model.averaged_weights[ids].sum())


# -- k-best files -------------------------------------------------------------
# Each candidate is a CoNLL block preceded by "#cand=i/k" and "#score=x";
# a new sentence starts at "#cand=1/k".

def dumps_kbest(lists: Sequence[KBestList]) -> str:
    out = []
    for kb in lists:
        for i, (t, score) in enumerate(kb.candidates, start=1):
            out.append(_format_block(kb.sentence, t, [f"cand={i}/{len(kb)}", f"score={score!r}"]))
    return "".join(out)


def write_kbest(lists: Sequence[KBestList], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(dumps_kbest(lists))


def read_kbest(path) -> List[KBestList]:
    lists: List[KBestList] = []
    with open(path, encoding="utf-8") as f:
        for comments, s, t, lineno in iter_conll_blocks(f, str(path)):
            meta = dict(c.split("=", 1) for c in comments if "=" in c)
            if "cand" not in meta or "score" not in meta or t is None:
                raise ConllError(f"{path}:{lineno}: k-best block needs #cand, #score and heads")
            i, k = (int(x) for x in meta["cand"].split("/"))
            if i == 1:
                lists.append(KBestList(s))
            elif not lists or lists[-1].sentence != s or len(lists[-1]) != i - 1:
                raise ConllError(f"{path}:{lineno}: candidate {i}/{k} out of sequence")
            lists[-1].candidates.append((t, float(meta["score"])))
    return lists
