"""Synthetic treebanks sampled from a known DMV, for testing the pipeline
against trees whose truth is known."""

from typing import Dict, List, Optional

import numpy as np

from .corpus import DepTree, Sentence, Token, Treebank
from . import dmv

# head tag -> (left choices, right choices, stop probs [L0, L1, R0, R1])
_REFERENCE = {
    "VB": ({"PRP": .35, "NN": .35, "NNP": .15, "MD": .1, "RB": .05},
           {"NN": .45, "IN": .25, "PRP": .1, "RB": .1, "NNP": .1}, (.15, .7, .3, .6)),
    "NN": ({"DT": .55, "JJ": .3, "CD": .1, "NN": .05}, {"IN": .9, "NN": .1}, (.3, .6, .85, .95)),
    "NNP": ({"NNP": .6, "DT": .2, "JJ": .2}, {"IN": 1.0}, (.7, .9, .95, .99)),
    "JJ": ({"RB": 1.0}, {"IN": 1.0}, (.9, .99, .99, .99)),
    "IN": ({"RB": 1.0}, {"NN": .7, "NNP": .2, "PRP": .1}, (.98, .99, .02, .98)),
    "DT": ({}, {}, (.99, .99, .99, .99)),
    "PRP": ({}, {}, (.99, .99, .99, .99)),
    "RB": ({}, {}, (.99, .99, .99, .99)),
    "MD": ({}, {}, (.99, .99, .99, .99)),
    "CD": ({}, {}, (.99, .99, .99, .99)),
}
_REFERENCE_ROOT = {"VB": .85, "NN": .1, "NNP": .05}


def reference_grammar() -> dmv.DmvParams:
    """A small English-like DMV over 10 tags."""
    tags = sorted(_REFERENCE)
    K = len(tags) + 1
    ids = {t: i for i, t in enumerate(tags)}
    choose = np.full((K, 2, K), 0.0)
    stop = np.zeros((K, 2, 2))
    root = np.zeros(K)
    for t, p in _REFERENCE_ROOT.items():
        root[ids[t]] = p
    for h, (left, right, stops) in _REFERENCE.items():
        for di, dist in ((dmv.LEFT, left), (dmv.RIGHT, right)):
            if not dist:
                dist = {h: 1.0}  # never used in practice: stop is near certain
            for d, p in dist.items():
                choose[ids[h], di, ids[d]] = p
        stop[ids[h]] = np.array(stops).reshape(2, 2)
    choose[K - 1, :, :] = 1.0 / K
    stop[K - 1] = 0.99
    return dmv.DmvParams(tags, choose, stop, root)


def lexicon(tags, size: int = 6) -> Dict[str, List[str]]:
    """``size`` made-up word forms per tag; NNP forms are capitalized and
    CD forms are numerals."""
    out = {}
    for t in tags:
        if t == "CD":
            words = [str(3 + 7 * j) for j in range(size)]
        else:
            words = [f"{t.lower()}{chr(97 + j % 26)}{'x' * (j // 26)}" for j in range(size)]
            if t == "NNP":
                words = [w.capitalize() for w in words]
        out[t] = words
    return out


def sample_treebank(grammar: dmv.DmvParams, n: int, max_len: int = 10, seed: int = 0,
                    lexicon_size: int = 6) -> Treebank:
    """``n`` sentences with gold trees; word forms drawn Zipf-like per tag."""
    rng = np.random.default_rng(seed)
    lex = lexicon([t for t in grammar.tags if t != dmv.UNKNOWN], lexicon_size)
    zipf = 1.0 / np.arange(1, lexicon_size + 1)
    zipf /= zipf.sum()
    sents: List[Sentence] = []
    trees: List[Optional[DepTree]] = []
    for _ in range(n):
        tags, tree = dmv.sample(grammar, rng, max_len)
        words = [lex[t][int(rng.choice(lexicon_size, p=zipf))] for t in tags]
        sents.append(Sentence(tuple(Token(w, t) for w, t in zip(words, tags))))
        trees.append(tree)
    return Treebank(sents, trees)


def write_embeddings(path, tags, lexicon_size: int = 6, dim: int = 50, seed: int = 0,
                     noise: float = 0.1):
    """Vectors clustered by tag: a random centroid per tag plus small noise."""
    rng = np.random.default_rng(seed)
    lex = lexicon([t for t in tags if t != dmv.UNKNOWN], lexicon_size)
    with open(path, "w", encoding="utf-8") as f:
        for t in sorted(lex):
            centroid = rng.normal(0.0, 1.0, dim) / np.sqrt(dim)
            for w in lex[t]:
                v = centroid + noise * rng.normal(0.0, 1.0, dim) / np.sqrt(dim)
                f.write(w + " " + " ".join(f"{x:.6f}" for x in v) + "\n")
