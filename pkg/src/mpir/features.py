"""Hashed feature templates for arc and sibling parts.

Arc part (h, d), every template conjoined with the attachment direction and
emitted twice, once plain and once also conjoined with the distance bucket
(1, 2, 3, 4, 5, 6-10, >10):

* unigram: hw+hp, hw, hp, dw+dp, dw, dp
* bigram: hw+hp+dw+dp, hp+dw+dp, hw+dw+dp, hw+hp+dp, hw+hp+dw, hw+dw, hp+dp
* in-between: hp+bp+dp for every distinct tag strictly between h and d
* surrounding: hp+hp+1+dp-1+dp, hp-1+hp+dp-1+dp, hp+hp+1+dp+dp+1, hp-1+hp+dp+dp+1

Sibling part (h, s, d) with ``s`` the adjacent inner sibling (or none),
conjoined with direction, plain and with the s-d distance bucket:

* hp+sp+dp, sp+dp, sw+dw, sw+dp, sp+dw, hw+sp+dp

Words are normalized forms, replaced by UNKNOWN outside the vocabulary.
ROOT contributes its own word/tag symbol so root attachments get their own
weights.  Strings are hashed with CRC-32 under a fixed seed.
"""

import zlib

import numpy as np

from .chart import tree_parts
from .corpus import ROOT, Vocabulary

TEMPLATE_VERSION = "sib2-v1"
HASH_SEED = 0x5EED
DEFAULT_BITS = 22

_NONE = "<NONE>"
_BOS = "<S>"
_EOS = "</S>"


def distance_bucket(dist: int) -> str:
    dist = abs(dist)
    if dist <= 5:
        return str(dist)
    return "6-10" if dist <= 10 else ">10"


class SentenceFeatures:
    """Feature ids of every candidate part of one sentence.

    Arc parts are stored in ``arc_parts`` as (h, d) and sibling parts in
    ``sib_parts`` as (h, s, d); ids of part ``j`` live in
    ``ids[starts[j]:starts[j + 1]]`` of the matching table.
    """

    def __init__(self, sentence, vocab: Vocabulary, bits: int = DEFAULT_BITS):
        self.n = n = len(sentence)
        self.bits = bits
        mask = (1 << bits) - 1
        words = [ROOT] + [vocab.lexical(t.norm) for t in sentence.tokens]
        tags = [ROOT] + [t.pos for t in sentence.tokens]
        self._words, self._tags = words, tags

        def hashed(strings):
            return [zlib.crc32(x.encode("utf-8"), HASH_SEED) & mask for x in strings]

        arc_parts, arc_ids, arc_starts = [], [], []
        for h in range(n + 1):
            for d in range(1, n + 1):
                if h == d:
                    continue
                arc_parts.append((h, d))
                arc_starts.append(len(arc_ids))
                arc_ids.extend(hashed(self.arc_strings(h, d)))
        sib_parts, sib_ids, sib_starts = [], [], []
        for h in range(n + 1):
            for d in range(1, n + 1):
                if h == d:
                    continue
                if h == 0:
                    inner = [0]
                elif d < h:
                    inner = [h] + list(range(d + 1, h))
                else:
                    inner = [h] + list(range(h + 1, d))
                for s in inner:
                    sib_parts.append((h, s, d))
                    sib_starts.append(len(sib_ids))
                    sib_ids.extend(hashed(self.sib_strings(h, s, d)))
        self.arc_parts = arc_parts
        self.arc_ids = np.array(arc_ids, dtype=np.int64)
        self.arc_starts = np.array(arc_starts + [len(arc_ids)], dtype=np.int64)
        self.sib_parts = sib_parts
        self.sib_ids = np.array(sib_ids, dtype=np.int64)
        self.sib_starts = np.array(sib_starts + [len(sib_ids)], dtype=np.int64)
        self.arc_index = {p: j for j, p in enumerate(arc_parts)}
        self.sib_index = {p: j for j, p in enumerate(sib_parts)}
        a = np.array(arc_parts, dtype=np.int64).reshape(-1, 2)
        self._arc_h, self._arc_d = a[:, 0], a[:, 1]
        b = np.array(sib_parts, dtype=np.int64).reshape(-1, 3)
        self._sib_h, self._sib_s, self._sib_d = b[:, 0], b[:, 1], b[:, 2]

    def _tag(self, i):
        if i < 0:
            return _BOS
        if i > self.n:
            return _EOS
        return self._tags[i]

    def arc_strings(self, h, d):
        w, t = self._words, self._tags
        hw, hp, dw, dp = w[h], t[h], w[d], t[d]
        direction = "R" if h < d else "L"
        lo, hi = min(h, d), max(h, d)
        base = [
            f"hw,hp={hw},{hp}", f"hw={hw}", f"hp={hp}",
            f"dw,dp={dw},{dp}", f"dw={dw}", f"dp={dp}",
            f"hw,hp,dw,dp={hw},{hp},{dw},{dp}", f"hp,dw,dp={hp},{dw},{dp}",
            f"hw,dw,dp={hw},{dw},{dp}", f"hw,hp,dp={hw},{hp},{dp}",
            f"hw,hp,dw={hw},{hp},{dw}", f"hw,dw={hw},{dw}", f"hp,dp={hp},{dp}",
            f"hp,hp+1,dp-1,dp={hp},{self._tag(h + 1)},{self._tag(d - 1)},{dp}",
            f"hp-1,hp,dp-1,dp={self._tag(h - 1)},{hp},{self._tag(d - 1)},{dp}",
            f"hp,hp+1,dp,dp+1={hp},{self._tag(h + 1)},{dp},{self._tag(d + 1)}",
            f"hp-1,hp,dp,dp+1={self._tag(h - 1)},{hp},{dp},{self._tag(d + 1)}",
        ]
        base += [f"hp,bp,dp={hp},{b},{dp}" for b in sorted(set(t[lo + 1:hi]))]
        dist = distance_bucket(h - d)
        return [f"A|{direction}|{f}" for f in base] + [f"A|{direction}|{dist}|{f}" for f in base]

    def sib_strings(self, h, s, d):
        w, t = self._words, self._tags
        hw, hp, dw, dp = w[h], t[h], w[d], t[d]
        sw, sp = (_NONE, _NONE) if s == h else (w[s], t[s])
        direction = "R" if h < d else "L"
        base = [
            f"hp,sp,dp={hp},{sp},{dp}", f"sp,dp={sp},{dp}", f"sw,dw={sw},{dw}",
            f"sw,dp={sw},{dp}", f"sp,dw={sp},{dw}", f"hw,sp,dp={hw},{sp},{dp}",
        ]
        dist = distance_bucket(s - d)
        return [f"S|{direction}|{f}" for f in base] + [f"S|{direction}|{dist}|{f}" for f in base]

    def part_ids(self, kind, part):
        """Feature ids of a single part (kind is 'arc' or 'sib')."""
        if kind == "arc":
            j = self.arc_index[part]
            return self.arc_ids[self.arc_starts[j]:self.arc_starts[j + 1]]
        j = self.sib_index[part]
        return self.sib_ids[self.sib_starts[j]:self.sib_starts[j + 1]]

    def tree_ids(self, heads):
        """All feature ids fired by a tree (with repetition)."""
        chunks = []
        for h, s, d in tree_parts(heads):
            chunks.append(self.part_ids("arc", (h, d)))
            chunks.append(self.part_ids("sib", (h, s, d)))
        return np.concatenate(chunks)

    def score_tables(self, weights):
        """Arc matrix and sibling tensor of part scores under ``weights``."""
        n = self.n
        arc = np.zeros((n + 1, n + 1))
        sib = np.zeros((n + 1, n + 1, n + 1))
        arc[self._arc_h, self._arc_d] = np.add.reduceat(weights[self.arc_ids], self.arc_starts[:-1])
        sib[self._sib_h, self._sib_s, self._sib_d] = np.add.reduceat(
            weights[self.sib_ids], self.sib_starts[:-1])
        return arc, sib


class FeatureCache:
    """Memoizes SentenceFeatures; feature ids depend only on the sentence,
    the vocabulary and the hash width."""

    def __init__(self, maxsize: int = 200_000):
        self.maxsize = maxsize
        self._store = {}

    def get(self, sentence, vocab: Vocabulary, bits: int = DEFAULT_BITS) -> SentenceFeatures:
        key = (sentence.tokens, vocab.digest(), bits)
        feats = self._store.get(key)
        if feats is None:
            feats = SentenceFeatures(sentence, vocab, bits)
            if len(self._store) >= self.maxsize:
                self._store.pop(next(iter(self._store)))
            self._store[key] = feats
        return feats
