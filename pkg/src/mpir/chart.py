"""Exact k-best projective decoding for arc + adjacent-sibling scores.

Scores are given as two arrays over positions 0..n (0 is ROOT):

* ``arc[h, d]`` -- score of attaching ``d`` to ``h``;
* ``sib[h, s, d]`` -- score of ``d`` being attached to ``h`` right after
  ``s``, its neighbouring sibling on the same side and closer to ``h``.
  ``s == h`` stands for "no inner sibling" (``d`` is the first child).

The chart follows the second-order sibling factorization (complete,
incomplete and sibling items).  Every projective tree has exactly one
derivation, so each item keeps a list of its ``k`` best derivations as
``(score, heads)`` pairs, where ``heads`` holds the head of every position
the item covers.  Derivations are ordered by descending score, then by
ascending head vector; that order is monotone under concatenation, so lazy
cube merging of sub-lists returns the exact top ``k`` of every item.
ROOT takes exactly one dependent.
"""

import heapq

import numpy as np

_EMPTY = [(0.0, ())]


def _merge(edges, k):
    """k best combinations over hyperedges.

    Each edge is ``(const, pre, A, mid, B, post)``: the combined derivation
    of ``A[i]`` and ``B[j]`` scores ``const + A[i].score + B[j].score`` and
    has heads ``pre + A[i].heads + mid + B[j].heads + post``.
    """
    heap = []
    for e, (const, pre, A, mid, B, post) in enumerate(edges):
        sa, ha = A[0]
        sb, hb = B[0]
        heap.append((-(const + sa + sb), pre + ha + mid + hb + post, e, 0, 0))
    if k == 1:
        neg, heads = min(heap)[:2]
        return [(-neg, heads)]
    heapq.heapify(heap)
    out = []
    seen = set()
    while heap and len(out) < k:
        neg, heads, e, i, j = heapq.heappop(heap)
        out.append((-neg, heads))
        const, pre, A, mid, B, post = edges[e]
        for ii, jj in ((i + 1, j), (i, j + 1)):
            if ii < len(A) and jj < len(B) and (e, ii, jj) not in seen:
                seen.add((e, ii, jj))
                sa, ha = A[ii]
                sb, hb = B[jj]
                heapq.heappush(heap, (-(const + sa + sb), pre + ha + mid + hb + post, e, ii, jj))
    return out


def kbest_trees(arc, sib=None, k=1):
    """Return up to ``k`` best ``(score, heads)`` pairs, best first.

    ``heads`` is a tuple of length n with the head of token i at index i-1.
    Fewer than ``k`` pairs come back only when fewer projective trees exist.
    """
    arc = np.asarray(arc, dtype=float)
    n = arc.shape[0] - 1
    if n < 1:
        raise ValueError("need at least one token")
    if k < 1:
        raise ValueError("k must be >= 1")
    A = arc.tolist()
    if sib is None:
        S = None
    else:
        S = np.asarray(sib, dtype=float).tolist()

    def part(h, s, d):
        return A[h][d] if S is None else A[h][d] + S[h][s][d]

    # item tables indexed [s][t]; CR/IR have head s, CL/IL have head t
    CR = [[None] * (n + 1) for _ in range(n + 1)]
    CL = [[None] * (n + 1) for _ in range(n + 1)]
    IR = [[None] * (n + 1) for _ in range(n + 1)]
    IL = [[None] * (n + 1) for _ in range(n + 1)]
    SB = [[None] * (n + 1) for _ in range(n + 1)]
    for s in range(1, n + 1):
        CR[s][s] = CL[s][s] = _EMPTY

    for width in range(1, n):
        for s in range(1, n - width + 1):
            t = s + width
            # sibling item: s and t are neighbouring siblings; s's right
            # subtree covers s+1..m and t's left subtree m+1..t-1
            SB[s][t] = _merge(
                [(0.0, (), CR[s][m], (), CL[m + 1][t], ()) for m in range(s, t)], k)

            # s -> t
            edges = [(part(s, s, t), (), CL[s + 1][t], (), _EMPTY, (s,))]
            for r in range(s + 1, t):
                edges.append((part(s, r, t), (), IR[s][r], (), SB[r][t], (s,)))
            IR[s][t] = _merge(edges, k)

            # t -> s
            edges = [(part(t, t, s), (t,), _EMPTY, (), CR[s][t - 1], ())]
            for r in range(s + 1, t):
                edges.append((part(t, r, s), (t,), SB[s][r], (), IL[r][t], ()))
            IL[s][t] = _merge(edges, k)

            CR[s][t] = _merge(
                [(0.0, (), IR[s][r], (), CR[r][t], ()) for r in range(s + 1, t + 1)], k)
            CL[s][t] = _merge(
                [(0.0, (), CL[s][r], (), IL[r][t], ()) for r in range(s, t)], k)

    edges = [(part(0, 0, r), (), CL[1][r], (0,), CR[r][n], ()) for r in range(1, n + 1)]
    return _merge(edges, k)


def tree_parts(heads):
    """Yield the ``(h, s, d)`` sibling parts of a tree (``s == h`` for first children)."""
    n = len(heads)
    kids = [[] for _ in range(n + 1)]
    for d, h in enumerate(heads, start=1):
        kids[h].append(d)
    for h in range(n + 1):
        left = [d for d in kids[h] if d < h][::-1]
        right = [d for d in kids[h] if d > h]
        for side in (left, right):
            prev = h
            for d in side:
                yield h, prev, d
                prev = d


def score_heads(heads, arc, sib=None):
    """Direct sum of part scores for a head vector."""
    total = 0.0
    for h, s, d in tree_parts(heads):
        total += arc[h][d]
        if sib is not None:
            total += sib[h][s][d]
    return total
