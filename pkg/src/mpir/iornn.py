"""Inside-outside recursive neural network estimating a top-down generative
dependency model with unbounded context, and the generative reranker built
on it.

A tree is generated from ROOT downwards.  Each head first emits its left
dependents (closest first) and a left end-of-children symbol, then its
right dependents and a right end-of-children symbol; ROOT emits a single
right dependent.  Every emission is a softmax over word ids (plus EOC)
conditioned on a *partial outer* vector::

    inner(u)        = tanh(Win [Ew[w_u]; Ep[p_u]; Ec[c_u]] + bin)
    partial(next)   = tanh(Wp[dir] outer(h) + Up[dir] mean(inner(sibs)) + bp[dir])
    outer(u)        = tanh(Vo[dir] partial(u) + To inner(u) + co)
    outer(ROOT)     = oroot
    P(x | context)  = softmax(Ws partial + bs)[x]

where ``sibs`` are the dependents of ``h`` generated so far on either side.
"""

import hashlib
import io
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .corpus import CAP_CLASSES, DepTree, Sentence, Treebank, Vocabulary, normalize

log = logging.getLogger(__name__)

LEFT, RIGHT = 0, 1
MAGIC = "MPIR-IORNN"
FORMAT_VERSION = 1
INIT_RANGE = 0.01


@dataclass(frozen=True)
class GenEvent:
    """One emission: ``head`` generates ``dependent`` (None means EOC)."""

    target: int
    head: int
    direction: int
    sibling_index: int
    dependent: Optional[int] = None


def decompose_tree(s: Sentence, d: DepTree, vocab: Vocabulary) -> List[GenEvent]:
    """Events in generation order: a head's own emissions, then its
    children's subtrees in the order the children were generated."""
    kids = d.children()
    words = [vocab.word_id(t.norm) for t in s.tokens]
    events: List[GenEvent] = []

    def visit(h):
        order = []
        sides = ((RIGHT, kids[0]),) if h == 0 else (
            (LEFT, [c for c in kids[h] if c < h][::-1]),
            (RIGHT, [c for c in kids[h] if c > h]))
        for direction, side in sides:
            for j, c in enumerate(side, start=1):
                events.append(GenEvent(words[c - 1], h, direction, j, c))
                order.append(c)
            events.append(GenEvent(vocab.eoc_id, h, direction, len(side) + 1, None))
        for c in order:
            visit(c)

    visit(0)
    return events


def replay(events: Sequence[GenEvent], n: int) -> DepTree:
    """Rebuild the head vector from an event sequence."""
    heads = [-1] * n
    for e in events:
        if e.dependent is not None:
            if heads[e.dependent - 1] != -1:
                raise ValueError(f"token {e.dependent} generated twice")
            heads[e.dependent - 1] = e.head
    if -1 in heads:
        raise ValueError("events do not cover every token")
    return DepTree(heads)


class IornnParams:
    """All weights of the network, as a dict of named float64 arrays."""

    BLOCKS = ("Ew", "Ep", "Ec", "Win", "bin", "oroot", "Wp", "Up", "bp",
              "Vo", "To", "co", "Ws", "bs")

    def __init__(self, vocab: Vocabulary, dim: int = 50, word_dim: int = 50,
                 pos_dim: int = 10, cap_dim: int = 5, seed: int = 0,
                 embeddings: Optional[np.ndarray] = None):
        self.vocab = vocab
        self.dim, self.word_dim, self.pos_dim, self.cap_dim = dim, word_dim, pos_dim, cap_dim
        rng = np.random.default_rng(seed)
        V, P, C = len(vocab), len(vocab.tags), len(CAP_CLASSES)
        x = word_dim + pos_dim + cap_dim

        def u(*shape):
            return rng.uniform(-INIT_RANGE, INIT_RANGE, size=shape)

        self.arrays: Dict[str, np.ndarray] = {
            "Ew": u(V, word_dim), "Ep": u(P, pos_dim), "Ec": u(C, cap_dim),
            "Win": u(dim, x), "bin": u(dim), "oroot": u(dim),
            "Wp": u(2, dim, dim), "Up": u(2, dim, dim), "bp": u(2, dim),
            "Vo": u(2, dim, dim), "To": u(dim, dim), "co": u(dim),
            "Ws": u(V, dim), "bs": u(V),
        }
        if embeddings is not None:
            if embeddings.shape != (V, word_dim):
                raise ValueError(f"embedding matrix must be {V}x{word_dim}")
            self.arrays["Ew"] = np.array(embeddings, dtype=float)
        self.embedding_mode = "pretrained" if embeddings is not None else "random"

    def __getitem__(self, name):
        return self.arrays[name]

    def copy(self) -> "IornnParams":
        other = object.__new__(IornnParams)
        other.__dict__.update(self.__dict__)
        other.arrays = {k: v.copy() for k, v in self.arrays.items()}
        return other

    def digest(self) -> str:
        h = hashlib.sha256()
        for k in self.BLOCKS:
            h.update(np.ascontiguousarray(self.arrays[k]).tobytes())
        return h.hexdigest()[:16]

    def save(self, path):
        """Text header line followed by an ``.npz`` payload."""
        buf = io.BytesIO()
        np.savez_compressed(buf, vocab=np.array(self.vocab.dumps()), **self.arrays)
        header = (f"{MAGIC} v{FORMAT_VERSION} dim={self.dim} word_dim={self.word_dim} "
                  f"pos_dim={self.pos_dim} cap_dim={self.cap_dim} "
                  f"embeddings={self.embedding_mode} vocab={self.vocab.digest()}\n")
        with open(path, "wb") as f:
            f.write(header.encode("ascii"))
            f.write(buf.getvalue())

    @classmethod
    def load(cls, path) -> "IornnParams":
        with open(path, "rb") as f:
            header = f.readline().decode("ascii").split()
            payload = f.read()
        if not header or header[0] != MAGIC:
            raise ValueError(f"{path}: not a reranker model")
        if header[1] != f"v{FORMAT_VERSION}":
            raise ValueError(f"{path}: unsupported reranker version {header[1]}")
        meta = dict(x.split("=", 1) for x in header[2:])
        data = np.load(io.BytesIO(payload))
        vocab = Vocabulary.loads(str(data["vocab"]))
        if vocab.digest() != meta["vocab"]:
            raise ValueError(f"{path}: vocabulary hash mismatch")
        p = object.__new__(cls)
        p.vocab = vocab
        p.dim, p.word_dim = int(meta["dim"]), int(meta["word_dim"])
        p.pos_dim, p.cap_dim = int(meta["pos_dim"]), int(meta["cap_dim"])
        p.embedding_mode = meta["embeddings"]
        p.arrays = {k: np.array(data[k]) for k in cls.BLOCKS}
        return p


def load_embeddings(path, vocab: Vocabulary, word_dim: int = 50, seed: int = 0) -> np.ndarray:
    """Word-vector matrix for ``vocab`` from a ``word v1 ... vd`` text file.

    File words are normalized like corpus words; the first vector for a
    normalized form wins.  Vocabulary words absent from the file get small
    seeded random vectors.
    """
    rng = np.random.default_rng(seed)
    E = rng.uniform(-INIT_RANGE, INIT_RANGE, size=(len(vocab), word_dim))
    filled = set()
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            cols = line.rstrip("\n").split(" ")
            if len(cols) < 2:
                continue
            if len(cols) - 1 != word_dim:
                raise ValueError(f"{path}:{lineno}: expected {word_dim}-dim vectors, "
                                 f"got {len(cols) - 1}")
            w = normalize(cols[0])
            i = vocab.word_ids.get(w)
            if i is not None and i not in filled:
                E[i] = [float(x) for x in cols[1:]]
                filled.add(i)
    log.info("embeddings: %d/%d vocabulary words found in %s", len(filled), len(vocab), path)
    return E


# -- forward / backward ------------------------------------------------------

def _inputs(params: IornnParams, s: Sentence):
    v = params.vocab
    w = np.array([v.word_id(t.norm) for t in s.tokens])
    p = np.array([v.pos_id(t.pos) for t in s.tokens])
    c = np.array([CAP_CLASSES.index(t.cap) for t in s.tokens])
    return w, p, c


def _forward(params: IornnParams, s: Sentence, events: Sequence[GenEvent]):
    A = params.arrays
    w, p, c = _inputs(params, s)
    X = np.concatenate([A["Ew"][w], A["Ep"][p], A["Ec"][c]], axis=1)
    I = np.tanh(X @ A["Win"].T + A["bin"])
    n = len(s)
    O = np.zeros((n + 1, params.dim))
    O[0] = A["oroot"]
    E = len(events)
    PB = np.empty((E, params.dim))
    pools = []
    generated: Dict[int, List[int]] = {}
    head_term = {}
    for e, ev in enumerate(events):
        h, di = ev.head, ev.direction
        sibs = generated.setdefault(h, [])
        key = (h, di)
        if key not in head_term:
            head_term[key] = A["Wp"][di] @ O[h] + A["bp"][di]
        if sibs:
            pool = I[[x - 1 for x in sibs]].mean(axis=0)
            z = head_term[key] + A["Up"][di] @ pool
        else:
            pool = None
            z = head_term[key]
        PB[e] = np.tanh(z)
        pools.append(pool)
        if ev.dependent is not None:
            u = ev.dependent
            O[u] = np.tanh(A["Vo"][di] @ PB[e] + A["To"] @ I[u - 1] + A["co"])
            sibs.append(u)
    logits = PB @ A["Ws"].T + A["bs"]
    logits -= logits.max(axis=1, keepdims=True)
    logZ = np.log(np.exp(logits).sum(axis=1))
    targets = np.array([ev.target for ev in events])
    logp = logits[np.arange(E), targets] - logZ
    cache = dict(w=w, p=p, c=c, X=X, I=I, O=O, PB=PB, pools=pools,
                 logits=logits, logZ=logZ, targets=targets)
    return logp, cache


def _backward(params: IornnParams, events: Sequence[GenEvent], cache) -> Dict[str, np.ndarray]:
    """Gradient of the negative log likelihood of the events."""
    A = params.arrays
    I, O, PB = cache["I"], cache["O"], cache["PB"]
    E = len(events)
    G = np.exp(cache["logits"] - cache["logZ"][:, None])
    G[np.arange(E), cache["targets"]] -= 1.0
    g = {k: np.zeros_like(v) for k, v in A.items() if k not in ("Ew", "Ep", "Ec")}
    g["Ws"] = G.T @ PB
    g["bs"] = G.sum(axis=0)
    dPB = G @ A["Ws"]
    dO = np.zeros_like(O)
    dI = np.zeros_like(I)
    sib_lists = _sibling_lists(events)
    for e in range(E - 1, -1, -1):
        ev = events[e]
        h, di = ev.head, ev.direction
        if ev.dependent is not None:
            u = ev.dependent
            dzo = dO[u] * (1.0 - O[u] ** 2)
            g["Vo"][di] += np.outer(dzo, PB[e])
            g["To"] += np.outer(dzo, I[u - 1])
            g["co"] += dzo
            dPB[e] += A["Vo"][di].T @ dzo
            dI[u - 1] += A["To"].T @ dzo
        dz = dPB[e] * (1.0 - PB[e] ** 2)
        g["Wp"][di] += np.outer(dz, O[h])
        g["bp"][di] += dz
        dO[h] += A["Wp"][di].T @ dz
        pool = cache["pools"][e]
        if pool is not None:
            g["Up"][di] += np.outer(dz, pool)
            sibs = sib_lists[e]
            dI[[x - 1 for x in sibs]] += (A["Up"][di].T @ dz) / len(sibs)
    g["oroot"] = dO[0].copy()
    dA = dI * (1.0 - I ** 2)
    g["Win"] = dA.T @ cache["X"]
    g["bin"] = dA.sum(axis=0)
    dX = dA @ A["Win"]
    dw = params.word_dim
    dp = params.pos_dim
    # embedding gradients stay sparse: (row ids, row gradients)
    g["Ew"] = (cache["w"], dX[:, :dw])
    g["Ep"] = (cache["p"], dX[:, dw:dw + dp])
    g["Ec"] = (cache["c"], dX[:, dw + dp:])
    return g


def _sibling_lists(events):
    generated: Dict[int, List[int]] = {}
    out = []
    for ev in events:
        sibs = generated.setdefault(ev.head, [])
        out.append(list(sibs))
        if ev.dependent is not None:
            sibs.append(ev.dependent)
    return out


def gradients(params: IornnParams, s: Sentence, d: DepTree, dense: bool = False):
    """Negative log likelihood of one tree and its gradient per block."""
    events = decompose_tree(s, d, params.vocab)
    logp, cache = _forward(params, s, events)
    g = _backward(params, events, cache)
    if dense:
        for k in ("Ew", "Ep", "Ec"):
            rows, vals = g[k]
            full = np.zeros_like(params.arrays[k])
            np.add.at(full, rows, vals)
            g[k] = full
    return float(-logp.sum()), g


def event_logprobs(params: IornnParams, s: Sentence, d: DepTree) -> np.ndarray:
    events = decompose_tree(s, d, params.vocab)
    return _forward(params, s, events)[0]


def tree_logprob(params: IornnParams, s: Sentence, d: DepTree) -> float:
    return float(event_logprobs(params, s, d).sum())


def outcome_distribution(params: IornnParams, partial_outer: np.ndarray) -> np.ndarray:
    """Softmax over all outcomes for a given partial outer vector."""
    z = params["Ws"] @ partial_outer + params["bs"]
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def context_states(params: IornnParams, s: Sentence, d: DepTree) -> np.ndarray:
    """Partial outer vector of every event of the tree, in event order."""
    events = decompose_tree(s, d, params.vocab)
    return _forward(params, s, events)[1]["PB"]


def _n_events(s: Sentence) -> int:
    # every word once as a dependent, two EOCs per word, one EOC for ROOT
    return 3 * len(s) + 1


def _scaled(g, c: float):
    return {k: ((v[0], v[1] * c) if isinstance(v, tuple) else v * c) for k, v in g.items()}


def _apply(params: IornnParams, g, lr: float):
    A = params.arrays
    for k, v in g.items():
        if k in ("Ew", "Ep", "Ec"):
            rows, vals = v
            np.add.at(A[k], rows, -lr * vals)
        else:
            A[k] -= lr * v


def _sum_grads(gs):
    total = {}
    for g in gs:
        for k, v in g.items():
            if k in ("Ew", "Ep", "Ec"):
                rows, vals = total.get(k, (np.zeros(0, dtype=int), None))
                total[k] = (np.concatenate([rows, v[0]]),
                            v[1] if vals is None else np.concatenate([vals, v[1]]))
            else:
                total[k] = total[k] + v if k in total else v.copy()
    return total


def train(tb: Treebank, vocab: Vocabulary, dim: int = 50, iters: int = 5, lr: float = 0.1,
          seed: int = 0, embeddings: Optional[np.ndarray] = None, word_dim: int = 50,
          threads: int = 1, init: Optional[IornnParams] = None) -> IornnParams:
    """Plain SGD, one tree per step, on the tree's cross entropy averaged
    over its generation events (the summed loss is unstable at lr 0.1).

    With ``threads > 1`` gradients of ``threads`` trees are computed
    concurrently and applied together (not bit-reproducible against the
    single-threaded schedule).
    """
    if iters < 1 or dim < 1:
        raise ValueError("iters and dim must be >= 1")
    params = init.copy() if init is not None else IornnParams(
        vocab, dim=dim, word_dim=word_dim, seed=seed, embeddings=embeddings)
    rng = np.random.default_rng(seed + 1)
    data = [(s, t) for s, t in tb]
    params.nll_history = []
    for epoch in range(iters):
        order = rng.permutation(len(data))
        total = 0.0
        if threads > 1:
            with ThreadPoolExecutor(threads) as ex:
                for b in range(0, len(order), threads):
                    batch = [data[i] for i in order[b:b + threads]]
                    results = list(ex.map(lambda st: gradients(params, *st), batch))
                    total += sum(nll for nll, _ in results)
                    gs = [_scaled(g, 1.0 / _n_events(st[0])) for (_, g), st in zip(results, batch)]
                    _apply(params, _sum_grads(gs), lr)
        else:
            for i in order:
                nll, g = gradients(params, *data[i])
                total += nll
                _apply(params, g, lr / _n_events(data[i][0]))
        params.nll_history.append(total)
        log.info("IORNN epoch %d: training NLL %.4f", epoch + 1, total)
    return params


def corpus_nll(params: IornnParams, tb: Treebank) -> float:
    return -sum(tree_logprob(params, s, t) for s, t in tb)


def rerank(params: IornnParams, kb) -> Tuple[DepTree, float]:
    """Candidate with the highest log probability; ties go to the earlier one."""
    if not kb.candidates:
        raise ValueError("empty k-best list")
    best, best_lp = None, -np.inf
    for t, _ in kb.candidates:
        lp = tree_logprob(params, kb.sentence, t)
        if best is None or lp > best_lp:
            best, best_lp = t, lp
    return best, best_lp


def rerank_all(params: IornnParams, lists, threads: int = 1):
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            return list(ex.map(lambda kb: rerank(params, kb), lists))
    return [rerank(params, kb) for kb in lists]
