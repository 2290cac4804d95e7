"""Iterated reranking and its multi-phase (length curriculum) driver.

One iteration trains a fresh k-best parser and a fresh reranker on the
current treebank, parses every sentence into a k-best list, and keeps the
candidate the reranker likes best.  A phase repeats this for a fixed number
of iterations or until the treebank stops changing.  Phases grow the
sentence set by maximum length; the first phase starts from the DMV
initializer and every later one from the previous phase's models.
"""

import json
import logging
import os
import time
from dataclasses import dataclass, field, fields
from typing import List, Optional, Sequence

import numpy as np

from . import dmv, iornn, parser
from .corpus import (Sentence, Treebank, Vocabulary, build_vocab, read_conll, tree_problem,
                     write_conll)
from .evaluation import dda
from .features import DEFAULT_BITS, FeatureCache

log = logging.getLogger(__name__)


@dataclass
class PhaseConfig:
    max_len: int = 15
    iterations: int = 1
    k: int = 10
    iters_mst: int = 1
    dim: int = 50
    iters_iornn: int = 5
    lr: float = 0.1
    seed: int = 0
    word_dim: int = 50
    bits: int = DEFAULT_BITS

    def __post_init__(self):
        if self.iterations < 1 or self.k < 1:
            raise ValueError("iterations and k must be >= 1")
        if self.max_len < 1 or self.iters_mst < 1 or self.iters_iornn < 1 or self.dim < 1:
            raise ValueError("max_len, iters_mst, iters_iornn and dim must be >= 1")


def default_schedule(first_len: int = 15, last_len: int = 25, first_iterations: int = 100,
                     later_iterations: int = 1, **overrides) -> List[PhaseConfig]:
    """Phase 1 at ``first_len`` with many iterations, then one length step per phase."""
    return [PhaseConfig(max_len=n, iterations=first_iterations if n == first_len
                        else later_iterations, **overrides)
            for n in range(first_len, last_len + 1)]


def derive_seed(master: int, *keys: int) -> int:
    return int(np.random.SeedSequence([master, *keys]).generate_state(1)[0])


@dataclass
class IterationRecord:
    phase: int
    iteration: int
    n_sentences: int
    checksum: str
    mean_logprob: float
    dda: Optional[float] = None
    changed: Optional[int] = None
    wall_time: float = 0.0

    # wall time is kept out of the manifest so that reruns compare byte-for-byte
    MANIFEST_FIELDS = ("phase", "iteration", "n_sentences", "checksum", "mean_logprob",
                       "dda", "changed")

    def to_row(self) -> str:
        vals = []
        for k in self.MANIFEST_FIELDS:
            v = getattr(self, k)
            if v is None:
                vals.append("_")
            elif isinstance(v, float):
                vals.append(f"{v:.10f}")
            else:
                vals.append(str(v))
        return "\t".join(vals)

    @classmethod
    def from_row(cls, row: str) -> "IterationRecord":
        vals = row.split("\t")
        kw = {}
        for k, v in zip(cls.MANIFEST_FIELDS, vals):
            if v == "_":
                kw[k] = None
            elif k in ("phase", "iteration", "n_sentences", "changed"):
                kw[k] = int(v)
            elif k == "checksum":
                kw[k] = v
            else:
                kw[k] = float(v)
        return cls(**kw)


@dataclass
class RunManifest:
    """Append-only log of iterations plus the run settings echoed as a header."""

    settings: dict = field(default_factory=dict)
    records: List[IterationRecord] = field(default_factory=list)

    def append(self, rec: IterationRecord):
        self.records.append(rec)

    def dumps(self) -> str:
        lines = [f"# {k} = {v}" for k, v in self.settings.items()]
        lines.append("\t".join(IterationRecord.MANIFEST_FIELDS))
        lines += [r.to_row() for r in self.records]
        return "\n".join(lines) + "\n"

    def timings(self) -> str:
        return "".join(f"{r.phase}\t{r.iteration}\t{r.wall_time:.3f}\n" for r in self.records)

    @classmethod
    def loads(cls, text: str) -> "RunManifest":
        m = cls()
        lines = text.splitlines()
        for line in lines:
            if line.startswith("# "):
                k, v = line[2:].split(" = ", 1)
                m.settings[k] = v
        body = [x for x in lines if x and not x.startswith("#")][1:]
        m.records = [IterationRecord.from_row(x) for x in body]
        return m


@dataclass
class IterationResult:
    treebank: Treebank
    record: IterationRecord
    parser: parser.WeightModel
    reranker: iornn.IornnParams
    kbest: List[parser.KBestList]
    logprobs: List[float]


class Context:
    """What stays fixed across a run: vocabulary, embeddings, gold trees,
    feature cache and thread count."""

    def __init__(self, vocab: Vocabulary, embeddings: Optional[np.ndarray] = None,
                 gold: Optional[dict] = None, threads: int = 1, warm_start: bool = False):
        self.vocab = vocab
        self.embeddings = embeddings
        self.gold = gold or {}
        self.threads = threads
        self.warm_start = warm_start
        self.cache = FeatureCache()

    def dda(self, tb: Treebank) -> Optional[float]:
        if not self.gold:
            return None
        gold_trees = [self.gold.get(s.tokens) for s in tb.sentences]
        if any(g is None for g in gold_trees):
            return None
        return dda(Treebank(tb.sentences, gold_trees), tb)


def _stage(name):
    def wrap(fn):
        def run(*a, **kw):
            try:
                return fn(*a, **kw)
            except Exception as e:
                raise RuntimeError(f"{name} failed: {e}") from e
        return run
    return wrap


def ir_iteration(D: Treebank, cfg: PhaseConfig, ctx: Context, phase: int = 1,
                 iteration: int = 1, previous_reranker: Optional[iornn.IornnParams] = None
                 ) -> IterationResult:
    """Train P and R on ``D`` and select the next treebank from P's k-best lists."""
    if len(D) == 0:
        raise ValueError("empty treebank")
    for i, (s, t) in enumerate(D):
        if t is None or tree_problem(t.heads):
            raise ValueError(f"treebank entry {i} is not a valid tree")
    t0 = time.perf_counter()
    seed_p = derive_seed(cfg.seed, phase, iteration, 0)
    seed_r = derive_seed(cfg.seed, phase, iteration, 1)
    P = _stage("parser training")(parser.train)(
        D, iters=cfg.iters_mst, seed=seed_p, vocab=ctx.vocab, bits=cfg.bits, cache=ctx.cache)
    lists = _stage("k-best parsing")(parser.parse_kbest_all)(
        P, D.sentences, k=cfg.k, threads=ctx.threads)
    R = _stage("reranker training")(iornn.train)(
        D, ctx.vocab, dim=cfg.dim, iters=cfg.iters_iornn, lr=cfg.lr, seed=seed_r,
        embeddings=ctx.embeddings, word_dim=cfg.word_dim,
        init=previous_reranker if ctx.warm_start else None)
    chosen = _stage("reranking")(iornn.rerank_all)(R, lists, threads=ctx.threads)
    new = Treebank(list(D.sentences), [t for t, _ in chosen])
    logprobs = [lp for _, lp in chosen]
    rec = IterationRecord(
        phase=phase, iteration=iteration, n_sentences=len(new), checksum=new.checksum(),
        mean_logprob=float(np.mean(logprobs)), dda=ctx.dda(new),
        changed=sum(a != b for a, b in zip(D.trees, new.trees)),
        wall_time=time.perf_counter() - t0)
    log.info("phase %d iteration %d: %d trees changed, mean logprob %.4f, DDA %s",
             phase, iteration, rec.changed, rec.mean_logprob, rec.dda)
    return IterationResult(new, rec, P, R, lists, logprobs)


@dataclass
class PhaseResult:
    treebank: Treebank
    records: List[IterationRecord]
    parser: parser.WeightModel
    reranker: iornn.IornnParams


def run_phase(D_start: Treebank, cfg: PhaseConfig, ctx: Context, phase: int = 1,
              start_iteration: int = 1, models=None, on_iteration=None) -> PhaseResult:
    """Up to ``cfg.iterations`` iterations; stops early at a fixed point."""
    D = D_start
    records = []
    P, R = models if models is not None else (None, None)
    for it in range(start_iteration, cfg.iterations + 1):
        res = ir_iteration(D, cfg, ctx, phase, it, previous_reranker=R)
        records.append(res.record)
        fixed = res.treebank.trees == D.trees
        D, P, R = res.treebank, res.parser, res.reranker
        if on_iteration is not None:
            on_iteration(phase, it, D, P, R, res.record, fixed or it == cfg.iterations)
        if fixed:
            log.info("phase %d reached a fixed point after %d iterations", phase, it)
            break
    return PhaseResult(D, records, P, R)


def parse_final(models, sentences: Sequence[Sentence], k: int = 10, threads: int = 1) -> Treebank:
    """k-best parse with the final parser, then rerank; no length limit."""
    P, R = models
    sentences = list(sentences)
    lists = parser.parse_kbest_all(P, sentences, k=k, threads=threads)
    return Treebank(sentences, [t for t, _ in iornn.rerank_all(R, lists, threads=threads)])


@dataclass
class MpirResult:
    treebank: Treebank
    parser: parser.WeightModel
    reranker: iornn.IornnParams
    manifest: RunManifest
    phase0: Treebank


def check_schedule(schedule: Sequence[PhaseConfig]):
    if not schedule:
        raise ValueError("schedule has no phases")
    for i in range(1, len(schedule)):
        if schedule[i].max_len <= schedule[i - 1].max_len:
            raise ValueError(f"phase {i + 1}: max_len {schedule[i].max_len} does not exceed "
                             f"phase {i}'s {schedule[i - 1].max_len}; sentence sets must grow")


def run_mpir(corpus: Sequence[Sentence], schedule: Sequence[PhaseConfig],
             gold: Optional[Treebank] = None, embeddings_path=None, dmv_iters: int = 10,
             smoothing: float = 0.1, min_count: int = 3, threads: int = 1,
             warm_start: bool = False, out_dir=None, settings: Optional[dict] = None
             ) -> MpirResult:
    """Phase 0 (harmonic DMV + hard EM) followed by the phases of ``schedule``.

    With ``out_dir`` every iteration is checkpointed (treebank, both models,
    manifest) and a rerun with the same arguments resumes after the last
    completed iteration.
    """
    check_schedule(schedule)
    corpus = list(corpus)
    final_len = schedule[-1].max_len
    used = [s for s in corpus if len(s) <= final_len]
    vocab = build_vocab(used, min_count)
    embeddings = None
    if embeddings_path is not None:
        embeddings = iornn.load_embeddings(embeddings_path, vocab, schedule[0].word_dim,
                                           seed=schedule[0].seed)
    gold_map = {}
    if gold is not None:
        gold_map = {s.tokens: t for s, t in gold if t is not None}
    ctx = Context(vocab, embeddings, gold_map, threads, warm_start)

    manifest = RunManifest(dict(settings or {}))
    manifest.settings.setdefault("embeddings", "pretrained" if embeddings is not None else "random")
    manifest.settings.setdefault("phases", " ".join(str(c.max_len) for c in schedule))
    ckpt = _Checkpoint(out_dir, manifest) if out_dir is not None else None
    state = ckpt.resume() if ckpt is not None else None

    sets = []
    for i, cfg in enumerate(schedule, start=1):
        S = [s for s in corpus if len(s) <= cfg.max_len]
        if not S:
            raise ValueError(f"phase {i}: no sentences of length <= {cfg.max_len}")
        if sets and not set(x.tokens for x in sets[-1]) <= set(x.tokens for x in S):
            raise ValueError(f"phase {i}: sentence set does not contain phase {i - 1}'s")
        sets.append(S)

    if state is None:
        # phase 0 shares its sentence set with phase 1
        S0 = sets[0]
        params = dmv.hard_em_train(S0, dmv.harmonic_init(S0, smoothing), dmv_iters, smoothing, threads)
        phase0 = dmv.annotate(params, S0, threads)
        logps = [dmv.tree_logprob(params, s, t) for s, t in phase0]
        rec = IterationRecord(0, 0, len(phase0), phase0.checksum(), float(np.mean(logps)),
                              ctx.dda(phase0), None, 0.0)
        manifest.append(rec)
        if ckpt is not None:
            ckpt.save_phase0(phase0, params)
        D, P, R = phase0, None, None
        start_phase, start_it = 1, 1
    else:
        phase0 = state["phase0"]
        D, P, R = state["treebank"], state["parser"], state["reranker"]
        start_phase, start_it = state["next_phase"], state["next_iteration"]

    on_iteration = ckpt.save_iteration if ckpt is not None else None
    for i in range(start_phase, len(schedule) + 1):
        cfg = schedule[i - 1]
        S = sets[i - 1]
        if start_it == 1 and i > 1:
            D = _handoff(D, S, (P, R), cfg, ctx)
        res = run_phase(D, cfg, ctx, phase=i, start_iteration=start_it,
                        models=(P, R), on_iteration=_chain(manifest, on_iteration))
        D, P, R = res.treebank, res.parser, res.reranker
        start_it = 1
    if ckpt is not None:
        ckpt.finish(D, P, R)
    return MpirResult(D, P, R, manifest, phase0)


def _chain(manifest, callback):
    def on_iteration(phase, it, D, P, R, rec, phase_done):
        manifest.append(rec)
        if callback is not None:
            callback(phase, it, D, P, R, rec, phase_done)
    return on_iteration


def _handoff(D_prev: Treebank, S: Sequence[Sentence], models, cfg: PhaseConfig,
             ctx: Context) -> Treebank:
    """Keep existing trees; annotate newly admitted sentences with the
    previous phase's parser and reranker."""
    known = {s.tokens: t for s, t in D_prev}
    new = [s for s in S if s.tokens not in known]
    if new:
        fresh = parse_final(models, new, k=cfg.k, threads=ctx.threads)
        known.update({s.tokens: t for s, t in fresh})
    return Treebank(list(S), [known[s.tokens] for s in S])


class _Checkpoint:
    """Per-iteration artifacts under one output directory."""

    def __init__(self, out_dir, manifest: RunManifest):
        self.dir = str(out_dir)
        self.manifest = manifest
        os.makedirs(self.dir, exist_ok=True)

    def path(self, *parts):
        return os.path.join(self.dir, *parts)

    def _write_manifest(self):
        tmp = self.path("manifest.tsv.tmp")
        with open(tmp, "w", encoding="utf-8") as f:
            f.write(self.manifest.dumps())
        os.replace(tmp, self.path("manifest.tsv"))
        with open(self.path("timings.tsv"), "w", encoding="utf-8") as f:
            f.write(self.manifest.timings())

    def _write_state(self, **state):
        tmp = self.path("state.json.tmp")
        with open(tmp, "w", encoding="utf-8") as f:
            json.dump(state, f, sort_keys=True)
        os.replace(tmp, self.path("state.json"))

    def save_phase0(self, tb, params):
        write_conll(tb, self.path("phase0.conll"))
        params.save(self.path("phase0.dmv"))
        self._write_manifest()
        self._write_state(phase=0, iteration=0, phase_done=True,
                          treebank="phase0.conll", settings=self.manifest.settings)

    def save_iteration(self, phase, it, D, P, R, rec, phase_done):
        os.makedirs(self.path(f"phase{phase:02d}"), exist_ok=True)
        name = os.path.join(f"phase{phase:02d}", f"iter{it:03d}.conll")
        write_conll(D, self.path(name))
        P.save(self.path("parser.model.tmp"))
        R.save(self.path("reranker.model.tmp"))
        os.replace(self.path("parser.model.tmp"), self.path("parser.model"))
        os.replace(self.path("reranker.model.tmp"), self.path("reranker.model"))
        self._write_manifest()
        self._write_state(phase=phase, iteration=it, phase_done=bool(phase_done),
                          treebank=name, settings=self.manifest.settings)

    def finish(self, D, P, R):
        write_conll(D, self.path("final.conll"))

    def resume(self):
        if not os.path.exists(self.path("state.json")):
            return None
        with open(self.path("state.json"), encoding="utf-8") as f:
            state = json.load(f)
        if state["settings"] != self.manifest.settings:
            raise ValueError(f"{self.dir}: existing run used different settings; "
                             "use a fresh output directory")
        with open(self.path("manifest.tsv"), encoding="utf-8") as f:
            self.manifest.records = RunManifest.loads(f.read()).records
        phase0 = read_conll(self.path("phase0.conll"))
        tb = read_conll(self.path(state["treebank"]))
        if state["phase"] == 0:
            P = R = None
        else:
            P = parser.WeightModel.load(self.path("parser.model"))
            R = iornn.IornnParams.load(self.path("reranker.model"))
        if state["phase_done"]:
            nxt = (state["phase"] + 1, 1)
        else:
            nxt = (state["phase"], state["iteration"] + 1)
        log.info("resuming %s at phase %d iteration %d", self.dir, *nxt)
        return dict(phase0=phase0, treebank=tb, parser=P, reranker=R,
                    next_phase=nxt[0], next_iteration=nxt[1])


def schedule_settings(schedule: Sequence[PhaseConfig], **extra) -> dict:
    """Flat settings echo for the manifest header."""
    out = {}
    first = schedule[0]
    for f in fields(PhaseConfig):
        if f.name in ("max_len", "iterations"):
            continue
        vals = {getattr(c, f.name) for c in schedule}
        out[f.name] = getattr(first, f.name) if len(vals) == 1 else \
            ",".join(str(getattr(c, f.name)) for c in schedule)
    out["lengths"] = ",".join(str(c.max_len) for c in schedule)
    out["iterations"] = ",".join(str(c.iterations) for c in schedule)
    out.update(extra)
    return {k: str(v) for k, v in out.items()}

