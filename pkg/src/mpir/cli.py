"""Command line entry point: ``mpir <command> ...``.

Commands: phase0, parse, rerank, mpir, eval, synth.  ``mpir`` also reads a
``key = value`` config file (``#`` starts a comment); flags given on the
command line override the file.
"""

import argparse
import logging
import os
import sys
from dataclasses import dataclass, fields
from typing import Optional

from . import dmv, evaluation, iornn, ir, parser, synth
from .corpus import Treebank, read_conll, write_conll

log = logging.getLogger("mpir")

ENC_ITERS = {"max": 1, "min": 10}


class CliError(Exception):
    pass


def _positive(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _non_negative(text):
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {v}")
    return v


def _need_file(path, what="file"):
    if path is None or not os.path.isfile(path):
        raise CliError(f"{what} not found: {path}")
    return path


# -- run configuration ----------------------------------------------------------

@dataclass
class RunConfig:
    corpus: Optional[str] = None
    gold: Optional[str] = None
    embeddings: Optional[str] = None
    out_dir: Optional[str] = None
    k: int = 10
    iters_mst: int = 10
    dim: int = 50
    iters_iornn: int = 5
    lr: float = 0.1
    word_dim: int = 50
    bits: int = 22
    first_len: int = 15
    last_len: int = 25
    first_iterations: int = 100
    later_iterations: int = 1
    dmv_iters: int = 10
    smoothing: float = 0.1
    min_count: int = 3
    seed: int = 0
    threads: int = 1
    warm_start: bool = False

    def set(self, key, value: str, origin="config"):
        key = key.replace("-", "_")
        if key == "enc":
            if value not in ENC_ITERS:
                raise CliError(f"{origin}: enc must be 'max' or 'min', got {value!r}")
            self.iters_mst = ENC_ITERS[value]
            return
        types = {f.name: f.type for f in fields(self)}
        if key not in types:
            raise CliError(f"{origin}: unknown key {key!r}")
        t = types[key]
        try:
            if t in (bool, "bool"):
                if value.lower() not in ("true", "false", "1", "0", "yes", "no"):
                    raise ValueError(value)
                v = value.lower() in ("true", "1", "yes")
            elif t in (int, "int"):
                v = int(value)
            elif t in (float, "float"):
                v = float(value)
            else:
                v = value
        except ValueError:
            raise CliError(f"{origin}: bad value for {key}: {value!r}")
        setattr(self, key, v)

    def load(self, path):
        with open(_need_file(path, "config file"), encoding="utf-8") as f:
            for n, line in enumerate(f, start=1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise CliError(f"{path}:{n}: expected 'key = value'")
                k, v = (x.strip() for x in line.split("=", 1))
                self.set(k, v, f"{path}:{n}")

    def validate(self):
        _need_file(self.corpus, "corpus")
        if self.gold is not None:
            _need_file(self.gold, "gold treebank")
        if self.embeddings is not None:
            _need_file(self.embeddings, "embedding file")
        if self.out_dir is None:
            raise CliError("no output directory given (--out-dir)")
        if self.last_len < self.first_len:
            raise CliError("last_len must be >= first_len")

    def settings(self, schedule=None):
        """What the manifest header echoes; a resumed run must match it."""
        return ir.schedule_settings(
            schedule or self.schedule(), dmv_iters=self.dmv_iters, smoothing=self.smoothing,
            min_count=self.min_count, warm_start=self.warm_start,
            enc={v: k for k, v in ENC_ITERS.items()}.get(self.iters_mst, "custom"))

    def schedule(self):
        return ir.default_schedule(
            self.first_len, self.last_len, self.first_iterations, self.later_iterations,
            k=self.k, iters_mst=self.iters_mst, dim=self.dim, iters_iornn=self.iters_iornn,
            lr=self.lr, seed=self.seed, word_dim=self.word_dim, bits=self.bits)


# -- commands -----------------------------------------------------------------

def cmd_phase0(args):
    tb = read_conll(_need_file(args.corpus, "corpus"))
    S = [s for s in tb.sentences if args.max_len is None or len(s) <= args.max_len]
    if not S:
        raise CliError(f"{args.corpus}: no sentences of length <= {args.max_len}")
    params = dmv.hard_em_train(S, dmv.harmonic_init(S, args.smoothing), args.iters,
                               args.smoothing, args.threads)
    out = dmv.annotate(params, S, args.threads)
    os.makedirs(args.out_dir, exist_ok=True)
    params.save(os.path.join(args.out_dir, "phase0.dmv"))
    write_conll(out, os.path.join(args.out_dir, "phase0.conll"))
    with open(os.path.join(args.out_dir, "phase0.history"), "w", encoding="utf-8") as f:
        f.writelines(f"{i}\t{v!r}\n" for i, v in enumerate(params.history))
    if tb.annotated:
        gold = Treebank(S, [t for s, t in tb if args.max_len is None or len(s) <= args.max_len])
        print(f"dda\t{evaluation.dda(gold, out):.4f}")
    return 0


def cmd_parse(args):
    model = parser.WeightModel.load(_need_file(args.model, "parser model"))
    tb = read_conll(_need_file(args.input, "input"))
    lists = parser.parse_kbest_all(model, tb.sentences, args.k, args.threads)
    parser.write_kbest(lists, args.output)
    return 0


def cmd_rerank(args):
    params = iornn.IornnParams.load(_need_file(args.model, "reranker model"))
    lists = parser.read_kbest(_need_file(args.kbest, "k-best file"))
    chosen = iornn.rerank_all(params, lists, args.threads)
    write_conll(Treebank([kb.sentence for kb in lists], [t for t, _ in chosen]), args.output)
    return 0


def cmd_mpir(args):
    cfg = RunConfig()
    if args.config:
        cfg.load(args.config)
    for key in ("corpus", "gold", "embeddings", "out_dir", "seed", "threads", "enc", "k",
                "first_iterations"):
        v = getattr(args, key, None)
        if v is not None:
            cfg.set(key, str(v), "command line")
    cfg.validate()
    corpus = read_conll(cfg.corpus)
    gold = read_conll(cfg.gold) if cfg.gold else (corpus if corpus.annotated else None)
    schedule = cfg.schedule()
    settings = cfg.settings(schedule)
    res = ir.run_mpir(corpus.sentences, schedule, gold=gold, embeddings_path=cfg.embeddings,
                      dmv_iters=cfg.dmv_iters, smoothing=cfg.smoothing,
                      min_count=cfg.min_count, threads=cfg.threads,
                      warm_start=cfg.warm_start, out_dir=cfg.out_dir, settings=settings)
    last = res.manifest.records[-1]
    print(f"final treebank: {os.path.join(cfg.out_dir, 'final.conll')} "
          f"({last.n_sentences} sentences, checksum {last.checksum})")
    return 0


def cmd_eval(args):
    gold = read_conll(_need_file(args.gold, "gold treebank"))
    pred = read_conll(_need_file(args.pred, "prediction"))
    bins = tuple(int(x) for x in args.bins.split(",")) if args.bins else evaluation.DEFAULT_BINS
    exclude = [x for x in (args.exclude_pos or "").split(",") if x]
    report = evaluation.evaluate(gold, pred, caps=args.cap or (), bins=bins, exclude_pos=exclude)
    sys.stdout.write(report.to_json() + "\n" if args.json else report.to_tsv())
    return 0


def cmd_synth(args):
    grammar = dmv.DmvParams.load(_need_file(args.grammar, "grammar")) if args.grammar \
        else synth.reference_grammar()
    grammar.check()
    tb = synth.sample_treebank(grammar, args.n, args.max_len, args.seed, args.lexicon_size)
    os.makedirs(args.out_dir, exist_ok=True)
    write_conll(tb, os.path.join(args.out_dir, "corpus.conll"))
    grammar.save(os.path.join(args.out_dir, "grammar.dmv"))
    if args.embeddings:
        synth.write_embeddings(os.path.join(args.out_dir, "embeddings.txt"), grammar.tags,
                               args.lexicon_size, args.embedding_dim, args.seed)
    return 0


# -- argument parsing -----------------------------------------------------------

def build_parser():
    ap = argparse.ArgumentParser(prog="mpir", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phase0", help="harmonic DMV + hard EM, then Viterbi-annotate")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--iters", type=_positive, default=10)
    p.add_argument("--smoothing", type=float, default=0.1)
    p.add_argument("--max-len", type=_positive, default=15)
    p.add_argument("--threads", type=_positive, default=1)
    p.set_defaults(func=cmd_phase0)

    p = sub.add_parser("parse", help="k-best parse a CoNLL file with a trained parser")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--k", type=_positive, default=10)
    p.add_argument("--threads", type=_positive, default=1)
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("rerank", help="pick the best candidate of each k-best list")
    p.add_argument("--model", required=True)
    p.add_argument("--kbest", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--threads", type=_positive, default=1)
    p.set_defaults(func=cmd_rerank)

    p = sub.add_parser("mpir", help="full multi-phase iterated reranking run")
    p.add_argument("--config")
    p.add_argument("--corpus")
    p.add_argument("--gold")
    p.add_argument("--embeddings")
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--enc", choices=sorted(ENC_ITERS))
    p.add_argument("--k", type=_positive)
    p.add_argument("--first-iterations", dest="first_iterations", type=_positive)
    p.add_argument("--seed", type=_non_negative)
    p.add_argument("--threads", type=_positive)
    p.set_defaults(func=cmd_mpir)

    p = sub.add_parser("eval", help="directed dependency accuracy and breakdowns")
    p.add_argument("--gold", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--cap", type=_positive, action="append")
    p.add_argument("--bins", help="comma-separated bin edges, last one open-ended")
    p.add_argument("--exclude-pos", help="comma-separated tags left out of scoring")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="sample a corpus with gold trees from a DMV")
    p.add_argument("--grammar", help="DMV parameter file (default: built-in reference grammar)")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--n", type=_non_negative, default=2000)
    p.add_argument("--max-len", type=_positive, default=10)
    p.add_argument("--seed", type=_non_negative, default=0)
    p.add_argument("--lexicon-size", type=_positive, default=6)
    p.add_argument("--embeddings", action="store_true", help="also write tag-clustered vectors")
    p.add_argument("--embedding-dim", type=_positive, default=50)
    p.set_defaults(func=cmd_synth)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        return args.func(args)
    except (CliError, OSError, ValueError, RuntimeError) as e:
        print(f"mpir {args.command}: error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
