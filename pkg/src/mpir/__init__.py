"""Unsupervised dependency parsing by multi-phase iterated reranking."""

from .corpus import (ConllError, DepTree, Sentence, Token, Treebank, TreeError, Vocabulary,
                     build_vocab, read_conll, write_conll)
from .evaluation import dda, dda_at, evaluate
from .ir import PhaseConfig, default_schedule, ir_iteration, run_mpir, run_phase

__version__ = "0.1.0"
