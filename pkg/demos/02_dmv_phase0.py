# Phase 0: harmonic initialization + hard EM for the DMV, on a corpus
# sampled from a known grammar so the induced trees can be scored.

import numpy as np

from mpir import dmv, synth
from mpir.evaluation import dda, pos_accuracy_report

grammar = synth.reference_grammar()
gold = synth.sample_treebank(grammar, 1000, max_len=10, seed=1)
S = gold.sentences
print(f"{len(S)} sentences, mean length {np.mean([len(s) for s in S]):.1f}")

init = dmv.harmonic_init(S)
print(f"harmonic start: DDA {dda(gold, dmv.annotate(init, S)):.3f}")

params = dmv.hard_em_train(S, init, iters=10)
for i, v in enumerate(params.history):
    print(f"  iteration {i:2d}  corpus log-prob {v:12.3f}")

pred = dmv.annotate(params, S)
print(f"after hard EM: DDA {dda(gold, pred):.3f}")
for tag, ok, total, acc in pos_accuracy_report(gold, pred):
    print(f"  {tag:4s} {acc:.3f} ({ok}/{total})")

# the reference grammar's own Viterbi trees are the ceiling here
print(f"reference grammar: DDA {dda(gold, dmv.annotate(grammar, S)):.3f}")
