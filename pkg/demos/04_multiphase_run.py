"""A scaled-down multi-phase run: phase 0, then a few iterations on short
sentences, then one phase per extra length.  All artifacts go to a
temporary directory; the manifest and an evaluation report are printed."""

import os
import tempfile

from mpir import ir, synth
from mpir.corpus import Treebank, read_conll
from mpir.evaluation import evaluate

gold = synth.sample_treebank(synth.reference_grammar(), 1200, max_len=12, seed=3)
schedule = ir.default_schedule(first_len=8, last_len=12, first_iterations=3, later_iterations=1,
                               k=10, iters_mst=1)

out = tempfile.mkdtemp(prefix="mpir-demo-")
# word vectors that cluster by tag stand in for pretrained embeddings;
# drop embeddings_path to see the run without them
vectors = os.path.join(out, "vectors.txt")
synth.write_embeddings(vectors, synth.reference_grammar().tags)
res = ir.run_mpir(gold.sentences, schedule, gold=gold, out_dir=out, embeddings_path=vectors,
                  settings=ir.schedule_settings(schedule))

print(open(os.path.join(out, "manifest.tsv")).read())
print("artifacts:", sorted(os.listdir(out)))

final = read_conll(os.path.join(out, "final.conll"))
kept = {s.tokens for s in final.sentences}
sub = Treebank([s for s in gold.sentences if s.tokens in kept],
               [t for s, t in gold if s.tokens in kept])
print(evaluate(sub, final, caps=(8, 10)).to_tsv())
