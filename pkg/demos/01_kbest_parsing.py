"""Train the k-best parser on the bundled toy treebank and look at the
candidate trees it proposes for a sentence it has never seen."""

import os

import mpir
from mpir import parser
from mpir.corpus import Sentence, read_conll

tiny = read_conll(os.path.join(os.path.dirname(mpir.__file__), "data", "tiny.conll"))
print(f"{len(tiny)} training sentences")

model = parser.train(tiny, iters=10, seed=0, bits=18)
print("perceptron mistakes per epoch:", model.mistakes)

s = Sentence.from_pairs([("The", "DT"), ("old", "JJ"), ("dog", "NN"), ("sat", "VBD"),
                         ("on", "IN"), ("the", "DT"), ("mat", "NN")])
kb = parser.parse_kbest(model, s, k=5)

# score first, then head vector: ties always come out in the same order
for rank, (tree, score) in enumerate(kb.candidates, start=1):
    arcs = " ".join(f"{s.tokens[d - 1].surface}<-{'ROOT' if h == 0 else s.tokens[h - 1].surface}"
                    for h, d in tree.arcs())
    print(f"{rank}. {score:8.3f}  {arcs}")
