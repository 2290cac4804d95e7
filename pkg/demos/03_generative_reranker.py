"""The reranker is a generative model: it assigns every tree a log
probability, and reranking a k-best list means keeping the most probable
candidate.

Here the parser is trained on noisy phase-0 trees, and the reranker on
the same trees; we then compare 1-best, reranked and oracle accuracy.
"""

from mpir import dmv, iornn, parser, synth
from mpir.corpus import Treebank, build_vocab
from mpir.evaluation import dda

gold = synth.sample_treebank(synth.reference_grammar(), 800, max_len=10, seed=2)
S = gold.sentences
vocab = build_vocab(S, min_count=3)

noisy = dmv.annotate(dmv.hard_em_train(S, dmv.harmonic_init(S), iters=10), S)
P = parser.train(noisy, iters=1, seed=0, vocab=vocab)
lists = parser.parse_kbest_all(P, S, k=10)

R = iornn.train(noisy, vocab, dim=50, iters=5, lr=0.1, seed=0)
print("reranker training NLL per epoch:", [round(x) for x in R.nll_history])

first = Treebank(S, [kb.trees[0] for kb in lists])
reranked = Treebank(S, [t for t, _ in iornn.rerank_all(R, lists)])
oracle = Treebank(S, [max(kb.trees, key=lambda t: sum(a == b for a, b in zip(t.heads, g.heads)))
                      for kb, g in zip(lists, gold.trees)])

print(f"phase-0 trees : {dda(gold, noisy):.3f}")
print(f"parser 1-best : {dda(gold, first):.3f}")
print(f"reranked      : {dda(gold, reranked):.3f}")
print(f"10-best oracle: {dda(gold, oracle):.3f}")

s, t = S[0], reranked.trees[0]
print("\nper-event log-probs for", " ".join(tok.surface for tok in s.tokens))
for ev, lp in zip(iornn.decompose_tree(s, t, vocab), iornn.event_logprobs(R, s, t)):
    what = "EOC" if ev.dependent is None else s.tokens[ev.dependent - 1].surface
    head = "ROOT" if ev.head == 0 else s.tokens[ev.head - 1].surface
    print(f"  {head:>6s} {'LR'[ev.direction]} -> {what:6s} {lp:7.3f}")
