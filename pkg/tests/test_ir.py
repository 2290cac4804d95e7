import os

import numpy as np
import pytest

from mpir import iornn, ir, parser, synth
from mpir.corpus import DepTree, Sentence, Treebank, build_vocab, read_conll

SMALL = dict(dim=8, word_dim=8, iters_iornn=2, bits=16, k=5)


@pytest.fixture(scope="module")
def synthetic():
    return synth.sample_treebank(synth.reference_grammar(), 80, max_len=8, seed=11)


def _ctx(tb, **kw):
    return ir.Context(build_vocab(tb.sentences, 2), gold={s.tokens: t for s, t in tb}, **kw)


def test_selection_is_reranker_argmax(synthetic):
    D = Treebank(synthetic.sentences[:20], synthetic.trees[:20])
    cfg = ir.PhaseConfig(max_len=8, **SMALL)
    res = ir.ir_iteration(D, cfg, _ctx(D))
    for kb, chosen, lp in zip(res.kbest, res.treebank.trees, res.logprobs):
        scores = [iornn.tree_logprob(res.reranker, kb.sentence, t) for t in kb.trees]
        assert chosen == kb.trees[int(np.argmax(scores))]
        assert lp == pytest.approx(max(scores), abs=1e-12)
    # the k-best lists are the trained parser's
    assert res.kbest[0].candidates == parser.parse_kbest(res.parser, D.sentences[0], 5).candidates
    assert res.record.dda == 1.0 or 0 <= res.record.dda < 1


def test_iteration_is_deterministic(synthetic):
    D = Treebank(synthetic.sentences[:20], synthetic.trees[:20])
    cfg = ir.PhaseConfig(max_len=8, seed=4, **SMALL)
    a = ir.ir_iteration(D, cfg, _ctx(D), 1, 3)
    b = ir.ir_iteration(D, cfg, _ctx(D), 1, 3)
    assert a.treebank == b.treebank and a.reranker.digest() == b.reranker.digest()
    assert a.record.to_row() == b.record.to_row()


def test_seeds_differ_by_iteration():
    seeds = {ir.derive_seed(0, p, i, r) for p in range(3) for i in range(5) for r in (0, 1)}
    assert len(seeds) == 30
    assert ir.derive_seed(1, 1, 1, 0) == ir.derive_seed(1, 1, 1, 0)


def test_iteration_input_errors(synthetic):
    cfg = ir.PhaseConfig(**SMALL)
    with pytest.raises(ValueError, match="empty"):
        ir.ir_iteration(Treebank(), cfg, _ctx(synthetic))
    s = Sentence.from_pairs([("a", "DT"), ("b", "NN")])
    with pytest.raises(ValueError, match="not a valid tree"):
        ir.ir_iteration(Treebank([s], [DepTree((0, 0))]), cfg, _ctx(synthetic))


def test_failing_stage_is_named(synthetic, monkeypatch):
    D = Treebank(synthetic.sentences[:5], synthetic.trees[:5])

    def boom(*a, **kw):
        raise FloatingPointError("nan loss")
    monkeypatch.setattr(iornn, "train", boom)
    with pytest.raises(RuntimeError, match="reranker training failed: nan loss"):
        ir.ir_iteration(D, ir.PhaseConfig(**SMALL), _ctx(D))


def test_phase_stops_at_fixed_point(synthetic, monkeypatch):
    calls = []
    real = ir.ir_iteration

    def same(D, cfg, ctx, phase, it, previous_reranker=None):
        calls.append(it)
        res = real(D, cfg, ctx, phase, it, previous_reranker)
        res.treebank = D
        return res
    monkeypatch.setattr(ir, "ir_iteration", same)
    D = Treebank(synthetic.sentences[:10], synthetic.trees[:10])
    out = ir.run_phase(D, ir.PhaseConfig(iterations=5, **SMALL), _ctx(D))
    assert calls == [1] and len(out.records) == 1


def test_schedule_checks():
    assert [c.max_len for c in ir.default_schedule()] == list(range(15, 26))
    assert [c.iterations for c in ir.default_schedule()][:2] == [100, 1]
    with pytest.raises(ValueError, match="sentence sets must grow"):
        ir.check_schedule([ir.PhaseConfig(max_len=10), ir.PhaseConfig(max_len=10)])
    with pytest.raises(ValueError):
        ir.PhaseConfig(k=0)


def test_manifest_round_trip():
    m = ir.RunManifest({"k": "10"})
    m.append(ir.IterationRecord(0, 0, 5, "abc", -1.25, None, None, 3.5))
    m.append(ir.IterationRecord(1, 1, 5, "def", -2.5, 0.75, 2, 1.0))
    back = ir.RunManifest.loads(m.dumps())
    assert back.settings == m.settings and back.dumps() == m.dumps()
    assert "3.5" not in m.dumps() and "3.500" in m.timings()


def _schedule():
    return [ir.PhaseConfig(max_len=6, iterations=2, **SMALL),
            ir.PhaseConfig(max_len=8, iterations=1, **SMALL)]


def test_run_mpir_handoff_and_outputs(synthetic, tmp_path):
    res = ir.run_mpir(synthetic.sentences, _schedule(), gold=synthetic, min_count=2,
                      out_dir=tmp_path)
    phases = [(r.phase, r.iteration) for r in res.manifest.records]
    assert phases == [(0, 0), (1, 1), (1, 2), (2, 1)]
    assert len(res.phase0) == sum(len(s) <= 6 for s in synthetic.sentences)
    assert len(res.treebank) == len(synthetic)
    assert all(t.is_valid() for t in res.treebank.trees)
    for name in ("manifest.tsv", "timings.tsv", "phase0.conll", "phase0.dmv", "final.conll",
                 "parser.model", "reranker.model", "phase01/iter002.conll",
                 "phase02/iter001.conll"):
        assert os.path.exists(tmp_path / name), name
    assert read_conll(tmp_path / "final.conll") == res.treebank
    assert "# embeddings = random" in (tmp_path / "manifest.tsv").read_text()


@pytest.mark.parametrize("crash_at", [(1, 1), (1, 2)])
def test_resume_after_interruption(synthetic, tmp_path, monkeypatch, crash_at):
    full = ir.run_mpir(synthetic.sentences, _schedule(), min_count=2, out_dir=tmp_path / "a")

    real = ir._Checkpoint.save_iteration

    def crash_after(self, phase, it, *a):
        real(self, phase, it, *a)
        if (phase, it) == crash_at:
            raise KeyboardInterrupt
    monkeypatch.setattr(ir._Checkpoint, "save_iteration", crash_after)
    with pytest.raises(KeyboardInterrupt):
        ir.run_mpir(synthetic.sentences, _schedule(), min_count=2, out_dir=tmp_path / "b")
    monkeypatch.setattr(ir._Checkpoint, "save_iteration", real)
    assert not os.path.exists(tmp_path / "b" / "final.conll")
    again = ir.run_mpir(synthetic.sentences, _schedule(), min_count=2, out_dir=tmp_path / "b")
    assert again.treebank == full.treebank
    assert (tmp_path / "a" / "manifest.tsv").read_bytes() == \
        (tmp_path / "b" / "manifest.tsv").read_bytes()


def test_resume_refuses_other_settings(synthetic, tmp_path):
    sched = [ir.PhaseConfig(max_len=6, iterations=1, **SMALL)]
    ir.run_mpir(synthetic.sentences, sched, min_count=2, out_dir=tmp_path,
                settings=ir.schedule_settings(sched))
    other = [ir.PhaseConfig(max_len=6, iterations=1, **dict(SMALL, k=3))]
    with pytest.raises(ValueError, match="different settings"):
        ir.run_mpir(synthetic.sentences, other, min_count=2, out_dir=tmp_path,
                    settings=ir.schedule_settings(other))
