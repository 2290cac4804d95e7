import json
import os
import subprocess
import sys

import pytest

from mpir import dmv, synth
from mpir.cli import RunConfig, main
from mpir.corpus import read_conll

SMALL_CFG = """# quick run
k = 4
first_len = 6
last_len = 7
first_iterations = 2   # trailing comment
dim = 8
word_dim = 8
iters_iornn = 2
bits = 16
min_count = 2
"""


@pytest.fixture
def corpus(tmp_path):
    assert main(["synth", "--out-dir", str(tmp_path / "syn"), "--n", "60", "--max-len", "7",
                 "--seed", "3", "--embeddings", "--embedding-dim", "8"]) == 0
    return tmp_path / "syn"


def test_synth_is_seed_deterministic(tmp_path, corpus):
    main(["synth", "--out-dir", str(tmp_path / "again"), "--n", "60", "--max-len", "7",
          "--seed", "3", "--embeddings", "--embedding-dim", "8"])
    for name in ("corpus.conll", "grammar.dmv", "embeddings.txt"):
        assert (corpus / name).read_bytes() == (tmp_path / "again" / name).read_bytes()
    tb = read_conll(corpus / "corpus.conll")
    assert len(tb) == 60 and all(t.is_valid() for t in tb.trees)
    assert max(len(s) for s in tb.sentences) <= 7


def test_synth_zero_sentences(tmp_path):
    assert main(["synth", "--out-dir", str(tmp_path), "--n", "0"]) == 0
    assert (tmp_path / "corpus.conll").read_text() == ""
    assert len(read_conll(tmp_path / "corpus.conll")) == 0


def test_synth_from_grammar_file(tmp_path):
    g = synth.reference_grammar()
    g.save(tmp_path / "g.dmv")
    main(["synth", "--grammar", str(tmp_path / "g.dmv"), "--out-dir", str(tmp_path / "a"),
          "--n", "20"])
    main(["synth", "--out-dir", str(tmp_path / "b"), "--n", "20"])
    assert (tmp_path / "a" / "corpus.conll").read_text() == \
        (tmp_path / "b" / "corpus.conll").read_text()


def test_phase0(tmp_path, corpus, capsys):
    assert main(["phase0", "--corpus", str(corpus / "corpus.conll"), "--out-dir",
                 str(tmp_path / "p0"), "--iters", "3"]) == 0
    assert capsys.readouterr().out.startswith("dda\t")
    dmv.DmvParams.load(tmp_path / "p0" / "phase0.dmv").check()
    assert len(read_conll(tmp_path / "p0" / "phase0.conll")) == 60


def test_missing_file_names_path(tmp_path, capsys):
    code = main(["phase0", "--corpus", str(tmp_path / "absent.conll"), "--out-dir", str(tmp_path)])
    assert code != 0 and "absent.conll" in capsys.readouterr().err


def test_zero_iterations_is_usage_error(tmp_path, corpus):
    with pytest.raises(SystemExit) as e:
        main(["phase0", "--corpus", str(corpus / "corpus.conll"), "--out-dir", str(tmp_path),
              "--iters", "0"])
    assert e.value.code == 2


def test_default_settings_echo():
    s = RunConfig().settings()
    assert s["k"] == "10" and s["dim"] == "50" and s["iters_iornn"] == "5" and s["lr"] == "0.1"
    assert s["lengths"] == ",".join(str(n) for n in range(15, 26))
    assert s["iterations"] == ",".join(["100"] + ["1"] * 10)


@pytest.mark.parametrize("enc,iters", [("max", 1), ("min", 10)])
def test_enc_flag(enc, iters):
    cfg = RunConfig()
    cfg.set("enc", enc)
    assert cfg.iters_mst == iters and cfg.settings()["enc"] == enc


def test_config_rejects_unknown_keys(tmp_path, corpus, capsys):
    (tmp_path / "bad.cfg").write_text("k = 10\nbeam = 3\n")
    code = main(["mpir", "--config", str(tmp_path / "bad.cfg"), "--corpus",
                 str(corpus / "corpus.conll"), "--out-dir", str(tmp_path / "run")])
    err = capsys.readouterr().err
    assert code != 0 and "bad.cfg:2" in err and "beam" in err
    assert not os.path.exists(tmp_path / "run")  # validated before any work
    (tmp_path / "bad2.cfg").write_text("k = ten\n")
    assert main(["mpir", "--config", str(tmp_path / "bad2.cfg"), "--corpus",
                 str(corpus / "corpus.conll"), "--out-dir", str(tmp_path / "run")]) != 0


def test_mpir_parse_rerank_eval(tmp_path, corpus, capsys):
    (tmp_path / "run.cfg").write_text(SMALL_CFG)
    run = tmp_path / "run"
    args = ["mpir", "--config", str(tmp_path / "run.cfg"), "--corpus",
            str(corpus / "corpus.conll"), "--out-dir", str(run), "--enc", "max",
            "--embeddings", str(corpus / "embeddings.txt")]
    assert main(args) == 0
    manifest = (run / "manifest.tsv").read_text()
    assert "# enc = max" in manifest and "# embeddings = pretrained" in manifest
    assert "# k = 4" in manifest
    # rerunning a finished run resumes past its end and reproduces the result
    before = (run / "final.conll").read_bytes()
    assert main(args) == 0 and (run / "final.conll").read_bytes() == before

    kb = tmp_path / "kb.txt"
    assert main(["parse", "--model", str(run / "parser.model"), "--input",
                 str(corpus / "corpus.conll"), "--output", str(kb), "--k", "3"]) == 0
    out = tmp_path / "rr.conll"
    assert main(["rerank", "--model", str(run / "reranker.model"), "--kbest", str(kb),
                 "--output", str(out)]) == 0
    assert len(read_conll(out)) == 60
    capsys.readouterr()
    assert main(["eval", "--gold", str(corpus / "corpus.conll"), "--pred", str(out),
                 "--cap", "5", "--json"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert 0 <= doc["dda"] <= 1 and "5" in doc["dda_at"]
    assert doc["head_distance_bins"][0]["bin"] == "ROOT"


def test_console_script_help():
    out = subprocess.run([sys.executable, "-m", "mpir.cli", "--help"], capture_output=True,
                         text=True)
    assert out.returncode == 0
    for cmd in ("phase0", "parse", "rerank", "mpir", "eval", "synth"):
        assert cmd in out.stdout
