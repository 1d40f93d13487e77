import csv
import json
import math

import numpy as np
import pytest

from xpasc.association import AssociationMatrices, Method, save_matrices
from xpasc.cli import run
from xpasc.corpus import Corpus, CorpusMeta, Instance, LabelingFunction, save_corpus
from xpasc.models import BowSoftmaxModel, save_checkpoint
from xpasc.synthetic import planted_corpus


def xp(*argv):
    return run([str(a) for a in argv])


@pytest.fixture(scope="module")
def planted_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("planted")
    save_corpus(planted_corpus(n=120, seed=1), d / "corpus")
    return d / "corpus"


def read(path):
    return open(path, "rb").read()


# -- ingest ------------------------------------------------------------------

def write_raw(d, records, classes=("A", "B")):
    d.mkdir(parents=True, exist_ok=True)
    meta = {"classes": list(classes), "lfs": [{"name": "l0", "class": 0}, {"name": "l1", "class": 1}]}
    (d / "meta.json").write_text(json.dumps(meta))
    with open(d / "data.jsonl", "w") as fh:
        for i, (tokens, label, matches) in enumerate(records):
            fh.write(json.dumps({"id": f"r{i}", "tokens": tokens, "label": label,
                                 "lf_matches": matches}) + "\n")
    return d


def test_ingest_fully_matched(tmp_path, capsys):
    raw = write_raw(tmp_path / "raw", [(["a"], 0, [0]), (["b"], 1, [1])])
    assert xp("ingest", "--meta", raw / "meta.json", "--data", raw / "data.jsonl",
              "--out", tmp_path / "c") == 0
    stats = json.loads((tmp_path / "c" / "stats.json").read_text())
    assert stats == {"original": 2, "filtered": 2, "retained": 1.0}
    assert (tmp_path / "c" / "manifest.json").exists()


def test_ingest_nothing_matched(tmp_path, capsys):
    raw = write_raw(tmp_path / "raw", [(["a"], 0, []), (["b"], 1, [])])
    code = xp("ingest", "--meta", raw / "meta.json", "--data", raw / "data.jsonl",
              "--out", tmp_path / "c")
    assert code != 0
    assert "empty" in capsys.readouterr().err.lower()
    assert not (tmp_path / "c" / "manifest.json").exists()


def test_ingest_bad_record_named(tmp_path, capsys):
    raw = write_raw(tmp_path / "raw", [(["a"], 0, [0]), ([], 1, [1])])
    assert xp("ingest", "--meta", raw / "meta.json", "--data", raw / "data.jsonl",
              "--out", tmp_path / "c") != 0
    err = capsys.readouterr().err
    assert "line 2" in err and "r1" in err


def test_ingest_leaves_inputs_untouched(tmp_path):
    raw = write_raw(tmp_path / "raw", [(["a"], 0, [0]), (["b"], 1, [])])
    before = read(raw / "data.jsonl")
    xp("ingest", "--meta", raw / "meta.json", "--data", raw / "data.jsonl", "--out", tmp_path / "c")
    assert read(raw / "data.jsonl") == before


# -- assoc -------------------------------------------------------------------

def test_assoc_twenty_instance_example(tmp_path, twenty_corpus):
    save_corpus(twenty_corpus, tmp_path / "c")
    assert xp("assoc", "--corpus", tmp_path / "c", "--method", "chi2", "--out", tmp_path / "a.json") == 0
    raw = json.loads((tmp_path / "a.json").read_text())
    assert raw["C"][0][raw["features"].index("x")] == pytest.approx(1.8, abs=1e-12)


def test_assoc_ppmi_independent(tmp_path):
    from conftest import make_corpus
    recs = [(["x"], 0, [0]), (["x"], 1, [1]), (["y"], 0, [0]), (["y"], 1, [1])]
    save_corpus(make_corpus(recs), tmp_path / "c")
    xp("assoc", "--corpus", tmp_path / "c", "--method", "ppmi", "--out", tmp_path / "a.json")
    raw = json.loads((tmp_path / "a.json").read_text())
    assert not np.any(raw["C"]) and not np.any(raw["L"])


def test_assoc_deterministic(tmp_path, planted_dir):
    for name in ("a1.json", "a2.json"):
        xp("assoc", "--corpus", planted_dir, "--method", "npmi", "--out", tmp_path / name)
    assert read(tmp_path / "a1.json") == read(tmp_path / "a2.json")


def test_assoc_unknown_method(tmp_path, planted_dir):
    with pytest.raises(SystemExit) as exc:
        xp("assoc", "--corpus", planted_dir, "--method", "tfidf", "--out", tmp_path / "a.json")
    assert exc.value.code == 2


# -- train -------------------------------------------------------------------

def test_train_lambda_zero_matches_disabled_reversal(tmp_path, planted_dir):
    common = ["train", "--corpus", planted_dir, "--model", "knowman", "--lambda", "0",
              "--epochs", "3", "--seed", "4"]
    assert xp(*common, "--out", tmp_path / "a.json") == 0
    assert xp(*common, "--no-reversal", "--out", tmp_path / "b.json") == 0
    assert read(tmp_path / "a.json") == read(tmp_path / "b.json")


@pytest.mark.parametrize("model", ["knowman", "mv-bow"])
def test_train_deterministic(tmp_path, planted_dir, model, capsys):
    for name in ("m1.json", "m2.json"):
        assert xp("train", "--corpus", planted_dir, "--model", model, "--lambda", "1",
                  "--epochs", "3", "--seed", "9", "--out", tmp_path / name) == 0
    assert read(tmp_path / "m1.json") == read(tmp_path / "m2.json")
    out = capsys.readouterr().out
    assert "loss=" in out and "train_accuracy=" in out


def test_train_all_tied_abstain(tmp_path, capsys):
    from conftest import make_corpus
    save_corpus(make_corpus([(["x"], 0, [0, 1]), (["y"], 1, [0, 1])]), tmp_path / "c")
    code = xp("train", "--corpus", tmp_path / "c", "--model", "mv-bow", "--tie", "abstain",
              "--out", tmp_path / "m.json")
    assert code != 0 and not (tmp_path / "m.json").exists()
    assert "no usable instances" in capsys.readouterr().err


# -- score -------------------------------------------------------------------

def one_instance_fixture(d):
    """Single instance, single feature. The model's prediction gives S_xp = 0.5
    on occlusion and the matrices give S_asc = 0.2."""
    meta = CorpusMeta(("A", "B"), (LabelingFunction("l0", 0), LabelingFunction("l1", 1)))
    corpus = Corpus.build(meta, [Instance("i0", ("f",), 0, (0,))])
    save_corpus(corpus, d / "c")
    # occluding "f" leaves an empty input, i.e. the uniform prediction;
    # KL(p || uniform) = ln 2 - H(p), solved for p by bisection
    lo, hi = 0.5, 1.0 - 1e-15
    for _ in range(200):
        mid = (lo + hi) / 2
        kl = mid * math.log(2 * mid) + (1 - mid) * math.log(2 * (1 - mid))
        lo, hi = (mid, hi) if kl < 0.5 else (lo, mid)
    p = (lo + hi) / 2
    logit = math.log(p / (1 - p))
    save_checkpoint(BowSoftmaxModel(np.array([[logit], [0.0]]), np.zeros(2), ("f",)), d / "m.json")
    save_matrices(AssociationMatrices(Method.CHI2, np.array([[0.3], [0.0]]),
                                      np.array([[0.1], [0.0]]), ("f",)), d / "a.json")
    return d


def test_score_one_instance_fixture(tmp_path, capsys):
    d = one_instance_fixture(tmp_path)
    assert xp("score", "--corpus", d / "c", "--model", d / "m.json", "--assoc", d / "a.json",
              "--out", d / "s.json") == 0
    assert float(capsys.readouterr().out.strip()) == pytest.approx(1.1, abs=1e-9)


def test_score_zero_matrices(tmp_path, planted_dir, capsys):
    xp("train", "--corpus", planted_dir, "--model", "mv-bow", "--epochs", "2", "--out", tmp_path / "m.json")
    xp("assoc", "--corpus", planted_dir, "--method", "chi2", "--out", tmp_path / "a.json")
    raw = json.loads((tmp_path / "a.json").read_text())
    raw["C"] = np.zeros_like(raw["C"]).tolist()
    raw["L"] = np.zeros_like(raw["L"]).tolist()
    (tmp_path / "a.json").write_text(json.dumps(raw))
    capsys.readouterr()
    xp("score", "--corpus", planted_dir, "--model", tmp_path / "m.json", "--assoc", tmp_path / "a.json",
       "--out", tmp_path / "s.json")
    assert capsys.readouterr().out.strip() == "1.0"


def test_score_scaled_in_unit_range(tmp_path, planted_dir):
    xp("train", "--corpus", planted_dir, "--model", "knowman", "--epochs", "2", "--out", tmp_path / "m.json")
    xp("assoc", "--corpus", planted_dir, "--method", "chi2", "--out", tmp_path / "a.json")
    assert xp("score", "--corpus", planted_dir, "--model", tmp_path / "m.json", "--assoc",
              tmp_path / "a.json", "--scaled", "--out", tmp_path / "s.json") == 0
    report = json.loads((tmp_path / "s.json").read_text())
    assert report["scaled"]
    for inst in report["instances"]:
        for t in inst["features"]:
            assert 0 <= t["xp"] <= 1 and 0 <= t["asc"] <= 1 and 0 <= t["product"] <= 1


def test_score_digest_mismatch_names_both(tmp_path, planted_dir, capsys):
    d = one_instance_fixture(tmp_path)
    xp("assoc", "--corpus", planted_dir, "--method", "chi2", "--out", tmp_path / "a2.json")
    code = xp("score", "--corpus", planted_dir, "--model", d / "m.json", "--assoc",
              tmp_path / "a2.json", "--out", tmp_path / "s.json")
    err = capsys.readouterr().err
    assert code != 0 and "mismatch" in err
    digests = [w for w in err.replace("(", " ").split() if len(w) == 64]
    assert len(set(digests)) == 2


def test_score_deterministic_and_rerun(tmp_path, planted_dir, monkeypatch):
    monkeypatch.chdir(tmp_path)
    xp("train", "--corpus", planted_dir, "--model", "knowman", "--epochs", "2", "--out", "m.json")
    xp("assoc", "--corpus", planted_dir, "--method", "ppmi", "--out", "a.json")
    xp("score", "--corpus", planted_dir, "--model", "m.json", "--assoc", "a.json", "--out", "s.json")
    first = read("s.json")
    manifest = json.loads(read("s.json.manifest.json"))
    assert manifest["command"] == "score" and manifest["config"]["gamma"] == 1.0
    assert len(manifest["inputs"]) == 4
    (tmp_path / "s.json").unlink()
    assert xp("rerun", "s.json.manifest.json") == 0
    assert read("s.json") == first


# -- sweep -------------------------------------------------------------------

def test_sweep_single_cell(tmp_path, planted_dir, capsys):
    assert xp("sweep", "--corpus", planted_dir, "--lambdas", "1", "--seeds", "0",
              "--epochs", "2", "--out", tmp_path / "sw") == 0
    rows = list(csv.reader(open(tmp_path / "sw" / "sweep.csv")))
    assert len(rows) == 2
    assert json.loads((tmp_path / "sw" / "summary.json").read_text())["spearman_rho"] is None


def test_sweep_failed_cell_isolated(tmp_path, planted_dir):
    assert xp("sweep", "--corpus", planted_dir, "--lambdas", "0,-1,2", "--seeds", "0,1",
              "--epochs", "2", "--out", tmp_path / "sw") == 0
    rows = list(csv.DictReader(open(tmp_path / "sw" / "sweep.csv")))
    assert len(rows) == 6
    assert [r["xpasc"] == "failed" for r in rows] == [False, False, True, True, False, False]


def test_sweep_all_failed(tmp_path, planted_dir):
    assert xp("sweep", "--corpus", planted_dir, "--lambdas", "-1", "--seeds", "0",
              "--out", tmp_path / "sw") != 0


# -- shift -------------------------------------------------------------------

def test_shift_same_model(tmp_path, planted_dir):
    xp("train", "--corpus", planted_dir, "--model", "knowman", "--epochs", "2", "--out", tmp_path / "m.json")
    xp("assoc", "--corpus", planted_dir, "--method", "chi2", "--out", tmp_path / "a.json")
    assert xp("shift", "--corpus", planted_dir, "--model-a", tmp_path / "m.json", "--model-b",
              tmp_path / "m.json", "--assoc", tmp_path / "a.json", "--out", tmp_path / "sh.json") == 0
    counts = json.loads((tmp_path / "sh.json").read_text())["counts"]
    assert counts == {"none": 120, "off-LF": 0, "to-class": 0}


def test_shift_digest_mismatch(tmp_path, planted_dir):
    d = one_instance_fixture(tmp_path)
    xp("assoc", "--corpus", planted_dir, "--method", "chi2", "--out", tmp_path / "a2.json")
    assert xp("shift", "--corpus", planted_dir, "--model-a", d / "m.json", "--model-b", d / "m.json",
              "--assoc", tmp_path / "a2.json", "--out", tmp_path / "sh.json") != 0
