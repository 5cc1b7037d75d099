import json

import numpy as np
import pytest

from semsum.cli import main, read_gt, write_gt
from semsum.embedding_store import save_embeddings


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def worked(tmp_path):
    # cosines [[1,-1],[-1,1],[0,0]]: with k=2 the emission table is [[1,0],[0,1],[.5,.5]]
    save_embeddings(np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0]]), tmp_path / "f.emb")
    save_embeddings(np.array([[1.0, 0.0], [-1.0, 0.0]]), tmp_path / "s.emb")
    write_gt(tmp_path / "g.json", 3, [[0, 1]])
    return tmp_path


def test_summarize(capsys, worked):
    code, out, _ = run(capsys, "summarize", "--frames", str(worked / "f.emb"), "--sentences",
                       str(worked / "s.emb"), "--decoder", "fb")
    rep = json.loads(out)
    assert code == 0
    assert rep["decoder"] == "fb" and rep["k_used"] == 1 and rep["path"] == [0, 1]
    assert rep["timestamps"] == [0.0, 5.0]
    assert rep["config"]["pi"] == "uniform" and rep["config"]["F"] == 3


def test_summarize_viterbi_worked_example(capsys, worked):
    code, out, _ = run(capsys, "summarize", "--frames", str(worked / "f.emb"), "--sentences",
                       str(worked / "s.emb"), "--decoder", "viterbi", "--k", "2", "--sample-interval", "10")
    rep = json.loads(out)
    assert rep["path"] == [0, 1] and rep["k_used"] == 2
    assert rep["probability"] == pytest.approx(1 / 6, abs=1e-12)
    assert rep["timestamps"] == [0.0, 10.0]


def test_summarize_single_sentence(capsys, tmp_path, rng):
    save_embeddings(rng.standard_normal((120, 8)), tmp_path / "f.emb")
    save_embeddings(rng.standard_normal((1, 8)), tmp_path / "s.emb")
    code, out, _ = run(capsys, "summarize", "--frames", str(tmp_path / "f.emb"), "--sentences",
                       str(tmp_path / "s.emb"), "--single-sentence", "24", "--out", str(tmp_path / "r.json"))
    assert code == 0 and out == ""
    rep = json.loads((tmp_path / "r.json").read_text())
    assert len(rep["path"]) == 24 and rep["config"]["N"] == 24


def test_summarize_csv(capsys, worked):
    code, out, _ = run(capsys, "summarize", "--frames", str(worked / "f.emb"), "--sentences",
                       str(worked / "s.emb"), "--format", "csv")
    lines = out.strip().splitlines()
    assert lines[0] == "sentence,frame,timestamp_s" and lines[1] == "0,0,0.0"


def test_summarize_errors(capsys, worked, tmp_path):
    code, _, err = run(capsys, "summarize", "--frames", str(tmp_path / "missing.emb"), "--sentences",
                       str(worked / "s.emb"))
    assert code == 2 and "error" in json.loads(err)
    bad = tmp_path / "bad.csv"
    bad.write_text("1,0\n0,0\n")
    code, _, err = run(capsys, "summarize", "--frames", str(bad), "--sentences", str(worked / "s.emb"))
    assert code == 1 and json.loads(err)["error"]
    code, _, _ = run(capsys, "summarize", "--frames", str(worked / "f.emb"), "--sentences",
                     str(worked / "s.emb"), "--k", "1", "--decoder", "fb", "--single-sentence", "3")
    assert code == 2


def test_compare_decoders_files(capsys, worked):
    code, out, _ = run(capsys, "compare-decoders", "--frames", str(worked / "f.emb"), "--sentences",
                       str(worked / "s.emb"), "--gt", str(worked / "g.json"))
    rep = json.loads(out)
    assert code == 0
    for name in ("fb", "viterbi", "dtw"):
        assert rep["decoders"][name]["mAP"] == 100.0
        assert rep["decoders"][name]["mAD"] == 0.0


def test_compare_decoders_missing_gt(capsys, worked):
    code, _, err = run(capsys, "compare-decoders", "--frames", str(worked / "f.emb"), "--sentences",
                       str(worked / "s.emb"), "--gt", str(worked / "nope.json"))
    assert code == 2 and "error" in json.loads(err)
    code, _, _ = run(capsys, "compare-decoders", "--frames", str(worked / "f.emb"))
    assert code == 2


def test_compare_decoders_synthetic(capsys):
    code, out, _ = run(capsys, "compare-decoders", "--synthetic", "--seeds", "3", "--sigma", "0.05",
                       "--synthetic-frames", "120", "--synthetic-sentences", "6", "--format", "csv")
    lines = out.strip().splitlines()
    assert code == 0 and lines[0] == "decoder,mAP,mAD" and len(lines) == 4
    assert float(lines[1].split(",")[1]) == 100.0


def test_evaluate(capsys, tmp_path):
    write_gt(tmp_path / "g.json", 100, [[10, 50]])
    (tmp_path / "p.json").write_text(json.dumps({"segments": [12, 50]}))
    code, out, _ = run(capsys, "evaluate", "--pred", str(tmp_path / "p.json"), "--gt", str(tmp_path / "g.json"),
                       "--metrics", "map,mad")
    rep = json.loads(out)
    assert code == 0
    assert rep["metrics"]["mAD"] == pytest.approx(1.0)
    assert rep["metrics"]["mAP"] == pytest.approx(25.0)
    code, _, _ = run(capsys, "evaluate", "--pred", str(tmp_path / "p.json"), "--gt", str(tmp_path / "g.json"),
                     "--metrics", "f1")
    assert code == 2


def test_summarize_then_evaluate(capsys, worked):
    run(capsys, "summarize", "--frames", str(worked / "f.emb"), "--sentences", str(worked / "s.emb"),
        "--out", str(worked / "pred.json"))
    code, out, _ = run(capsys, "evaluate", "--pred", str(worked / "pred.json"), "--gt", str(worked / "g.json"))
    assert code == 0 and json.loads(out)["metrics"] == {"mAP": 100.0, "mAD": 0.0}


def test_retrieval_eval(capsys, tmp_path):
    eye = np.eye(4)
    save_embeddings(eye, tmp_path / "f.emb")
    save_embeddings(eye, tmp_path / "s.emb")
    code, out, _ = run(capsys, "retrieval-eval", "--frames", str(tmp_path / "f.emb"), "--sentences",
                       str(tmp_path / "s.emb"), "--ks", "1,2")
    rep = json.loads(out)
    assert code == 0
    assert rep["text_to_frame"]["R@1"] == 100.0
    assert rep["frame_to_text"]["median_rank_percent"] == 25.0
    save_embeddings(np.eye(3), tmp_path / "s3.emb")
    code, _, _ = run(capsys, "retrieval-eval", "--frames", str(tmp_path / "f.emb"), "--sentences",
                     str(tmp_path / "s3.emb"))
    assert code == 2


def test_baselines(capsys, tmp_path):
    save_embeddings(np.array([[1.0, 0.0], [0.0, 1.0]]), tmp_path / "ref.emb")
    save_embeddings(np.array([[0.0, 1.0], [1.0, 0.1], [0.1, 1.0]]), tmp_path / "gt.emb")
    (tmp_path / "cells.json").write_text("[4, 7, 9]")
    write_gt(tmp_path / "g.json", 12, [[7, 9]])
    base = ["baselines", "--ref-sentences", str(tmp_path / "ref.emb"), "--gt-sentences", str(tmp_path / "gt.emb")]
    code, out, _ = run(capsys, *base, "--method", "greedy")
    assert code == 0 and json.loads(out)["assignment"] == [1, 0]
    code, out, _ = run(capsys, *base, "--method", "ordered", "--annotation-cells", str(tmp_path / "cells.json"),
                       "--gt", str(tmp_path / "g.json"))
    rep = json.loads(out)
    assert rep["assignment"] == [1, 2] and rep["segments"] == [7, 9]
    assert rep["metrics"]["mAP"] == 100.0
    code, _, _ = run(capsys, *base, "--gt", str(tmp_path / "g.json"))
    assert code == 2


def test_mmr(capsys, tmp_path, rng):
    save_embeddings(rng.standard_normal((60, 5)), tmp_path / "f.emb")
    code, out, _ = run(capsys, "mmr", "--frames", str(tmp_path / "f.emb"), "--count", "24", "--lambda", "0.5")
    rep = json.loads(out)
    assert code == 0 and len(set(rep["keyframes"])) == 24
    assert "lambda" in rep["config"]["mmr_definition"]
    code, out, _ = run(capsys, "mmr", "--frames", str(tmp_path / "f.emb"), "--count", "6", "--method", "uniform")
    assert json.loads(out)["keyframes"] == [0, 10, 20, 30, 40, 50]
    code, out, _ = run(capsys, "mmr", "--frames", str(tmp_path / "f.emb"), "--count", "5", "--temporal-order")
    kf = json.loads(out)["keyframes"]
    assert kf == sorted(kf)
    code, _, _ = run(capsys, "mmr", "--frames", str(tmp_path / "f.emb"), "--count", "61")
    assert code == 1


def test_make_synthetic_and_train(capsys, tmp_path):
    code, out, _ = run(capsys, "make-synthetic", str(tmp_path / "d"), "--kind", "train", "--seed", "7")
    assert code == 0 and len(json.loads(out)["written"]) == 5
    reports = []
    for name in ("a.json", "b.json"):
        code, out, _ = run(capsys, "train", "--data", str(tmp_path / "d"), "--seed", "7", "--epochs", "2",
                           "--checkpoint", str(tmp_path / name))
        assert code == 0
        reports.append(json.loads(out))
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    assert reports[0]["history"] == reports[1]["history"]
    assert reports[0]["config"]["margin"] == 0.2 and reports[0]["config"]["negatives"] == 50
    code, _, _ = run(capsys, "train", "--data", str(tmp_path / "nothing"))
    assert code == 2


def test_make_synthetic_summary(capsys, tmp_path):
    code, out, _ = run(capsys, "make-synthetic", str(tmp_path), "--sigma", "0.05", "--synthetic-frames", "80",
                       "--synthetic-sentences", "5")
    gt = read_gt(tmp_path / "gt.json")
    assert code == 0 and gt["grid_length"] == 80 and len(gt["references"][0]) == 5
    code, out, _ = run(capsys, "summarize", "--frames", str(tmp_path / "frames.emb"), "--sentences",
                       str(tmp_path / "sentences.emb"))
    assert json.loads(out)["path"] == gt["references"][0]


def test_log_level_env(capsys, worked, monkeypatch):
    monkeypatch.setenv("SEMSUM_LOG", "DEBUG")
    code, _, _ = run(capsys, "summarize", "--frames", str(worked / "f.emb"), "--sentences", str(worked / "s.emb"))
    assert code == 0


def test_bad_flags_are_json_usage_errors(capsys):
    code, _, err = run(capsys, "summarize", "--decoder", "beam")
    assert code == 2 and json.loads(err)["error"] == "usage"
    code, _, err = run(capsys)
    assert code == 2 and json.loads(err)["error"] == "usage"
