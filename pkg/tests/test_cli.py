import csv
import json
import subprocess
import sys

import pytest

from tscrec.cli import main, recommend
from tscrec.evaluate import build_ground_truth, rank_videos
from tscrec.model import TrainedModel
from tscrec.corpus_io import load_tsc_corpus

SYNTH = ["synth", "--users", "6", "--videos", "10", "--videos-per-user", "6", "--comments", "300", "--visual-dim", "8"]
MODEL = ["--d", "8", "--m", "4", "--epochs", "2", "--lr", "0.01"]


@pytest.fixture(scope="module")
def data(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(SYNTH + ["--out", str(root / "synth")]) == 0
    return root / "synth"


@pytest.fixture(scope="module")
def ckpt(data, tmp_path_factory):
    out = tmp_path_factory.mktemp("ck") / "model"
    argv = ["train", "--corpus", str(data / "train.jsonl"), "--features", str(data / "features.tsv"),
            "--variant", "itf-hea", *MODEL, "--out", str(out)]
    assert main(argv) == 0
    return out


def test_synth_writes_expected_files(data):
    names = sorted(p.name for p in data.iterdir())
    assert names == ["affinities.csv", "features.tsv", "synth_config.json", "test.jsonl", "train.jsonl"]


def test_train_outputs(ckpt):
    assert {p.name for p in ckpt.iterdir()} >= {"manifest.json", "params.bin", "loss_log.csv"}
    rows = list(csv.reader((ckpt / "loss_log.csv").open()))
    assert rows[0] == ["epoch", "mean_loss"] and len(rows) == 3


def test_train_is_bitwise_deterministic(data, ckpt, tmp_path):
    argv = ["train", "--corpus", str(data / "train.jsonl"), "--features", str(data / "features.tsv"),
            "--variant", "itf-hea", *MODEL, "--out", str(tmp_path / "again")]
    assert main(argv) == 0
    for name in ("manifest.json", "params.bin", "loss_log.csv"):
        assert (tmp_path / "again" / name).read_bytes() == (ckpt / name).read_bytes()


def test_evaluate_report(data, ckpt, tmp_path, capsys):
    out = tmp_path / "report.json"
    assert main(["evaluate", "--checkpoint", str(ckpt), "--test-corpus", str(data / "test.jsonl"),
                 "--topx", "1,3", "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert set(rep["topx"]) == {"1", "3"}
    assert "F1@3" in capsys.readouterr().out
    again = tmp_path / "report2.json"
    main(["evaluate", "--checkpoint", str(ckpt), "--test-corpus", str(data / "test.jsonl"),
          "--topx", "1,3", "--out", str(again)])
    assert again.read_bytes() == out.read_bytes()


def test_recommend_matches_evaluator_ranking(data, ckpt, tmp_path):
    trained = TrainedModel.load(ckpt)
    test = load_tsc_corpus(data / "test.jsonl")
    user = sorted(trained.user_index)[0]
    out = tmp_path / "rec.json"
    assert main(["recommend", "--checkpoint", str(ckpt), "--user", user, "--topx", "2",
                 "--test-corpus", str(data / "test.jsonl"), "--out", str(out)]) == 0
    got = [r["video_id"] for r in json.loads(out.read_text())["recommendations"]]
    cands = {p.video_id for p in build_ground_truth(test.comments) if p.user_id == user} & set(trained.video_index)
    assert got == rank_videos({v: trained.score(user, v) for v in cands})[:2]


def test_recommend_saturates_and_candidates(ckpt, tmp_path):
    trained = TrainedModel.load(ckpt)
    user = sorted(trained.user_index)[0]
    vids = sorted(trained.video_index)[:3]
    assert len(recommend(trained, user, 50, vids)) == 3
    listing = tmp_path / "c.txt"
    listing.write_text("\n".join(vids) + "\nnot-a-video\n")
    out = tmp_path / "r.json"
    assert main(["recommend", "--checkpoint", str(ckpt), "--user", user, "--topx", "10",
                 "--candidates", "@" + str(listing), "--out", str(out)]) == 0
    assert len(json.loads(out.read_text())["recommendations"]) == 3


def test_recommend_unknown_user_is_data_error(ckpt):
    assert main(["recommend", "--checkpoint", str(ckpt), "--user", "nobody"]) == 2


def test_gradcheck_subcommand(tmp_path):
    out = tmp_path / "g.json"
    assert main(["gradcheck", "--variant", "tm", "--variant", "t-hea", "--d", "4", "--m", "2", "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert [r["variant"] for r in rep] == ["TM", "T-HEA"] and all(r["passed"] for r in rep)


def test_sweep_csv_grid(data, tmp_path):
    out = tmp_path / "s.csv"
    argv = ["sweep-beta", "--corpus", str(data / "train.jsonl"), "--test-corpus", str(data / "test.jsonl"),
            "--betas", "0,0.3", "--ms", "2,3", "--topx", "1,2", "--d", "4", "--epochs", "1", "--out", str(out)]
    assert main(argv) == 0
    rows = list(csv.DictReader(out.open()))
    assert len(rows) == 2 * 2 * 2
    assert sorted({r["beta"] for r in rows}) == ["0.0", "0.3"]
    assert {r["m"] for r in rows} == {"2", "3"}
    first = out.read_bytes()
    assert main(argv) == 0
    assert out.read_bytes() == first


def test_dump_attention(data, tmp_path):
    trace = tmp_path / "trace.json"
    argv = ["train", "--corpus", str(data / "train.jsonl"), "--variant", "t-hea", *MODEL,
            "--out", str(tmp_path / "m"), "--dump-attention", str(trace)]
    assert main(argv) == 0
    t = json.loads(trace.read_text())
    assert {"SIM", "SIM_norm", "TD", "A", "A_bar", "H", "C", "h_tilde_M"} <= set(t)
    assert len(t["A_bar"]) == 4 and all(abs(sum(r) - 1) < 1e-9 for r in t["A_bar"])


def test_dump_attention_needs_hea(data, tmp_path):
    argv = ["train", "--corpus", str(data / "train.jsonl"), "--variant", "tm", *MODEL,
            "--out", str(tmp_path / "m"), "--dump-attention", str(tmp_path / "t.json")]
    assert main(argv) == 1


def test_config_file_merges_with_flags(data, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"d": 4, "m": 2, "epochs": 1, "variant": "t-hea", "beta": 0.7}))
    out = tmp_path / "m"
    assert main(["--config", str(cfg), "train", "--corpus", str(data / "train.jsonl"), "--beta", "0.3",
                 "--out", str(out)]) == 0
    man = json.loads((out / "manifest.json").read_text())
    assert (man["d"], man["M"], man["beta"], man["model_variant"]) == (4, 2, 0.3, "T-HEA")


@pytest.mark.parametrize("argv", [
    [],
    ["train"],
    ["nonsense"],
    ["train", "--corpus", "x", "--out", "y", "--variant", "bogus"],
    ["evaluate", "--checkpoint", "c", "--test-corpus", "t", "--out", "o", "--topx", "a,b"],
])
def test_usage_errors_exit_1(argv):
    assert main(argv) == 1


def test_itf_without_features_exit_1(data, tmp_path):
    assert main(["train", "--corpus", str(data / "train.jsonl"), "--variant", "itf", *MODEL,
                 "--out", str(tmp_path / "m")]) == 1


def test_bad_d_exit_1(data, tmp_path):
    assert main(["train", "--corpus", str(data / "train.jsonl"), "--variant", "tm", "--d", "7",
                 "--out", str(tmp_path / "m")]) == 1


def test_data_errors_exit_2(tmp_path):
    bad = tmp_path / "bad.jsonl"
    bad.write_text("not json\n" * 5)
    assert main(["train", "--corpus", str(bad), "--variant", "tm", "--out", str(tmp_path / "m")]) == 2
    assert main(["train", "--corpus", str(tmp_path / "missing.jsonl"), "--out", str(tmp_path / "m")]) == 2
    assert main(["evaluate", "--checkpoint", str(tmp_path), "--test-corpus", str(bad), "--out", "x"]) == 2


def test_corrupt_checkpoint_exit_2(ckpt, data, tmp_path):
    import shutil

    broken = tmp_path / "broken"
    shutil.copytree(ckpt, broken)
    blob = broken / "params.bin"
    raw = bytearray(blob.read_bytes())
    raw[0] ^= 0xFF
    blob.write_bytes(bytes(raw))
    assert main(["evaluate", "--checkpoint", str(broken), "--test-corpus", str(data / "test.jsonl"),
                 "--out", str(tmp_path / "r.json")]) == 2


def test_divergence_exit_3_leaves_no_checkpoint(data, tmp_path):
    out = tmp_path / "m"
    assert main(["train", "--corpus", str(data / "train.jsonl"), "--variant", "tm", "--d", "4",
                 "--lr", "1e308", "--out", str(out)]) == 3
    assert not out.exists()


def test_help_shows_defaults():
    proc = subprocess.run([sys.executable, "-m", "tscrec", "train", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "default: 128" in proc.stdout and "default: 0.2" in proc.stdout
