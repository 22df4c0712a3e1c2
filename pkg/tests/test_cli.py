import csv
import json
import os

import numpy as np
import pytest

from midemo.cli import main
from midemo.ingest import EMOTIONS, MIDLEVEL_FEATURES, write_wav

SR = 8000
N_ST, N_MID = 12, 26

CONFIG = """
[data]
soundtracks_audio = "st_audio"
soundtracks_emotion = "st_emotion.csv"
midlevel_audio = "mid_audio"
midlevel_annotations = "midlevel.csv"

[output]
dir = "out"

[spectrogram]
sample_rate = 8000
frame_size = 256
hop = 128
n_bands = 16
n_frames = 40
crop_seconds = 0.64
fmin = 60.0
fmax = 4000.0

[trunk]
widths = [4, 4, 8, 8, 8]
embedding_dim = 8
dropout = 0.0

[training]
batch_size = 4
patience = 2
max_epochs = 2
crop_frames = 32

[experiment]
scheme = "a2e"
runs = 2
base_seed = 0
"""


def _csv(path, ids, cols, values):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("song_id," + ",".join(cols) + "\n")
        for s, row in zip(ids, values):
            fh.write(s + "," + ",".join(f"{v:.3f}" for v in row) + "\n")


def make_project(root, seed=0):
    rng = np.random.default_rng(seed)
    ids = [f"{k:03d}" for k in range(N_MID)]
    mid = rng.uniform(1.5, 9.5, (N_MID, 7))
    emo = np.clip(1.5 + 0.5 * mid[:, [0, 1, 2, 3, 4, 5, 6, 0]] + rng.normal(0, 0.3, (N_MID, 8)),
                  1.0, 7.8)
    for d in ("st_audio", "mid_audio"):
        (root / d).mkdir()
    t = np.arange(int(0.8 * SR)) / SR
    for k, s in enumerate(ids):
        tone = np.sin(2 * np.pi * (200 + 80 * mid[k, 0]) * t) + 0.1 * rng.normal(size=t.size)
        folder = "st_audio" if k < N_ST else "mid_audio"
        write_wav(root / folder / f"{s}.wav", 0.5 * tone / np.abs(tone).max(), SR)
    _csv(root / "st_emotion.csv", ids[:N_ST], EMOTIONS, emo[:N_ST])
    _csv(root / "midlevel.csv", ids, MIDLEVEL_FEATURES, mid)
    (root / "exp.toml").write_text(CONFIG)
    return str(root / "exp.toml")


@pytest.fixture(scope="module")
def project(tmp_path_factory):
    root = tmp_path_factory.mktemp("proj")
    cfg = make_project(root)
    assert main(["prepare", "--config", cfg]) == 0
    return root, cfg


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def _snapshot(directory):
    return {p: os.stat(os.path.join(directory, p)).st_mtime_ns for p in os.listdir(directory)}


def test_prepare_outputs(project):
    root, _ = project
    cache = root / "out" / "cache"
    assert len(list(cache.glob("*.spec"))) == N_MID
    side = json.loads((cache / "000.json").read_text())
    assert side["shape"][1] == 16 and side["shape"][0] >= 40
    split = json.loads((root / "out" / "splits" / "soundtracks.json").read_text())
    assert len(split["runs"]) == 2 and "config_hash" in split and split["seed"] == 0
    assert split["runs"][1]["seed"] == 1
    assert len(split["runs"][0]["test_ids"]) == 2  # floor(0.2 * 12 + 0.5)
    plus = json.loads((root / "out" / "splits" / "midlevel_plus.json").read_text())
    assert len(plus["runs"]) == 1 and len(plus["runs"][0]["test_ids"]) == 2


def test_prepare_is_idempotent(project, capsys):
    root, cfg = project
    before = _snapshot(root / "out" / "cache")
    code, out, _ = run(capsys, "prepare", "--config", cfg)
    assert code == 0 and "0 file(s) written" in out
    assert _snapshot(root / "out" / "cache") == before


def test_corrupted_cache_is_rederived(project, capsys):
    root, cfg = project
    path = root / "out" / "cache" / "003.spec"
    good = path.read_bytes()
    path.write_bytes(good[:-8] + b"\x00" * 8)
    code, out, _ = run(capsys, "prepare", "--config", cfg)
    assert code == 0 and "1 file(s) written" in out
    assert path.read_bytes() == good


def test_missing_annotation_aborts(tmp_path, capsys):
    cfg = make_project(tmp_path)
    write_wav(tmp_path / "st_audio" / "extra.wav", np.zeros(4000), SR)
    code, _, err = run(capsys, "prepare", "--config", cfg)
    assert code == 2 and "extra" in err
    report = json.loads((tmp_path / "out" / "validation_report.json").read_text())
    assert any("extra.wav has no annotation" in p for p in report["problems"])


def test_usage_errors(project, capsys):
    _, cfg = project
    code, _, err = run(capsys, "train", "--config", cfg, "--scheme", "a2x")
    assert code == 1 and "a2mid2e" in err
    assert run(capsys, "train", "--config", cfg, "--set", "nodot=1")[0] == 1
    assert run(capsys, "train", "--config", cfg, "--set", "training.nope=1")[0] == 1
    assert run(capsys, "train", "--config", cfg, "--runs", "0")[0] == 1
    assert run(capsys, "frobnicate")[0] == 1


def test_mid2e_train_and_reproducible(project, capsys):
    root, cfg = project
    assert run(capsys, "train", "--config", cfg, "--scheme", "mid2e", "--runs", "3")[0] == 0
    res = root / "out" / "results"
    first = (res / "mid2e.csv").read_bytes(), (res / "mid2e.json").read_bytes()
    lines = first[0].decode().splitlines()
    assert lines[0].startswith("# config_hash=") and "seed=0" in lines[0]
    assert lines[1].split(",") == ["scheme", *EMOTIONS, "mean"]
    doc = json.loads(first[1])
    assert [r["seed"] for r in doc["meta"]["runs"]] == [0, 1, 2]
    assert run(capsys, "train", "--config", cfg, "--scheme", "mid2e", "--runs", "3")[0] == 0
    assert ((res / "mid2e.csv").read_bytes(), (res / "mid2e.json").read_bytes()) == first


def test_train_eval_roundtrip(project, capsys):
    root, cfg = project
    assert run(capsys, "train", "--config", cfg, "--scheme", "joint")[0] == 0
    ck = root / "out" / "checkpoints" / "joint"
    assert sorted(p.name for p in ck.glob("*.ckpt")) == ["run_00.ckpt", "run_01.ckpt"]
    run_json = json.loads((ck / "run_01.json").read_text())
    assert run_json["seed"] == 1 and "config_hash" in run_json
    log = [json.loads(line) for line in (ck / "run_00.log.jsonl").read_text().splitlines()]
    assert set(log[0]) == {"epoch", "train_loss", "val_loss", "lr"}
    assert run(capsys, "eval", "--config", cfg, "--scheme", "joint")[0] == 0
    res = root / "out" / "results"
    trained = json.loads((res / "joint.json").read_text())["rows"][0]["values"]
    evaluated = json.loads((res / "joint_eval.json").read_text())["rows"][0]["values"]
    assert trained == evaluated


def test_a2mid2e_and_a2mid_plus(project, capsys):
    root, cfg = project
    assert run(capsys, "train", "--config", cfg, "--scheme", "a2mid2e", "--runs", "1")[0] == 0
    assert run(capsys, "train", "--config", cfg, "--scheme", "a2mid+")[0] == 0
    doc = json.loads((root / "out" / "results" / "a2mid_plus.json").read_text())
    assert list(doc["rows"][0]["values"]) == sorted(MIDLEVEL_FEATURES)
    assert len(doc["meta"]["runs"]) == 1


def test_coe(project, tmp_path, capsys):
    _, cfg = project
    a2e, a2mid2e = tmp_path / "a2e.csv", tmp_path / "a2mid2e.csv"
    a2e.write_text("scheme," + ",".join(EMOTIONS) + ",mean\n"
                   "A2E,0.81,0.79,0.84,0.82,0.81,0.66,0.60,0.75,0.76\n")
    a2mid2e.write_text("scheme," + ",".join(EMOTIONS) + ",mean\n"
                       "A2Mid2E,0.79,0.74,0.78,0.72,0.77,0.64,0.58,0.67,0.71\n")
    code, out, _ = run(capsys, "coe", "--config", cfg, str(a2e), str(a2mid2e))
    assert code == 0 and "CoE_A2Mid2E" in out
    root = os.path.dirname(cfg)
    row = next(csv.DictReader(line for line in open(os.path.join(root, "out", "results",
                                                                   "coe_a2mid2e.csv"))
                              if not line.startswith("#")))
    assert row["anger"] == "0.10" and row["valence"] == "0.02"
    code, out, _ = run(capsys, "coe", "--config", cfg, str(a2e), str(a2e), "--format", "json")
    doc = json.load(open(os.path.join(root, "out", "results", "coe_a2e.json")))
    assert set(doc["rows"][0]["values"].values()) == {0.0}
    bad = tmp_path / "bad.csv"
    bad.write_text("scheme," + ",".join(EMOTIONS[:-1]) + ",mean\nX" + ",0.5" * 8 + "\n")
    code, _, err = run(capsys, "coe", "--config", cfg, str(a2e), str(bad))
    assert code == 2 and "tender" in err


def test_explain(project, capsys):
    root, cfg = project
    assert run(capsys, "train", "--config", cfg, "--scheme", "a2e", "--runs", "1")[0] == 0
    code, _, err = run(capsys, "explain", "--config", cfg, "--scheme", "a2e")
    assert code == 1 and "no mid-level" in err
    if not (root / "out" / "checkpoints" / "joint" / "run_00.ckpt").exists():
        assert run(capsys, "train", "--config", cfg, "--scheme", "joint", "--runs", "1")[0] == 0
    argv = ["explain", "--config", cfg, "--scheme", "joint", "--songs", "001,002",
            "--pair-mode", "paper", "--format", "csv", "--format", "json", "--format", "svg"]
    code, out, _ = run(capsys, *argv)
    assert code == 0 and "contrast pair (paper)" in out
    d = root / "out" / "explain" / "joint"
    names = {"effects.csv", "boxplot.csv", "weights.csv", "correlation.csv", "explain.json",
             "effects.svg", "weights.svg", "correlation.svg", "reports.txt"}
    assert names <= {p.name for p in d.iterdir()}
    doc = json.loads((d / "explain.json").read_text())
    assert len(doc["reports"]) == 4 and doc["pair"]["mode"] == "paper"
    assert doc["correlation"]["source"] == "annotated"
    before = {n: (d / n).read_bytes() for n in names}
    assert run(capsys, *argv)[0] == 0
    assert {n: (d / n).read_bytes() for n in names} == before
    code, _, err = run(capsys, "explain", "--config", cfg, "--scheme", "joint", "--songs", "999")
    assert code == 2 and "999" in err


def test_explain_mid2e_without_network(project, capsys):
    root, cfg = project
    code, _, _ = run(capsys, "explain", "--config", cfg, "--scheme", "mid2e",
                     "--pair-mode", "intent")
    assert code == 0
    doc = json.loads((root / "out" / "explain" / "mid2e" / "explain.json").read_text())
    assert doc["provenance"]["features"] == "annotated"


def test_report(project, capsys):
    root, cfg = project
    if not (root / "out" / "results" / "mid2e.json").exists():
        run(capsys, "train", "--config", cfg, "--scheme", "mid2e")
    code, out, _ = run(capsys, "report", "--config", cfg)
    assert code == 0 and "Mid2E" in out
    assert (root / "out" / "results" / "table.csv").exists()


def test_numeric_failure_exit_code(tmp_path, capsys):
    cfg = make_project(tmp_path)
    text = (tmp_path / "midlevel.csv").read_text().splitlines()
    rows = [text[0]] + [",".join(r.split(",")[:3] + ["5.000"] + r.split(",")[4:]) for r in text[1:]]
    (tmp_path / "midlevel.csv").write_text("\n".join(rows) + "\n")
    code, _, err = run(capsys, "train", "--config", cfg, "--scheme", "mid2e")
    assert code == 3 and "rhythmic_stability" in err
