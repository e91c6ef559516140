import csv
import json
import subprocess
import sys

import pytest

from piecevec.cli import accuracy_chart, main, summarize_accuracy
from piecevec.counts import read_counts
from piecevec.factor import load_model
from piecevec.records import Result, read_mlog


def run(*argv) -> int:
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """selfplay -> ingest -> counts -> nmf/pca -> sweep, all through the CLI."""
    d = tmp_path_factory.mktemp("pipe")
    f = {name: d / name for name in ("games.mlog", "wins.mlog", "counts.tsv", "nmf.npz", "pca.npz", "sweep.csv")}
    assert run("selfplay", "--white", "builtin:greedy", "--black", "builtin:random", "--white-option", "Variety=0.1",
               "--games", 30, "--max-plies", 60, "--seed", 5, "-o", f["games.mlog"]) == 0
    assert run("ingest", "-i", f["games.mlog"], "-o", f["wins.mlog"]) == 0
    assert run("counts", "-i", f["wins.mlog"], "--scheme", "piece-bucket", "--buckets", 4, "-o", f["counts.tsv"]) == 0
    assert run("nmf", "-i", f["counts.tsv"], "--d", 3, "--max-iters", 200, "-o", f["nmf.npz"]) == 0
    assert run("pca", "-i", f["counts.tsv"], "--d", 3, "-o", f["pca.npz"]) == 0
    assert run("sweep", "-i", f["wins.mlog"], "--buckets", "1,4", "--seeds", "0,1", "--d", 3,
               "--max-iters", 100, "-o", f["sweep.csv"]) == 0
    return d, f


def test_pipeline_outputs(pipeline):
    d, f = pipeline
    head, games = read_mlog(f["games.mlog"])
    assert len(games) == 30 and head["white"]["path"] == "builtin:greedy"
    _, wins = read_mlog(f["wins.mlog"])
    assert wins and all(g.result is Result.WHITE_WIN for g in wins)
    cm = read_counts(f["counts.tsv"])
    assert (cm.scheme, cm.num_buckets, cm.n) == ("piece-bucket", 4, 64)
    assert cm.total_count == sum(1 for g in wins for r in g.moves if r.color == "w")
    nmf = load_model(f["nmf.npz"])
    assert nmf.W.shape == (64, 3) and nmf.meta["preprocess"] == "normalized"
    pca = load_model(f["pca.npz"])
    assert pca.loadings.shape == (4096, 3)
    with open(f["sweep.csv"], newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 4 and {r["num_buckets"] for r in rows} == {"1", "4"}
    for name in f:
        assert (d / (name + ".manifest.json")).exists()


def test_predict_and_report(pipeline, capsys):
    d, f = pipeline
    assert run("predict", "-m", f["nmf.npz"], "-i", f["wins.mlog"], "-o", d / "pred.csv") == 0
    assert "accuracy" in capsys.readouterr().out
    assert run("predict", "-m", f["nmf.npz"], "--fen", "rnbqkbnr/pppppppp/8/8/8/8/PPPPPPPP/RNBQKBNR w KQkq - 0 1",
               "--mask-illegal", "-o", d / "fen.csv") == 0
    with open(d / "fen.csv", newline="") as fh:
        (row,) = list(csv.DictReader(fh))
    assert len(row["predicted"]) == 4
    out = d / "report"
    assert run("report", "-m", f["pca.npz"], "-a", f["sweep.csv"], "--chart", "-o", out) == 0
    for name in ("top_moves.csv", "scores.csv", "explained_variance.csv", "accuracy_summary.csv",
                 "accuracy_chart.txt", "manifest.json"):
        assert (out / name).exists()
    assert "random baseline" in (out / "accuracy_chart.txt").read_text()


@pytest.mark.parametrize("name", ["games.mlog", "wins.mlog", "counts.tsv", "nmf.npz", "pca.npz", "sweep.csv"])
def test_rerun_reproduces_outputs(pipeline, name, capsys):
    d, f = pipeline
    before = f[name].read_bytes()
    assert run("rerun", d / (name + ".manifest.json")) == 0
    assert "identical" in capsys.readouterr().out
    assert f[name].read_bytes() == before


def test_manifest_contents(pipeline):
    d, f = pipeline
    m = json.loads((d / "counts.tsv.manifest.json").read_text())
    assert m["stage"] == "counts" and m["config"]["buckets"] == 4
    assert list(m["inputs"]) == [str(f["wins.mlog"])]
    assert set(m["versions"]) >= {"piecevec", "python", "numpy", "scipy"}
    assert "time" not in json.dumps(m).lower().replace("movetime", "")


def test_rerun_detects_changed_input(tmp_path, capsys):
    games = tmp_path / "g.mlog"
    assert run("selfplay", "--games", 2, "--max-plies", 20, "-o", games) == 0
    assert run("ingest", "-i", games, "-o", tmp_path / "w.mlog") == 0
    games.write_text(games.read_text() + "\n")
    assert run("rerun", tmp_path / "w.mlog.manifest.json") == 1
    assert "changed" in capsys.readouterr().err


def test_rerun_reports_differing_output(tmp_path, capsys):
    out = tmp_path / "g.mlog"
    assert run("selfplay", "--games", 1, "--max-plies", 10, "-o", out) == 0
    path = tmp_path / "g.mlog.manifest.json"
    m = json.loads(path.read_text())
    m["outputs"][str(out)] = "0" * 64
    path.write_text(json.dumps(m))
    assert run("rerun", path) == 1
    assert "differs" in capsys.readouterr().err


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["selfplay", "-o", "x"],
        ["selfplay", "--games", "-1", "-o", "x"],
        ["nmf", "-i", "x", "--d", "0", "-o", "y"],
        ["sweep", "-i", "x", "--buckets", "3", "-o", "y"],
        ["sweep", "-i", "x", "--test-fraction", "1.5", "-o", "y"],
        ["predict", "-m", "x", "-o", "y"],
        ["counts", "-i", "x", "--scheme", "bogus", "-o", "y"],
    ],
)
def test_usage_errors_exit_2(argv, capsys):
    with pytest.raises(SystemExit) as e:
        main(argv)
    assert e.value.code == 2


def test_data_errors_exit_1(tmp_path, capsys):
    assert run("counts", "-i", tmp_path / "missing.mlog", "-o", tmp_path / "c.tsv") == 1
    assert "not found" in capsys.readouterr().err
    bad = tmp_path / "bad.pgn"
    bad.write_text("1. e4 e5 2. Ke3 1-0\n")
    assert run("ingest", "-i", bad, "-o", tmp_path / "w.mlog") == 1
    assert run("ingest", "-i", bad, "--on-error", "skip", "-o", tmp_path / "w.mlog") == 0
    assert run("report", "-o", tmp_path / "r") == 1
    empty = tmp_path / "empty.pgn"
    empty.write_text('[Result "0-1"]\n1. f3 e5 2. g4 Qh4# 0-1\n')
    assert run("ingest", "-i", empty, "-o", tmp_path / "e.mlog") == 0
    assert run("counts", "-i", tmp_path / "e.mlog", "-o", tmp_path / "e.tsv") == 0
    capsys.readouterr()
    assert run("pca", "-i", tmp_path / "e.tsv", "-o", tmp_path / "e.npz") == 1
    assert run("nmf", "-i", tmp_path / "e.tsv", "-o", tmp_path / "e.npz") == 1
    assert "empty" in capsys.readouterr().err


def test_workdir_env(tmp_path, monkeypatch):
    monkeypatch.setenv("PIECEVEC_WORKDIR", str(tmp_path))
    assert run("selfplay", "--games", 1, "--max-plies", 6, "-o", "g.mlog") == 0
    assert (tmp_path / "g.mlog").exists() and (tmp_path / "g.mlog.manifest.json").exists()
    assert run("rerun", "g.mlog.manifest.json") == 0


def test_accuracy_summary_and_chart():
    rows = [
        {"num_buckets": 1, "d": 10, "scheme": "piece-bucket", "split_seed": s, "accuracy": a, "random_baseline": 1 / 4096}
        for s, a in enumerate((0.02, 0.04))
    ] + [{"num_buckets": 16, "d": 10, "scheme": "piece-bucket", "split_seed": 0, "accuracy": 0.08, "random_baseline": 1 / 4096}]
    summary = summarize_accuracy(rows)
    assert [s["num_buckets"] for s in summary] == [1, 16]
    assert summary[0]["mean_accuracy"] == pytest.approx(0.03)
    assert summary[1]["baseline_ratio"] == pytest.approx(0.08 * 4096)
    chart = accuracy_chart(rows)
    assert chart.count("#") > 0 and "16" in chart


def test_console_script_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "piecevec.cli", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and "piecevec" in r.stdout
