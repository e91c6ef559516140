"""Acceptance checks, one test per criterion.

Each test records a verdict line that is printed in the terminal summary (see
``conftest.py``).  Run on its own with::

    pytest tests/test_acceptance.py -v
"""

import itertools
import time
import warnings
from contextlib import contextmanager

import chess
import numpy as np
import pytest

from piecevec.board import initial_position, make_move, perft
from piecevec.cli import main
from piecevec.counts import build_count_matrix, row_normalize, standardize_columns
from piecevec.evaluate import RANDOM_BASELINE, bucket_sweep, evaluate_accuracy, predict_move, split_train_test
from piecevec.factor import cumulative_explained_variance, nmf_fit, pca_fit
from piecevec.ingest import filter_white_wins
from piecevec.records import Result
from piecevec.selfplay import EngineConfig, run_selfplay
from piecevec.zobrist import DEFAULT_SEED, full_hash, incremental_update

from conftest import exact_model, random_walk, small_corpus, summed_counts_argmax

VERDICTS: dict[int, str] = {}

# home piece id -> piece type; promoted pawns keep their pawn id
HOME_TYPE = dict(zip(range(1, 9), "RNBQKBNR")) | {i: "P" for i in range(9, 17)}


@contextmanager
def criterion(number: int, title: str):
    """Record PASS or FAIL for a criterion; ``note`` collects the details."""
    note: dict = {}
    try:
        yield note
    except BaseException:
        VERDICTS[number] = f"criterion {number} ({title}): FAIL {_fmt(note)}"
        raise
    VERDICTS[number] = note.pop("_verdict", f"criterion {number} ({title}): PASS {_fmt(note)}")


def _fmt(note: dict) -> str:
    return " ".join(f"{k}={v}" for k, v in note.items() if not k.startswith("_"))


def oracle_perft(board: chess.Board, depth: int) -> int:
    if depth == 0:
        return 1
    total = 0
    for m in board.legal_moves:
        board.push(m)
        total += oracle_perft(board, depth - 1)
        board.pop()
    return total


def test_criterion_1_perft():
    with criterion(1, "move generation") as note:
        t = time.perf_counter()
        counts = [perft(initial_position(), d) for d in (1, 2, 3)]
        elapsed = time.perf_counter() - t
        note.update(counts="/".join(map(str, counts)), seconds=f"{elapsed:.3f}")
        assert counts == [20, 400, 8902]
        assert counts == [oracle_perft(chess.Board(), d) for d in (1, 2, 3)]
        assert elapsed < 1.0


def test_criterion_2_zobrist(tables):
    with criterion(2, "zobrist incremental hash") as note:
        t = time.perf_counter()
        plies = game = 0
        while plies < 10_000:
            game += 1
            walk, _ = random_walk(game, 400)
            h = full_hash(initial_position(), tables)
            for pos, m in walk:
                assert h == full_hash(pos, tables)
                h = incremental_update(h, pos, m, tables)
                assert h == full_hash(make_move(pos, m), tables)
                plies += 1
        elapsed = time.perf_counter() - t
        note.update(plies=plies, games=game, seconds=f"{elapsed:.2f}")
        assert elapsed < 5.0


def test_criterion_3_pca():
    with criterion(3, "PCA oracle equivalence") as note:
        rng = np.random.default_rng(3)
        worst_obj = worst_proj = 0.0
        for _ in range(100):
            n, p = rng.integers(2, 51, size=2)
            z, _ = standardize_columns(rng.normal(size=(n, p)))
            d = int(rng.integers(1, min(n - 1, p) + 1))
            m = pca_fit(z, d)
            r = z - z @ m.loadings @ m.loadings.T
            discarded = float(np.sum(m.singular_values[d:] ** 2))
            worst_obj = max(worst_obj, abs(float(np.sum(r * r)) - discarded))
            vals, vecs = np.linalg.eigh(z.T @ z)
            top = vecs[:, np.argsort(vals)[::-1][:d]]
            worst_proj = max(worst_proj, float(np.abs(m.loadings @ m.loadings.T - top @ top.T).max()))
            assert np.all(np.diff(m.explained_variance_ratio) <= 0)
        note.update(max_objective_gap=f"{worst_obj:.2e}", max_projector_gap=f"{worst_proj:.2e}")
        assert worst_obj <= 1e-8 and worst_proj <= 1e-6


def test_criterion_4_nmf():
    with criterion(4, "NMF properties") as note:
        rng = np.random.default_rng(4)
        for k in range(100):
            n, p = rng.integers(2, 31, size=2)
            x = rng.uniform(size=(n, p)) * (rng.uniform(size=(n, p)) < 0.6)
            d = int(rng.integers(1, min(n, p) + 1))
            a = nmf_fit(x, d, max_iters=300, seed=k)
            b = nmf_fit(x, d, max_iters=300, seed=k)
            assert np.all(np.diff(a.objective_trace) <= 1e-12)
            assert (a.W >= 0).all() and (a.H >= 0).all()
            assert np.array_equal(a.W, b.W) and np.array_equal(a.H, b.H)
        exact = {
            "identity": nmf_fit(np.eye(5), 5, max_iters=20_000, rel_tol=0).objective_trace[-1],
            "d=p": nmf_fit(rng.uniform(size=(9, 6)), 6, max_iters=20_000, rel_tol=0).objective_trace[-1],
        }
        note.update(random_matrices=100, **{k: f"{v:.1e}" for k, v in exact.items()})
        assert all(v < 1e-6 for v in exact.values())


# Small enough that d = n multiplicative updates reach the exact factorization;
# larger corpora can stall at non-global stationary points.
EXACT_CORPORA = [
    dict(seed=1),
    dict(seed=2),
    dict(seed=1, games=4, max_plies=80, variety=0.1),
    dict(seed=4, games=4, max_plies=80, variety=0.1),
]


def test_criterion_5_prediction_oracle(tables):
    with criterion(5, "prediction oracle") as note:
        checked, worst = 0, 0.0
        for params, num_buckets in itertools.product(EXACT_CORPORA, (1, 2, 4)):
            ds = small_corpus(**params)
            train, test = split_train_test(ds, 0.25, seed=num_buckets)
            model, cm = exact_model(train, tables, num_buckets)
            worst = max(worst, model.objective_trace[-1])
            note["max_objective"] = f"{worst:.1e}"
            assert model.objective_trace[-1] < 1e-8, f"{params} B={num_buckets} is not exactly factorized"
            for part in (test, train):
                ev = evaluate_accuracy(part, model, tables, num_buckets)
                oracle = [
                    summed_counts_argmax(pos, cm, tables)
                    for g in part.games
                    for rec, pos in g.replay()
                    if rec.color == "w"
                ]
                assert ev.predictions.tolist() == oracle
                checked += len(oracle)
            first = next(pos for g in test.games for rec, pos in g.replay() if rec.color == "w")
            assert predict_move(first, model, tables, num_buckets) == summed_counts_argmax(first, cm, tables)
        note.update(corpora=len(EXACT_CORPORA), positions=checked, agreement="100%")


@pytest.fixture(scope="module")
def trend_corpus():
    """Greedy white against a mostly random black until 20k filtered moves."""
    t = time.perf_counter()
    white = EngineConfig.builtin("greedy", Variety=0.1)
    black = EngineConfig.builtin("random", Variety=0.3)
    games, kept = [], 0
    for g in run_selfplay(white, black, 10_000, seed=1):
        games.append(g)
        if g.result is Result.WHITE_WIN:
            kept += sum(r.color == "w" for r in g.moves)
        if kept >= 20_000:
            break
    return filter_white_wins(games, DEFAULT_SEED), time.perf_counter() - t


def test_criterion_6_pipeline_trend(trend_corpus, tables):
    with criterion(6, "accuracy trend over buckets") as note:
        ds, gen_seconds = trend_corpus
        t = time.perf_counter()
        report = bucket_sweep(ds, 10, [1, 16, 256], [0, 1, 2], tables)
        elapsed = gen_seconds + time.perf_counter() - t
        mean = {
            b: float(np.mean([r["accuracy"] for r in report.rows if r["num_buckets"] == b])) for b in (1, 16, 256)
        }
        lowest = min(r["accuracy"] for r in report.rows)
        note.update(
            records=len(ds.records),
            **{f"mean@{b}": f"{v:.4f}" for b, v in mean.items()},
            min_ratio=f"{lowest / RANDOM_BASELINE:.0f}x",
            seconds=f"{elapsed:.0f}",
        )
        assert len(ds.records) >= 20_000
        assert lowest >= 20 * RANDOM_BASELINE
        assert mean[256] >= mean[1]
        assert elapsed < 600


def test_criterion_7_type_clustering():
    with criterion(7, "same-type pieces cluster (soft)") as note:
        white = EngineConfig.builtin("greedy", Variety=0.1)
        black = EngineConfig.builtin("random", Variety=0.3)
        records = []
        for g in run_selfplay(white, black, 100_000, seed=7):
            records.extend(r for r in g.moves if r.color == "w")
            if len(records) >= 100_000:
                break
        cm = build_count_matrix(records, "per-piece")
        z, _ = standardize_columns(row_normalize(cm.matrix).toarray())
        model = pca_fit(z, 5)
        s = model.scores[:, :3]
        u = s / np.maximum(np.linalg.norm(s, axis=1, keepdims=True), 1e-300)
        cos = u @ u.T
        intra, inter = [], []
        for i, j in itertools.combinations(range(16), 2):
            (intra if HOME_TYPE[i + 1] == HOME_TYPE[j + 1] else inter).append(cos[i, j])
        cum = cumulative_explained_variance(model)
        note.update(
            moves=len(records),
            intra=f"{np.mean(intra):.3f}",
            inter=f"{np.mean(inter):.3f}",
            cumvar5=f"{cum[-1]:.3f}",
            reference_cumvar5="0.810",
        )
        if np.mean(intra) <= np.mean(inter):
            note["_verdict"] = f"criterion 7 (same-type pieces cluster (soft)): FAIL (warning only) {_fmt(note)}"
            warnings.warn("same-type pieces do not cluster on this weak-engine corpus")


def test_criterion_8_manifest_rerun(tmp_path):
    with criterion(8, "manifest rerun determinism") as note:
        def run(*argv):
            assert main([str(a) for a in argv]) == 0

        p = {k: tmp_path / k for k in ("g.mlog", "w.mlog", "c.tsv", "n.npz", "p.npz", "s.csv", "pred.csv")}
        run("selfplay", "--white", "builtin:greedy", "--black", "builtin:random", "--games", 20, "--seed", 3,
            "-o", p["g.mlog"])
        run("ingest", "-i", p["g.mlog"], "--buckets", 8, "-o", p["w.mlog"])
        run("counts", "-i", p["w.mlog"], "--scheme", "piece-bucket", "-o", p["c.tsv"])
        run("nmf", "-i", p["c.tsv"], "--d", 4, "--max-iters", 300, "-o", p["n.npz"])
        run("pca", "-i", p["c.tsv"], "--d", 3, "-o", p["p.npz"])
        run("predict", "-m", p["n.npz"], "-i", p["w.mlog"], "-o", p["pred.csv"])
        run("sweep", "-i", p["w.mlog"], "--buckets", "1,8", "--seeds", "0,1", "--d", 3, "--max-iters", 100,
            "-o", p["s.csv"])
        run("report", "-m", p["n.npz"], "-a", p["s.csv"], "--chart", "-o", tmp_path / "report")
        manifests = sorted(tmp_path.glob("*.manifest.json")) + [tmp_path / "report" / "manifest.json"]
        outputs = sorted(f for f in tmp_path.rglob("*") if f.is_file() and not f.name.endswith("manifest.json"))
        before = {f: f.read_bytes() for f in outputs}
        for m in manifests:
            assert main(["rerun", str(m)]) == 0
        after = {f: f.read_bytes() for f in outputs}
        note.update(stages=len(manifests), files=len(outputs))
        assert before == after
