"""Command-line pipeline: one subcommand per stage, each leaving a manifest.

A manifest records the resolved configuration, sha256 digests of inputs and
outputs, and library versions (no timestamps).  ``piecevec rerun MANIFEST``
replays the stage and checks that every output digest matches.

Relative paths resolve against ``$PIECEVEC_WORKDIR`` when it is set.
``$PIECEVEC_ENGINE`` sets the default engine command for ``selfplay``.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import logging
import os
import platform
import sys
from collections import defaultdict
from pathlib import Path
from typing import Callable, Optional

import numpy as np
import scipy

from . import __version__
from .board import Position, move_index_name
from .counts import SCHEMES, CountMatrix, build_count_matrix, read_counts, row_normalize, standardize_columns, write_counts
from .evaluate import (
    RANDOM_BASELINE,
    EvalReport,
    bucket_sweep,
    decode_prediction,
    evaluate_accuracy,
    predict_move,
)
from .factor import (
    DEFAULT_MAX_ITERS,
    DEFAULT_REL_TOL,
    NmfModel,
    PcaModel,
    component_scores,
    cumulative_explained_variance,
    load_model,
    nmf_fit,
    pca_fit,
    reconstruction_error,
    save_model,
    top_moves_per_component,
)
from .ingest import annotate_buckets, dataset_from_games, filter_white_wins, parse_pgn, rehash
from .records import MoveLogWriter, header, read_mlog, with_bucket, write_mlog
from .selfplay import DEFAULT_MAX_PLIES, DEFAULT_MOVETIME_MS, EngineConfig, run_selfplay
from .zobrist import DEFAULT_SEED, check_bucket_count, init_tables

log = logging.getLogger("piecevec")

MANIFEST_FORMAT = "piecevec-manifest"
MANIFEST_VERSION = 1
# Config keys that name files; they are stored as absolute paths.
PATH_KEYS = ("input", "output", "model", "accuracy", "output_dir")


class StageError(Exception):
    """A data or runtime failure inside a stage (exit status 1)."""


# --- small helpers -----------------------------------------------------------

def resolve_path(p: Optional[str]) -> Optional[str]:
    if p is None:
        return None
    path = Path(p).expanduser()
    if not path.is_absolute():
        path = Path(os.environ.get("PIECEVEC_WORKDIR", ".")) / path
    return str(path.resolve())


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def bucket_list(text: str) -> list[int]:
    values = int_list(text)
    for b in values:
        try:
            check_bucket_count(b)
        except ValueError as e:
            raise argparse.ArgumentTypeError(str(e)) from None
    return values


def bucket_count(text: str) -> int:
    values = bucket_list(text)
    if len(values) != 1:
        raise argparse.ArgumentTypeError(f"expected one bucket count, got {text!r}")
    return values[0]


def key_value(text: str) -> tuple[str, str]:
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected NAME=VALUE, got {text!r}")
    k, v = text.split("=", 1)
    return k, v


def _fmt(v):
    return repr(v) if isinstance(v, float) else v


def write_csv(path, columns, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in columns])


def load_dataset(path: str):
    """Read a move log and keep white moves of white-won games."""
    head, games = read_mlog(path)
    return head, dataset_from_games(games, head.get("zobrist_seed"), head.get("num_buckets"))


def load_counts(path: str) -> CountMatrix:
    try:
        return read_counts(path)
    except (KeyError, json.JSONDecodeError) as e:
        raise StageError(f"{path}: malformed count file ({e})") from e


def _preprocess(cm: CountMatrix, mode: str):
    if cm.total_count == 0:
        raise StageError("count matrix is empty; nothing to factorize")
    return row_normalize(cm) if mode == "normalized" else cm.matrix


def _model_meta(cm: CountMatrix, preprocess: str) -> dict:
    return {
        "scheme": cm.scheme,
        "num_buckets": cm.num_buckets,
        "zobrist_seed": cm.zobrist_seed,
        "preprocess": preprocess,
        "row_labels": [k.describe() for k in cm.row_keys()],
    }


# --- stages ------------------------------------------------------------------
# Each stage takes the resolved config and returns (inputs, outputs).

def stage_selfplay(cfg: dict):
    def engine(side):
        path = cfg[side]
        options = dict(cfg[f"{side}_options"])
        return EngineConfig(path, movetime=cfg["movetime"], depth=cfg["depth"], options=options)

    white, black = engine("white"), engine("black")
    head = header(
        cfg["zobrist_seed"], None, False, white=white.to_dict(), black=black.to_dict(), seed=cfg["seed"]
    )
    games = kept = 0
    with MoveLogWriter(cfg["output"], head) as out:
        for g in run_selfplay(
            white,
            black,
            cfg["games"],
            max_plies_per_game=cfg["max_plies"],
            seed=cfg["seed"],
            zobrist_seed=cfg["zobrist_seed"],
            jobs=cfg["jobs"],
        ):
            out.write_game(g)
            games += 1
            kept += g.result == "white-win"
    log.info("selfplay: %d games written (%d white wins)", games, kept)
    return [], [cfg["output"]]


def stage_ingest(cfg: dict):
    src = cfg["input"]
    fmt = cfg["format"]
    if fmt == "auto":
        fmt = "pgn" if src.lower().endswith(".pgn") else "mlog"
    seed = cfg["zobrist_seed"]
    tables = init_tables(seed)
    if fmt == "pgn":
        with open(src, "rb") as fh:
            rejected: list = []
            games = parse_pgn(fh.read(), tables, errors=cfg["on_error"], rejected=rejected)
        for gid, msg in rejected:
            print(f"piecevec ingest: rejected game {gid}: {msg}", file=sys.stderr)
        games_seed = seed
    else:
        head, games = read_mlog(src)
        games_seed = head.get("zobrist_seed")
    if games_seed != seed:
        games = [rehash(g, tables) for g in games]
    ds = filter_white_wins(games, seed)
    if cfg["buckets"] is not None:
        ds = annotate_buckets(ds, tables, cfg["buckets"])
    else:
        ds.games = [dataclasses.replace(g, moves=[with_bucket(r, None) for r in g.moves]) for g in ds.games]
    write_mlog(cfg["output"], ds.games, header(seed, ds.num_buckets, True, summary=ds.summary))
    s = ds.summary
    log.info(
        "ingest: %d games in, %d kept, %d dropped, %d white-move records",
        s["games_in"], s["games_kept"], s["games_dropped"], s["records_kept"],
    )
    return [src], [cfg["output"]]


def stage_counts(cfg: dict):
    head, ds = load_dataset(cfg["input"])
    scheme = cfg["scheme"]
    buckets = None
    if scheme == "piece-bucket":
        buckets = cfg["buckets"] or head.get("num_buckets")
        if buckets is None:
            raise StageError("piece-bucket counts need --buckets or a bucket-annotated input")
        seed = cfg["zobrist_seed"] if cfg["zobrist_seed"] is not None else (ds.zobrist_seed or DEFAULT_SEED)
        if buckets != head.get("num_buckets") or seed != ds.zobrist_seed:
            ds = annotate_buckets(ds, init_tables(seed), buckets)
    cm = build_count_matrix(ds, scheme, buckets)
    if cm.zobrist_seed is None:
        cm.zobrist_seed = ds.zobrist_seed
    write_counts(cfg["output"], cm)
    log.info("counts: %s matrix %dx%d, %d moves", scheme, cm.n, cm.p, cm.total_count)
    return [cfg["input"]], [cfg["output"]]


def stage_pca(cfg: dict):
    cm = load_counts(cfg["input"])
    d = cfg["d"]
    x = _preprocess(cm, cfg["preprocess"])
    z, params = standardize_columns(x)
    model = pca_fit(z, d, params, _model_meta(cm, cfg["preprocess"]))
    save_model(cfg["output"], model)
    cum = cumulative_explained_variance(model)
    log.info("pca: d=%d, cumulative explained variance %s", d, ", ".join(f"{v:.3f}" for v in cum))
    print(f"cumulative explained variance (d={d}): {cum[-1]:.4f}")
    print(f"reconstruction error: {reconstruction_error(model, z):.6g}")
    return [cfg["input"]], [cfg["output"]]


def stage_nmf(cfg: dict):
    cm = load_counts(cfg["input"])
    x = _preprocess(cm, cfg["preprocess"])
    model = nmf_fit(x, cfg["d"], cfg["max_iters"], cfg["rel_tol"], cfg["seed"], _model_meta(cm, cfg["preprocess"]))
    model.row_mass = np.asarray(cm.matrix.sum(axis=1)).ravel()
    save_model(cfg["output"], model)
    print(f"nmf: d={cfg['d']}, {model.iterations_run} iterations, reconstruction error {model.objective_trace[-1]:.6g}")
    return [cfg["input"]], [cfg["output"]]


def _require_nmf(model, stage: str) -> NmfModel:
    if not isinstance(model, NmfModel):
        raise StageError(f"{stage} needs an NMF model, got {model.kind}")
    return model


def stage_predict(cfg: dict):
    model = _require_nmf(load_model(cfg["model"]), "predict")
    seed = model.meta.get("zobrist_seed") or DEFAULT_SEED
    tables = init_tables(seed)
    b = model.meta.get("num_buckets") or 1
    inputs = [cfg["model"]]
    if cfg["fen"]:
        rows = []
        for fen in cfg["fen"]:
            pos = Position.from_fen(fen)
            idx = predict_move(pos, model, tables, b, cfg["mask_illegal"])
            uci = decode_prediction(pos, idx)
            rows.append({"fen": fen, "predicted": uci, "move_index": idx})
            print(f"{uci}\t{fen}")
        write_csv(cfg["output"], ("fen", "predicted", "move_index"), rows)
        return inputs, [cfg["output"]]
    _, ds = load_dataset(cfg["input"])
    inputs.append(cfg["input"])
    ev = evaluate_accuracy(ds, model, tables, b, cfg["mask_illegal"])
    rows = [
        {
            "game": rec.game_id,
            "ply": rec.ply,
            "move": rec.uci[:4],
            "predicted": move_index_name(int(p)),
            "correct": int(rec.move_index == int(p)),
        }
        for rec, p in zip(ds.records, ev.predictions)
    ]
    write_csv(cfg["output"], ("game", "ply", "move", "predicted", "correct"), rows)
    print(f"accuracy {ev.accuracy:.4f} ({ev.correct}/{ev.total}); empty-bucket rate {ev.empty_bucket_rate:.4f}")
    return inputs, [cfg["output"]]


def stage_sweep(cfg: dict):
    head, ds = load_dataset(cfg["input"])
    seed = cfg["zobrist_seed"] if cfg["zobrist_seed"] is not None else (ds.zobrist_seed or DEFAULT_SEED)
    if not ds.records:
        raise StageError(f"{cfg['input']}: no white-win white moves to evaluate")
    report = bucket_sweep(
        ds,
        cfg["d"],
        cfg["buckets"],
        cfg["seeds"],
        init_tables(seed),
        test_fraction=cfg["test_fraction"],
        split_by=cfg["split_by"],
        preprocess=cfg["preprocess"],
        max_iters=cfg["max_iters"],
        rel_tol=cfg["rel_tol"],
        nmf_seed=cfg["nmf_seed"],
        mask_illegal=cfg["mask_illegal"],
    )
    report.write_csv(cfg["output"])
    print(accuracy_chart(report.rows))
    return [cfg["input"]], [cfg["output"]]


def summarize_accuracy(rows) -> list[dict]:
    groups = defaultdict(list)
    for r in rows:
        groups[(int(r["num_buckets"]), int(r["d"]), r["scheme"])].append(float(r["accuracy"]))
    out = []
    for (b, d, scheme), accs in sorted(groups.items()):
        mean = float(np.mean(accs))
        out.append(
            {
                "num_buckets": b,
                "d": d,
                "scheme": scheme,
                "runs": len(accs),
                "mean_accuracy": mean,
                "min_accuracy": min(accs),
                "max_accuracy": max(accs),
                "random_baseline": RANDOM_BASELINE,
                "baseline_ratio": mean / RANDOM_BASELINE,
            }
        )
    return out


def accuracy_chart(rows, width: int = 40) -> str:
    """Plain-text bar chart of mean accuracy per bucket count."""
    summary = summarize_accuracy(rows)
    if not summary:
        return "(no accuracy rows)"
    top = max(s["mean_accuracy"] for s in summary) or 1.0
    lines = [f"{'buckets':>8}  {'d':>3}  {'accuracy':>8}  {'x base':>7}"]
    for s in summary:
        bar = "#" * int(round(width * s["mean_accuracy"] / top))
        lines.append(
            f"{s['num_buckets']:>8}  {s['d']:>3}  {s['mean_accuracy']:>8.4f}  {s['baseline_ratio']:>7.1f}  {bar}"
        )
    lines.append(f"random baseline 1/4096 = {RANDOM_BASELINE:.6f}")
    return "\n".join(lines)


def stage_report(cfg: dict):
    outdir = Path(cfg["output_dir"])
    outdir.mkdir(parents=True, exist_ok=True)
    inputs, outputs = [], []
    if cfg["model"]:
        inputs.append(cfg["model"])
        model = load_model(cfg["model"])
        top = top_moves_per_component(model, cfg["top_moves"])
        path = outdir / "top_moves.csv"
        write_csv(path, ("component", "rank", "move", "move_index", "weight"), top)
        outputs.append(str(path))
        for comp in sorted({r["component"] for r in top}):
            moves = ", ".join(f"{r['move']} ({r['weight']:+.3f})" for r in top if r["component"] == comp)
            print(f"component {comp}: {moves}")
        d = model.d
        cols = [f"c{i + 1}" for i in range(d)]
        path = outdir / "scores.csv"
        write_csv(
            path,
            ("row", *cols),
            [{"row": label, **{c: float(v) for c, v in zip(cols, vec)}} for label, vec in component_scores(model)],
        )
        outputs.append(str(path))
        if isinstance(model, PcaModel):
            cum = cumulative_explained_variance(model)
            path = outdir / "explained_variance.csv"
            write_csv(
                path,
                ("component", "explained_variance_ratio", "cumulative"),
                [
                    {"component": i + 1, "explained_variance_ratio": float(r), "cumulative": float(c)}
                    for i, (r, c) in enumerate(zip(model.explained_variance_ratio, cum))
                ],
            )
            outputs.append(str(path))
            print(f"cumulative explained variance of {d} components: {cum[-1]:.4f}")
    if cfg["accuracy"]:
        inputs.append(cfg["accuracy"])
        rows = EvalReport.read_csv(cfg["accuracy"]).rows
        summary = summarize_accuracy(rows)
        path = outdir / "accuracy_summary.csv"
        write_csv(path, tuple(summary[0]) if summary else ("num_buckets",), summary)
        outputs.append(str(path))
        chart = accuracy_chart(rows)
        print(chart)
        if cfg["chart"]:
            path = outdir / "accuracy_chart.txt"
            path.write_text(chart + "\n", encoding="utf-8")
            outputs.append(str(path))
    if not inputs:
        raise StageError("nothing to report: give --model and/or --accuracy")
    return inputs, outputs


STAGES: dict[str, Callable[[dict], tuple]] = {
    "selfplay": stage_selfplay,
    "ingest": stage_ingest,
    "counts": stage_counts,
    "pca": stage_pca,
    "nmf": stage_nmf,
    "predict": stage_predict,
    "sweep": stage_sweep,
    "report": stage_report,
}


# --- manifests ---------------------------------------------------------------

def versions() -> dict:
    return {
        "piecevec": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
    }


def manifest_path(cfg: dict, outputs: list[str]) -> str:
    if cfg.get("manifest"):
        return cfg["manifest"]
    if cfg.get("output_dir"):
        return str(Path(cfg["output_dir"]) / "manifest.json")
    return outputs[0] + ".manifest.json"


def run_stage(cfg: dict) -> dict:
    """Run one stage and write its manifest; returns the manifest."""
    stage = cfg["stage"]
    for k in ("input", "model", "accuracy"):
        if cfg.get(k) and not os.path.exists(cfg[k]):
            raise StageError(f"input file not found: {cfg[k]}")
    inputs, outputs = STAGES[stage](cfg)
    live = stage == "selfplay" and not all(cfg[s].startswith("builtin:") for s in ("white", "black"))
    manifest = {
        "format": MANIFEST_FORMAT,
        "version": MANIFEST_VERSION,
        "stage": stage,
        "config": {k: v for k, v in cfg.items() if k != "manifest"},
        "inputs": {p: sha256(p) for p in inputs},
        "outputs": {p: sha256(p) for p in outputs},
        "versions": versions(),
        "live_engine": live,
    }
    path = manifest_path(cfg, outputs)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    log.info("%s: manifest written to %s", stage, path)
    return manifest


def rerun(path: str, check: bool = True) -> int:
    with open(path, encoding="utf-8") as fh:
        old = json.load(fh)
    if old.get("format") != MANIFEST_FORMAT or old.get("version") != MANIFEST_VERSION:
        raise StageError(f"{path}: not a version-{MANIFEST_VERSION} manifest")
    for p, digest in old["inputs"].items():
        if not os.path.exists(p):
            raise StageError(f"input {p} is missing")
        if sha256(p) != digest:
            raise StageError(f"input {p} changed since the manifest was written")
    cfg = dict(old["config"], manifest=path)
    new = run_stage(cfg)
    if not check:
        return 0
    differing = [p for p, d in old["outputs"].items() if new["outputs"].get(p) != d]
    if differing:
        note = " (live engine output can vary)" if old.get("live_engine") else ""
        for p in differing:
            print(f"piecevec rerun: output differs: {p}{note}", file=sys.stderr)
        return 1
    print(f"rerun of {old['stage']}: {len(old['outputs'])} output(s) identical")
    return 0


# --- argument parsing ----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="piecevec", description="Chess piece vectors from move counts.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--manifest", help="manifest path (default: next to the output)")
    common.add_argument("--jobs", type=int, default=1, help="cap on worker processes")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="stage", required=True, metavar="STAGE")

    p = sub.add_parser("selfplay", parents=[common], help="play engine-vs-engine games into a move log")
    default_engine = os.environ.get("PIECEVEC_ENGINE", "builtin:random")
    p.add_argument("--white", default=default_engine, help="engine command or builtin:<random|greedy|first>")
    p.add_argument("--black", default=default_engine)
    p.add_argument("--white-option", action="append", type=key_value, default=[], metavar="NAME=VALUE")
    p.add_argument("--black-option", action="append", type=key_value, default=[], metavar="NAME=VALUE")
    limit = p.add_mutually_exclusive_group()
    limit.add_argument("--movetime", type=int, help=f"ms per move (default {DEFAULT_MOVETIME_MS})")
    limit.add_argument("--depth", type=int)
    p.add_argument("--games", type=int, required=True)
    p.add_argument("--max-plies", type=int, default=DEFAULT_MAX_PLIES)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--zobrist-seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--output", "-o", required=True)

    p = sub.add_parser("ingest", parents=[common], help="filter white wins from PGN or a move log")
    p.add_argument("--input", "-i", required=True)
    p.add_argument("--format", choices=("auto", "pgn", "mlog"), default="auto")
    p.add_argument("--buckets", type=bucket_count, help="annotate records with this many hash buckets")
    p.add_argument("--zobrist-seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--on-error", choices=("raise", "skip"), default="raise", help="illegal PGN games")
    p.add_argument("--output", "-o", required=True)

    p = sub.add_parser("counts", parents=[common], help="build a move-count matrix")
    p.add_argument("--input", "-i", required=True)
    p.add_argument("--scheme", choices=SCHEMES, default="per-piece")
    p.add_argument("--buckets", type=bucket_count)
    p.add_argument("--zobrist-seed", type=int)
    p.add_argument("--output", "-o", required=True)

    p = sub.add_parser("pca", parents=[common], help="PCA of column-standardized counts")
    p.add_argument("--input", "-i", required=True)
    p.add_argument("--d", type=int, default=5)
    p.add_argument("--preprocess", choices=("normalized", "raw"), default="normalized")
    p.add_argument("--output", "-o", required=True)

    p = sub.add_parser("nmf", parents=[common], help="non-negative factorization of counts")
    p.add_argument("--input", "-i", required=True)
    p.add_argument("--d", type=int, default=10)
    p.add_argument("--preprocess", choices=("normalized", "raw"), default="normalized")
    p.add_argument("--max-iters", type=int, default=DEFAULT_MAX_ITERS)
    p.add_argument("--rel-tol", type=float, default=DEFAULT_REL_TOL)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", "-o", required=True)

    p = sub.add_parser("predict", parents=[common], help="predict moves with an NMF model")
    p.add_argument("--model", "-m", required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--input", "-i", help="move log to score")
    src.add_argument("--fen", action="append", help="position to predict (repeatable)")
    p.add_argument("--mask-illegal", action="store_true")
    p.add_argument("--output", "-o", required=True)

    p = sub.add_parser("sweep", parents=[common], help="accuracy against bucket count")
    p.add_argument("--input", "-i", required=True)
    p.add_argument("--buckets", type=bucket_list, default=[1, 16, 256])
    p.add_argument("--d", type=int, default=10)
    p.add_argument("--seeds", type=int_list, default=[0, 1, 2], help="split seeds")
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--split-by", choices=("game", "move"), default="game")
    p.add_argument("--preprocess", choices=("raw", "normalized"), default="raw")
    p.add_argument("--max-iters", type=int, default=DEFAULT_MAX_ITERS)
    p.add_argument("--rel-tol", type=float, default=DEFAULT_REL_TOL)
    p.add_argument("--nmf-seed", type=int, default=0)
    p.add_argument("--zobrist-seed", type=int)
    p.add_argument("--mask-illegal", action="store_true")
    p.add_argument("--output", "-o", required=True)

    p = sub.add_parser("report", parents=[common], help="top moves, scores and accuracy tables")
    p.add_argument("--model", "-m")
    p.add_argument("--accuracy", "-a", help="sweep CSV")
    p.add_argument("--top-moves", type=int, default=5)
    p.add_argument("--chart", action="store_true", help="also write the text bar chart")
    p.add_argument("--output-dir", "-o", required=True)

    p = sub.add_parser("rerun", help="rerun a stage from its manifest and compare outputs")
    p.add_argument("manifest")
    p.add_argument("--no-check", action="store_true")
    p.add_argument("-v", "--verbose", action="store_true")
    return parser


def config_from_args(args: argparse.Namespace, parser: argparse.ArgumentParser) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k != "verbose"}
    for k in PATH_KEYS + ("manifest",):
        if cfg.get(k):
            cfg[k] = resolve_path(cfg[k])
    if args.stage == "selfplay":
        if args.games < 0:
            parser.error("--games must be >= 0")
        if args.movetime is None and args.depth is None:
            cfg["movetime"] = DEFAULT_MOVETIME_MS
        cfg["white_options"] = dict(args.white_option)
        cfg["black_options"] = dict(args.black_option)
        del cfg["white_option"], cfg["black_option"]
    if args.stage in ("pca", "nmf", "sweep") and args.d < 1:
        parser.error("--d must be >= 1")
    if args.stage == "sweep" and not 0 < args.test_fraction < 1:
        parser.error("--test-fraction must be in (0, 1)")
    if cfg.get("jobs") is not None and cfg["jobs"] < 1:
        parser.error("--jobs must be >= 1")
    return cfg


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s"
    )
    stage = args.stage
    try:
        if stage == "rerun":
            return rerun(resolve_path(args.manifest), check=not args.no_check)
        run_stage(config_from_args(args, parser))
    except (StageError, ValueError, OSError, RuntimeError) as e:
        print(f"piecevec {stage}: error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
