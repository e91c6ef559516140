"""Move prediction by matrix reconstruction, and its held-out evaluation.

For a position s with bucket b, the prediction vector is

    y(s) = sum over the 64 squares l of  H^T w[f_l(s), b]

where f_l(s) is the white piece id on l (0, contributing nothing, for empty
or black squares).  Rows of W that had no training mass also contribute
nothing.  The predicted move is the argmax of y, ties going to the smallest
move index.  Entries within ``TIE_RTOL`` (relative) of the maximum count as
tied, so equal counts still tie after a floating-point reconstruction.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .board import QUEEN, Position, legal_moves, move_index_name
from .counts import NUM_MOVES, build_count_matrix, row_normalize
from .factor import DEFAULT_MAX_ITERS, DEFAULT_REL_TOL, NmfModel, nmf_fit
from .ingest import FilteredDataset, annotate_buckets
from .zobrist import ZobristTables, check_bucket_count, full_hash

log = logging.getLogger(__name__)

RANDOM_BASELINE = 1.0 / NUM_MOVES
TIE_RTOL = 1e-9
REPORT_COLUMNS = (
    "num_buckets",
    "d",
    "scheme",
    "split_seed",
    "train_records",
    "test_records",
    "accuracy",
    "empty_bucket_rate",
    "random_baseline",
)


class EmptyDataset(ValueError):
    pass


class ModelSchemeMismatch(ValueError):
    pass


# --- splitting ----------------------------------------------------------------

def _subset(ds: FilteredDataset, records: list) -> FilteredDataset:
    wanted = {r.game_id for r in records}
    games = [g for g in ds.games if g.game_id in wanted]
    return FilteredDataset(games, records, ds.zobrist_seed, ds.num_buckets, {"records": len(records), "games": len(games)})


def split_train_test(ds: FilteredDataset, test_fraction: float = 0.2, seed: int = 0, by: str = "game"):
    """Deterministic train/test partition.

    ``by="game"`` keeps each game on one side; games are shuffled and taken
    into the test side while that moves its record count closer to
    ``test_fraction`` of the total.  ``by="move"`` splits records directly.
    """
    if not 0 < test_fraction < 1:
        raise ValueError(f"test_fraction must be in (0, 1), got {test_fraction}")
    if not ds.records:
        raise EmptyDataset("cannot split an empty dataset")
    rng = np.random.default_rng(seed)
    if by == "move":
        order = rng.permutation(len(ds.records))
        k = int(round(test_fraction * len(ds.records)))
        test_idx = set(order[:k].tolist())
        test = [r for i, r in enumerate(ds.records) if i in test_idx]
        train = [r for i, r in enumerate(ds.records) if i not in test_idx]
        return _subset(ds, train), _subset(ds, test)
    if by != "game":
        raise ValueError(f"unknown split mode {by!r}")
    per_game: dict[int, list] = {}
    for r in ds.records:
        per_game.setdefault(r.game_id, []).append(r)
    game_ids = sorted(per_game)
    target = test_fraction * len(ds.records)
    test_games, taken = set(), 0
    for gid in rng.permutation(game_ids).tolist():
        size = len(per_game[gid])
        if abs(taken + size - target) <= abs(taken - target) and len(test_games) < len(game_ids) - 1:
            test_games.add(gid)
            taken += size
    if not test_games and len(game_ids) > 1:
        test_games.add(min(game_ids, key=lambda g: len(per_game[g])))
    train = [r for r in ds.records if r.game_id not in test_games]
    test = [r for r in ds.records if r.game_id in test_games]
    return _subset(ds, train), _subset(ds, test)


# --- prediction ----------------------------------------------------------------

def _model_layout(model: NmfModel, tables: ZobristTables, num_buckets: int) -> int:
    scheme = model.meta.get("scheme")
    if scheme == "per-piece":
        return 1
    if scheme != "piece-bucket":
        raise ModelSchemeMismatch(f"prediction needs a per-piece or piece-bucket model, got {scheme!r}")
    num_buckets = check_bucket_count(num_buckets)
    if model.meta.get("num_buckets") != num_buckets or model.W.shape[0] != 16 * num_buckets:
        raise ModelSchemeMismatch(
            f"model has {model.meta.get('num_buckets')} buckets ({model.W.shape[0]} rows), asked for {num_buckets}"
        )
    seed = model.meta.get("zobrist_seed")
    if seed is not None and seed != tables.seed:
        raise ModelSchemeMismatch(f"model was fit with zobrist seed {seed}, tables have {tables.seed}")
    return num_buckets


def effective_w(model: NmfModel) -> np.ndarray:
    """W with untrained rows zeroed."""
    if model.row_mass is None:
        return model.W
    return model.W * (np.asarray(model.row_mass) > 0)[:, None]


def position_rows(pos: Position, b: int, num_buckets: int) -> list[int]:
    return [(i - 1) * num_buckets + b for i in pos.ids if i]


def predict_vector(pos: Position, model: NmfModel, tables: ZobristTables, num_buckets: int = 1) -> np.ndarray:
    num_buckets = _model_layout(model, tables, num_buckets)
    b = full_hash(pos, tables) & (num_buckets - 1)
    w = effective_w(model)
    rows = position_rows(pos, b, num_buckets)
    if not rows:
        return np.zeros(model.H.shape[1])
    return model.H.T @ w[rows].sum(axis=0)


def _first_max(y: np.ndarray) -> np.ndarray:
    """Row-wise index of the first entry within the tie band of the row maximum."""
    best = y.max(axis=-1, keepdims=True)
    return np.argmax(y >= best - TIE_RTOL * np.maximum(1.0, np.abs(best)), axis=-1)


def argmax_move(y: np.ndarray, legal: Optional[Iterable[int]] = None) -> int:
    """Index of the largest entry; the smallest index wins ties."""
    if legal is not None:
        masked = np.full_like(y, -np.inf)
        idx = np.fromiter(legal, dtype=np.int64)
        if idx.size:
            masked[idx] = y[idx]
            y = masked
    return int(_first_max(y))


def predict_move(pos: Position, model: NmfModel, tables: ZobristTables, num_buckets: int = 1, mask_illegal: bool = False) -> int:
    y = predict_vector(pos, model, tables, num_buckets)
    legal = [m.source * 64 + m.target for m in legal_moves(pos)] if mask_illegal else None
    return argmax_move(y, legal)


def decode_prediction(pos: Position, index: int) -> str:
    """UCI text for a predicted move index in ``pos``.

    The index carries no promotion kind, so a legal promotion decodes to the
    queen promotion.  Indices that are not legal here decode to plain
    source+target text.
    """
    matches = [m for m in legal_moves(pos) if m.index == index]
    if not matches:
        return move_index_name(index)
    return next((m for m in matches if m.promotion == QUEEN), matches[0]).uci()


# --- evaluation -----------------------------------------------------------------

@dataclass
class EvalReport:
    rows: list = field(default_factory=list)

    def add(self, **row) -> None:
        self.rows.append({k: row.get(k) for k in REPORT_COLUMNS})

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS, lineterminator="\n")
            w.writeheader()
            for row in self.rows:
                w.writerow({k: _fmt(v) for k, v in row.items()})

    @classmethod
    def read_csv(cls, path) -> "EvalReport":
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        for r in rows:
            for k in ("num_buckets", "d", "split_seed", "train_records", "test_records"):
                r[k] = int(r[k]) if r.get(k) not in (None, "") else None
            for k in ("accuracy", "empty_bucket_rate", "random_baseline"):
                r[k] = float(r[k])
        return cls(rows)


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return "" if v is None else v


def record_positions(ds: FilteredDataset):
    """Yield (record, position) for every record of ``ds``, replaying its games."""
    wanted = {(r.game_id, r.ply) for r in ds.records}
    for g in ds.games:
        for rec, pos in g.replay():
            if (rec.game_id, rec.ply) in wanted:
                yield rec, pos


@dataclass
class Evaluation:
    accuracy: float
    correct: int
    total: int
    empty_bucket_rate: float
    predictions: np.ndarray


def evaluate_accuracy(
    test: FilteredDataset,
    model: NmfModel,
    tables: ZobristTables,
    num_buckets: int = 1,
    mask_illegal: bool = False,
    chunk: int = 2048,
) -> Evaluation:
    """Multiclass accuracy of argmax prediction against the moves played."""
    num_buckets = _model_layout(model, tables, num_buckets)
    mask = num_buckets - 1
    w = effective_w(model)
    n = w.shape[0]
    if model.row_mass is not None:
        bucket_mass = np.asarray(model.row_mass).reshape(16, num_buckets).sum(axis=0)
    else:
        bucket_mass = np.abs(w).sum(axis=1).reshape(16, num_buckets).sum(axis=0)
    agg_rows, agg_cols, truth, legal, empty = [], [], [], [], 0
    for i, (rec, pos) in enumerate(record_positions(test)):
        b = full_hash(pos, tables) & mask
        if bucket_mass[b] == 0:
            empty += 1
        rows = position_rows(pos, b, num_buckets)
        agg_rows.extend([i] * len(rows))
        agg_cols.extend(rows)
        truth.append(rec.move_index)
        if mask_illegal:
            legal.append([m.source * 64 + m.target for m in legal_moves(pos)])
    total = len(truth)
    if total == 0:
        return Evaluation(0.0, 0, 0, 0.0, np.zeros(0, dtype=np.int64))
    agg = sp.csr_matrix((np.ones(len(agg_rows)), (agg_rows, agg_cols)), shape=(total, n))
    emb = agg @ w  # total x d, summed piece vectors
    preds = np.empty(total, dtype=np.int64)
    for lo in range(0, total, chunk):
        y = emb[lo:lo + chunk] @ model.H
        if mask_illegal:
            for j in range(y.shape[0]):
                preds[lo + j] = argmax_move(y[j], legal[lo + j])
        else:
            preds[lo:lo + chunk] = _first_max(y)
    correct = int(np.sum(preds == np.asarray(truth)))
    return Evaluation(correct / total, correct, total, empty / total, preds)


def fit_prediction_model(
    train: FilteredDataset,
    d: int,
    num_buckets: int,
    tables: ZobristTables,
    scheme: str = "piece-bucket",
    preprocess: str = "raw",
    max_iters: int = DEFAULT_MAX_ITERS,
    rel_tol: float = DEFAULT_REL_TOL,
    nmf_seed: int = 0,
) -> NmfModel:
    if scheme == "piece-bucket":
        train = annotate_buckets(train, tables, num_buckets)
        cm = build_count_matrix(train, "piece-bucket", num_buckets)
    elif scheme == "per-piece":
        cm = build_count_matrix(train, "per-piece")
    else:
        raise ModelSchemeMismatch(f"cannot fit a prediction model with scheme {scheme!r}")
    x = cm.matrix if preprocess == "raw" else row_normalize(cm)
    model = nmf_fit(x, d, max_iters=max_iters, rel_tol=rel_tol, seed=nmf_seed)
    model.meta.update(
        scheme=cm.scheme,
        num_buckets=cm.num_buckets,
        zobrist_seed=tables.seed,
        preprocess=preprocess,
    )
    model.row_mass = np.asarray(cm.matrix.sum(axis=1)).ravel()
    return model


def bucket_sweep(
    ds: FilteredDataset,
    d: int,
    bucket_counts: Sequence[int],
    seeds: Sequence[int],
    tables: ZobristTables,
    test_fraction: float = 0.2,
    split_by: str = "game",
    preprocess: str = "raw",
    max_iters: int = DEFAULT_MAX_ITERS,
    rel_tol: float = DEFAULT_REL_TOL,
    nmf_seed: int = 0,
    mask_illegal: bool = False,
) -> EvalReport:
    """Fit and evaluate one model per (bucket count, split seed)."""
    for b in bucket_counts:
        check_bucket_count(b)
    splits = {s: split_train_test(ds, test_fraction, s, split_by) for s in seeds}
    report = EvalReport()
    for b in bucket_counts:
        for s in seeds:
            train, test = splits[s]
            model = fit_prediction_model(train, d, b, tables, "piece-bucket", preprocess, max_iters, rel_tol, nmf_seed)
            ev = evaluate_accuracy(test, model, tables, b, mask_illegal)
            log.info("buckets=%d seed=%d accuracy=%.4f empty=%.3f", b, s, ev.accuracy, ev.empty_bucket_rate)
            report.add(
                num_buckets=b,
                d=d,
                scheme="piece-bucket",
                split_seed=s,
                train_records=len(train.records),
                test_records=ev.total,
                accuracy=ev.accuracy,
                empty_bucket_rate=ev.empty_bucket_rate,
                random_baseline=RANDOM_BASELINE,
            )
    return report
