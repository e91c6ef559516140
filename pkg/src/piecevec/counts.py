"""Move-count matrices and their preprocessing.

Rows follow one of three schemes:

* ``per-type``     6 rows, one per piece kind (king, queen, rook, bishop, knight, pawn)
* ``per-piece``    16 rows, one per white piece id
* ``piece-bucket`` 16 * B rows, row ``(id - 1) * B + bucket``

Columns are move indices ``64 * source + target``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np
import scipy.sparse as sp

from .board import PIECE_LABELS
from .records import MoveRecord
from .zobrist import check_bucket_count

NUM_MOVES = 4096
SCHEMES = ("per-type", "per-piece", "piece-bucket")
TYPE_ORDER = "KQRBNP"
COUNTS_FORMAT = "piecevec-counts"
COUNTS_VERSION = 1


class MissingBucketAnnotation(ValueError):
    pass


@dataclass(frozen=True)
class RowKey:
    scheme: str
    piece: object  # kind letter for per-type, piece id otherwise
    bucket: Optional[int] = None

    def __post_init__(self):
        if (self.bucket is not None) != (self.scheme == "piece-bucket"):
            raise ValueError("bucket must be set exactly for the piece-bucket scheme")

    def label(self) -> str:
        """Compact form used in count files: ``P``, ``13`` or ``13:201``."""
        if self.bucket is None:
            return str(self.piece)
        return f"{self.piece}:{self.bucket}"

    def describe(self) -> str:
        if self.scheme == "per-type":
            return str(self.piece)
        name = PIECE_LABELS.get(self.piece, str(self.piece))
        return name if self.bucket is None else f"{name}@{self.bucket}"


@dataclass
class CountMatrix:
    matrix: sp.csr_matrix  # n x 4096, float64 holding integer counts
    scheme: str
    num_buckets: int = 1
    zobrist_seed: Optional[int] = None

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def p(self) -> int:
        return self.matrix.shape[1]

    @property
    def total_count(self) -> int:
        return int(round(self.matrix.sum()))

    def row_key(self, row: int) -> RowKey:
        if self.scheme == "per-type":
            return RowKey("per-type", TYPE_ORDER[row])
        if self.scheme == "per-piece":
            return RowKey("per-piece", row + 1)
        return RowKey("piece-bucket", row // self.num_buckets + 1, row % self.num_buckets)

    def row_keys(self) -> list[RowKey]:
        return [self.row_key(i) for i in range(self.n)]

    def row_index(self, key: RowKey) -> int:
        if key.scheme != self.scheme:
            raise ValueError(f"row key scheme {key.scheme} does not match {self.scheme}")
        if self.scheme == "per-type":
            return TYPE_ORDER.index(key.piece)
        if self.scheme == "per-piece":
            return key.piece - 1
        return (key.piece - 1) * self.num_buckets + key.bucket

    def row_dict(self, row: int) -> dict[int, int]:
        r = self.matrix.getrow(row)
        return {int(c): int(round(v)) for c, v in zip(r.indices, r.data) if v}


def num_rows(scheme: str, num_buckets: int = 1) -> int:
    if scheme == "per-type":
        return 6
    if scheme == "per-piece":
        return 16
    if scheme == "piece-bucket":
        return 16 * num_buckets
    raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")


def row_indices(records: Iterable[MoveRecord], scheme: str, num_buckets: int = 1) -> np.ndarray:
    if scheme == "per-type":
        return np.fromiter((TYPE_ORDER.index(r.kind) for r in records), dtype=np.int64)
    if scheme == "per-piece":
        return np.fromiter((r.piece - 1 for r in records), dtype=np.int64)
    out = []
    for r in records:
        if r.bucket is None:
            raise MissingBucketAnnotation(f"record game {r.game_id} ply {r.ply} has no bucket")
        out.append((r.piece - 1) * num_buckets + r.bucket)
    return np.asarray(out, dtype=np.int64)


def build_count_matrix(ds, scheme: str, num_buckets: Optional[int] = None) -> CountMatrix:
    """Count each record once at (row of its key, its move index).

    ``ds`` is a FilteredDataset or a plain sequence of records.
    """
    records = getattr(ds, "records", ds)
    seed = getattr(ds, "zobrist_seed", None)
    if scheme == "piece-bucket":
        if num_buckets is None:
            num_buckets = getattr(ds, "num_buckets", None)
        if num_buckets is None:
            raise MissingBucketAnnotation("piece-bucket scheme needs an annotated dataset")
        num_buckets = check_bucket_count(num_buckets)
    else:
        num_buckets = 1
    records = list(records)
    n = num_rows(scheme, num_buckets)
    rows = row_indices(records, scheme, num_buckets)
    cols = np.fromiter((r.move_index for r in records), dtype=np.int64, count=len(records))
    if len(rows) and (rows.min() < 0 or rows.max() >= n):
        raise ValueError("record outside the row range of the scheme (piece id 0 or bad bucket)")
    data = np.ones(len(records), dtype=np.float64)
    m = sp.coo_matrix((data, (rows, cols)), shape=(n, NUM_MOVES)).tocsr()
    m.sum_duplicates()
    m.sort_indices()
    return CountMatrix(m, scheme, num_buckets, seed)


def collapse_buckets(cm: CountMatrix) -> CountMatrix:
    """Sum piece-bucket rows over buckets, giving the per-piece matrix."""
    if cm.scheme != "piece-bucket":
        raise ValueError("collapse_buckets needs a piece-bucket matrix")
    b = cm.num_buckets
    agg = sp.csr_matrix(
        (np.ones(cm.n), (np.arange(cm.n) // b, np.arange(cm.n))), shape=(16, cm.n)
    )
    out = (agg @ cm.matrix).tocsr()
    out.sort_indices()
    return CountMatrix(out, "per-piece", 1, cm.zobrist_seed)


def row_normalize(x) -> sp.csr_matrix:
    """Divide each row by its total; all-zero rows stay zero."""
    m = sp.csr_matrix(getattr(x, "matrix", x), dtype=np.float64)
    sums = np.asarray(m.sum(axis=1)).ravel()
    scale = np.divide(1.0, sums, out=np.zeros_like(sums), where=sums != 0)
    return sp.diags(scale) @ m


@dataclass(frozen=True)
class StandardizationParams:
    column_means: np.ndarray
    column_stds: np.ndarray
    zero_variance_mask: np.ndarray


def standardize_columns(m, tol: float = 1e-12) -> tuple[np.ndarray, StandardizationParams]:
    """Zero mean, unit population variance per column.

    Columns whose std is below ``tol * (1 + |mean|)`` are zeroed and masked
    instead of divided, so column positions keep their move index.
    """
    a = m.toarray() if sp.issparse(m) else np.asarray(m, dtype=np.float64)
    means = a.mean(axis=0)
    stds = a.std(axis=0)
    mask = stds <= tol * (1.0 + np.abs(means))
    stds = np.where(mask, 0.0, stds)
    z = np.zeros_like(a)
    keep = ~mask
    z[:, keep] = (a[:, keep] - means[keep]) / stds[keep]
    return z, StandardizationParams(means, stds, mask)


def destandardize(z: np.ndarray, params: StandardizationParams) -> np.ndarray:
    """Invert ``standardize_columns``; masked columns come back as their mean."""
    return z * params.column_stds + params.column_means


# --- serialization ----------------------------------------------------------

def write_counts(path, cm: CountMatrix) -> None:
    """Sparse triplet text: JSON header line, then ``row_key<TAB>col<TAB>count``.

    Rows are ordered by piece id (or type) then bucket, columns ascending.
    """
    m = cm.matrix.tocsr()
    m.sort_indices()
    head = {
        "format": COUNTS_FORMAT,
        "version": COUNTS_VERSION,
        "scheme": cm.scheme,
        "num_buckets": cm.num_buckets,
        "zobrist_seed": cm.zobrist_seed,
        "n": cm.n,
        "p": cm.p,
        "total_count": cm.total_count,
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(head, separators=(",", ":")) + "\n")
        for row in range(m.shape[0]):
            lo, hi = m.indptr[row], m.indptr[row + 1]
            if lo == hi:
                continue
            label = cm.row_key(row).label()
            fh.write("".join(f"{label}\t{c}\t{int(round(v))}\n" for c, v in zip(m.indices[lo:hi], m.data[lo:hi])))


def read_counts(path) -> CountMatrix:
    with open(path, encoding="utf-8") as fh:
        head = json.loads(fh.readline())
        if head.get("format") != COUNTS_FORMAT or head.get("version") != COUNTS_VERSION:
            raise ValueError(f"{path}: not a version-{COUNTS_VERSION} count file")
        scheme, b = head["scheme"], head["num_buckets"]
        probe = CountMatrix(sp.csr_matrix((0, NUM_MOVES)), scheme, b)
        rows, cols, vals = [], [], []
        for line in fh:
            label, col, count = line.rstrip("\n").split("\t")
            if scheme == "per-type":
                key = RowKey(scheme, label)
            elif scheme == "per-piece":
                key = RowKey(scheme, int(label))
            else:
                piece, bucket = label.split(":")
                key = RowKey(scheme, int(piece), int(bucket))
            rows.append(probe.row_index(key))
            cols.append(int(col))
            vals.append(float(count))
    m = sp.csr_matrix((vals, (rows, cols)), shape=(head["n"], head["p"]))
    m.sort_indices()
    return CountMatrix(m, scheme, b, head.get("zobrist_seed"))
