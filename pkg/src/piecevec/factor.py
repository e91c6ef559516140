"""PCA and NMF of move-count matrices, plus decomposition reports.

PCA minimizes ``||X - X C C^T||_F^2`` subject to ``C^T C = I``; the minimizer
is the top-d right singular vectors of the (column-standardized) input, so
it is solved by SVD.  NMF minimizes ``||X - W H||_F^2`` with ``W, H >= 0``
using Lee-Seung multiplicative updates, sparse-aware so the piece-bucket
matrices fit in memory.
"""

from __future__ import annotations

import io
import json
import zipfile
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
import scipy.sparse as sp

from .board import move_index_name
from .counts import StandardizationParams

MODEL_VERSION = 1
DEFAULT_MAX_ITERS = 500
DEFAULT_REL_TOL = 1e-6
INIT_LOW, INIT_HIGH = 0.1, 1.1
_TINY = np.finfo(np.float64).tiny
# Above this many cells the objective is evaluated without densifying X.
_DENSE_OBJECTIVE_CELLS = 4_000_000


class InvalidDimension(ValueError):
    pass


class NegativeInput(ValueError):
    pass


class ShapeMismatch(ValueError):
    pass


@dataclass
class PcaModel:
    loadings: np.ndarray  # p x d, orthonormal columns
    scores: np.ndarray  # n x d
    explained_variance_ratio: np.ndarray  # d
    singular_values: np.ndarray  # all of them, descending
    d: int
    standardization: Optional[StandardizationParams] = None
    meta: dict = field(default_factory=dict)

    kind = "pca"

    def reconstruct(self, x) -> np.ndarray:
        x = _dense(x)
        return x @ self.loadings @ self.loadings.T


@dataclass
class NmfModel:
    W: np.ndarray  # n x d
    H: np.ndarray  # d x p
    objective_trace: np.ndarray
    d: int
    seed: int
    iterations_run: int
    meta: dict = field(default_factory=dict)
    row_mass: Optional[np.ndarray] = None  # training count per row, when known

    kind = "nmf"

    @property
    def scores(self) -> np.ndarray:
        return self.W

    def reconstruct(self, x=None) -> np.ndarray:
        return self.W @ self.H


Model = Union[PcaModel, NmfModel]


def _dense(x) -> np.ndarray:
    return x.toarray() if sp.issparse(x) else np.asarray(x, dtype=np.float64)


def _fix_signs(c: np.ndarray) -> np.ndarray:
    """Flip columns so each one's largest-magnitude entry is positive."""
    if c.size == 0:
        return c
    idx = np.argmax(np.abs(c), axis=0)
    signs = np.sign(c[idx, np.arange(c.shape[1])])
    signs[signs == 0] = 1.0
    return c * signs


def pca_fit(x_std, d: int, standardization: Optional[StandardizationParams] = None, meta: Optional[dict] = None) -> PcaModel:
    x = _dense(x_std)
    n, p = x.shape
    if not 1 <= d <= min(n, p):
        raise InvalidDimension(f"d must be in [1, {min(n, p)}], got {d}")
    _, s, vt = np.linalg.svd(x, full_matrices=False)
    c = _fix_signs(vt[:d].T.copy())
    total = float(np.sum(s**2))
    ratio = (s[:d] ** 2) / total if total > 0 else np.zeros(d)
    return PcaModel(
        loadings=c,
        scores=x @ c,
        explained_variance_ratio=ratio,
        singular_values=s,
        d=d,
        standardization=standardization,
        meta=dict(meta or {}),
    )


def _nmf_objective(x, x_sq: float, w: np.ndarray, h: np.ndarray) -> float:
    if not sp.issparse(x):
        r = x - w @ h
        return float(np.einsum("ij,ij->", r, r))
    if x.shape[0] * x.shape[1] <= _DENSE_OBJECTIVE_CELLS:
        r = x.toarray() - w @ h
        return float(np.einsum("ij,ij->", r, r))
    # ||X||^2 - 2 <X, WH> + ||WH||^2 without forming WH
    cross = float(np.einsum("ij,ij->", np.asarray((x @ h.T)), w))
    gram = float(np.einsum("ij,ij->", w.T @ w, h @ h.T))
    return max(x_sq - 2.0 * cross + gram, 0.0)


def nmf_fit(
    x,
    d: int,
    max_iters: int = DEFAULT_MAX_ITERS,
    rel_tol: float = DEFAULT_REL_TOL,
    seed: int = 0,
    meta: Optional[dict] = None,
) -> NmfModel:
    """Multiplicative-update NMF from a seeded uniform(0.1, 1.1) start.

    Stops after ``max_iters`` iterations or when the relative objective
    improvement of one iteration drops below ``rel_tol``.  ``objective_trace``
    holds the initial objective followed by one value per iteration.
    """
    if d < 1:
        raise InvalidDimension(f"d must be >= 1, got {d}")
    if sp.issparse(x):
        x = sp.csr_matrix(x, dtype=np.float64)
        if x.nnz and x.data.min() < 0:
            raise NegativeInput("NMF input has negative entries")
        x_sq = float(x.multiply(x).sum())
        xt = x.T.tocsr()
    else:
        x = np.asarray(x, dtype=np.float64)
        if (x < 0).any():
            raise NegativeInput("NMF input has negative entries")
        x_sq = float(np.sum(x * x))
        xt = x.T
    n, p = x.shape
    rng = np.random.default_rng(seed)
    w = rng.uniform(INIT_LOW, INIT_HIGH, size=(n, d))
    h = rng.uniform(INIT_LOW, INIT_HIGH, size=(d, p))
    trace = [_nmf_objective(x, x_sq, w, h)]
    # After the first update, W rows of all-zero X rows and H columns of
    # all-zero X columns are exactly 0 and stay 0, so later iterations only
    # touch the active block.  The objective is unchanged by the restriction.
    full_w, full_h = w, h
    it = 0
    for it in range(1, max_iters + 1):
        # H <- H * (W^T X) / (W^T W H)
        # (multiplying first keeps entries that decay toward 0 from
        # overflowing the ratio)
        num_h = np.asarray(xt @ w).T
        h = h * num_h / np.maximum((w.T @ w) @ h, _TINY)
        # W <- W * (X H^T) / (W H H^T)
        num_w = np.asarray(x @ h.T)
        w = w * num_w / np.maximum(w @ (h @ h.T), _TINY)
        if it == 1:
            rows, cols = _active(x)
            x = x[rows][:, cols]
            xt = x.T.tocsr() if sp.issparse(x) else x.T
            full_w, full_h = w, h
            w = w[rows]
            h = h[:, cols]
        obj = _nmf_objective(x, x_sq, w, h)
        prev = trace[-1]
        trace.append(obj)
        if prev > 0 and (prev - obj) < rel_tol * prev:
            break
        if obj == 0.0:
            break
    if it >= 1:
        full_w[rows] = w
        full_h[:, cols] = h
    w, h = full_w, full_h
    return NmfModel(
        W=w, H=h, objective_trace=np.asarray(trace), d=d, seed=seed, iterations_run=it, meta=dict(meta or {})
    )


def _active(x):
    if sp.issparse(x):
        a = abs(x)
        rows = np.flatnonzero(np.asarray(a.sum(axis=1)).ravel())
        cols = np.flatnonzero(np.asarray(a.sum(axis=0)).ravel())
    else:
        rows = np.flatnonzero(np.abs(x).sum(axis=1))
        cols = np.flatnonzero(np.abs(x).sum(axis=0))
    return rows, cols


def reconstruction_error(model: Model, x) -> float:
    """Squared Frobenius reconstruction error of ``x`` under ``model``."""
    if isinstance(model, PcaModel):
        xd = _dense(x)
        if xd.shape[1] != model.loadings.shape[0]:
            raise ShapeMismatch(f"X has {xd.shape[1]} columns, loadings have {model.loadings.shape[0]} rows")
        r = xd - xd @ model.loadings @ model.loadings.T
        return float(np.einsum("ij,ij->", r, r))
    if x.shape != (model.W.shape[0], model.H.shape[1]):
        raise ShapeMismatch(f"X shape {x.shape} vs model {(model.W.shape[0], model.H.shape[1])}")
    if sp.issparse(x):
        x = sp.csr_matrix(x, dtype=np.float64)
        return _nmf_objective(x, float(x.multiply(x).sum()), model.W, model.H)
    return _nmf_objective(np.asarray(x, dtype=np.float64), 0.0, model.W, model.H)


def basis(model: Model) -> np.ndarray:
    """Component patterns over the move space, one row per component."""
    return model.loadings.T if isinstance(model, PcaModel) else model.H


def top_moves_per_component(model: Model, k: int = 5) -> list[dict]:
    """The k strongest moves of each component (by |loading| for PCA, weight for NMF).

    Zero weights are never listed, so a component can yield fewer than k rows.
    """
    rows = []
    for comp, vec in enumerate(basis(model)):
        strength = np.abs(vec) if isinstance(model, PcaModel) else vec
        order = np.lexsort((np.arange(vec.size), -strength))
        rank = 0
        for idx in order:
            if rank == k or strength[idx] <= 0:
                break
            rank += 1
            rows.append(
                {"component": comp + 1, "rank": rank, "move_index": int(idx), "move": move_index_name(int(idx)), "weight": float(vec[idx])}
            )
    return rows


def component_scores(model: Model, labels: Optional[list[str]] = None) -> list[tuple[str, np.ndarray]]:
    scores = model.scores
    if labels is None:
        labels = model.meta.get("row_labels") or [str(i) for i in range(scores.shape[0])]
    return [(labels[i], scores[i]) for i in range(scores.shape[0])]


def cumulative_explained_variance(model: PcaModel) -> np.ndarray:
    return np.cumsum(model.explained_variance_ratio)


# --- model files --------------------------------------------------------------
# A zip of .npy arrays plus meta.json, written with fixed timestamps so the
# bytes depend only on the model contents.  np.load() can read the arrays.

_FIXED_TIME = (1980, 1, 1, 0, 0, 0)


def _write_npz(path, arrays: dict, meta: dict) -> None:
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        for name in sorted(arrays):
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.ascontiguousarray(arrays[name]), allow_pickle=False)
            info = zipfile.ZipInfo(f"{name}.npy", date_time=_FIXED_TIME)
            info.compress_type = zipfile.ZIP_DEFLATED
            info.external_attr = 0o644 << 16
            zf.writestr(info, buf.getvalue())
        info = zipfile.ZipInfo("meta.json", date_time=_FIXED_TIME)
        info.compress_type = zipfile.ZIP_DEFLATED
        info.external_attr = 0o644 << 16
        zf.writestr(info, json.dumps(meta, sort_keys=True, indent=1))


def save_model(path, model: Model) -> None:
    meta = {"kind": model.kind, "version": MODEL_VERSION, "d": model.d, **model.meta}
    if isinstance(model, PcaModel):
        arrays = {
            "loadings": model.loadings,
            "scores": model.scores,
            "explained_variance_ratio": model.explained_variance_ratio,
            "singular_values": model.singular_values,
        }
        if model.standardization is not None:
            st = model.standardization
            arrays.update(column_means=st.column_means, column_stds=st.column_stds, zero_variance_mask=st.zero_variance_mask)
    else:
        arrays = {"W": model.W, "H": model.H, "objective_trace": model.objective_trace}
        if model.row_mass is not None:
            arrays["row_mass"] = model.row_mass
        meta.update(seed=model.seed, iterations_run=model.iterations_run)
    _write_npz(path, arrays, meta)


def load_model(path) -> Model:
    with zipfile.ZipFile(path) as zf:
        meta = json.loads(zf.read("meta.json"))
        arrays = {
            name[:-4]: np.lib.format.read_array(io.BytesIO(zf.read(name)), allow_pickle=False)
            for name in zf.namelist()
            if name.endswith(".npy")
        }
    if meta.get("version") != MODEL_VERSION:
        raise ValueError(f"{path}: unsupported model version {meta.get('version')!r}")
    kind = meta.pop("kind")
    meta.pop("version")
    d = meta.pop("d")
    if kind == "pca":
        st = None
        if "column_means" in arrays:
            st = StandardizationParams(arrays["column_means"], arrays["column_stds"], arrays["zero_variance_mask"])
        return PcaModel(
            arrays["loadings"], arrays["scores"], arrays["explained_variance_ratio"], arrays["singular_values"], d, st, meta
        )
    if kind == "nmf":
        seed = meta.pop("seed")
        iters = meta.pop("iterations_run")
        return NmfModel(arrays["W"], arrays["H"], arrays["objective_trace"], d, seed, iters, meta, arrays.get("row_mass"))
    raise ValueError(f"{path}: unknown model kind {kind!r}")
