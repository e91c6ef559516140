import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from piecevec.factor import (
    InvalidDimension,
    NegativeInput,
    NmfModel,
    PcaModel,
    ShapeMismatch,
    component_scores,
    cumulative_explained_variance,
    load_model,
    nmf_fit,
    pca_fit,
    reconstruction_error,
    save_model,
    top_moves_per_component,
)


def covariance_projector(x: np.ndarray, d: int) -> np.ndarray:
    """Oracle: top-d eigenvectors of X^T X by direct eigendecomposition."""
    vals, vecs = np.linalg.eigh(x.T @ x)
    top = vecs[:, np.argsort(vals)[::-1][:d]]
    return top @ top.T


def direct_objective(x, c):
    r = x - x @ c @ c.T
    return float(np.sum(r * r))


# --- PCA ----------------------------------------------------------------------

def test_pca_two_by_two_example():
    m = pca_fit(np.array([[0.5, -0.5], [-0.5, 0.5]]), 1)
    np.testing.assert_allclose(m.loadings[:, 0], np.array([1, -1]) / np.sqrt(2), atol=1e-12)
    assert m.explained_variance_ratio[0] == pytest.approx(1.0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.integers(2, 12), st.integers(2, 12))
def test_pca_properties(seed, n, p):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, p))
    dmax = min(n, p)
    errors = []
    for d in range(1, dmax + 1):
        m = pca_fit(x, d)
        np.testing.assert_allclose(m.loadings.T @ m.loadings, np.eye(d), atol=1e-10)
        discarded = float(np.sum(m.singular_values[d:] ** 2))
        assert abs(direct_objective(x, m.loadings) - discarded) <= 1e-8 * max(1.0, float(np.sum(x * x)))
        assert reconstruction_error(m, x) == pytest.approx(direct_objective(x, m.loadings), abs=1e-9)
        np.testing.assert_allclose(m.scores, x @ m.loadings)
        ratio = m.explained_variance_ratio
        assert np.all(np.diff(ratio) <= 1e-15) and np.all((ratio >= 0) & (ratio <= 1))
        assert cumulative_explained_variance(m)[-1] <= 1 + 1e-12
        errors.append(reconstruction_error(m, x))
    assert all(b <= a + 1e-9 for a, b in zip(errors, errors[1:]))
    full = pca_fit(x, dmax)
    if p <= n:
        np.testing.assert_allclose(x @ full.loadings @ full.loadings.T, x, atol=1e-8)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 6))
def test_pca_matches_covariance_oracle(seed, d):
    x = np.random.default_rng(seed).normal(size=(30, 20))
    m = pca_fit(x, d)
    np.testing.assert_allclose(m.loadings @ m.loadings.T, covariance_projector(x, d), atol=1e-6)


def test_pca_sign_convention_and_rank_deficiency():
    x = np.outer([1.0, 2.0, -1.0], [3.0, -1.0, 0.5, 2.0])
    m = pca_fit(x, 3)
    for col in m.loadings.T:
        assert col[np.argmax(np.abs(col))] > 0
    assert m.explained_variance_ratio[0] == pytest.approx(1.0)
    np.testing.assert_allclose(m.explained_variance_ratio[1:], 0, atol=1e-20)
    with pytest.raises(InvalidDimension):
        pca_fit(x, 4)
    with pytest.raises(InvalidDimension):
        pca_fit(x, 0)


def test_identical_rows_identical_scores():
    x = np.random.default_rng(0).normal(size=(5, 7))
    x[3] = x[1]
    m = pca_fit(x, 3)
    rows = dict(component_scores(m, [str(i) for i in range(5)]))
    np.testing.assert_array_equal(rows["1"], rows["3"])


# --- NMF ------------------------------------------------------------------------

def test_nmf_identity_exact():
    m = nmf_fit(np.eye(2), 2, max_iters=5000, rel_tol=0)
    assert m.objective_trace[-1] < 1e-6


def test_nmf_overcomplete_random():
    x = np.random.default_rng(1).uniform(size=(8, 12))
    m = nmf_fit(x, 12, max_iters=20000, rel_tol=0)
    assert m.objective_trace[-1] < 1e-6


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 5), st.booleans())
def test_nmf_monotone_nonnegative_deterministic(seed, d, sparse):
    rng = np.random.default_rng(seed)
    x = rng.uniform(size=(rng.integers(2, 10), rng.integers(2, 15)))
    x[rng.uniform(size=x.shape) < 0.5] = 0
    if sparse:
        x = sp.csr_matrix(x)
    a = nmf_fit(x, d, max_iters=200, seed=seed)
    b = nmf_fit(x, d, max_iters=200, seed=seed)
    assert np.all(np.diff(a.objective_trace) <= 1e-12)
    assert (a.W >= 0).all() and (a.H >= 0).all()
    np.testing.assert_array_equal(a.W, b.W)
    np.testing.assert_array_equal(a.H, b.H)
    assert reconstruction_error(a, x) == pytest.approx(a.objective_trace[-1], rel=1e-9, abs=1e-12)


def test_nmf_zero_rows_and_columns_stay_zero():
    x = np.zeros((6, 9))
    x[1, 2], x[4, 7], x[4, 2] = 3.0, 1.0, 2.0
    m = nmf_fit(sp.csr_matrix(x), 3, max_iters=300)
    assert not m.W[[0, 2, 3, 5]].any()
    assert not m.H[:, [0, 1, 3, 4, 5, 6, 8]].any()


def test_nmf_sparse_matches_dense():
    rng = np.random.default_rng(3)
    x = rng.poisson(0.3, size=(40, 60)).astype(float)
    a = nmf_fit(x, 4, max_iters=100, seed=2)
    b = nmf_fit(sp.csr_matrix(x), 4, max_iters=100, seed=2)
    np.testing.assert_allclose(a.W, b.W, rtol=1e-9, atol=1e-12)
    np.testing.assert_allclose(a.objective_trace, b.objective_trace, rtol=1e-9)


def test_nmf_errors():
    with pytest.raises(NegativeInput):
        nmf_fit(np.array([[1.0, -1.0]]), 1)
    with pytest.raises(InvalidDimension):
        nmf_fit(np.eye(2), 0)


def test_zero_model_error_and_shape_check():
    x = np.arange(6.0).reshape(2, 3)
    zero = NmfModel(np.zeros((2, 1)), np.zeros((1, 3)), np.array([0.0]), 1, 0, 0)
    assert reconstruction_error(zero, x) == pytest.approx(np.sum(x * x))
    with pytest.raises(ShapeMismatch):
        reconstruction_error(zero, np.zeros((3, 3)))


def test_top_moves_report():
    h = np.zeros((2, 4096))
    h[0, 796] = 2.0
    h[1, [10, 20, 30]] = [1.0, 3.0, 3.0]
    m = NmfModel(np.ones((3, 2)), h, np.array([0.0]), 2, 0, 0)
    rows = top_moves_per_component(m, 5)
    first = [r for r in rows if r["component"] == 1]
    assert [(r["move"], r["weight"]) for r in first] == [("e2e4", 2.0)]
    second = [r["move_index"] for r in rows if r["component"] == 2]
    assert second == [20, 30, 10]  # ties by index
    c = np.zeros((4096, 1))
    c[5, 0], c[9, 0] = -0.8, 0.6
    pca = PcaModel(c, np.zeros((1, 1)), np.array([1.0]), np.array([1.0]), 1)
    assert [(r["move_index"], r["weight"]) for r in top_moves_per_component(pca, 1)] == [(5, -0.8)]


def test_model_roundtrip_bit_exact(tmp_path):
    x = np.random.default_rng(0).uniform(size=(6, 10))
    nmf = nmf_fit(x, 3, max_iters=50, meta={"scheme": "per-piece"})
    nmf.row_mass = x.sum(axis=1)
    pca = pca_fit(x - x.mean(axis=0), 2, meta={"row_labels": list("abcdef")})
    for model, name in ((nmf, "n.npz"), (pca, "p.npz")):
        path = tmp_path / name
        save_model(path, model)
        back = load_model(path)
        assert type(back) is type(model)
        for field in ("W", "H", "objective_trace", "row_mass") if model.kind == "nmf" else ("loadings", "scores", "singular_values"):
            np.testing.assert_array_equal(getattr(back, field), getattr(model, field))
        assert back.meta == model.meta
        save_model(tmp_path / ("again_" + name), back)
        assert (tmp_path / ("again_" + name)).read_bytes() == path.read_bytes()
    assert np.load(tmp_path / "n.npz")["W"].shape == (6, 3)
