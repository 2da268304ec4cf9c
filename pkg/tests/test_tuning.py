import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rkpod import kmeans_core as kc
from rkpod import methods
from rkpod import synthdata as sd
from rkpod import tuning as tn
from rkpod.initialization import InitStrategy
from rkpod.maskedmat import project


def _fit(u, C, loss=0.0):
    return kc.FitResult(np.asarray(u), np.asarray(C, float), [loss])


def test_bic_examples():
    rng = np.random.default_rng(0)
    C = rng.normal(size=(4, 10)) + 3
    u = np.arange(100) % 4
    X = C[u].copy()
    m0 = project(X, np.ones_like(X, bool))
    assert tn.bic(m0, _fit(u, C)) == pytest.approx(math.log(100) * 40, rel=1e-14)
    X[0, 0] += 1
    X[5, 3] -= 1
    m = project(X, np.ones_like(X, bool))
    assert tn.bic(m, _fit(u, C)) == pytest.approx(186.2068, abs=1e-4)
    Z = np.zeros_like(C)
    assert tn.bic(m, _fit(u, Z)) == kc.kpod_loss(m, u, Z)


def test_bic_exact_fit_scales_with_log_n():
    C = np.array([[1.0, 2.0, 3.0], [-1.0, 0.5, 2.0]])
    u = np.array([0, 1, 0])
    m = project(C[u], np.ones((3, 3), bool))
    # with n = e this would be exactly 6
    assert tn.bic(m, _fit(u, C)) / math.log(3) == pytest.approx(6.0, rel=1e-14)


def test_bic_shape_check():
    m = project(np.zeros((3, 2)), np.ones((3, 2), bool))
    with pytest.raises(Exception):
        tn.bic(m, _fit([0, 0, 0], np.zeros((1, 3))))


def test_clustering_distance_examples():
    assert tn.clustering_distance([1, 1, 2], [5, 5, 7]) == 0
    assert tn.clustering_distance([0, 0], [0, 1]) == 1
    assert tn.clustering_distance([0, 0, 1], [0, 1, 1]) == pytest.approx(2 / 3, abs=1e-15)


def test_default_grid():
    g = tn.default_grid()
    assert g.size == 20 and g[0] == pytest.approx(1e-3, rel=1e-15) and g[-1] == pytest.approx(10.0, rel=1e-15)
    assert np.allclose(g, 10.0 ** (-3 + 4 * np.arange(20) / 19), rtol=1e-15)


def test_split_rows():
    a, b, v = tn.split_rows(10, np.random.default_rng(0))
    assert (a.size, b.size, v.size) == (3, 3, 4)
    assert sorted(np.concatenate([a, b, v]).tolist()) == list(range(10))
    with pytest.raises(ValueError):
        tn.split_rows(2, np.random.default_rng(0))
    a, b, v = tn.split_rows(10, np.random.default_rng(0), "bootstrap")
    assert a.size == b.size == v.size == 10


def _data(n=60, seed=0):
    X, _, _ = sd.gen_mixture(sd.MixtureSpec(n, 4, k=4, d=2, a=3.0), np.random.default_rng(seed))
    return sd.apply_mcar(X, 0.1, np.random.default_rng(seed + 1))


def test_instability_fixed_rule_is_zero():
    m = _data()
    rule = lambda train, val, rng: (val.values[:, 0] > 0).astype(int)
    assert tn.instability(m, 2, cluster_fn=rule, B=5) == 0


def test_instability_uniform_labels_half():
    m = _data(90)
    rand = lambda train, val, rng: rng.integers(2, size=val.n)
    assert abs(tn.instability(m, 2, cluster_fn=rand, B=200) - 0.5) <= 0.05


def test_instability_relabel_invariant():
    m = _data(90)
    a = lambda train, val, rng: rng.integers(3, size=val.n)
    b = lambda train, val, rng: (rng.integers(3, size=val.n) + 1) % 3
    assert tn.instability(m, 3, cluster_fn=a, B=10) == tn.instability(m, 3, cluster_fn=b, B=10)


def test_instability_deterministic_and_worker_independent():
    m = _data()
    opts = methods.FitOptions(k=2, init=InitStrategy("impt", 2))
    kw = dict(method="rkpod-l0", lam=0.05, B=3, opts=opts, seed=4)
    v1 = tn.instability(m, 2, **kw)
    assert v1 == tn.instability(m, 2, **kw)
    assert v1 == tn.instability(m, 2, workers=2, **kw)
    with pytest.raises(ValueError):
        tn.instability(m, 3, **kw)
    with pytest.raises(ValueError):
        tn.instability(m, 2, method="rkpod-l0", B=0, opts=opts)


def test_instability_collapsed_fit_is_nan():
    m = _data()
    opts = methods.FitOptions(k=2, init=InitStrategy("impt", 1))
    assert math.isnan(tn.instability(m, 2, "rkpod-l0", lam=1e6, B=2, opts=opts))


def test_argmin_smallest():
    assert tn.argmin_smallest([3.0, 1.0, 1.0, 2.0]) == 1
    assert tn.argmin_smallest([math.nan, 2.0, 5.0]) == 1
    with pytest.raises(ValueError):
        tn.argmin_smallest([math.nan, math.inf])


def _oracle(m, d_by_lambda):
    """Fit oracle with loss 0 whose active count depends on the raw lambda."""
    def fit_fn(raw):
        d = d_by_lambda[raw]
        C = np.zeros((2, m.p))
        C[:, :d] = [[1.0] * d, [2.0] * d]
        return _fit(np.zeros(m.n, int), C)
    return fit_fn


def test_select_lambda_bic_oracle_prefers_small_d():
    # observed values only in a zero column, so every oracle fit has loss 0
    X = np.zeros((5, 4))
    mask = np.zeros((5, 4), bool)
    mask[:, 3] = True
    m = project(X, mask)
    grid = [0.1, 0.2, 0.3, 0.4]
    fit_fn = _oracle(m, {0.1: 3, 0.2: 1, 0.3: 2, 0.4: 1})
    res = tn.select_lambda(m, grid=grid, criterion="bic", fit_fn=fit_fn, scale="raw")
    assert res.chosen_lambda == 0.2 and res.chosen_index == 1
    assert res.criterion_values[res.chosen_index] == min(res.criterion_values)


def test_select_lambda_single_and_validation():
    m = _data()
    opts = methods.FitOptions(k=2, init=InitStrategy("impt", 2))
    res = tn.select_lambda(m, "rkpod-l0", [0.01], "bic", opts)
    assert res.chosen_lambda == 0.01 and len(list(res.rows())) == 1
    for bad in ([], [0.2, 0.1]):
        with pytest.raises(ValueError):
            tn.select_lambda(m, "rkpod-l0", bad, "bic", opts)
    with pytest.raises(ValueError):
        tn.select_lambda(m, "rkpod-l0", [0.1], "aic", opts)
    with pytest.raises(ValueError, match="finite"):
        tn.select_lambda(m, "rkpod-l0", [1e5], "instability", opts, B=2)


def test_select_lambda_instability_curve_csv(tmp_path):
    m = _data(90)
    opts = methods.FitOptions(k=4, init=InitStrategy("impt", 2))
    grid = [0.01, 0.1, 1.0]
    res = tn.select_lambda(m, "rkpod-gl", grid, "instability", opts, seed=1, B=3)
    again = tn.select_lambda(m, "rkpod-gl", grid, "instability", opts, seed=1, B=3)
    assert res.chosen_lambda == again.chosen_lambda
    assert np.array_equal(res.criterion_values, again.criterion_values, equal_nan=True)
    path = tmp_path / "curve.csv"
    res.write_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "lambda,criterion_value,active_features" and len(lines) == 4


@settings(max_examples=20)
@given(st.lists(st.integers(0, 4), min_size=2, max_size=8))
def test_bic_monotone_in_d_at_equal_loss(ds):
    X = np.zeros((5, 4))
    mask = np.zeros((5, 4), bool)
    mask[:, 3] = True
    m = project(X, mask)
    ds = [min(d, 3) for d in ds]
    vals = [tn.bic(m, _oracle(m, {0: d})(0)) for d in ds]
    assert all((vals[i] < vals[j]) == (ds[i] < ds[j]) for i in range(len(ds)) for j in range(len(ds)))
