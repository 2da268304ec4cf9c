import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rkpod import kmeans_core as kc
from rkpod import metrics as mt
from rkpod import synthdata as sd

partitions = st.integers(2, 60).flatmap(
    lambda n: st.tuples(st.lists(st.integers(0, 4), min_size=n, max_size=n),
                        st.lists(st.integers(0, 4), min_size=n, max_size=n))
)


def test_mse_examples():
    T = np.array([[1.0, 2.0], [-1.0, 0.0]])
    assert mt.mse_centers(T, T) == 0
    assert mt.mse_centers(T[::-1], T) == 0
    assert mt.mse_centers([[0.0], [3.0]], [[1.0], [5.0]]) == 5.0


def test_mse_orientation_not_symmetric():
    assert mt.mse_centers([[0.0], [3.0]], [[1.0], [5.0]]) == 5.0
    # truth-to-nearest-estimate would give 1 + 4 as well; a lopsided case separates them
    assert mt.mse_centers([[0.0], [0.0]], [[0.0], [4.0]]) == 0.0
    assert mt.mse_centers([[0.0], [4.0]], [[0.0], [0.0]]) == 16.0


def test_mse_matching_variant():
    assert mt.mse_centers([[0.0], [0.0]], [[0.0], [4.0]], matching=True) == 16.0
    with pytest.raises(ValueError):
        mt.mse_centers([[0.0]], [[0.0], [1.0]], matching=True)


@given(st.integers(0, 10**6))
def test_mse_zero_on_row_subsets(seed):
    rng = np.random.default_rng(seed)
    T = rng.normal(size=(4, 3))
    assert mt.mse_centers(T[rng.integers(4, size=4)], T) == 0


def test_cer_examples():
    assert mt.cer([0, 0, 1, 2], [0, 0, 1, 2]) == 0
    assert mt.cer([0, 0, 1, 2], [2, 2, 0, 1]) == 0
    assert mt.cer([0, 0, 1], [0, 1, 1]) == pytest.approx(2 / 3, rel=0, abs=1e-15)
    assert mt.cer([0, 0], [0, 1]) == 1.0
    with pytest.raises(ValueError):
        mt.cer([0], [0])
    with pytest.raises(ValueError):
        mt.cer([0, 1], [0, 1, 1])


@given(partitions)
def test_cer_matches_enumeration(pair):
    a, b = pair
    assert mt.cer(a, b) == mt.cer_bruteforce(a, b)


@given(partitions, st.permutations(range(5)))
def test_cer_properties(pair, perm):
    a, b = np.asarray(pair[0]), np.asarray(pair[1])
    v = mt.cer(a, b)
    assert 0 <= v <= 1
    assert v == mt.cer(b, a)
    assert v == mt.cer(np.asarray(perm)[a], b)
    same_relation = np.array_equal(a[:, None] == a[None, :], b[:, None] == b[None, :])
    assert (v == 0) == same_relation


def test_predictive_cer_examples():
    C = np.array([[5.0, 0.0], [-5.0, 0.0], [0.0, 5.0], [0.0, -5.0]])
    labels = np.repeat(np.arange(4), 100)
    assert mt.predictive_cer(C, C[labels], labels) == 0
    # all-zero estimate: every point ties into center 0
    n = labels.size
    cross = 1 - 4 * math.comb(100, 2) / math.comb(n, 2)
    assert mt.predictive_cer(np.zeros((4, 2)), C[labels], labels) == pytest.approx(cross, abs=1e-15)
    assert cross == pytest.approx(0.7519, abs=1e-4)


def test_surrogate_truth_close_to_analytic():
    spec = sd.MixtureSpec(100, 4, d=2, a=2.0)
    S = mt.surrogate_truth(spec, np.random.default_rng(0), N=20_000, restarts=3)
    T = spec.true_centers()
    r = np.argmin(((S[:, None] - T[None]) ** 2).sum(2), axis=1)
    assert sorted(r.tolist()) == [0, 1, 2, 3]
    assert np.abs(S - T[r]).max() < 0.1


def test_surrogate_truth_seed_stability():
    spec = sd.MixtureSpec(100, 4, d=2, a=2.0)
    A = mt.surrogate_truth(spec, np.random.default_rng(1), N=20_000, restarts=3)
    B = mt.surrogate_truth(spec, np.random.default_rng(2), N=20_000, restarts=3)
    r = np.argmin(((A[:, None] - B[None]) ** 2).sum(2), axis=1)
    assert np.abs(A - B[r]).max() < 0.05


def test_eval_report_validation():
    with pytest.raises(ValueError):
        mt.EvalReport(-1.0, 0.0, None, 0, 0.0)
    with pytest.raises(ValueError):
        mt.EvalReport(0.0, 1.5, None, 0, 0.0)
    with pytest.raises(ValueError):
        mt.EvalReport(math.nan, 0.0, None, 0, 0.0)


def test_evaluate_wraps_metrics():
    C = np.array([[1.0, 0.0], [-1.0, 0.0]])
    fit = kc.FitResult(np.array([0, 0, 1]), C, [0.0])
    rep = mt.evaluate(fit, C, [1, 1, 0], (C, [0, 1]), wall_time=0.5)
    assert (rep.mse, rep.cer, rep.predictive_cer, rep.active_features) == (0.0, 0.0, 0.0, 1)
