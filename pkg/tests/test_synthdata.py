import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rkpod import synthdata as sd


def test_presets():
    lo = sd.low_dim_spec()
    assert (lo.n, lo.p, lo.d, lo.a) == (3000, 10, 2, 2.0)
    assert lo.sigma_diag == (1.0, 1.0) + (4.0,) * 8
    hi = sd.high_dim_spec()
    assert (hi.p, hi.d, hi.a) == (100, 10, 0.8)
    assert hi.sigma_diag == (1.0,) * 10 + (2.0,) * 90
    C = hi.true_centers()
    assert np.array_equal(np.abs(C[:, :10]), np.full((4, 10), 0.8))
    assert not C[:, 10:].any()
    assert {tuple(np.sign(r[[0, 5]])) for r in C} == {(1, 1), (1, -1), (-1, 1), (-1, -1)}


def test_spec_validation():
    with pytest.raises(ValueError):
        sd.MixtureSpec(10, 4, d=3)
    with pytest.raises(ValueError):
        sd.MixtureSpec(10, 4, d=6)
    with pytest.raises(ValueError):
        sd.MixtureSpec(10, 2, k=3)


def test_large_sample_cluster_means():
    spec = sd.low_dim_spec(100_000)
    X, lab, C = sd.gen_mixture(spec, np.random.default_rng(0))
    for l in range(4):
        assert np.abs(X[lab == l].mean(axis=0) - C[l]).max() < 0.05


def test_label_frequencies():
    _, lab, _ = sd.gen_mixture(sd.low_dim_spec(10_000), np.random.default_rng(1))
    freq = np.bincount(lab, minlength=4) / lab.size
    sigma = np.sqrt(0.25 * 0.75 / lab.size)
    assert np.all(np.abs(freq - 0.25) < 3 * sigma)


def test_mcar_examples():
    X = np.random.default_rng(2).normal(size=(1000, 1000))
    rng = np.random.default_rng(3)
    assert sd.apply_mcar(X[:5, :5], 0.0, rng).mask.all()
    assert not sd.apply_mcar(X[:5, :5], 1.0, rng).mask.any()
    assert abs(sd.apply_mcar(X, 0.3, rng).observed_fraction() - 0.7) < 0.01


def test_mar_midpoint_and_first_column():
    X = np.array([[3.0, 1.0, 2.0], [10.0, 0.0, 0.0]])
    probs = sd.mar_probs(X, 1.8, 3.0)
    assert probs[0, 1] == probs[0, 2] == 0.5
    assert np.all(probs[:, 0] == 0)
    m = sd.apply_mar(np.random.default_rng(0).normal(size=(200, 4)) + 3, 5.0, 0.0, np.random.default_rng(1))
    assert m.mask[:, 0].all()


def test_mnar1_midpoint_and_limit():
    assert sd.mnar1_probs([[3.0]], 1.5, 3.0)[0, 0] == 0.5
    X = np.array([[0.0, 6.0], [5.5, 1.0]])
    m = sd.apply_mnar1(X, 1e3, 3.0, np.random.default_rng(0))
    assert np.array_equal(m.mask, X <= 3.0)


def test_mnar2_examples():
    col = np.array([[5.0], [1.0], [3.0], [2.0]])
    assert sd.apply_mnar2(col, 0.0).mask.all()
    assert sd.apply_mnar2(col, 0.5).mask.ravel().tolist() == [True, False, True, False]
    ties = np.array([[1.0], [1.0], [1.0], [2.0]])
    assert sd.apply_mnar2(ties, 0.5).mask.ravel().tolist() == [False, False, True, True]


@given(st.integers(0, 10**6), st.floats(0.0, 0.95))
def test_mnar2_exact_count(seed, q):
    X = np.random.default_rng(seed).normal(size=(37, 3))
    m = sd.apply_mnar2(X, q)
    assert np.all((~m.mask).sum(axis=0) == int(np.floor(q * 37)))


@pytest.fixture(scope="module")
def p10_values():
    X, _, _ = sd.gen_mixture(sd.low_dim_spec(3000), np.random.default_rng(4))
    return X


def test_reference_logistic_rows_hit_ten_percent(p10_values):
    (psi, mphi) = sd.LOGISTIC_TABLE[("p10", 0.1)]
    assert sd.expected_missing(p10_values, "mar", *psi) == pytest.approx(0.1, abs=0.02)
    assert sd.expected_missing(p10_values, "mnar1", *mphi) == pytest.approx(0.1, abs=0.02)


def test_calibrate_examples(p10_values):
    phi = sd.calibrate_logistic(p10_values, "mnar1", 3.0, 0.1)
    assert abs(phi - 1.5) <= 0.3
    target = sd.expected_missing(p10_values, "mar", 1.0, 3.0)
    assert sd.calibrate_logistic(p10_values, "mar", 3.0, target) == pytest.approx(1.0, abs=1e-6)
    with pytest.raises(ValueError):
        sd.calibrate_logistic(p10_values, "mar", 3.0, 0.95)


@given(st.floats(0.1, 0.45))  # below ~7% the slope bracket cannot reach it
def test_calibrate_hits_target(target):
    X, _, _ = sd.gen_mixture(sd.low_dim_spec(500), np.random.default_rng(5))
    phi = sd.calibrate_logistic(X, "mnar1", 3.0, target)
    assert abs(sd.expected_missing(X, "mnar1", phi, 3.0) - target) <= 1e-4


def test_generators_deterministic():
    spec = sd.low_dim_spec(50)
    a = sd.gen_mixture(spec, np.random.default_rng(9))
    b = sd.gen_mixture(spec, np.random.default_rng(9))
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    for mech in sd.MECHANISMS:
        m1 = sd.apply_missingness(a[0], mech, 0.2, np.random.default_rng(1))
        m2 = sd.apply_missingness(a[0], mech, 0.2, np.random.default_rng(1))
        assert np.array_equal(m1.mask, m2.mask)


@given(st.integers(0, 10**6))
def test_mar_mask_ignores_other_columns(seed):
    X = np.random.default_rng(seed).normal(size=(40, 5))
    perm = np.random.default_rng(seed + 1).permutation(4) + 1
    Y = X.copy()
    Y[:, 1:] = X[:, perm]
    a = sd.apply_mar(X, 1.0, 0.0, np.random.default_rng(seed))
    b = sd.apply_mar(Y, 1.0, 0.0, np.random.default_rng(seed))
    assert np.array_equal(a.mask, b.mask)
