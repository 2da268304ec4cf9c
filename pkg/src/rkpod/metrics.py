"""Center error, pairwise partition disagreement and their evaluation wrapper."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import kmeans_core as kc
from .synthdata import MixtureSpec, gen_mixture


def mse_centers(est, truth, matching: bool = False) -> float:
    """Sum over estimated centers of the squared distance to the closest true center.

    With ``matching=True`` each estimated center is paired with a distinct
    true center by optimal assignment instead (needs equal row counts).
    """
    E = np.asarray(est, dtype=float)
    T = np.asarray(truth, dtype=float)
    if E.ndim != 2 or T.ndim != 2 or E.shape[1] != T.shape[1]:
        raise ValueError("center matrices must be 2-d with the same number of columns")
    d = ((E[:, None, :] - T[None, :, :]) ** 2).sum(axis=2)
    if not matching:
        return float(d.min(axis=1).sum())
    if E.shape[0] != T.shape[0]:
        raise ValueError("matching needs equal numbers of centers")
    r, c = linear_sum_assignment(d)
    return float(d[r, c].sum())


def _labels(p):
    p = np.asarray(p).ravel()
    return np.unique(p, return_inverse=True)[1].ravel()


def _pairs(counts) -> int:
    return int(sum(int(c) * (int(c) - 1) // 2 for c in np.asarray(counts).ravel()))


def cer(p1, p2) -> float:
    """Fraction of unordered pairs co-assigned by exactly one of the two partitions.

    Computed from the contingency table in integer arithmetic.
    """
    a, b = _labels(p1), _labels(p2)
    n = a.size
    if b.size != n:
        raise ValueError("partitions must have equal length")
    if n < 2:
        raise ValueError("need at least two points")
    table = np.zeros((a.max() + 1, b.max() + 1), dtype=np.int64)
    np.add.at(table, (a, b), 1)
    both = _pairs(table)
    first = _pairs(table.sum(axis=1))
    second = _pairs(table.sum(axis=0))
    return (first + second - 2 * both) / (n * (n - 1) // 2)


def cer_bruteforce(p1, p2) -> float:
    """O(n^2) pair enumeration; reference implementation for small n."""
    a, b = np.asarray(p1).ravel(), np.asarray(p2).ravel()
    n = a.size
    if b.size != n:
        raise ValueError("partitions must have equal length")
    if n < 2:
        raise ValueError("need at least two points")
    bad = 0
    for i in range(n):
        for j in range(i + 1, n):
            bad += (a[i] == a[j]) != (b[i] == b[j])
    return bad / math.comb(n, 2)


def predictive_cer(est, values, labels) -> float:
    """CER of nearest-center labels on a complete validation sample."""
    values = np.asarray(values, dtype=float)
    return cer(kc.assign(values, np.asarray(est, dtype=float)), labels)


def surrogate_truth(
    spec: MixtureSpec,
    rng: np.random.Generator,
    N: int = 100_000,
    restarts: int = 10,
    max_iter: int = 300,
) -> np.ndarray:
    """Best-of-``restarts`` k-means++/Lloyd centers on a fresh complete sample of size N."""
    X, _, _ = gen_mixture(spec.with_n(N), rng)
    best = None
    for _ in range(restarts):
        res = kc.lloyd(X, kc.kmeanspp_seed(X, spec.k, rng), max_iter=max_iter, tol=0.0)
        if best is None or res.loss < best.loss:
            best = res
    return best.centers


@dataclass
class EvalReport:
    mse: float
    cer: float
    predictive_cer: Optional[float]
    active_features: int
    wall_time: float

    def __post_init__(self):
        vals = [self.mse, self.cer, self.wall_time]
        if self.predictive_cer is not None:
            vals.append(self.predictive_cer)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("report fields must be finite")
        if self.mse < 0 or not 0 <= self.cer <= 1:
            raise ValueError("mse must be >= 0 and cer in [0, 1]")
        if self.predictive_cer is not None and not 0 <= self.predictive_cer <= 1:
            raise ValueError("predictive_cer must be in [0, 1]")


def evaluate(fit: kc.FitResult, truth, labels, validation=None, wall_time: float = 0.0, matching=False) -> EvalReport:
    """Score a fit against true centers and labels; ``validation`` is ``(values, labels)``."""
    pc = None
    if validation is not None:
        pc = predictive_cer(fit.centers, validation[0], validation[1])
    return EvalReport(
        mse_centers(fit.centers, truth, matching),
        cer(fit.membership, labels),
        pc,
        int(fit.active_features.size),
        float(wall_time),
    )
