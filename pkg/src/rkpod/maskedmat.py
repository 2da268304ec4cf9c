"""Partially observed matrices and per-feature observed-data statistics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class StructureError(ValueError):
    """Raised on inconsistent shapes or out-of-range indices."""


@dataclass(frozen=True)
class MaskedMatrix:
    """An ``n x p`` matrix together with its observation mask.

    Entries where ``mask`` is False are stored as 0, so every consumer sees
    the projected matrix regardless of what was there before projection.
    Build instances with :func:`project`.
    """

    values: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        if self.values.shape != self.mask.shape or self.values.ndim != 2:
            raise StructureError(
                f"values {self.values.shape} and mask {self.mask.shape} must be equal 2-d shapes"
            )
        if self.values.shape[0] < 1 or self.values.shape[1] < 1:
            raise StructureError("need n >= 1 and p >= 1")

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    def rows(self, idx) -> "MaskedMatrix":
        """Row subset (used by data splitting)."""
        return MaskedMatrix(self.values[idx], self.mask[idx])

    def complete_rows(self) -> np.ndarray:
        return np.flatnonzero(self.mask.all(axis=1))

    def observed_fraction(self) -> float:
        return float(self.mask.mean())

    def __eq__(self, other):
        if not isinstance(other, MaskedMatrix):
            return NotImplemented
        return np.array_equal(self.values, other.values) and np.array_equal(
            self.mask, other.mask
        )

    __hash__ = None


def project(values, mask) -> MaskedMatrix:
    """Zero out unobserved entries and freeze the result."""
    values = np.asarray(values, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    if values.shape != mask.shape:
        raise StructureError(f"shape mismatch: values {values.shape}, mask {mask.shape}")
    if values.ndim != 2:
        raise StructureError("expected 2-d arrays")
    out = np.where(mask, values, 0.0)
    out.setflags(write=False)
    mask = mask.copy()
    mask.setflags(write=False)
    return MaskedMatrix(out, mask)


def from_nan(values) -> MaskedMatrix:
    """Treat NaN entries as missing."""
    values = np.asarray(values, dtype=float)
    return project(np.nan_to_num(values, nan=0.0), ~np.isnan(values))


def check_membership(u, k: int, n: int | None = None) -> np.ndarray:
    u = np.asarray(u)
    if u.ndim != 1 or (n is not None and u.shape[0] != n):
        raise StructureError(f"membership must be a length-{n} vector")
    if u.size and (u.min() < 0 or u.max() >= k):
        raise StructureError(f"cluster index out of range [0, {k})")
    return u.astype(np.intp, copy=False)


def impute_with_model(m: MaskedMatrix, u, centers) -> np.ndarray:
    """Fill each missing entry with its row's assigned center coordinate."""
    centers = np.asarray(centers, dtype=float)
    if centers.ndim != 2 or centers.shape[1] != m.p:
        raise StructureError(f"centers must be k x {m.p}")
    u = check_membership(u, centers.shape[0], m.n)
    return np.where(m.mask, m.values, centers[u])


@dataclass
class ColumnStats:
    """Observed-data summaries of one feature under a fixed partition.

    ``sigma_bar_sq`` is the raw (uncentered) second moment of the observed
    entries. ``wcss`` and ``q_min`` are normalized by the full ``n``.
    """

    j: int
    q_hat: float
    sigma_bar_sq: float
    cluster_means: np.ndarray
    cluster_obs: np.ndarray
    wcss: float
    q_min: float
    flags: list[str] = field(default_factory=list)


def optimal_1d_kmeans(x, k: int) -> float:
    """Exact minimum within-cluster sum of squares of 1-d data into <= k groups.

    Optimal 1-d clusters are contiguous after sorting, so a dynamic program
    over split points is exact. Cost is O(k n^2) with the inner minimum
    vectorized.
    """
    x = np.sort(np.asarray(x, dtype=float).ravel())
    n = x.size
    if n == 0 or k >= n:
        return 0.0
    # prefix sums for O(1) segment costs; shift by the mean for stability
    xs = x - x.mean()
    s1 = np.concatenate(([0.0], np.cumsum(xs)))
    s2 = np.concatenate(([0.0], np.cumsum(xs * xs)))

    def seg_cost(starts, end):
        cnt = end - starts
        tot = s1[end] - s1[starts]
        return np.maximum(s2[end] - s2[starts] - tot * tot / cnt, 0.0)

    # best[i] = optimal cost of the first i points using the current number of groups
    ends = np.arange(1, n + 1)
    best = np.maximum(s2[ends] - s1[ends] ** 2 / ends, 0.0)
    best = np.concatenate(([0.0], best))
    for groups in range(2, k + 1):
        nxt = best.copy()
        for i in range(groups, n + 1):
            starts = np.arange(groups - 1, i)
            cand = best[starts] + seg_cost(starts, i)
            nxt[i] = min(cand.min(), best[i])
        best = nxt
    return float(best[n])


def column_stats(m: MaskedMatrix, u, k: int, j: int) -> ColumnStats:
    if not 0 <= j < m.p:
        raise StructureError(f"feature index {j} out of range")
    u = check_membership(u, k, m.n)
    obs = m.mask[:, j]
    x = m.values[:, j]
    n = m.n
    n_obs = int(obs.sum())
    flags: list[str] = []
    if n_obs == 0:
        flags.append("column_fully_missing")
        return ColumnStats(j, 0.0, 0.0, np.zeros(k), np.zeros(k, dtype=int), 0.0, 0.0, flags)

    cluster_obs = np.bincount(u[obs], minlength=k)
    sums = np.bincount(u[obs], weights=x[obs], minlength=k)
    means = np.zeros(k)
    nz = cluster_obs > 0
    means[nz] = sums[nz] / cluster_obs[nz]
    if not nz.all():
        flags.append("empty_cluster_column:" + ",".join(map(str, np.flatnonzero(~nz))))

    resid = x[obs] - means[u[obs]]
    wcss = float(resid @ resid) / n
    sigma_bar_sq = float(x[obs] @ x[obs]) / n_obs
    q_min = optimal_1d_kmeans(x[obs], k) / n
    return ColumnStats(j, n_obs / n, sigma_bar_sq, means, cluster_obs, wcss, q_min, flags)


def q_function(m: MaskedMatrix, j: int, mu_col) -> float:
    """Evaluate the masked 1-d k-means objective of column ``j`` at ``mu_col``."""
    obs = m.mask[:, j]
    x = m.values[obs, j]
    mu_col = np.asarray(mu_col, dtype=float)
    if x.size == 0:
        return 0.0
    d = (x[:, None] - mu_col[None, :]) ** 2
    return float(d.min(axis=1).sum()) / m.n
