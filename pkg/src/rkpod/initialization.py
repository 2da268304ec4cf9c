"""Starting points for k-POD and regularized k-POD, plus multi-restart fitting."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import kmeans_core as kc
from .maskedmat import MaskedMatrix

SPARSE_FRACTIONS = (0.01, 0.02, 0.05, 0.10, 0.15, 0.20, 0.30, 0.40, 0.50, 1.0)
SPARSE_FRACTIONS_SMALL_P = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0)
DEFAULT_RESTARTS = 100


class InitKind(str, enum.Enum):
    COMP = "comp"
    IMPT = "impt"
    SPARSE = "sparse"


@dataclass(frozen=True)
class InitStrategy:
    kind: InitKind = InitKind.IMPT
    restarts: int = DEFAULT_RESTARTS
    sparse_fractions: tuple = SPARSE_FRACTIONS

    def __post_init__(self):
        object.__setattr__(self, "kind", InitKind(self.kind))
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        fr = tuple(float(f) for f in self.sparse_fractions)
        if any(not 0 < f <= 1 for f in fr) or list(fr) != sorted(fr):
            raise ValueError("sparse fractions must be ascending values in (0, 1]")
        object.__setattr__(self, "sparse_fractions", fr)


def observed_assign(m: MaskedMatrix, centers) -> np.ndarray:
    """Nearest center using only each row's observed coordinates."""
    return kc.assign(m.values, np.asarray(centers, float), m.mask)


def init_comp(m: MaskedMatrix, k: int, rng: np.random.Generator):
    """k-means++ on the complete rows, then observed-feature assignment of all rows."""
    rows = m.complete_rows()
    if rows.size < k:
        raise kc.InitializationError(
            f"only {rows.size} complete rows for k={k}; use the impt strategy"
        )
    centers = kc.kmeanspp_seed(m.values[rows], k, rng)
    return observed_assign(m, centers), centers


def column_mean_impute(m: MaskedMatrix) -> tuple[np.ndarray, np.ndarray]:
    """Fill missing entries with observed column means (0 for empty columns).

    Returns the completed matrix and the indices of fully missing columns.
    """
    counts = m.mask.sum(axis=0)
    means = np.divide(
        m.values.sum(axis=0), counts, out=np.zeros(m.p), where=counts > 0
    )
    return np.where(m.mask, m.values, means[None, :]), np.flatnonzero(counts == 0)


def _distinct_rows(C, scale, rng):
    C = C.copy()
    for _ in range(100):
        if np.unique(C, axis=0).shape[0] == C.shape[0]:
            return C
        C = C + rng.normal(size=C.shape) * scale[None, :]
    raise kc.InitializationError("could not make initial centers distinct")


def init_impt(m: MaskedMatrix, k: int, rng: np.random.Generator):
    """Column-mean pre-imputation, k sampled rows as centers, full-distance assignment."""
    X, _ = column_mean_impute(m)
    if m.n < k:
        raise kc.InitializationError(f"need at least k={k} rows, got {m.n}")
    idx = rng.choice(m.n, size=k, replace=False)
    centers = X[idx]
    if np.unique(centers, axis=0).shape[0] < k:
        sd = X.std(axis=0)
        scale = 1e-6 * np.where(sd > 0, sd, 0.0)
        if not scale.any():
            scale = np.full(m.p, 1e-6)
        centers = _distinct_rows(centers, scale, rng)
    return kc.assign(X, centers), centers


def init_sparse(kpod_centers, fractions: Sequence[float] = SPARSE_FRACTIONS) -> list[np.ndarray]:
    """Keep the ceil(f*p) columns with largest norm for every fraction ``f``."""
    C = np.asarray(kpod_centers, dtype=float)
    p = C.shape[1]
    norms = np.linalg.norm(C, axis=0)
    # stable descending order: equal norms keep feature order
    order = np.argsort(-norms, kind="stable")
    out = []
    for f in fractions:
        if not 0 < f <= 1:
            raise ValueError(f"fraction {f} outside (0, 1]")
        keep = order[: int(np.ceil(f * p - 1e-12))]
        S = np.zeros_like(C)
        S[:, keep] = C[:, keep]
        out.append(S)
    return out


def restart_rng(seed, *key) -> np.random.Generator:
    """Independent stream for ``(seed, *key)``; children never collide."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(int(x) for x in key)))


def random_init(m: MaskedMatrix, k: int, kind: InitKind, rng):
    if InitKind(kind) is InitKind.COMP:
        return init_comp(m, k, rng)
    return init_impt(m, k, rng)


@dataclass
class MultiStart:
    best: kc.FitResult
    losses: list = field(default_factory=list)
    best_index: int = 0


def best_of(
    m: MaskedMatrix,
    k: int,
    fit_fn: Callable[[tuple], kc.FitResult],
    strategy: InitStrategy,
    seed: int,
    kpod_centers=None,
    key: tuple = (),
) -> MultiStart:
    """Run ``fit_fn`` from several starting points and keep the lowest final loss.

    Ties go to the lowest restart index, so the result does not depend on
    the order in which restarts are evaluated. Restart ``r`` draws from the
    stream ``(seed, *key, r)``. ``kpod_centers`` is required for the sparse
    strategy.
    """
    inits = []
    if strategy.kind is InitKind.SPARSE:
        if kpod_centers is None:
            raise ValueError("sparse initialization needs k-POD centers")
        for C in init_sparse(kpod_centers, strategy.sparse_fractions):
            inits.append(lambda C=C: (observed_assign(m, C), C))
    else:
        for r in range(strategy.restarts):
            inits.append(lambda r=r: random_init(m, k, strategy.kind, restart_rng(seed, *key, r)))

    best, best_i, losses = None, -1, []
    for i, make in enumerate(inits):
        res = fit_fn(make())
        res.seed = seed
        losses.append(res.loss)
        if best is None or res.loss < best.loss:
            best, best_i = res, i
    best.diagnostics["restart"] = best_i
    return MultiStart(best, losses, best_i)
