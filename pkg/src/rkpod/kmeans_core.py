"""Lloyd iterations, k-means++ seeding and the unpenalized k-POD loop.

Memberships are integer vectors, centers are ``k x p`` float arrays. The
inner alternating solver in this module is shared with the regularized
variants in :mod:`rkpod.regkpod`; only the center update differs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .maskedmat import MaskedMatrix, StructureError, check_membership

# convergence defaults; the source method gives no tolerances
TOL = 1e-6
MAX_OUTER = 200
MAX_INNER = 100


class InitializationError(ValueError):
    """Seeding cannot proceed on the given data (e.g. too few rows)."""


@dataclass
class FitResult:
    membership: np.ndarray
    centers: np.ndarray
    loss_trace: list
    outer_iters: int = 0
    inner_iters_total: int = 0
    seed: Optional[int] = None
    converged: bool = False
    diagnostics: dict = field(default_factory=dict)

    @property
    def active_features(self) -> np.ndarray:
        return active_features(self.centers)

    @property
    def loss(self) -> float:
        return float(self.loss_trace[-1])


def active_features(centers) -> np.ndarray:
    centers = np.asarray(centers)
    return np.flatnonzero(np.linalg.norm(centers, axis=0) > 0)


def sq_distances(X, centers, mask=None) -> np.ndarray:
    """``n x k`` squared distances; with ``mask`` only observed coordinates count."""
    n, k = X.shape[0], centers.shape[0]
    d = np.empty((n, k))
    for l in range(k):
        diff = X - centers[l]
        if mask is not None:
            diff = np.where(mask, diff, 0.0)
        d[:, l] = np.einsum("ij,ij->i", diff, diff)
    return d


def assign(X, centers, mask=None) -> np.ndarray:
    # argmin returns the first minimum: ties go to the lowest cluster index
    return sq_distances(X, centers, mask).argmin(axis=1)


def cluster_sums(X, u, k):
    counts = np.bincount(u, minlength=k)
    sums = np.zeros((k, X.shape[1]))
    for l in range(k):
        if counts[l]:
            sums[l] = X[u == l].sum(axis=0)
    return counts, sums


def cluster_means(X, u, k):
    counts, sums = cluster_sums(X, u, k)
    means = np.zeros_like(sums)
    nz = counts > 0
    means[nz] = sums[nz] / counts[nz, None]
    return counts, sums, means


def sse(X, u, centers) -> float:
    r = X - centers[u]
    return float(np.einsum("ij,ij->", r, r))


def repair_empty(u, dist, k):
    """Move far-away points into empty clusters as singletons.

    ``dist`` holds the squared distances used for the assignment. Donors are
    taken from clusters with at least two members, largest distance to their
    own center first. Returns a new membership (or ``u`` itself when no
    cluster is empty).
    """
    counts = np.bincount(u, minlength=k)
    if counts.all():
        return u
    u = u.copy()
    own = dist[np.arange(u.size), u]
    for l in np.flatnonzero(counts == 0):
        eligible = counts[u] >= 2
        if not eligible.any():
            break
        cand = np.where(eligible, own, -np.inf)
        i = int(np.argmax(cand))
        counts[u[i]] -= 1
        u[i] = l
        counts[l] = 1
        own[i] = -np.inf
    return u


def means_update(X, u, prev, k):
    """Plain Lloyd center update (cluster means)."""
    _, _, means = cluster_means(X, u, k)
    return means


# An update takes (X, u, prev_centers, k) and returns new centers. Updates
# flagged with ``repair_safe = False`` are monotone only for the raw
# assignment; the engine then guards the empty-cluster repair.
CenterUpdate = Callable[[np.ndarray, np.ndarray, np.ndarray, int], np.ndarray]


def _rel_change(prev: float, cur: float) -> float:
    scale = max(abs(prev), abs(cur))
    if scale == 0.0:
        return 0.0
    return abs(prev - cur) / scale


def alternate(
    X,
    init_centers,
    update: CenterUpdate,
    penalty: Callable[[np.ndarray], float] | None = None,
    max_iter: int = MAX_INNER,
    tol: float = TOL,
) -> FitResult:
    """Alternate nearest-center assignment and ``update`` on a complete matrix.

    The trace starts with the objective at the initial centers (under their
    nearest-center assignment) and gets one entry per center update.
    """
    X = np.asarray(X, dtype=float)
    M = np.array(init_centers, dtype=float)
    k = M.shape[0]
    pen = penalty or (lambda C: 0.0)
    repair_safe = getattr(update, "repair_safe", True)

    dist = sq_distances(X, M)
    u = dist.argmin(axis=1)
    trace = [float(dist[np.arange(u.size), u].sum()) + pen(M)]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        if it > 1:
            dist = sq_distances(X, M)
            u = dist.argmin(axis=1)
        u_rep = repair_empty(u, dist, k)
        M_new = update(X, u_rep, M, k)
        obj = sse(X, u_rep, M_new) + pen(M_new)
        if u_rep is not u and not repair_safe:
            ref = sse(X, u, M) + pen(M)
            if obj > ref:
                u_rep = u
                M_new = update(X, u, M, k)
                obj = sse(X, u, M_new) + pen(M_new)
        u, M = u_rep, M_new
        trace.append(obj)
        if _rel_change(trace[-2], obj) <= tol:
            converged = True
            break
    return FitResult(u, M, trace, outer_iters=it, inner_iters_total=it, converged=converged)


def lloyd(data, init, max_iter: int = MAX_INNER, tol: float = TOL) -> FitResult:
    """Lloyd's algorithm from the given centers; loss is the unnormalized SSE."""
    init = np.asarray(init, dtype=float)
    if init.ndim != 2 or init.shape[1] != np.shape(data)[1]:
        raise StructureError("init centers must be k x p")
    return alternate(data, init, means_update, max_iter=max_iter, tol=tol)


def kmeanspp_seed(data, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ (D^2 sampling) seeding.

    When fewer than ``k`` distinct rows exist the data are jittered with
    Gaussian noise of scale ``1e-6`` times the data scale first.
    """
    X = np.asarray(data, dtype=float)
    n = X.shape[0]
    if n < k:
        raise InitializationError(
            f"k-means++ needs at least k={k} rows, got {n}; use the impt (imputation-based) init"
        )
    if np.unique(X, axis=0).shape[0] < k:
        scale = float(np.std(X)) or 1.0
        X = X + rng.normal(scale=1e-6 * scale, size=X.shape)
    idx = [int(rng.integers(n))]
    d2 = ((X - X[idx[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            raise InitializationError("all remaining rows coincide with chosen centers")
        i = int(rng.choice(n, p=d2 / total))
        idx.append(i)
        d2 = np.minimum(d2, ((X - X[i]) ** 2).sum(axis=1))
    return X[idx].copy()


def kpod_loss(m: MaskedMatrix, u, centers) -> float:
    """Squared residual over observed entries only."""
    centers = np.asarray(centers, dtype=float)
    u = check_membership(u, centers.shape[0], m.n)
    r = np.where(m.mask, m.values - centers[u], 0.0)
    return float(np.einsum("ij,ij->", r, r))


def mm_fit(
    m: MaskedMatrix,
    init_u,
    init_centers,
    inner: Callable[[np.ndarray, np.ndarray], FitResult],
    loss: Callable[[np.ndarray, np.ndarray], float],
    max_outer: int = MAX_OUTER,
    tol: float = TOL,
    polish: Callable[[np.ndarray, np.ndarray], tuple] | None = None,
    max_polish: int = 20,
    center_tol: float | None = None,
) -> FitResult:
    """Impute-then-cluster majorization-minimization loop.

    ``inner(xhat, centers)`` solves the complete-data problem started from
    ``centers``; ``loss(u, centers)`` evaluates the masked objective recorded
    in the trace. ``polish(u, centers)`` may return improved centers (or
    None) once the loop has settled; the loop then resumes.

    The loss is flat at a fixed point, so its relative change bounds only
    the squared center error. ``center_tol`` additionally requires the
    largest absolute center change of an outer step to fall below it.
    """
    M = np.array(init_centers, dtype=float)
    u = check_membership(init_u, M.shape[0], m.n).copy()
    trace = [loss(u, M)]
    inner_total = 0
    outer = 0
    converged = False
    polishes = 0
    while True:
        converged = False
        while outer < max_outer:
            outer += 1
            xhat = np.where(m.mask, m.values, M[u])
            res = inner(xhat, M)
            inner_total += res.inner_iters_total
            step = float(np.max(np.abs(res.centers - M), initial=0.0))
            u, M = res.membership, res.centers
            trace.append(loss(u, M))
            if _rel_change(trace[-2], trace[-1]) <= tol and (center_tol is None or step <= center_tol):
                converged = True
                break
        if polish is None or polishes >= max_polish:
            break
        new = polish(u, M)
        if new is None:
            break
        polishes += 1
        M = new
        trace.append(loss(u, M))
        if outer >= max_outer:
            converged = False
            break
    return FitResult(
        u,
        M,
        trace,
        outer_iters=outer,
        inner_iters_total=inner_total,
        converged=converged,
        diagnostics={"polish_rounds": polishes},
    )


def kpod_fit(
    m: MaskedMatrix,
    k: int,
    init: tuple,
    max_outer: int = MAX_OUTER,
    max_inner: int = MAX_INNER,
    tol: float = TOL,
) -> FitResult:
    """k-POD: alternate model-based imputation and Lloyd on the completed matrix."""
    u0, M0 = init
    M0 = np.asarray(M0, dtype=float)
    if M0.shape != (k, m.p):
        raise StructureError(f"init centers must be {k} x {m.p}")
    return mm_fit(
        m,
        u0,
        M0,
        inner=lambda xhat, M: lloyd(xhat, M, max_iter=max_inner, tol=tol),
        loss=lambda u, M: kpod_loss(m, u, M),
        max_outer=max_outer,
        tol=tol,
    )


def loss_decomposition(m: MaskedMatrix, centers) -> list[tuple[tuple, float, float]]:
    """Split the normalized masked loss into per-missingness-pattern k-means losses.

    Returns ``(pattern, n_pattern / n, component_loss)`` for each pattern
    present in the data, where the component is the mean k-means loss over
    the observed feature subset of that pattern.
    """
    centers = np.asarray(centers, dtype=float)
    patterns, inverse = np.unique(m.mask, axis=0, return_inverse=True)
    inverse = np.asarray(inverse).ravel()
    out = []
    for g, xi in enumerate(patterns):
        rows = np.flatnonzero(inverse == g)
        cols = np.flatnonzero(xi)
        Xs = m.values[np.ix_(rows, cols)]
        Cs = centers[:, cols]
        d = ((Xs[:, None, :] - Cs[None, :, :]) ** 2).sum(axis=2)
        comp = float(d.min(axis=1).mean())
        out.append((tuple(int(b) for b in xi), rows.size / m.n, comp))
    return out
