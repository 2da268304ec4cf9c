"""Regularized k-means / k-POD with feature-wise l0 or group-lasso penalties.

The complete-data solver alternates nearest-center assignment with a
penalized center update; the incomplete-data fit wraps it in the
impute-then-cluster majorization loop of :func:`rkpod.kmeans_core.mm_fit`.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

from . import kmeans_core as kc
from .maskedmat import MaskedMatrix, column_stats, StructureError

W_MAX = 1e6
ZERO_ANCHOR_EPS = 1e-10


class Penalty(str, enum.Enum):
    L0 = "l0"
    GROUP_LASSO = "gl"


class GLVariant(str, enum.Enum):
    RIDGE = "ridge"
    QUADRATIC = "quadratic"


@dataclass(frozen=True)
class PenaltySpec:
    kind: Penalty
    lam: float
    weights: np.ndarray | None = None
    gl_variant: GLVariant = GLVariant.RIDGE

    def __post_init__(self):
        object.__setattr__(self, "kind", Penalty(self.kind))
        object.__setattr__(self, "gl_variant", GLVariant(self.gl_variant))
        if not self.lam >= 0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            if w.ndim != 1 or not np.all(w > 0) or np.any(w > W_MAX):
                raise ValueError("weights must be a positive vector capped at W_MAX")
            object.__setattr__(self, "weights", w)

    def with_lambda(self, lam: float) -> "PenaltySpec":
        return replace(self, lam=float(lam))

    def w(self, p: int) -> np.ndarray:
        if self.kind is Penalty.L0:
            return np.ones(p)
        if self.weights is None:
            raise ValueError("group lasso needs per-feature weights")
        if self.weights.shape != (p,):
            raise StructureError(f"expected {p} weights, got {self.weights.shape}")
        return self.weights


def penalty_value(centers, spec: PenaltySpec) -> float:
    norms = np.linalg.norm(np.asarray(centers, dtype=float), axis=0)
    if spec.kind is Penalty.L0:
        return float(np.count_nonzero(norms > 0))
    return float(spec.w(norms.size) @ norms)


def reg_loss(m: MaskedMatrix, u, centers, spec: PenaltySpec) -> float:
    return kc.kpod_loss(m, u, centers) + spec.lam * penalty_value(centers, spec)


def default_weights(
    kpod_centers, scheme: str = "adaptive", w_max: float = W_MAX
) -> np.ndarray:
    """Group-lasso weights from a k-POD fit.

    ``adaptive`` uses the inverse column norms of the k-POD centers (capped
    at ``w_max``); ``uniform`` uses sqrt(k) for every feature.
    """
    C = np.asarray(kpod_centers, dtype=float)
    k, p = C.shape
    if scheme == "uniform":
        return np.full(p, np.sqrt(k))
    if scheme != "adaptive":
        raise ValueError(f"unknown weight scheme {scheme!r}")
    norms = np.linalg.norm(C, axis=0)
    w = np.full(p, w_max)
    big = norms > 1.0 / w_max
    w[big] = 1.0 / norms[big]
    return w


def assign_step(xhat, centers) -> np.ndarray:
    return kc.assign(np.asarray(xhat, float), np.asarray(centers, float))


def center_update_l0(xhat, u, lam: float, k: int | None = None) -> np.ndarray:
    """Truncated cluster means: keep a column only if it pays for its penalty."""
    X = np.asarray(xhat, dtype=float)
    u = np.asarray(u)
    k = int(u.max()) + 1 if k is None else k
    _, _, v = kc.cluster_means(X, u, k)
    if lam == 0:
        return v
    r = X - v[u]
    resid = np.einsum("ij,ij->j", r, r)
    total = np.einsum("ij,ij->j", X, X)
    # strict inequality: ties zero the column
    keep = total > resid + lam
    return np.where(keep[None, :], v, 0.0)


def center_update_gl_ridge(xhat, u, prev, lam: float, w, k: int | None = None) -> np.ndarray:
    """One majorization step for the group-lasso centers (ridge-shrunk means).

    Columns whose anchor norm is below ``ZERO_ANCHOR_EPS`` stay at zero.
    """
    X = np.asarray(xhat, dtype=float)
    prev = np.asarray(prev, dtype=float)
    k = prev.shape[0] if k is None else k
    counts, sums, means = kc.cluster_means(X, np.asarray(u), k)
    if lam == 0:
        return means
    w = np.asarray(w, dtype=float)
    anchor = np.linalg.norm(prev, axis=0)
    live = anchor >= ZERO_ANCHOR_EPS
    out = np.zeros_like(sums)
    ridge = lam * w[live] / (2.0 * anchor[live])
    out[:, live] = sums[:, live] / (counts[:, None] + ridge[None, :])
    return out


def center_update_gl_quadratic(xhat, u, prev, lam: float, w, k: int | None = None) -> np.ndarray:
    """Gradient step on the quadratic majorizer followed by group soft-thresholding."""
    X = np.asarray(xhat, dtype=float)
    prev = np.asarray(prev, dtype=float)
    k = prev.shape[0] if k is None else k
    counts, sums = kc.cluster_sums(X, np.asarray(u), k)
    gamma = 2.0 * counts.max()
    v = prev + (2.0 / gamma) * (sums - counts[:, None] * prev)
    nv = np.linalg.norm(v, axis=0)
    thr = lam * np.asarray(w, dtype=float) / gamma
    factor = np.zeros_like(nv)
    pos = nv > 0
    factor[pos] = np.maximum(1.0 - thr[pos] / nv[pos], 0.0)
    return v * factor[None, :]


def gl_objective(X, u, centers, lam, w) -> float:
    return kc.sse(X, u, centers) + lam * float(w @ np.linalg.norm(centers, axis=0))


def _center_update(spec: PenaltySpec | None, p: int):
    """Bind the spec into an engine-compatible update ``(X, u, prev, k) -> M``."""
    if spec is None:
        return kc.means_update
    lam = spec.lam
    if spec.kind is Penalty.L0:
        return lambda X, u, prev, k: center_update_l0(X, u, lam, k)
    w = spec.w(p)
    if spec.gl_variant is GLVariant.RIDGE:
        def upd(X, u, prev, k):
            return center_update_gl_ridge(X, u, prev, lam, w, k)
        # at lambda=0 the update is exact means, for which repair is monotone
        upd.repair_safe = lam == 0
        return upd

    def upd(X, u, prev, k):
        return center_update_gl_quadratic(X, u, prev, lam, w, k)
    upd.repair_safe = False
    return upd


def regularized_kmeans(
    xhat,
    k: int,
    spec: PenaltySpec,
    init,
    max_iter: int = kc.MAX_INNER,
    tol: float = kc.TOL,
) -> kc.FitResult:
    """Regularized k-means on a complete matrix; trace holds SSE + lambda * J."""
    X = np.asarray(xhat, dtype=float)
    init = np.asarray(init, dtype=float)
    if init.shape != (k, X.shape[1]):
        raise StructureError(f"init centers must be {k} x {X.shape[1]}")
    update = _center_update(spec, X.shape[1])
    return kc.alternate(
        X,
        init,
        update,
        penalty=lambda C: spec.lam * penalty_value(C, spec),
        max_iter=max_iter,
        tol=tol,
    )


def l0_support_polish(m: MaskedMatrix, lam: float):
    """Exact column-wise minimization of the masked l0 objective for fixed ``u``.

    The impute-then-cluster iteration can stall on a column whose support
    decision differs from the one the masked objective prefers (imputed
    entries dilute the keep test). This flips such columns to zero or to the
    observed cluster means, which never increases the masked loss.
    """

    def polish(u, M):
        k = M.shape[0]
        obs = m.mask
        n_obs = np.stack([(obs & (u == l)[:, None]).sum(axis=0) for l in range(k)])
        sums = np.stack([np.where(obs, m.values, 0.0)[u == l].sum(axis=0) for l in range(k)])
        mu_bar = np.divide(sums, n_obs, out=np.zeros_like(sums), where=n_obs > 0)
        gain = (mu_bar * sums).sum(axis=0)
        zero = np.linalg.norm(M, axis=0) == 0
        revive = zero & (gain > lam)
        kill = ~zero & (gain <= lam)
        if not (revive.any() or kill.any()):
            return None
        out = M.copy()
        out[:, revive] = mu_bar[:, revive]
        out[:, kill] = 0.0
        return out

    return polish


def reg_kpod_fit(
    m: MaskedMatrix,
    k: int,
    spec: PenaltySpec,
    init: tuple,
    max_outer: int = kc.MAX_OUTER,
    max_inner: int = kc.MAX_INNER,
    tol: float = kc.TOL,
    polish: bool = True,
    center_tol: float | None = None,
) -> kc.FitResult:
    """Regularized k-POD: impute missing entries from the current model, then
    run regularized k-means on the completed matrix, until the masked
    penalized loss settles.

    With ``polish`` (l0 only) a converged fit additionally gets its column
    support checked against the masked objective; see
    :func:`l0_support_polish`.
    """
    u0, M0 = init
    M0 = np.asarray(M0, dtype=float)
    if M0.shape != (k, m.p):
        raise StructureError(f"init centers must be {k} x {m.p}")
    spec.w(m.p)  # validate weights early
    pol = None
    if polish and spec.kind is Penalty.L0 and spec.lam > 0:
        pol = l0_support_polish(m, spec.lam)
    return kc.mm_fit(
        m,
        u0,
        M0,
        inner=lambda xhat, M: regularized_kmeans(xhat, k, spec, M, max_iter=max_inner, tol=tol),
        loss=lambda u, M: reg_loss(m, u, M, spec),
        max_outer=max_outer,
        tol=tol,
        polish=pol,
        center_tol=center_tol,
    )


def refine(
    m: MaskedMatrix,
    fit: kc.FitResult,
    spec: PenaltySpec,
    center_tol: float = 1e-13,
    max_outer: int = 100_000,
) -> kc.FitResult:
    """Continue a fit until its centers stop moving.

    Needed before checking fixed-point identities, which hold to the
    accuracy of the centers rather than of the loss.
    """
    k = fit.centers.shape[0]
    more = reg_kpod_fit(
        m, k, spec, (fit.membership, fit.centers), max_outer, kc.MAX_INNER, 0.0, center_tol=center_tol
    )
    more.loss_trace = list(fit.loss_trace) + list(more.loss_trace[1:])
    more.outer_iters += fit.outer_iters
    more.inner_iters_total += fit.inner_iters_total
    more.seed = fit.seed
    more.diagnostics = {**fit.diagnostics, **more.diagnostics, "refined": True}
    return more


@dataclass
class FeatureCheck:
    j: int
    is_zero: bool
    threshold_lhs: float
    threshold_rhs: float
    condition_holds: bool
    value_check_maxerr: float
    flags: list = field(default_factory=list)


@dataclass
class Prop21Report:
    """Per-feature sparsity conditions evaluated at a converged fit."""

    records: list

    @property
    def all_hold(self) -> bool:
        return all(r.condition_holds for r in self.records)

    @property
    def max_value_error(self) -> float:
        errs = [r.value_check_maxerr for r in self.records if not r.is_zero]
        return max(errs, default=0.0)


def prop21_check(
    m: MaskedMatrix,
    fit: kc.FitResult,
    spec: PenaltySpec,
    value_tol: float | None = None,
    threshold_tol: float = 1e-9,
) -> Prop21Report:
    """Check the sparsity characterization of the regularized k-POD minimizer.

    Uses the fit's membership as the partition. For l0: zero columns need
    ``q*sigma^2 - WCSS <= lambda/n``, active ones the reverse and centers
    equal to the observed cluster means. For group lasso: an active column
    needs ``lambda*w/(2n) <= sqrt(q*sigma^2 - Qmin)`` and must satisfy the
    shrinkage identity; a zero column is always consistent. Cluster/feature
    cells with no observed entries are flagged and skipped in value checks.
    """
    if value_tol is None:
        value_tol = 1e-9 if spec.kind is Penalty.L0 else 1e-6
    M = np.asarray(fit.centers, dtype=float)
    k, p = M.shape
    n = m.n
    u = np.asarray(fit.membership)
    w = spec.w(p)
    lam = spec.lam
    records = []
    for j in range(p):
        st = column_stats(m, u, k, j)
        col = M[:, j]
        norm = float(np.linalg.norm(col))
        is_zero = norm == 0.0
        ok_cells = st.cluster_obs > 0
        err = 0.0
        if spec.kind is Penalty.L0:
            lhs = st.q_hat * st.sigma_bar_sq - st.wcss
            rhs = lam / n
            if is_zero:
                holds = lhs <= rhs + threshold_tol
            else:
                err = float(np.max(np.abs(col - st.cluster_means)[ok_cells], initial=0.0))
                holds = lhs > rhs - threshold_tol and err <= value_tol
        else:
            lhs = float(np.sqrt(max(st.q_hat * st.sigma_bar_sq - st.q_min, 0.0)))
            rhs = lam * w[j] / (2.0 * n)
            if is_zero:
                holds = True
            else:
                shrink = np.ones(k)
                shrink[ok_cells] = 1.0 / (
                    1.0 + lam * w[j] / (2.0 * norm * st.cluster_obs[ok_cells])
                )
                target = shrink * st.cluster_means
                err = float(np.max(np.abs(col - target)[ok_cells], initial=0.0))
                holds = rhs <= lhs + threshold_tol and err <= value_tol
        records.append(FeatureCheck(j, is_zero, float(lhs), float(rhs), bool(holds), err, st.flags))
    return Prop21Report(records)
