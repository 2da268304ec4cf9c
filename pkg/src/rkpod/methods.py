"""Fitting recipes shared by tuning, the benchmark harness and the CLI.

Every random restart draws from ``restart_rng(seed, *key, r)``. Keys are
4-tuples so streams of different purposes never share a prefix shape; see
the ``*_KEY`` constants and :mod:`rkpod.experiment` for the full layout.
Methods fitted with the same ``(seed, key)`` start from the same points,
which makes ``kmeans``, ``kpod`` and ``rkpod-*`` at lambda 0 agree on
complete data.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import kmeans_core as kc
from . import regkpod as rk
from .initialization import InitKind, InitStrategy, best_of, column_mean_impute
from .maskedmat import MaskedMatrix

METHODS = ("kmeans", "kpod", "rkpod-gl", "rkpod-l0")
FIT_KEY = (3, 0, 0, 0)


@dataclass(frozen=True)
class FitOptions:
    k: int = 4
    init: InitStrategy = field(default_factory=InitStrategy)
    weights: str = "adaptive"
    gl_variant: rk.GLVariant = rk.GLVariant.RIDGE
    max_outer: int = kc.MAX_OUTER
    max_inner: int = kc.MAX_INNER
    tol: float = kc.TOL

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.weights not in ("adaptive", "uniform"):
            raise ValueError(f"unknown weight scheme {self.weights!r}")
        object.__setattr__(self, "gl_variant", rk.GLVariant(self.gl_variant))

    def with_restarts(self, restarts: int) -> "FitOptions":
        return replace(self, init=replace(self.init, restarts=restarts))

    @property
    def random_init(self) -> InitStrategy:
        """The strategy used where sparse starts are meaningless."""
        if self.init.kind is InitKind.SPARSE:
            return replace(self.init, kind=InitKind.IMPT)
        return self.init


def needs_kpod(method: str, opts: FitOptions) -> bool:
    """Whether ``method`` uses a preliminary k-POD fit (weights or sparse starts)."""
    if method == "kpod":
        return True
    if not method.startswith("rkpod"):
        return False
    return (method == "rkpod-gl" and opts.weights == "adaptive") or opts.init.kind is InitKind.SPARSE


def fit_kmeans(m: MaskedMatrix, opts: FitOptions, seed: int, key=FIT_KEY) -> kc.FitResult:
    """Lloyd on the column-mean-imputed matrix (identical to raw k-means on complete data)."""
    X, _ = column_mean_impute(m)

    def run(init):
        res = kc.lloyd(X, init[1], max_iter=opts.max_inner * opts.max_outer, tol=opts.tol)
        res.diagnostics["masked_loss"] = kc.kpod_loss(m, res.membership, res.centers)
        return res

    return best_of(m, opts.k, run, opts.random_init, seed, key=key).best


def fit_kpod(m: MaskedMatrix, opts: FitOptions, seed: int, key=FIT_KEY) -> kc.FitResult:
    def run(init):
        return kc.kpod_fit(m, opts.k, init, opts.max_outer, opts.max_inner, opts.tol)

    return best_of(m, opts.k, run, opts.random_init, seed, key=key).best


def penalty_spec(
    penalty, lam: float, opts: FitOptions, kpod: kc.FitResult | None, p: int
) -> rk.PenaltySpec:
    kind = rk.Penalty(penalty)
    if kind is rk.Penalty.L0:
        return rk.PenaltySpec(kind, lam)
    if opts.weights == "uniform":
        w = np.full(p, np.sqrt(opts.k))
    else:
        w = rk.default_weights(kpod.centers, "adaptive")
    return rk.PenaltySpec(kind, lam, w, opts.gl_variant)


def fit_rkpod(
    m: MaskedMatrix,
    penalty,
    lam: float,
    opts: FitOptions,
    seed: int,
    key=FIT_KEY,
    kpod: kc.FitResult | None = None,
) -> kc.FitResult:
    """Regularized k-POD at raw ``lam``.

    ``kpod`` supplies adaptive weights and sparse starts; it is fitted with
    the same ``(seed, key)`` when missing and needed.
    """
    kind = rk.Penalty(penalty)
    if kpod is None and needs_kpod(f"rkpod-{kind.value}", opts):
        kpod = fit_kpod(m, opts, seed, key)
    spec = penalty_spec(kind, lam, opts, kpod, m.p)

    def run(init):
        return rk.reg_kpod_fit(m, opts.k, spec, init, opts.max_outer, opts.max_inner, opts.tol)

    best = best_of(
        m, opts.k, run, opts.init, seed, kpod_centers=None if kpod is None else kpod.centers, key=key
    ).best
    best.diagnostics["lambda"] = lam
    if spec.weights is not None:
        best.diagnostics["weights"] = spec.weights
    return best


def fit_method(
    method: str,
    m: MaskedMatrix,
    opts: FitOptions,
    seed: int,
    lam: float = 0.0,
    key=FIT_KEY,
    kpod: kc.FitResult | None = None,
) -> kc.FitResult:
    if method == "kmeans":
        return fit_kmeans(m, opts, seed, key)
    if method == "kpod":
        return kpod if kpod is not None else fit_kpod(m, opts, seed, key)
    if method in ("rkpod-gl", "rkpod-l0"):
        penalty = "gl" if method == "rkpod-gl" else "l0"
        return fit_rkpod(m, penalty, lam, opts, seed, key, kpod)
    raise ValueError(f"unknown method {method!r}; expected one of {', '.join(METHODS)}")


def predict(m: MaskedMatrix, centers) -> np.ndarray:
    """Nearest center over each row's observed coordinates."""
    return kc.assign(m.values, np.asarray(centers, float), m.mask)
