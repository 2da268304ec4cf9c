"""Choosing the penalty level by clustering instability or BIC.

Grid values are interpreted per sample by default: a fit on ``n`` rows uses
the raw penalty ``n * lambda``. The masked loss is an unnormalized sum, so
this keeps one grid meaningful across sample sizes and across the smaller
training splits used by instability.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import kmeans_core as kc
from . import methods
from .initialization import restart_rng
from .maskedmat import MaskedMatrix, StructureError
from .metrics import cer

DEFAULT_SPLITS = 30

# stream tags (first key element)
SPLIT_TAG, ARM_KPOD_TAG, ARM_FIT_TAG, FULL_FIT_TAG = 0, 1, 2, 3

ClusterFn = Callable[[MaskedMatrix, MaskedMatrix, np.random.Generator], np.ndarray]


def default_grid(size: int = 20, lo: float = -3.0, hi: float = 1.0) -> np.ndarray:
    s = np.arange(size)
    return 10.0 ** (lo + (hi - lo) * s / (size - 1))


def raw_lambda(lam: float, n: int, scale: str) -> float:
    if scale == "per_sample":
        return float(lam) * n
    if scale == "raw":
        return float(lam)
    raise ValueError(f"unknown lambda scale {scale!r}")


def bic(m: MaskedMatrix, fit: kc.FitResult) -> float:
    """Masked loss plus log(n) * k * (number of active features)."""
    C = np.asarray(fit.centers)
    if C.ndim != 2 or C.shape[1] != m.p or np.shape(fit.membership) != (m.n,):
        raise StructureError("fit does not match the data dimensions")
    k = C.shape[0]
    d = kc.active_features(C).size
    return kc.kpod_loss(m, fit.membership, C) + math.log(m.n) * k * d


def clustering_distance(pred1, pred2) -> float:
    return cer(pred1, pred2)


def split_rows(n: int, rng: np.random.Generator, scheme: str = "tripartite"):
    """Two training index sets and a validation index set.

    ``tripartite`` draws disjoint sets: two of size floor(n/3) and the rest
    for validation. ``bootstrap`` draws both training sets of size n with
    replacement and validates on all rows.
    """
    if scheme == "tripartite":
        size = n // 3
        if size < 1 or n - 2 * size < 1:
            raise ValueError(f"n={n} too small for a three-way split")
        perm = rng.permutation(n)
        return perm[:size], perm[size : 2 * size], np.sort(perm[2 * size :])
    if scheme == "bootstrap":
        if n < 2:
            raise ValueError("bootstrap needs n >= 2")
        return rng.integers(n, size=n), rng.integers(n, size=n), np.arange(n)
    raise ValueError(f"unknown split scheme {scheme!r}")


@dataclass(frozen=True)
class InstabilitySetup:
    """Everything a worker needs to score one repetition on all penalty levels."""

    method: str
    opts: methods.FitOptions
    lambdas: tuple
    scale: str = "per_sample"
    scheme: str = "tripartite"
    seed: int = 0
    lambda_offset: int = 0
    cluster_fn: Optional[ClusterFn] = None


def _repetition(m: MaskedMatrix, setup: InstabilitySetup, rep: int) -> list[float]:
    idx1, idx2, val = split_rows(m.n, restart_rng(setup.seed, SPLIT_TAG, rep, 0, 0), setup.scheme)
    validation = m.rows(val)
    arms = (m.rows(idx1), m.rows(idx2))
    kpods = [None, None]
    if setup.cluster_fn is None and methods.needs_kpod(setup.method, setup.opts):
        kpods = [
            methods.fit_kpod(arm, setup.opts, setup.seed, (ARM_KPOD_TAG, rep, a, 0))
            for a, arm in enumerate(arms)
        ]
    out = []
    for i, lam in enumerate(setup.lambdas):
        li = setup.lambda_offset + i
        preds = []
        for a, arm in enumerate(arms):
            if setup.cluster_fn is not None:
                rng = restart_rng(setup.seed, ARM_FIT_TAG, li, rep, a)
                preds.append(np.asarray(setup.cluster_fn(arm, validation, rng)))
                continue
            fit = methods.fit_method(
                setup.method,
                arm,
                setup.opts,
                setup.seed,
                raw_lambda(lam, arm.n, setup.scale),
                key=(ARM_FIT_TAG, li, rep, a),
                kpod=kpods[a],
            )
            if fit.active_features.size == 0:
                # all centers at the origin: every point ties into one cluster
                break
            preds.append(methods.predict(validation, fit.centers))
        out.append(clustering_distance(*preds) if len(preds) == 2 else math.nan)
    return out


def _repetition_star(args):
    return _repetition(*args)


def instability_curve(m: MaskedMatrix, setup: InstabilitySetup, B: int = DEFAULT_SPLITS, workers: int = 1) -> np.ndarray:
    """Mean disagreement over ``B`` repetitions for every lambda in ``setup``.

    A lambda at which some training fit has no active feature gets NaN: a
    collapsed fit predicts a single cluster and would look perfectly
    stable. Splits depend only on ``(seed, repetition)`` so all penalty levels are
    compared on the same data. Results do not depend on ``workers``.
    """
    if B < 1:
        raise ValueError("B must be >= 1")
    if setup.scheme == "tripartite" and m.n < 6:
        raise ValueError("instability needs n >= 6")
    tasks = [(m, setup, rep) for rep in range(B)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            rows = list(ex.map(_repetition_star, tasks))
    else:
        rows = [_repetition(*t) for t in tasks]
    return np.asarray(rows).mean(axis=0)


def instability(
    m: MaskedMatrix,
    k: int,
    method: str = "rkpod-gl",
    lam: float = 0.0,
    B: int = DEFAULT_SPLITS,
    split: str = "tripartite",
    seed: int = 0,
    opts: methods.FitOptions | None = None,
    scale: str = "per_sample",
    cluster_fn: ClusterFn | None = None,
    lambda_index: int = 0,
    workers: int = 1,
) -> float:
    """Clustering instability at one penalty level.

    ``cluster_fn(train, validation, rng)`` replaces the built-in fit and
    must return validation labels.
    """
    opts = opts or methods.FitOptions(k=k)
    if opts.k != k:
        raise ValueError("opts.k disagrees with k")
    setup = InstabilitySetup(method, opts, (lam,), scale, split, seed, lambda_index, cluster_fn)
    return float(instability_curve(m, setup, B, workers)[0])


@dataclass
class TuningResult:
    grid: np.ndarray
    criterion_values: np.ndarray
    chosen_lambda: float
    criterion: str
    chosen_index: int
    scale: str = "per_sample"
    per_lambda_fits: list = field(default_factory=list)
    chosen_fit: Optional[kc.FitResult] = None

    def rows(self):
        for i, (lam, val) in enumerate(zip(self.grid, self.criterion_values)):
            d = self.per_lambda_fits[i]["active_features"] if self.per_lambda_fits else ""
            yield {"lambda": float(lam), "criterion_value": float(val), "active_features": d}

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, ["lambda", "criterion_value", "active_features"], lineterminator="\n")
            w.writeheader()
            for row in self.rows():
                w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})


def argmin_smallest(values) -> int:
    """Index of the minimum finite value; ties resolve to the first index."""
    v = np.asarray(values, dtype=float)
    finite = np.isfinite(v)
    if not finite.any():
        raise ValueError("no finite criterion value on the grid")
    return int(np.argmin(np.where(finite, v, np.inf)))


def select_lambda(
    m: MaskedMatrix,
    method: str = "rkpod-gl",
    grid=None,
    criterion: str = "instability",
    opts: methods.FitOptions | None = None,
    seed: int = 0,
    B: int = DEFAULT_SPLITS,
    split: str = "tripartite",
    scale: str = "per_sample",
    arm_opts: methods.FitOptions | None = None,
    workers: int = 1,
    fit_fn: Callable[[float], kc.FitResult] | None = None,
    kpod: kc.FitResult | None = None,
) -> TuningResult:
    """Evaluate ``criterion`` over ``grid`` and return the minimizing lambda.

    Full-data fits at every lambda provide BIC values and active-feature
    counts. ``arm_opts`` sets the (usually cheaper) restart budget of the
    instability training fits; it defaults to ``opts``. ``fit_fn(raw_lam)``
    overrides the full-data fit. ``kpod`` is a k-POD fit of ``m`` to reuse
    for weights and sparse starts.
    """
    opts = opts or methods.FitOptions()
    grid = default_grid() if grid is None else np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ValueError("grid must be a nonempty 1-d sequence")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly ascending")
    if criterion not in ("instability", "bic"):
        raise ValueError(f"unknown criterion {criterion!r}")

    if fit_fn is None:
        if kpod is None and methods.needs_kpod(method, opts):
            kpod = methods.fit_kpod(m, opts, seed, (FULL_FIT_TAG, 0, 0, 0))

        def fit_fn(raw):
            return methods.fit_method(method, m, opts, seed, raw, (FULL_FIT_TAG, 0, 0, 0), kpod)

    fits = [fit_fn(raw_lambda(g, m.n, scale)) for g in grid]
    summaries = [
        {
            "lambda": float(g),
            "raw_lambda": raw_lambda(g, m.n, scale),
            "active_features": int(f.active_features.size),
            "loss": f.loss,
            "bic": bic(m, f),
        }
        for g, f in zip(grid, fits)
    ]
    if criterion == "bic":
        values = np.array([s["bic"] for s in summaries])
    else:
        setup = InstabilitySetup(method, arm_opts or opts, tuple(grid), scale, split, seed)
        values = instability_curve(m, setup, B, workers)
        values[[s["active_features"] == 0 for s in summaries]] = math.nan
    i = argmin_smallest(values)
    return TuningResult(grid, values, float(grid[i]), criterion, i, scale, summaries, fits[i])
