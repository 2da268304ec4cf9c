"""Gaussian-mixture benchmarks and missingness injectors (MCAR, MAR, MNAR)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.special import expit

from .maskedmat import MaskedMatrix, project


@dataclass(frozen=True)
class MixtureSpec:
    """Equal-weight Gaussian mixture with a shared diagonal covariance.

    Without explicit ``centers`` the ``k=4`` sign-block design is used: the
    first ``d/2`` relevant features carry ``+-a`` in one sign pattern, the
    next ``d/2`` in the other, and the remaining ``p-d`` features are noise.
    """

    n: int
    p: int
    k: int = 4
    d: int = 2
    a: float = 2.0
    sigma_diag: tuple = ()
    centers: tuple | None = None

    def __post_init__(self):
        if self.d > self.p or self.d % 2:
            raise ValueError("d must be even and <= p")
        sig = tuple(float(s) for s in self.sigma_diag) or (1.0,) * self.p
        if len(sig) != self.p or min(sig) <= 0:
            raise ValueError("sigma_diag must hold p positive variances")
        object.__setattr__(self, "sigma_diag", sig)
        if self.centers is None and self.k != 4:
            raise ValueError("the sign-block design needs k=4; pass centers otherwise")

    def true_centers(self) -> np.ndarray:
        if self.centers is not None:
            C = np.asarray(self.centers, dtype=float)
            if C.shape != (self.k, self.p):
                raise ValueError("centers must be k x p")
            return C
        h = self.d // 2
        signs = np.array([[1, 1], [1, -1], [-1, 1], [-1, -1]], dtype=float)
        C = np.zeros((4, self.p))
        C[:, :h] = self.a * signs[:, :1]
        C[:, h : self.d] = self.a * signs[:, 1:]
        return C

    def with_n(self, n: int) -> "MixtureSpec":
        return MixtureSpec(n, self.p, self.k, self.d, self.a, self.sigma_diag, self.centers)


def low_dim_spec(n: int = 3000) -> MixtureSpec:
    return MixtureSpec(n, 10, 4, 2, 2.0, (1.0, 1.0) + (4.0,) * 8)


def high_dim_spec(n: int = 3000, a: float = 0.8) -> MixtureSpec:
    return MixtureSpec(n, 100, 4, 10, a, (1.0,) * 10 + (2.0,) * 90)


def gen_mixture(spec: MixtureSpec, rng: np.random.Generator):
    """Draw ``(values, labels, true_centers)``."""
    C = spec.true_centers()
    labels = rng.integers(spec.k, size=spec.n)
    noise = rng.standard_normal((spec.n, spec.p)) * np.sqrt(np.asarray(spec.sigma_diag))
    return C[labels] + noise, labels, C


def apply_mcar(values, tau: float, rng: np.random.Generator) -> MaskedMatrix:
    if not 0 <= tau <= 1:
        raise ValueError("tau must be in [0, 1]")
    values = np.asarray(values, dtype=float)
    return project(values, rng.random(values.shape) >= tau)


def mar_probs(values, psi1: float, psi2: float) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    prob = np.repeat(expit(psi1 * (values[:, :1] - psi2)), values.shape[1], axis=1)
    prob[:, 0] = 0.0
    return prob


def mnar1_probs(values, phi1: float, phi2: float) -> np.ndarray:
    return expit(phi1 * (np.asarray(values, dtype=float) - phi2))


def apply_mar(values, psi1: float, psi2: float, rng: np.random.Generator) -> MaskedMatrix:
    """Columns 2..p go missing with a logistic probability in column 1."""
    values = np.asarray(values, dtype=float)
    if values.shape[1] < 2:
        raise ValueError("MAR needs p >= 2")
    if psi1 <= 0:
        raise ValueError("psi1 must be positive")
    return project(values, rng.random(values.shape) >= mar_probs(values, psi1, psi2))


def apply_mnar1(values, phi1: float, phi2: float, rng: np.random.Generator) -> MaskedMatrix:
    """Self-masking: each entry goes missing with a logistic probability in its own value."""
    values = np.asarray(values, dtype=float)
    if phi1 <= 0:
        raise ValueError("phi1 must be positive")
    return project(values, rng.random(values.shape) >= mnar1_probs(values, phi1, phi2))


def apply_mnar2(values, q: float) -> MaskedMatrix:
    """Mask the floor(q*n) smallest entries of every column (ties by row index)."""
    values = np.asarray(values, dtype=float)
    if not 0 <= q < 1:
        raise ValueError("q must be in [0, 1)")
    n = values.shape[0]
    cut = int(np.floor(q * n))
    order = np.argsort(values, axis=0, kind="stable")
    mask = np.ones(values.shape, dtype=bool)
    if cut:
        np.put_along_axis(mask, order[:cut], False, axis=0)
    return project(values, mask)


def expected_missing(values, mechanism: str, first: float, second: float) -> float:
    """Expected total missing proportion under a logistic mechanism."""
    mech = mechanism.lower()
    if mech == "mar":
        return float(mar_probs(values, first, second).mean())
    if mech == "mnar1":
        return float(mnar1_probs(values, first, second).mean())
    raise ValueError(f"no logistic mechanism {mechanism!r}")


def calibrate_logistic(
    values,
    mechanism: str,
    fixed_second_param: float,
    target_total_prop: float,
    tol: float = 1e-4,
    bracket=(1e-4, 1e3),
) -> float:
    """Slope parameter whose expected total missing proportion hits the target."""
    if not 0 < target_total_prop < 1:
        raise ValueError("target must be in (0, 1)")

    def f(s):
        return expected_missing(values, mechanism, s, fixed_second_param) - target_total_prop

    lo, hi = bracket
    flo, fhi = f(lo), f(hi)
    if flo * fhi > 0:
        raise ValueError(
            f"target {target_total_prop} not reachable for slopes in [{lo}, {hi}] "
            f"(range {flo + target_total_prop:.4f}..{fhi + target_total_prop:.4f})"
        )
    root = brentq(f, lo, hi, xtol=1e-12, rtol=1e-12)
    if abs(f(root)) > tol:
        raise ValueError("calibration did not reach the tolerance")
    return float(root)


MECHANISMS = ("mcar", "mar", "mnar1", "mnar2")

# (psi1, psi2) for MAR and (phi1, phi2) for MNAR1 keyed by (setting, proportion)
LOGISTIC_TABLE = {
    ("p10", 0.1): ((1.80, 3.0), (1.5, 3.0)),
    ("p10", 0.2): ((0.55, 3.0), (0.6, 3.0)),
    ("p10", 0.3): ((0.25, 3.0), (0.3, 3.0)),
    ("p100a0.8", 0.1): ((2.0, 2.0), (2.5, 2.0)),
    ("p100a0.8", 0.2): ((0.8, 2.0), (0.9, 2.0)),
    ("p100a0.8", 0.3): ((0.4, 2.0), (0.45, 2.0)),
    ("p100a1", 0.1): ((2.5, 2.0), (2.5, 2.0)),
    ("p100a1", 0.2): ((0.9, 2.0), (0.9, 2.0)),
    ("p100a1", 0.3): ((0.45, 2.0), (0.45, 2.0)),
}


def apply_missingness(values, mechanism: str, proportion: float, rng, params=None) -> MaskedMatrix:
    """Dispatch by mechanism name.

    For MAR/MNAR1, ``params`` is ``(slope, offset)``; when omitted the slope
    is calibrated to ``proportion`` with offset 3.0 for p <= 10 and 2.0
    otherwise.
    """
    mech = mechanism.lower()
    if mech == "mcar":
        return apply_mcar(values, proportion, rng)
    if mech == "mnar2":
        return apply_mnar2(values, proportion)
    if mech not in ("mar", "mnar1"):
        raise ValueError(f"unknown mechanism {mechanism!r}")
    if params is None:
        offset = 3.0 if np.shape(values)[1] <= 10 else 2.0
        params = (calibrate_logistic(values, mech, offset, proportion), offset)
    if mech == "mar":
        return apply_mar(values, params[0], params[1], rng)
    return apply_mnar1(values, params[0], params[1], rng)
