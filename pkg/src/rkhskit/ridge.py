"""Kernel ridge regression, exact and Nystrom-approximated.

Both fitters use the convention

    c = (K + n * lam * I)^{-1} y,        f(x) = sum_i k(x, x_i) c_i

for the exact estimator, and

    a = (K_nM^T K_nM + lam * n * K_MM)^{-1} K_nM^T y,   f(x) = sum_j k(x, x~_j) a_j

for the Nystrom estimator restricted to the span of M centers.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import ConfigError, InputError, NumericalError
from .kernels import KernelSpec, _check_spec, as_points, cross_gram, gram

__all__ = [
    "SpdSolveReport",
    "SpdFactor",
    "factorize_spd",
    "solve_spd",
    "KrrModel",
    "NystromModel",
    "fit_krr",
    "fit_krr_dual_form",
    "predict_krr",
    "select_centers",
    "fit_nystrom",
    "predict_nystrom",
    "check_lambda",
]

log = logging.getLogger(__name__)

SYMMETRY_RTOL = 1e-10
JITTER_EXPONENTS = range(-12, -5)  # 1e-12 ... 1e-6, times trace/n
PREDICT_BLOCK = 1024


@dataclass(frozen=True)
class SpdSolveReport:
    jitter_used: float
    factorization_rank: int
    residual: float = 0.0


class SpdFactor:
    """Cholesky factorization of a symmetric positive definite matrix,
    possibly after adding diagonal jitter."""

    def __init__(self, matrix: np.ndarray, cho, jitter: float):
        self.matrix = matrix
        self._cho = cho
        self.jitter = jitter
        self.n = matrix.shape[0]

    def solve(self, b) -> np.ndarray:
        b = np.asarray(b)
        if not np.iscomplexobj(b):
            b = b.astype(np.float64, copy=False)
        if b.shape[0] != self.n:
            raise InputError(f"right-hand side has {b.shape[0]} rows, expected {self.n}")
        if np.iscomplexobj(b):
            return self.solve(b.real) + 1j * self.solve(b.imag)
        return scipy.linalg.cho_solve(self._cho, b, check_finite=False)

    def residual(self, x, b) -> float:
        """Relative residual ||A x - b|| / ||b|| against the un-jittered matrix."""
        b = np.asarray(b, dtype=np.float64)
        r = np.linalg.norm(self.matrix @ x - b)
        nb = np.linalg.norm(b)
        return float(r / nb) if nb > 0 else float(r)

    def report(self, x=None, b=None) -> SpdSolveReport:
        res = self.residual(x, b) if x is not None else 0.0
        return SpdSolveReport(self.jitter, self.n, res)


def _try_cholesky(a: np.ndarray):
    try:
        cho = scipy.linalg.cho_factor(a, lower=True, check_finite=False)
    except np.linalg.LinAlgError:
        return None
    piv = np.diag(cho[0])
    n = a.shape[0]
    # a pivot this small means the factor is numerically meaningless
    floor = n * np.finfo(float).eps * max(float(np.max(np.diag(a))), np.finfo(float).tiny)
    if not np.all(np.isfinite(piv)) or np.min(piv) ** 2 < floor:
        return None
    return cho


def factorize_spd(a) -> SpdFactor:
    """Factorize a symmetric PSD matrix, escalating diagonal jitter on failure.

    Jitter goes 1e-12 * trace/n, 1e-11 * trace/n, ... up to 1e-6 * trace/n.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
        raise InputError(f"expected a non-empty square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InputError("matrix contains non-finite values")
    scale = float(np.max(np.abs(a)))
    if np.max(np.abs(a - a.T)) > SYMMETRY_RTOL * max(scale, np.finfo(float).tiny):
        raise InputError("matrix is not symmetric")
    cho = _try_cholesky(a)
    if cho is not None:
        return SpdFactor(a, cho, 0.0)
    n = a.shape[0]
    base = float(np.trace(a)) / n
    if base <= 0:
        base = 1.0
    for e in JITTER_EXPONENTS:
        jitter = 10.0**e * base
        cho = _try_cholesky(a + jitter * np.eye(n))
        if cho is not None:
            log.debug("cholesky succeeded with jitter %.3g", jitter)
            return SpdFactor(a, cho, jitter)
    raise NumericalError("matrix not positive definite")


def solve_spd(a, b):
    """Solve ``a x = b`` for symmetric PSD ``a``; returns ``(x, SpdSolveReport)``."""
    factor = factorize_spd(a)
    b = np.asarray(b, dtype=np.float64)
    x = factor.solve(b)
    return x, factor.report(x, b)


def check_lambda(lam) -> float:
    try:
        value = float(lam)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"lambda must be a real number, got {lam!r}") from exc
    if not np.isfinite(value) or value <= 0:
        raise ConfigError(f"lambda must be > 0, got {lam!r}")
    return value


def _check_xy(X, y):
    X = as_points(X, "X")
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 1:
        raise InputError(f"y must be a vector, got shape {y.shape}")
    if y.shape[0] != X.shape[0]:
        raise InputError(f"X has {X.shape[0]} rows but y has {y.shape[0]} entries")
    if X.shape[0] < 1:
        raise InputError("need at least one training point")
    if not np.all(np.isfinite(y)):
        raise InputError("y contains non-finite values")
    return X, y


def _blocked_predict(kernel, support, coef, Xnew) -> np.ndarray:
    Xnew = as_points(Xnew, "Xnew")
    if Xnew.shape[1] != support.shape[1]:
        raise InputError(
            f"dimension mismatch: model has d={support.shape[1]}, query has d={Xnew.shape[1]}"
        )
    out = np.empty((Xnew.shape[0],) + coef.shape[1:])
    for start in range(0, Xnew.shape[0], PREDICT_BLOCK):
        stop = start + PREDICT_BLOCK
        out[start:stop] = cross_gram(kernel, Xnew[start:stop], support) @ coef
    return out


@dataclass(frozen=True, eq=False)
class KrrModel:
    support_points: np.ndarray
    coefficients: np.ndarray
    lam: float
    kernel: KernelSpec
    report: SpdSolveReport = field(default_factory=lambda: SpdSolveReport(0.0, 0))

    def predict(self, Xnew) -> np.ndarray:
        return predict_krr(self, Xnew)


def fit_krr(X, y, kernel: KernelSpec, lam: float) -> KrrModel:
    """Exact KRR: solve (K + n lam I) c = y by Cholesky."""
    _check_spec(kernel)
    lam = check_lambda(lam)
    X, y = _check_xy(X, y)
    n = X.shape[0]
    a = np.array(gram(kernel, X).entries)
    a[np.diag_indices(n)] += n * lam
    c, report = solve_spd(a, y)
    return KrrModel(X, c, lam, kernel, report)


def fit_krr_dual_form(X, y, kernel: KernelSpec, lam: float) -> KrrModel:
    """KRR through the (S S* + lam I)^{-1} route.

    Solves (K/n + lam I) c' = y with a symmetric eigendecomposition and
    rescales c = c'/n, so the returned coefficients have the same meaning
    as those of :func:`fit_krr`.
    """
    _check_spec(kernel)
    lam = check_lambda(lam)
    X, y = _check_xy(X, y)
    n = X.shape[0]
    k = gram(kernel, X).entries
    evals, evecs = scipy.linalg.eigh(k / n)
    evals = np.maximum(evals, 0.0)
    c_prime = evecs @ ((evecs.T @ y) / (evals + lam))
    c = c_prime / n
    a = k + n * lam * np.eye(n)
    nb = np.linalg.norm(y)
    res = float(np.linalg.norm(a @ c - y) / nb) if nb > 0 else 0.0
    return KrrModel(X, c, lam, kernel, SpdSolveReport(0.0, n, res))


def predict_krr(model: KrrModel, Xnew) -> np.ndarray:
    return _blocked_predict(model.kernel, model.support_points, model.coefficients, Xnew)


def select_centers(n: int, m: int, seed: int) -> np.ndarray:
    """M distinct indices drawn uniformly without replacement from range(n)."""
    if isinstance(m, bool) or int(m) != m or m < 1:
        raise InputError(f"number of centers must be a positive integer, got {m!r}")
    if int(n) != n or n < 1:
        raise InputError(f"sample size must be a positive integer, got {n!r}")
    if m > n:
        raise InputError(f"M exceeds sample size ({m} > {n})")
    rng = np.random.default_rng(seed)
    return rng.choice(int(n), size=int(m), replace=False)


@dataclass(frozen=True, eq=False)
class NystromModel:
    centers: np.ndarray
    coefficients: np.ndarray
    lam: float
    kernel: KernelSpec
    center_indices: np.ndarray
    report: SpdSolveReport = field(default_factory=lambda: SpdSolveReport(0.0, 0))

    @property
    def m(self) -> int:
        return self.centers.shape[0]

    def predict(self, Xnew) -> np.ndarray:
        return predict_nystrom(self, Xnew)


def fit_nystrom(X, y, kernel: KernelSpec, lam: float, m: int, seed: int = 0,
                center_indices=None) -> NystromModel:
    """Nystrom KRR with M centers sampled uniformly from the training inputs.

    Only the n x M and M x M kernel blocks are formed.  ``center_indices``
    overrides the random selection.
    """
    _check_spec(kernel)
    lam = check_lambda(lam)
    X, y = _check_xy(X, y)
    n = X.shape[0]
    if center_indices is None:
        idx = select_centers(n, m, seed)
    else:
        idx = np.asarray(center_indices, dtype=np.int64)
        if idx.ndim != 1 or len(np.unique(idx)) != len(idx) or idx.min() < 0 or idx.max() >= n:
            raise InputError("center_indices must be distinct indices into the training set")
    centers = X[idx]
    k_nm = cross_gram(kernel, X, centers)
    k_mm = gram(kernel, centers).entries
    a = k_nm.T @ k_nm
    a = np.triu(a) + np.triu(a, 1).T
    a += lam * n * k_mm
    rhs = k_nm.T @ y
    coef, report = solve_spd(a, rhs)
    return NystromModel(centers, coef, lam, kernel, idx, report)


def predict_nystrom(model: NystromModel, Xnew) -> np.ndarray:
    return _blocked_predict(model.kernel, model.centers, model.coefficients, Xnew)
