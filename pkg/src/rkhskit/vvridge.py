"""Vector-valued KRR with separable kernels Gamma(x, x') = k(x, x') A.

Outputs live in R^T.  The coefficient matrix C (n x T) solves

    K C A + n lam C = Y,

which is the block form of (Gamma_hat + n lam I) vec(C) = vec(Y).  Predictions
are f(x) = sum_i k(x, x_i) A c_i.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import InputError
from .kernels import KernelSpec, _check_spec, as_points, gram
from .ridge import _blocked_predict, check_lambda, factorize_spd

__all__ = ["VvKrrModel", "fit_vvkrr", "predict_vvkrr", "fit_linear_operator", "check_output_operator"]

PSD_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class VvKrrModel:
    support_points: np.ndarray
    coefficients: np.ndarray
    lam: float
    scalar_kernel: KernelSpec
    output_operator: np.ndarray

    @property
    def n_outputs(self) -> int:
        return self.coefficients.shape[1]

    def predict(self, Xnew) -> np.ndarray:
        return predict_vvkrr(self, Xnew)


def check_output_operator(A, t: int) -> np.ndarray:
    A = np.asarray(A, dtype=np.float64)
    if A.shape != (t, t):
        raise InputError(f"output operator must be {t} x {t}, got {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InputError("output operator contains non-finite values")
    scale = max(float(np.max(np.abs(A))), np.finfo(float).tiny)
    if np.max(np.abs(A - A.T)) > PSD_TOL * scale:
        raise InputError("output operator is not symmetric")
    evals = np.linalg.eigvalsh(A)
    if evals.min() < -PSD_TOL * max(abs(np.trace(A)) / t, np.finfo(float).tiny):
        raise InputError(f"output operator is not positive semi-definite (min eigenvalue {evals.min():.3g})")
    return A


def _check_XY(X, Y):
    X = as_points(X, "X")
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim == 1:
        Y = Y[:, None]
    if Y.ndim != 2 or Y.shape[0] != X.shape[0]:
        raise InputError(f"Y must have shape ({X.shape[0]}, T), got {Y.shape}")
    if not np.all(np.isfinite(Y)):
        raise InputError("Y contains non-finite values")
    return X, Y


def fit_vvkrr(X, Y, scalar_kernel: KernelSpec, A=None, lam: float = 1.0) -> VvKrrModel:
    """Fit vvKRR with output operator ``A`` (identity when omitted).

    For A = I the system is block diagonal and every output column is an
    ordinary scalar KRR sharing one factorization.  Otherwise A = U D U^T and
    each rotated channel j solves (d_j K + n lam I) c'_j = (Y U)_j.
    """
    _check_spec(scalar_kernel)
    lam = check_lambda(lam)
    X, Y = _check_XY(X, Y)
    n, t = Y.shape
    k = gram(scalar_kernel, X).entries
    identity = A is None
    A = np.eye(t) if A is None else check_output_operator(A, t)
    if identity or np.array_equal(A, np.eye(t)):
        a = np.array(k)
        a[np.diag_indices(n)] += n * lam
        C = factorize_spd(a).solve(Y)
    else:
        evals, U = scipy.linalg.eigh(A)
        evals = np.maximum(evals, 0.0)
        Yr = Y @ U
        Cr = np.empty_like(Yr)
        for j, dj in enumerate(evals):
            a = dj * k
            a[np.diag_indices(n)] += n * lam
            Cr[:, j] = factorize_spd(a).solve(Yr[:, j])
        C = Cr @ U.T
    return VvKrrModel(X, C, lam, scalar_kernel, A)


def predict_vvkrr(model: VvKrrModel, Xnew) -> np.ndarray:
    """Rows of cross_gram(Xnew, X) @ C @ A^T."""
    coef = model.coefficients @ model.output_operator.T
    return _blocked_predict(model.scalar_kernel, model.support_points, coef, Xnew)


def fit_linear_operator(X, Y, lam: float) -> np.ndarray:
    """Ridge estimate W = Y^T X (X^T X + lam n I)^{-1} of a linear map R^d -> R^T.

    Returns the T x d matrix W; predictions are ``Xnew @ W.T``.
    """
    lam = check_lambda(lam)
    X, Y = _check_XY(X, Y)
    n, d = X.shape
    a = X.T @ X
    a = np.triu(a) + np.triu(a, 1).T
    a[np.diag_indices(d)] += lam * n
    return factorize_spd(a).solve(X.T @ Y).T
