"""Kernel estimation of the Koopman operator from trajectory data.

Given snapshot pairs (x_t, x_{t+1}), t = 1..T, the regularized estimator acts
on an observable f through the weights

    alpha(x) = (K_X + T lam I)^{-1} k_hat(x),   k_hat(x)_t = k(x_t, x),

and forecasts E[f(X_{t+1}) | X_t = x] by sum_t f(x_{t+1}) alpha(x)_t.  Its
nonzero spectrum is that of the T x T matrix C = K_XY (K_X + T lam I)^{-1}.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

from .errors import InputError, NumericalError
from .kernels import KernelSpec, _check_spec, as_points, cross_gram, gram
from .ridge import SpdFactor, check_lambda, factorize_spd

__all__ = [
    "Trajectory",
    "KoopmanModel",
    "KoopmanModes",
    "fit_koopman",
    "koopman_weights",
    "forecast_observable",
    "forecast_state",
    "koopman_modes",
    "reduced_matrix",
]

log = logging.getLogger(__name__)

EIG_RESIDUAL_RTOL = 1e-6
# above this size with r < T - 1, modes are found with ARPACK instead of a dense eig
DENSE_EIG_LIMIT = 1500


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Time-ordered states x_0, ..., x_N of one run, or pooled snapshot pairs.

    A single run yields inputs ``states[:-1]`` and outputs ``states[1:]``.
    Use :meth:`from_pairs` to pool pairs from several runs.
    """

    states: np.ndarray
    dt: float | None = None
    _pairs: tuple | None = field(default=None, repr=False)

    def __post_init__(self):
        if self._pairs is None:
            s = as_points(self.states, "states")
            if s.shape[0] < 2:
                raise InputError("a trajectory needs at least two states (one transition)")
            object.__setattr__(self, "states", s)

    @classmethod
    def from_pairs(cls, inputs, outputs) -> "Trajectory":
        xi = as_points(inputs, "inputs")
        xo = as_points(outputs, "outputs")
        if xi.shape != xo.shape or xi.shape[0] < 1:
            raise InputError(f"inputs {xi.shape} and outputs {xo.shape} must match and be non-empty")
        return cls(np.vstack([xi, xo]), None, (xi, xo))

    @classmethod
    def concatenate(cls, trajectories) -> "Trajectory":
        ins, outs = zip(*(t.pairs() for t in trajectories))
        return cls.from_pairs(np.vstack(ins), np.vstack(outs))

    def pairs(self):
        if self._pairs is not None:
            return self._pairs
        return self.states[:-1], self.states[1:]

    @property
    def n_pairs(self) -> int:
        return self.pairs()[0].shape[0]

    @property
    def dim(self) -> int:
        return self.states.shape[1]


@dataclass(frozen=True, eq=False)
class KoopmanModel:
    inputs: np.ndarray
    outputs: np.ndarray
    kernel: KernelSpec
    lam: float
    gram_factor: SpdFactor
    K_X: np.ndarray
    warnings: tuple = ()

    @property
    def n_pairs(self) -> int:
        return self.inputs.shape[0]

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]

    def predict(self, Xnew) -> np.ndarray:
        """One-step state forecast for every row of ``Xnew``."""
        return koopman_weights(self, Xnew) @ self.outputs


def fit_koopman(traj: Trajectory, kernel: KernelSpec, lam: float) -> KoopmanModel:
    """Factorize K_X + T lam I over the input snapshots of ``traj``."""
    _check_spec(kernel)
    lam = check_lambda(lam)
    if not isinstance(traj, Trajectory):
        traj = Trajectory(traj)
    inputs, outputs = traj.pairs()
    t = inputs.shape[0]
    k_x = gram(kernel, inputs).entries
    a = np.array(k_x)
    a[np.diag_indices(t)] += t * lam
    factor = factorize_spd(a)
    notes = []
    if t > 1 and np.all(inputs == inputs[0]):
        notes.append("conditioning: all input states identical, K_X has rank one")
        log.warning(notes[-1])
    if factor.jitter > 0:
        notes.append(f"conditioning: jitter {factor.jitter:.3g} added to K_X + T*lam*I")
    return KoopmanModel(inputs, outputs, kernel, lam, factor, k_x, tuple(notes))


def koopman_weights(model: KoopmanModel, x) -> np.ndarray:
    """alpha(x) solving (K_X + T lam I) alpha = k_hat(x).

    A d-vector gives a T-vector; an (m, d) array gives an (m, T) array.
    """
    xa = np.asarray(x, dtype=np.float64)
    single = xa.ndim == 1
    q = as_points(xa.reshape(1, -1) if single else xa, "x")
    if q.shape[1] != model.dim:
        raise InputError(f"dimension mismatch: model has d={model.dim}, query has d={q.shape[1]}")
    khat = cross_gram(model.kernel, model.inputs, q)
    alpha = model.gram_factor.solve(khat).T
    return alpha[0] if single else alpha


def forecast_observable(model: KoopmanModel, f_values, x) -> float:
    """sum_t f(x_{t+1}) alpha(x)_t for observable values at the output snapshots."""
    f = np.asarray(f_values, dtype=np.float64)
    if f.ndim != 1 or f.shape[0] != model.n_pairs:
        raise InputError(f"f_values must have length {model.n_pairs}, got shape {f.shape}")
    alpha = koopman_weights(model, np.asarray(x, dtype=np.float64).ravel())
    return float(f @ alpha)


def forecast_state(model: KoopmanModel, x, steps: int) -> np.ndarray:
    """Iterated one-step forecast with the coordinate observables.

    Returns a (steps, d) array whose row s is the forecast s + 1 steps ahead.
    """
    if isinstance(steps, bool) or int(steps) != steps or steps < 1:
        raise InputError(f"steps must be a positive integer, got {steps!r}")
    state = np.asarray(x, dtype=np.float64).ravel()
    if state.shape[0] != model.dim:
        raise InputError(f"dimension mismatch: model has d={model.dim}, query has d={state.shape[0]}")
    out = np.empty((int(steps), model.dim))
    for s in range(int(steps)):
        state = koopman_weights(model, state) @ model.outputs
        out[s] = state
    return out


@dataclass(frozen=True, eq=False)
class KoopmanModes:
    """Leading eigenpairs of the reduced matrix C.

    ``eigenvectors[:, i]`` is a right eigenvector v of C.  ``eigvec_coeffs[:, i]``
    is the matching eigenvector u of C^T, normalized to unit length; the
    function g = sum_t u_t k(x_t, .) then satisfies
    sum_t g(x_{t+1}) alpha(x)_t = mu g(x), i.e. it is an eigenfunction of the
    forecast map.
    """

    eigenvalues: np.ndarray
    eigvec_coeffs: np.ndarray
    eigenvectors: np.ndarray
    residuals: np.ndarray
    dropped: int = 0

    @property
    def r(self) -> int:
        return self.eigenvalues.shape[0]

    @property
    def moduli(self) -> np.ndarray:
        return np.abs(self.eigenvalues)


def _cross_outputs(model: KoopmanModel) -> np.ndarray:
    return cross_gram(model.kernel, model.inputs, model.outputs)


def reduced_matrix(model: KoopmanModel) -> np.ndarray:
    """C = K_XY (K_X + T lam I)^{-1}, with (K_XY)_{st} = k(x_s, x_{t+1})."""
    k_xy = _cross_outputs(model)
    # (K_X + T lam I) is symmetric, so C^T = (K_X + T lam I)^{-1} K_XY^T
    return model.gram_factor.solve(k_xy.T).T


def _order(vals: np.ndarray) -> np.ndarray:
    # modulus descending; conjugate partners stay adjacent, positive imag first
    return np.lexsort((-vals.imag, -np.abs(vals)))


def koopman_modes(model: KoopmanModel, r: int) -> KoopmanModes:
    """Top-``r`` (by modulus) eigenpairs of the reduced matrix.

    Pairs whose residual ||C v - mu v|| exceeds 1e-6 * max(1, ||C||_F) ||v||
    are dropped and counted in ``dropped``.
    """
    t = model.n_pairs
    if isinstance(r, bool) or int(r) != r or r < 1:
        raise InputError(f"r must be a positive integer, got {r!r}")
    if r > t:
        raise InputError(f"r = {r} exceeds the number of snapshot pairs T = {t}")
    r = int(r)
    k_xy = _cross_outputs(model)
    factor = model.gram_factor

    def c_matvec(v):
        return k_xy @ factor.solve(v)

    def ct_matvec(u):
        return factor.solve(k_xy.T @ u)

    try:
        if t > DENSE_EIG_LIMIT and r < t - 1:
            k = min(t - 2, max(r + 2, 2 * r))
            ops = [scipy.sparse.linalg.LinearOperator((t, t), matvec=lambda v, f=f: f(np.asarray(v).ravel()),
                                                      dtype=np.float64) for f in (c_matvec, ct_matvec)]
            vals, vecs = scipy.sparse.linalg.eigs(ops[0], k=k, which="LM", v0=np.ones(t))
            lvals, lvecs = scipy.sparse.linalg.eigs(ops[1], k=k, which="LM", v0=np.ones(t))
            match = [int(np.argmin(np.abs(lvals - mu))) for mu in vals]
            left = lvecs[:, match]
            c_norm = None
        else:
            c = factor.solve(k_xy.T).T
            vals, vl, vecs = scipy.linalg.eig(c, left=True, right=True)
            # y^H C = mu y^H  =>  C^T conj(y) = mu conj(y)
            left = np.conj(vl)
            c_norm = float(np.linalg.norm(c))
    except (np.linalg.LinAlgError, scipy.sparse.linalg.ArpackError) as exc:
        raise NumericalError(f"eigensolver failed: {exc}") from exc
    order = _order(vals)
    vals, vecs, left = vals[order], vecs[:, order], left[:, order]
    cv = c_matvec(vecs)
    res = np.linalg.norm(cv - vecs * vals, axis=0)
    vnorm = np.linalg.norm(vecs, axis=0)
    if c_norm is None:
        c_norm = float(np.linalg.norm(cv, axis=0).max() / max(vnorm.max(), np.finfo(float).tiny))
    keep = res <= EIG_RESIDUAL_RTOL * max(1.0, c_norm) * vnorm
    kept = np.flatnonzero(keep)[:r]
    # failures ranked above the last retained pair would otherwise have been reported
    dropped = int(np.count_nonzero(~keep[: kept[-1] + 1])) if kept.size else int(np.count_nonzero(~keep))
    if dropped:
        log.warning("dropped %d eigenpairs failing the residual check", dropped)
    vals, vecs, left, res = vals[kept], vecs[:, kept], left[:, kept], res[kept]
    left = left / np.maximum(np.linalg.norm(left, axis=0), np.finfo(float).tiny)
    return KoopmanModes(vals, left, vecs, res / np.maximum(vnorm[kept], np.finfo(float).tiny), dropped)
