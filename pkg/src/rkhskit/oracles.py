"""Exact small-scale references: finite Markov chains, linear systems and
synthetic regression tasks.

Everything here is computed by exhaustive sums or closed forms so it can serve
as ground truth for the statistical estimators elsewhere in the package.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.sparse.csgraph import connected_components

from .errors import ConfigError, InputError
from .kernels import KernelSpec, gram
from .koopman import Trajectory

__all__ = [
    "FiniteMarkovChain",
    "LinearSystem",
    "RegressionTask",
    "RiskDecomposition",
    "TARGETS",
    "stationary_distribution",
    "check_detailed_balance",
    "exact_koopman_matrix",
    "risk_brute_force",
    "simulate_chain",
    "simulate_linear_system",
    "generate_regression",
    "random_reversible_chain",
    "chain_from_dict",
    "chain_to_dict",
]

STOCHASTIC_TOL = 1e-12
BALANCE_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class FiniteMarkovChain:
    """Row-stochastic transition matrix P with a state embedding into R^d.

    State i is mapped to ``embedding[i]``; the default is one-hot (d = m).
    """

    P: np.ndarray
    embedding: np.ndarray | None = None

    def __post_init__(self):
        P = np.array(self.P, dtype=np.float64)
        if P.ndim != 2 or P.shape[0] != P.shape[1] or P.shape[0] == 0:
            raise InputError(f"P must be a non-empty square matrix, got shape {P.shape}")
        if not np.all(np.isfinite(P)) or np.any(P < 0):
            raise InputError("P must have finite non-negative entries")
        if np.max(np.abs(P.sum(axis=1) - 1.0)) > STOCHASTIC_TOL:
            raise InputError("rows of P must sum to 1")
        m = P.shape[0]
        emb = np.eye(m) if self.embedding is None else np.array(self.embedding, dtype=np.float64)
        if emb.ndim != 2 or emb.shape[0] != m:
            raise InputError(f"embedding must have {m} rows, got shape {emb.shape}")
        P.setflags(write=False)
        emb.setflags(write=False)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "embedding", emb)

    @property
    def m(self) -> int:
        return self.P.shape[0]

    def is_irreducible(self) -> bool:
        n_comp, _ = connected_components(self.P > 0, directed=True, connection="strong")
        return n_comp == 1


def stationary_distribution(chain: FiniteMarkovChain) -> np.ndarray:
    """Unique pi with pi^T P = pi^T and sum(pi) = 1."""
    if not chain.is_irreducible():
        raise InputError("chain is reducible: no unique invariant measure")
    m = chain.m
    a = np.vstack([chain.P.T - np.eye(m), np.ones((1, m))])
    b = np.zeros(m + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(a, b, rcond=None)
    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()
    return pi


def check_detailed_balance(chain: FiniteMarkovChain):
    """Return ``(reversible, max_violation)`` with violation max |pi_i P_ij - pi_j P_ji|."""
    pi = stationary_distribution(chain)
    flow = pi[:, None] * chain.P
    violation = float(np.max(np.abs(flow - flow.T)))
    return violation <= BALANCE_TOL, violation


def exact_koopman_matrix(chain: FiniteMarkovChain) -> np.ndarray:
    """Koopman operator on functions g: states -> R, (A g)_i = sum_j P_ij g_j."""
    return np.array(chain.P)


@dataclass(frozen=True)
class RiskDecomposition:
    """L(W) together with the two terms of its decomposition."""

    risk: float
    approximation_error: float
    sigma2: float

    @property
    def gap(self) -> float:
        return self.risk - self.approximation_error - self.sigma2


def risk_brute_force(chain: FiniteMarkovChain, kernel: KernelSpec, W) -> RiskDecomposition:
    """Exact Koopman risk of a candidate operator on a finite chain.

    ``W`` is an m x m coefficient matrix B describing the adjoint on kernel
    sections, W* phi(s_i) = sum_l B_il phi(s_l).  The risk

        L(W) = sum_ij pi_i P_ij ||phi(s_j) - W* phi(s_i)||^2

    is summed over all transitions.  Independently, the Hilbert-Schmidt error
    ||A_pi S - S W||^2 is summed over an orthonormal basis of the RKHS span,
    and sigma^2 = E||phi(X+) - E[phi(X+) | X]||^2 over all transitions.
    """
    B = np.asarray(W, dtype=np.float64)
    m = chain.m
    if B.shape != (m, m):
        raise InputError(f"candidate coefficient matrix must be {m} x {m}, got {B.shape}")
    pi = stationary_distribution(chain)
    P = chain.P
    G = gram(kernel, chain.embedding).entries

    def hnorm2(a):
        return float(a @ G @ a)

    risk = 0.0
    sigma2 = 0.0
    for i in range(m):
        for j in range(m):
            w = pi[i] * P[i, j]
            if w == 0.0:
                continue
            e_j = np.zeros(m)
            e_j[j] = 1.0
            risk += w * hnorm2(e_j - B[i])
            sigma2 += w * hnorm2(e_j - P[i])

    # orthonormal basis f_k = sum_l a_kl phi(s_l) of span{phi(s)}
    evals, evecs = np.linalg.eigh(G)
    tol = max(evals.max(), 0.0) * m * np.finfo(float).eps * 10
    approx = 0.0
    for lam_k, v in zip(evals, evecs.T):
        if lam_k <= tol:
            continue
        a = v / np.sqrt(lam_k)
        values = G @ a  # f_k(s_l)
        koop = P @ values  # (A_pi S f_k)(s_i)
        sw = B @ values  # (S W f_k)(s_i) = <f_k, W* phi(s_i)>
        approx += float(pi @ (koop - sw) ** 2)
    return RiskDecomposition(risk, approx, sigma2)


def simulate_chain(chain: FiniteMarkovChain, T: int, seed: int, burn_in: int = 0,
                   initial: int | None = None) -> Trajectory:
    """Sample X_0 ~ pi (or the given ``initial`` state) and T transitions.

    Transitions use inverse-CDF sampling on the rows of P.  The returned
    trajectory holds the embedded states, T + 1 rows.
    """
    if int(T) != T or T < 1:
        raise InputError(f"T must be a positive integer, got {T!r}")
    rng = np.random.default_rng(seed)
    cdf = np.cumsum(chain.P, axis=1)
    last = chain.m - 1
    if initial is None:
        pi_cdf = np.cumsum(stationary_distribution(chain))
        state = min(int(np.searchsorted(pi_cdf, rng.random(), side="right")), last)
    else:
        if not 0 <= initial < chain.m:
            raise InputError(f"initial state {initial} out of range")
        state = int(initial)
    total = int(burn_in) + int(T)
    u = rng.random(total)
    path = np.empty(total + 1, dtype=np.int64)
    path[0] = state
    for t in range(total):
        state = min(int(np.searchsorted(cdf[state], u[t], side="right")), last)
        path[t + 1] = state
    path = path[int(burn_in):]
    return Trajectory(chain.embedding[path])


def random_reversible_chain(m: int, rng: np.random.Generator, sparsity: float = 0.0) -> FiniteMarkovChain:
    """Row-normalized random symmetric weights: reversible by construction."""
    w = rng.random((m, m))
    w = w + w.T
    if sparsity > 0:
        mask = rng.random((m, m)) < sparsity
        mask = mask | mask.T
        np.fill_diagonal(mask, False)
        w[mask] = 0.0
    P = w / w.sum(axis=1, keepdims=True)
    return FiniteMarkovChain(P)


def chain_to_dict(chain: FiniteMarkovChain) -> dict:
    out = {"P": chain.P.tolist()}
    out["embedding"] = "one_hot" if np.array_equal(chain.embedding, np.eye(chain.m)) else chain.embedding.tolist()
    return out


def chain_from_dict(obj) -> FiniteMarkovChain:
    if not isinstance(obj, dict) or "P" not in obj:
        raise InputError("chain spec must be an object with a 'P' field")
    emb = obj.get("embedding", "one_hot")
    if emb == "one_hot":
        emb = None
    elif isinstance(emb, str):
        raise InputError(f"unknown embedding {emb!r}")
    try:
        return FiniteMarkovChain(np.asarray(obj["P"], dtype=np.float64), emb)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, InputError):
            raise
        raise InputError(f"malformed chain spec: {exc}") from exc


@dataclass(frozen=True, eq=False)
class LinearSystem:
    """x_{t+1} = A x_t + noise_std * g_t with g_t standard normal."""

    A: np.ndarray
    noise_std: float = 0.0
    seed: int = 0
    spectral_radius: float = field(init=False)

    def __post_init__(self):
        A = np.array(self.A, dtype=np.float64)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise InputError(f"A must be square, got shape {A.shape}")
        if self.noise_std < 0:
            raise ConfigError("noise_std must be non-negative")
        A.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "spectral_radius", float(np.max(np.abs(np.linalg.eigvals(A)))))


def simulate_linear_system(sys: LinearSystem, x0, T: int) -> Trajectory:
    if int(T) != T or T < 1:
        raise InputError(f"T must be a positive integer, got {T!r}")
    x = np.asarray(x0, dtype=np.float64).ravel()
    d = sys.A.shape[0]
    if x.shape[0] != d:
        raise InputError(f"x0 has dimension {x.shape[0]}, system has {d}")
    rng = np.random.default_rng(sys.seed)
    states = np.empty((int(T) + 1, d))
    states[0] = x
    for t in range(int(T)):
        x = sys.A @ x
        if sys.noise_std > 0:
            x = x + sys.noise_std * rng.standard_normal(d)
        states[t + 1] = x
    return Trajectory(states)


def _sin(X):
    return np.sin(2 * np.pi * X[:, 0])


TARGETS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "sin": _sin,
    "zero": lambda X: np.zeros(X.shape[0]),
    "linear": lambda X: X.sum(axis=1),
    "gaussian_bump": lambda X: np.exp(-4.0 * np.sum((X - 0.5) ** 2, axis=1)),
}


@dataclass(frozen=True)
class RegressionTask:
    """y = f*(x) + noise_std * eps, with x from ``sampler`` ("uniform" on
    [low, high]^d or "normal")."""

    target: str = "sin"
    noise_std: float = 0.0
    sampler: str = "uniform"
    seed: int = 0
    d: int = 1
    low: float = 0.0
    high: float = 1.0

    def __post_init__(self):
        if self.target not in TARGETS:
            raise ConfigError(f"unknown target function {self.target!r}")
        if self.sampler not in ("uniform", "normal"):
            raise ConfigError(f"unknown input sampler {self.sampler!r}")
        if self.noise_std < 0 or self.d < 1:
            raise ConfigError("noise_std must be >= 0 and d >= 1")

    def f_star(self, X) -> np.ndarray:
        return TARGETS[self.target](np.atleast_2d(np.asarray(X, dtype=np.float64)))


def generate_regression(task: RegressionTask, n: int):
    if int(n) != n or n < 1:
        raise InputError(f"n must be a positive integer, got {n!r}")
    rng = np.random.default_rng(task.seed)
    if task.sampler == "uniform":
        X = rng.uniform(task.low, task.high, size=(int(n), task.d))
    else:
        X = rng.standard_normal((int(n), task.d))
    y = task.f_star(X)
    if task.noise_std > 0:
        y = y + task.noise_std * rng.standard_normal(int(n))
    return X, y
