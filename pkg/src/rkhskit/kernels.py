"""Positive definite kernels on R^d.

Kernels are described declaratively by small frozen dataclasses
(:class:`Linear`, :class:`Gaussian`, :class:`RandomFeatures`, :class:`Sum`,
:class:`Product`) and evaluated through :func:`eval_kernel`, :func:`gram` and
:func:`cross_gram`.

Examples
--------
>>> from rkhskit.kernels import Gaussian, gram
>>> gram(Gaussian(1.0), [[0.0], [1.0]]).round(6)
array([[1.      , 0.367879],
       [0.367879, 1.      ]])
"""
from __future__ import annotations

import functools
import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.spatial.distance import cdist

from .errors import ConfigError, InputError

__all__ = [
    "KernelSpec",
    "Linear",
    "Gaussian",
    "RandomFeatures",
    "Sum",
    "Product",
    "FeatureMap",
    "GramMatrix",
    "FEATURE_FAMILIES",
    "eval_kernel",
    "gram",
    "cross_gram",
    "build_feature_map",
    "kernel_to_dict",
    "kernel_from_dict",
    "parse_kernel",
]

# above this many n*m*d scalar operations the Gaussian uses the expanded
# ||x||^2 + ||x'||^2 - 2 x.x' form (BLAS) instead of direct differences
_EXPANDED_THRESHOLD = 1 << 24

FEATURE_FAMILIES = ("trig_gaussian",)

_SEED_LIMIT = 1 << 64


def as_points(points, name="points") -> np.ndarray:
    """Coerce to a C-contiguous float64 array of shape (n, d)."""
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1) if name == "x" else arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise InputError(f"{name} must be a 2-d array, got shape {arr.shape}")
    if arr.shape[1] < 1:
        raise InputError(f"{name} must have at least one column")
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{name} contains non-finite values")
    return np.ascontiguousarray(arr)


class KernelSpec:
    """Base class of the kernel variants.

    Subclasses implement ``_block(rows, cols, same)`` returning the dense
    matrix of kernel values between two point sets.
    """

    def validate(self) -> None:
        pass

    def _block(self, rows: np.ndarray, cols: np.ndarray, same: bool) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, x, x_prime) -> float:
        return eval_kernel(self, x, x_prime)

    def __add__(self, other: "KernelSpec") -> "Sum":
        return Sum(self, other)

    def __mul__(self, other: "KernelSpec") -> "Product":
        return Product(self, other)


@dataclass(frozen=True)
class Linear(KernelSpec):
    """k(x, x') = <x, x'>."""

    def _block(self, rows, cols, same):
        return rows @ cols.T


@dataclass(frozen=True)
class Gaussian(KernelSpec):
    """k(x, x') = exp(-gamma * ||x - x'||^2)."""

    gamma: float

    def validate(self):
        g = self.gamma
        if isinstance(g, bool) or not np.isfinite(g) or g <= 0:
            raise ConfigError(f"Gaussian kernel needs gamma > 0, got {g!r}")

    def _block(self, rows, cols, same):
        n, d = rows.shape
        m = cols.shape[0]
        if n * m * d > _EXPANDED_THRESHOLD:
            sq = (
                np.einsum("ij,ij->i", rows, rows)[:, None]
                + np.einsum("ij,ij->i", cols, cols)[None, :]
                - 2.0 * (rows @ cols.T)
            )
            np.maximum(sq, 0.0, out=sq)
            if same:
                np.fill_diagonal(sq, 0.0)
        else:
            sq = cdist(rows, cols, metric="sqeuclidean")
        return np.exp(-self.gamma * sq)


@dataclass(frozen=True)
class RandomFeatures(KernelSpec):
    """Monte-Carlo kernel k_M(x, x') = (1/M) sum_i psi(b_i, x) psi(b_i, x').

    With the default ``trig_gaussian`` family psi(b, x) = sqrt(2) cos(w.x + u)
    and the M -> infinity limit is ``Gaussian(gamma)``.
    """

    gamma: float
    m: int
    seed: int = 0
    family: str = "trig_gaussian"

    def validate(self):
        if self.family not in FEATURE_FAMILIES:
            raise ConfigError(f"unknown feature family {self.family!r}")
        Gaussian(self.gamma).validate()
        _check_m_seed(self.m, self.seed)

    def feature_map(self, d: int) -> "FeatureMap":
        return build_feature_map(self.family, d, self.m, self.seed, (self.gamma,))

    def _block(self, rows, cols, same):
        fmap = self.feature_map(rows.shape[1])
        fr = fmap.features(rows)
        fc = fr if same else fmap.features(cols)
        return (fr @ fc.T) / fmap.m


@dataclass(frozen=True)
class Sum(KernelSpec):
    left: KernelSpec
    right: KernelSpec

    def validate(self):
        _check_spec(self.left)
        _check_spec(self.right)

    def _block(self, rows, cols, same):
        return self.left._block(rows, cols, same) + self.right._block(rows, cols, same)


@dataclass(frozen=True)
class Product(KernelSpec):
    left: KernelSpec
    right: KernelSpec

    def validate(self):
        _check_spec(self.left)
        _check_spec(self.right)

    def _block(self, rows, cols, same):
        return self.left._block(rows, cols, same) * self.right._block(rows, cols, same)


def _check_spec(spec) -> None:
    if not isinstance(spec, KernelSpec) or type(spec) is KernelSpec:
        raise ConfigError(f"not a kernel spec: {spec!r}")
    spec.validate()


def _check_m_seed(m, seed) -> None:
    if isinstance(m, bool) or not isinstance(m, (int, np.integer)) or m < 1:
        raise ConfigError(f"number of random features must be a positive integer, got {m!r}")
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)):
        raise ConfigError(f"seed must be an integer, got {seed!r}")
    if not 0 <= seed < _SEED_LIMIT:
        raise ConfigError(f"seed must lie in [0, 2**64), got {seed}")


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """Frozen random draw defining a random-features kernel.

    ``features(X)`` returns the n x M matrix ``scale * cos(X W^T + offsets)``.
    """

    weights: np.ndarray
    offsets: np.ndarray
    scale: float
    m: int
    seed: int

    def features(self, points) -> np.ndarray:
        pts = as_points(points)
        if pts.shape[1] != self.weights.shape[1]:
            raise InputError(
                f"feature map expects dimension {self.weights.shape[1]}, got {pts.shape[1]}"
            )
        return self.scale * np.cos(pts @ self.weights.T + self.offsets)


@functools.lru_cache(maxsize=64)
def _cached_feature_map(family, d, m, seed, params) -> FeatureMap:
    # Philox is counter-based: the draw depends only on the key
    rng = np.random.Generator(np.random.Philox(key=seed))
    (gamma,) = params
    weights = rng.standard_normal((m, d)) * np.sqrt(2.0 * gamma)
    offsets = rng.uniform(0.0, 2.0 * np.pi, size=m)
    weights.setflags(write=False)
    offsets.setflags(write=False)
    return FeatureMap(weights, offsets, float(np.sqrt(2.0)), m, seed)


def build_feature_map(family: str, d: int, m: int, seed: int, params: Sequence[float]) -> FeatureMap:
    """Draw (deterministically in ``seed``) the random features for a family.

    For ``trig_gaussian``, ``params = (gamma,)``: frequencies are
    N(0, 2 gamma I) and phases uniform on [0, 2 pi), so that the induced kernel
    converges to exp(-gamma ||x - x'||^2) as M grows.
    """
    if family not in FEATURE_FAMILIES:
        raise ConfigError(f"unknown feature family {family!r}")
    if isinstance(d, bool) or not isinstance(d, (int, np.integer)) or d < 1:
        raise ConfigError(f"dimension must be a positive integer, got {d!r}")
    _check_m_seed(m, seed)
    params = tuple(float(p) for p in params)
    if len(params) != 1:
        raise ConfigError(f"{family} takes exactly one parameter (gamma), got {len(params)}")
    Gaussian(params[0]).validate()
    return _cached_feature_map(family, int(d), int(m), int(seed), params)


def _ordered(x: np.ndarray, y: np.ndarray):
    # canonical argument order makes eval_kernel bitwise symmetric
    for a, b in zip(x, y):
        if a < b:
            return x, y
        if a > b:
            return y, x
    return x, y


def eval_kernel(spec: KernelSpec, x, x_prime) -> float:
    """Evaluate k(x, x') for two d-vectors."""
    _check_spec(spec)
    a = np.asarray(x, dtype=np.float64).ravel()
    b = np.asarray(x_prime, dtype=np.float64).ravel()
    if a.shape != b.shape or a.size == 0:
        raise InputError(f"dimension mismatch: {a.size} vs {b.size}")
    a, b = _ordered(a, b)
    return float(spec._block(a[None, :], b[None, :], False)[0, 0])


@dataclass(frozen=True, eq=False)
class GramMatrix:
    """Symmetric kernel matrix over a point set, with provenance."""

    entries: np.ndarray
    kernel: KernelSpec
    points_hash: str

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)


def points_digest(points: np.ndarray) -> str:
    import hashlib

    h = hashlib.sha256()
    h.update(np.asarray(points.shape, dtype="<i8").tobytes())
    h.update(np.ascontiguousarray(points, dtype="<f8").tobytes())
    return h.hexdigest()


def gram(spec: KernelSpec, points) -> GramMatrix:
    """Kernel matrix K_ij = k(x_i, x_j); exactly symmetric by construction."""
    _check_spec(spec)
    pts = as_points(points)
    if pts.shape[0] == 0:
        raise InputError("cannot build a Gram matrix of an empty point set")
    k = spec._block(pts, pts, True)
    upper = np.triu(k)
    k = upper + np.triu(k, 1).T
    k.setflags(write=False)
    return GramMatrix(k, spec, points_digest(pts))


def cross_gram(spec: KernelSpec, rows, cols) -> np.ndarray:
    """Matrix of k(rows[i], cols[j])."""
    _check_spec(spec)
    r = as_points(rows, "rows")
    c = as_points(cols, "cols")
    if r.shape[1] != c.shape[1]:
        raise InputError(f"dimension mismatch: rows have d={r.shape[1]}, cols have d={c.shape[1]}")
    if r.shape[0] == 0 or c.shape[0] == 0:
        return np.zeros((r.shape[0], c.shape[0]))
    return spec._block(r, c, False)


# -- serialization -----------------------------------------------------------

def kernel_to_dict(spec: KernelSpec) -> dict:
    _check_spec(spec)
    if isinstance(spec, Linear):
        return {"kind": "linear"}
    if isinstance(spec, Gaussian):
        return {"kind": "gaussian", "gamma": float(spec.gamma)}
    if isinstance(spec, RandomFeatures):
        return {
            "kind": "random_features",
            "family": spec.family,
            "gamma": float(spec.gamma),
            "m": int(spec.m),
            "seed": int(spec.seed),
        }
    if isinstance(spec, (Sum, Product)):
        return {
            "kind": "sum" if isinstance(spec, Sum) else "product",
            "left": kernel_to_dict(spec.left),
            "right": kernel_to_dict(spec.right),
        }
    raise ConfigError(f"cannot serialize {spec!r}")


def kernel_from_dict(obj) -> KernelSpec:
    if not isinstance(obj, dict) or "kind" not in obj:
        raise ConfigError(f"kernel spec must be an object with a 'kind' field, got {obj!r}")
    kind = obj["kind"]
    try:
        if kind == "linear":
            spec = Linear()
        elif kind == "gaussian":
            spec = Gaussian(float(obj["gamma"]))
        elif kind == "random_features":
            spec = RandomFeatures(
                gamma=float(obj["gamma"]),
                m=obj["m"],
                seed=obj.get("seed", 0),
                family=obj.get("family", "trig_gaussian"),
            )
        elif kind in ("sum", "product"):
            cls = Sum if kind == "sum" else Product
            spec = cls(kernel_from_dict(obj["left"]), kernel_from_dict(obj["right"]))
        else:
            raise ConfigError(f"unknown kernel kind {kind!r}")
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"malformed {kind} kernel spec: {exc}") from exc
    spec.validate()
    return spec


def parse_kernel(text: str) -> KernelSpec:
    """Parse a kernel from JSON or a shorthand.

    Shorthands: ``linear``, ``gaussian:GAMMA``, ``rf:GAMMA:M[:SEED]``.
    """
    text = text.strip()
    if text.startswith("{"):
        try:
            return kernel_from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid kernel JSON: {exc}") from exc
    parts = text.split(":")
    head = parts[0].lower()
    try:
        if head == "linear" and len(parts) == 1:
            return Linear()
        if head == "gaussian" and len(parts) == 2:
            spec = Gaussian(float(parts[1]))
            spec.validate()
            return spec
        if head in ("rf", "random_features") and len(parts) in (3, 4):
            spec = RandomFeatures(
                float(parts[1]), int(parts[2]), int(parts[3]) if len(parts) == 4 else 0
            )
            spec.validate()
            return spec
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid kernel shorthand {text!r}: {exc}") from exc
    raise ConfigError(f"unrecognised kernel {text!r}")
