"""Univariate distributions, Gauss rules, orthonormal polynomials and
total-degree multi-index sets."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .errors import ValidationError

MAX_QUAD_ORDER = 64
MAX_DEGREE = 64
DEFAULT_BASIS_CAP = 10**6


@dataclass(frozen=True)
class Distribution:
    """A gaussian(mean, stddev) or uniform(lower, upper) marginal."""

    kind: str
    a: float
    b: float

    def __post_init__(self):
        if self.kind == "gaussian":
            if not self.b > 0:
                raise ValidationError(f"gaussian stddev must be > 0, got {self.b}")
        elif self.kind == "uniform":
            if not self.a < self.b:
                raise ValidationError(
                    f"uniform needs lower < upper, got [{self.a}, {self.b}]")
        else:
            raise ValidationError(f"unsupported distribution kind {self.kind!r}")
        if not (math.isfinite(self.a) and math.isfinite(self.b)):
            raise ValidationError("distribution parameters must be finite")

    @classmethod
    def gaussian(cls, mean=0.0, stddev=1.0):
        return cls("gaussian", float(mean), float(stddev))

    @classmethod
    def uniform(cls, lower=-1.0, upper=1.0):
        return cls("uniform", float(lower), float(upper))

    @property
    def center(self) -> float:
        return self.a if self.kind == "gaussian" else 0.5 * (self.a + self.b)

    @property
    def scale(self) -> float:
        return self.b if self.kind == "gaussian" else 0.5 * (self.b - self.a)

    def standardize(self, x):
        """Map parameter values to the reference variable (N(0,1) or U(-1,1))."""
        return (np.asarray(x, dtype=float) - self.center) / self.scale

    def from_standard(self, t):
        return self.center + self.scale * np.asarray(t, dtype=float)

    def sample(self, rng: np.random.Generator, size):
        if self.kind == "gaussian":
            return rng.normal(self.a, self.b, size=size)
        return rng.uniform(self.a, self.b, size=size)

    def to_dict(self) -> dict:
        if self.kind == "gaussian":
            return {"kind": "gaussian", "mean": self.a, "stddev": self.b}
        return {"kind": "uniform", "lower": self.a, "upper": self.b}

    @classmethod
    def from_dict(cls, d: dict) -> "Distribution":
        kind = d.get("kind")
        try:
            if kind == "gaussian":
                return cls.gaussian(d["mean"], d["stddev"])
            if kind == "uniform":
                return cls.uniform(d["lower"], d["upper"])
        except KeyError as exc:
            raise ValidationError(f"{kind} distribution missing field {exc}") from None
        raise ValidationError(f"unsupported distribution kind {kind!r}")


def _recurrence(kind: str, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Diagonal and off-diagonal of the n x n Jacobi matrix of the reference
    measure (probabilists' Hermite or Legendre on the uniform measure)."""
    k = np.arange(1, n, dtype=float)
    if kind == "gaussian":
        off = np.sqrt(k)
    elif kind == "uniform":
        off = k / np.sqrt(4.0 * k * k - 1.0)
    else:
        raise ValidationError(f"unsupported distribution kind {kind!r}")
    return np.zeros(n), off


@dataclass(frozen=True)
class QuadratureRule:
    nodes: np.ndarray
    weights: np.ndarray

    def __len__(self):
        return len(self.nodes)


def gauss_quadrature(dist: Distribution, q: int) -> QuadratureRule:
    """q-point Gauss rule for the probability measure of ``dist``.

    Built with Golub-Welsch: nodes are the eigenvalues of the Jacobi matrix
    and weights the squared first components of its eigenvectors. The rule
    integrates polynomials of degree up to ``2q - 1`` exactly.
    """
    if not isinstance(dist, Distribution):
        raise ValidationError(f"unsupported distribution {dist!r}")
    if int(q) != q or not 1 <= q <= MAX_QUAD_ORDER:
        raise ValidationError(f"quadrature order must be in [1, {MAX_QUAD_ORDER}], got {q}")
    q = int(q)
    if q == 1:
        t, w = np.zeros(1), np.ones(1)
    else:
        diag, off = _recurrence(dist.kind, q)
        t, vecs = eigh_tridiagonal(diag, off)
        w = vecs[0, :] ** 2
        order = np.argsort(t)
        t, w = t[order], w[order]
        # both reference measures are symmetric about 0
        t = 0.5 * (t - t[::-1])
        w = 0.5 * (w + w[::-1])
        w = w / w.sum()
    return QuadratureRule(dist.from_standard(t), w)


def _orthonormal_table(kind: str, t: np.ndarray, degree: int) -> np.ndarray:
    """Values psi_0..psi_degree at standardized points, shape t.shape + (degree+1,)."""
    t = np.asarray(t, dtype=float)
    out = np.empty(t.shape + (degree + 1,))
    out[..., 0] = 1.0
    if degree == 0:
        return out
    _, off = _recurrence(kind, degree + 1)
    out[..., 1] = t / off[0]
    for n in range(1, degree):
        # t psi_n = b_{n+1} psi_{n+1} + b_n psi_{n-1}
        out[..., n + 1] = (t * out[..., n] - off[n - 1] * out[..., n - 1]) / off[n]
    return out


def orthonormal_table(dist: Distribution, degree: int, x) -> np.ndarray:
    """Evaluate psi_0..psi_degree of ``dist`` at ``x``; last axis is the degree."""
    if int(degree) != degree or not 0 <= degree <= MAX_DEGREE:
        raise ValidationError(f"degree must be in [0, {MAX_DEGREE}], got {degree}")
    return _orthonormal_table(dist.kind, dist.standardize(x), int(degree))


def orthonormal_poly(dist: Distribution, degree: int, x):
    """psi_degree(x), orthonormal under the probability measure of ``dist``.

    Probabilists' Hermite (normalized) for gaussian, normalized Legendre for
    uniform, both on the affinely standardized variable.
    """
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValidationError("x must be finite")
    val = orthonormal_table(dist, degree, x)[..., int(degree)]
    return float(val) if val.ndim == 0 else val


def basis_size(d: int, p: int) -> int:
    return math.comb(p + d, d)


def enumerate_multi_indices(d: int, p: int, cap: int = DEFAULT_BASIS_CAP) -> np.ndarray:
    """All multi-indices with total degree <= p in graded lexicographic order.

    Within one total degree, indices are sorted so that larger leading
    entries come first, e.g. for d=2, p=1: (0,0), (1,0), (0,1).

    Returns an int array of shape (n_basis, d).
    """
    if d < 1 or p < 0:
        raise ValidationError(f"need d >= 1 and p >= 0, got d={d}, p={p}")
    n = basis_size(d, p)
    if n > cap:
        raise ValidationError(f"basis of {n} functions exceeds cap {cap}")

    def compositions(total, slots):
        if slots == 1:
            yield (total,)
            return
        for first in range(total, -1, -1):
            for rest in compositions(total - first, slots - 1):
                yield (first,) + rest

    out = np.empty((n, d), dtype=np.int64)
    row = 0
    for total in range(p + 1):
        for alpha in compositions(total, d):
            out[row] = alpha
            row += 1
    return out


@dataclass(frozen=True)
class Parameter:
    name: str
    dist: Distribution
    q: int


@dataclass(frozen=True)
class ParameterSpace:
    params: tuple[Parameter, ...]

    def __post_init__(self):
        params = tuple(self.params)
        object.__setattr__(self, "params", params)
        if not params:
            raise ValidationError("parameter space needs at least one parameter")
        names = [p.name for p in params]
        if len(set(names)) != len(names):
            raise ValidationError("parameter names must be distinct")
        for p in params:
            if int(p.q) != p.q or not 1 <= p.q <= MAX_QUAD_ORDER:
                raise ValidationError(f"parameter {p.name!r}: bad quadrature order {p.q}")

    @classmethod
    def iid(cls, d: int, dist: Distribution, q: int, prefix: str = "xi") -> "ParameterSpace":
        return cls(tuple(Parameter(f"{prefix}_{k + 1}", dist, q) for k in range(d)))

    @property
    def d(self) -> int:
        return len(self.params)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(p.q for p in self.params)

    @cached_property
    def _rules(self) -> tuple[QuadratureRule, ...]:
        return tuple(gauss_quadrature(p.dist, p.q) for p in self.params)

    def rules(self) -> list[QuadratureRule]:
        return list(self._rules)

    def grid_size(self) -> int:
        """Number of tensor-product grid points as an exact integer."""
        return math.prod(self.shape)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return np.column_stack([p.dist.sample(rng, n) for p in self.params])

    def to_dict(self) -> dict:
        return {"params": [{"name": p.name, "dist": p.dist.to_dict(), "q": p.q}
                           for p in self.params]}

    @classmethod
    def from_dict(cls, d: dict) -> "ParameterSpace":
        try:
            entries = d["params"]
            return cls(tuple(Parameter(str(e["name"]), Distribution.from_dict(e["dist"]),
                                       int(e["q"])) for e in entries))
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed parameter space: {exc}") from None

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "ParameterSpace":
        return cls.from_dict(json.loads(text))


def grid_point(space: ParameterSpace, index: Sequence[int]) -> np.ndarray:
    """Physical parameter vector at a 1-based tensor-grid index."""
    index = tuple(int(i) for i in index)
    if len(index) != space.d:
        raise ValidationError(f"index has length {len(index)}, expected {space.d}")
    for k, (i, q) in enumerate(zip(index, space.shape)):
        if not 1 <= i <= q:
            raise ValidationError(f"index {i} out of bounds [1, {q}] in dimension {k}")
    return np.array([rule.nodes[i - 1] for rule, i in zip(space.rules(), index)])


def grid_points(space: ParameterSpace, indices) -> np.ndarray:
    """Vectorized grid_point over an (n, d) array of 1-based indices."""
    idx = np.atleast_2d(np.asarray(indices, dtype=np.int64))
    if idx.shape[1] != space.d:
        raise ValidationError(f"indices have d={idx.shape[1]}, expected {space.d}")
    if np.any(idx < 1) or np.any(idx > np.asarray(space.shape)):
        raise ValidationError("grid index out of bounds")
    return np.column_stack([rule.nodes[idx[:, k] - 1] for k, rule in enumerate(space.rules())])


@dataclass(frozen=True)
class BasisSet:
    """Total-degree-p gPC basis on a tensor grid.

    ``node_tables[k][i, a]`` is psi_a at the i-th node of dimension k and
    ``weighted_tables[k]`` is the same table scaled row-wise by the weights.
    """

    space: ParameterSpace
    p: int
    indices: np.ndarray
    rules: list[QuadratureRule] = field(repr=False)
    node_tables: list[np.ndarray] = field(repr=False)
    weighted_tables: list[np.ndarray] = field(repr=False)

    def __len__(self):
        return len(self.indices)

    @property
    def d(self) -> int:
        return self.space.d

    def position(self, alpha) -> int:
        """Row of ``alpha`` in ``indices``."""
        alpha = np.asarray(alpha)
        if alpha.shape != (self.d,) or alpha.min() < 0 or alpha.sum() > self.p:
            raise ValidationError(f"multi-index {tuple(alpha)} not in basis")
        hits = np.flatnonzero((self.indices == alpha).all(axis=1))
        return int(hits[0])


def build_basis(space: ParameterSpace, p: int, cap: int = DEFAULT_BASIS_CAP) -> BasisSet:
    if p < 0:
        raise ValidationError(f"order must be >= 0, got {p}")
    for par in space.params:
        if par.q < p + 1:
            raise ValidationError(
                f"under-resolved quadrature: parameter {par.name!r} has q={par.q} < p+1={p + 1}")
    indices = enumerate_multi_indices(space.d, p, cap)
    rules = space.rules()
    node_tables, weighted_tables = [], []
    for par, rule in zip(space.params, rules):
        v = orthonormal_table(par.dist, p, rule.nodes)
        v.setflags(write=False)
        wv = rule.weights[:, None] * v
        wv.setflags(write=False)
        node_tables.append(v)
        weighted_tables.append(wv)
    indices.setflags(write=False)
    return BasisSet(space, p, indices, rules, node_tables, weighted_tables)
