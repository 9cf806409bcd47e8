"""Implicit CP tensors on a tensor-product grid.

The full q_1 x ... x q_d array is never formed; everything works on factor
matrices, sampled entries and rank-1 inner products. Grid indices are
1-based throughout, dimensions (axes) are 0-based.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .basis import BasisSet
from .errors import ValidationError

DENSE_LIMIT = 10**6


@dataclass(frozen=True)
class CpFactors:
    """X = sum_j U_0[:, j] o U_1[:, j] o ... o U_{d-1}[:, j]."""

    factors: tuple[np.ndarray, ...]

    def __post_init__(self):
        factors = tuple(np.asarray(u, dtype=float) for u in self.factors)
        if not factors:
            raise ValidationError("need at least one factor matrix")
        r = factors[0].shape[1] if factors[0].ndim == 2 else -1
        for k, u in enumerate(factors):
            if u.ndim != 2 or u.shape[1] != r or r < 1:
                raise ValidationError(f"factor {k} has shape {u.shape}, expected (q_k, {r})")
            if not np.all(np.isfinite(u)):
                raise ValidationError(f"factor {k} has non-finite entries")
        object.__setattr__(self, "factors", factors)

    @property
    def rank(self) -> int:
        return self.factors[0].shape[1]

    @property
    def d(self) -> int:
        return len(self.factors)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(u.shape[0] for u in self.factors)

    def replace(self, k: int, u: np.ndarray) -> "CpFactors":
        factors = list(self.factors)
        factors[k] = u
        return CpFactors(tuple(factors))

    @classmethod
    def zeros(cls, shape: Sequence[int], rank: int) -> "CpFactors":
        return cls(tuple(np.zeros((q, rank)) for q in shape))


@dataclass(frozen=True)
class SampleSet:
    """Observed entries: 1-based grid indices (n x d) and their values."""

    indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        idx = np.atleast_2d(np.asarray(self.indices, dtype=np.int64))
        vals = np.atleast_1d(np.asarray(self.values, dtype=float))
        if len(idx) < 1:
            raise ValidationError("sample set is empty")
        if vals.shape != (len(idx),):
            raise ValidationError(f"{len(idx)} indices but values of shape {vals.shape}")
        if idx.min() < 1:
            raise ValidationError("grid indices are 1-based")
        if len(np.unique(idx, axis=0)) != len(idx):
            raise ValidationError("duplicate grid indices in sample set")
        idx.setflags(write=False)
        vals.setflags(write=False)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", vals)

    def __len__(self):
        return len(self.values)

    @property
    def d(self) -> int:
        return self.indices.shape[1]

    def subset(self, rows) -> "SampleSet":
        return SampleSet(self.indices[rows], self.values[rows])

    def check_shape(self, shape: Sequence[int]):
        if self.d != len(shape):
            raise ValidationError(f"samples have d={self.d}, grid has d={len(shape)}")
        if np.any(self.indices > np.asarray(shape)):
            raise ValidationError("sample index out of grid bounds")


@dataclass(frozen=True)
class Rank1Tensor:
    vectors: tuple[np.ndarray, ...]

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(len(v) for v in self.vectors)


def _check_index(shape, idx) -> np.ndarray:
    idx = np.asarray(idx, dtype=np.int64)
    if idx.shape[-1] != len(shape):
        raise ValidationError(f"index has length {idx.shape[-1]}, expected {len(shape)}")
    if np.any(idx < 1) or np.any(idx > np.asarray(shape)):
        raise ValidationError(f"grid index out of bounds for shape {tuple(shape)}")
    return idx - 1


def sampled_rows(X: CpFactors, indices: np.ndarray) -> np.ndarray:
    """Gathered factor rows F[s, k, j] = U_k[i_{s,k} - 1, j]; indices are 1-based."""
    zero = _check_index(X.shape, indices)
    return np.stack([u[zero[:, k]] for k, u in enumerate(X.factors)], axis=1)


def cp_entries(X: CpFactors, indices) -> np.ndarray:
    """Entries of X at an (n, d) array of 1-based indices."""
    indices = np.atleast_2d(indices)
    return sampled_rows(X, indices).prod(axis=1).sum(axis=1)


def cp_entry(X: CpFactors, index: Sequence[int]) -> float:
    """Single entry: sum_j prod_k U_k[i_k, j]."""
    return float(cp_entries(X, np.asarray(index)[None, :])[0])


def residual_on_omega(X: CpFactors, S: SampleSet) -> np.ndarray:
    """cp_entry - observed, in the order of S. The data-fit cost is half
    its squared norm; entries outside S never enter."""
    return cp_entries(X, S.indices) - S.values


def rank1_inner(X: CpFactors, T: Rank1Tensor) -> float:
    """<X, v_1 o ... o v_d> = sum_j prod_k (U_k[:, j] . v_k), O(d q r)."""
    if T.shape != X.shape:
        raise ValidationError(f"rank-1 tensor shape {T.shape} != CP shape {X.shape}")
    prods = np.ones(X.rank)
    for u, v in zip(X.factors, T.vectors):
        prods *= np.asarray(v, dtype=float) @ u
    return float(prods.sum())


def cp_inner(X: CpFactors, Y: CpFactors) -> float:
    """<X, Y> from factors: sum_{j, j'} prod_k (u_k^j . y_k^{j'})."""
    if X.shape != Y.shape:
        raise ValidationError("shape mismatch")
    gram = np.ones((X.rank, Y.rank))
    for u, v in zip(X.factors, Y.factors):
        gram *= u.T @ v
    return float(gram.sum())


def basis_rank1(B: BasisSet, alpha) -> Rank1Tensor:
    """W_alpha as a rank-1 tensor: v_k = weighted_tables[k][:, alpha_k]."""
    alpha = np.asarray(alpha, dtype=np.int64)
    B.position(alpha)
    return Rank1Tensor(tuple(wt[:, a] for wt, a in zip(B.weighted_tables, alpha)))


def dense_materialize(X: CpFactors) -> np.ndarray:
    """Full array of X. Debug only; refuses grids above 10**6 entries."""
    if math.prod(X.shape) > DENSE_LIMIT:
        raise ValidationError(f"grid of {math.prod(X.shape)} entries is too large to materialize")
    letters = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXY"
    if X.d > len(letters):
        raise ValidationError("too many dimensions to materialize")
    subs = ",".join(f"{c}Z" for c in letters[: X.d])
    return np.einsum(f"{subs}->{letters[: X.d]}", *X.factors)


def coefficient_tables(X: CpFactors, B: BasisSet) -> list[np.ndarray]:
    """T_k = weighted_tables[k].T @ U_k, shape (p+1, r) per dimension."""
    if X.shape != B.space.shape:
        raise ValidationError(f"CP shape {X.shape} does not match basis grid {B.space.shape}")
    return [wt.T @ u for wt, u in zip(B.weighted_tables, X.factors)]


def gpc_coefficients(X: CpFactors, B: BasisSet) -> np.ndarray:
    """All <X, W_alpha> in basis order via sum_j prod_k T_k[alpha_k, j]."""
    tables = coefficient_tables(X, B)
    prods = np.ones((len(B), X.rank))
    for k, t in enumerate(tables):
        prods *= t[B.indices[:, k]]
    return prods.sum(axis=1)
