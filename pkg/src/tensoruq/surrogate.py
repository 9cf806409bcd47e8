"""gPC surrogate built from recovered CP factors."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.stats import gaussian_kde

from .basis import BasisSet, ParameterSpace, enumerate_multi_indices, orthonormal_table
from .errors import ValidationError
from .tensor import CpFactors, gpc_coefficients


@dataclass(frozen=True)
class GpcModel:
    """Coefficients of a total-degree-p expansion, in graded-lex order of
    ``indices``."""

    space: ParameterSpace
    p: int
    indices: np.ndarray
    coeffs: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        c = np.asarray(self.coeffs, dtype=float)
        expected = enumerate_multi_indices(self.space.d, self.p)
        if idx.shape != expected.shape or not np.array_equal(idx, expected):
            raise ValidationError("model indices must be the full graded-lex basis")
        if c.shape != (len(idx),):
            raise ValidationError(f"expected {len(idx)} coefficients, got {c.shape}")
        if not np.all(np.isfinite(c)):
            raise ValidationError("coefficients must be finite")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "coeffs", c)

    @property
    def d(self) -> int:
        return self.space.d

    def coefficient(self, alpha) -> float:
        hits = np.flatnonzero((self.indices == np.asarray(alpha)).all(axis=1))
        if not len(hits):
            raise ValidationError(f"multi-index {tuple(alpha)} not in model")
        return float(self.coeffs[hits[0]])

    def as_dict(self) -> dict[tuple[int, ...], float]:
        return {tuple(int(a) for a in alpha): float(c)
                for alpha, c in zip(self.indices, self.coeffs)}

    @classmethod
    def from_mapping(cls, space: ParameterSpace, p: int, coeffs: dict) -> "GpcModel":
        """Model from a sparse {alpha: c} mapping; missing entries are zero."""
        idx = enumerate_multi_indices(space.d, p)
        c = np.zeros(len(idx))
        lookup = {tuple(a): row for row, a in enumerate(idx.tolist())}
        for alpha, value in coeffs.items():
            try:
                c[lookup[tuple(alpha)]] = value
            except KeyError:
                raise ValidationError(f"multi-index {tuple(alpha)} not in basis") from None
        return cls(space, p, idx, c)

    def to_dict(self) -> dict:
        return {"space": self.space.to_dict(), "p": self.p,
                "coeffs": [{"alpha": alpha.tolist(), "c": float(c)}
                           for alpha, c in zip(self.indices, self.coeffs)]}

    @classmethod
    def from_dict(cls, d: dict) -> "GpcModel":
        try:
            space = ParameterSpace.from_dict(d["space"])
            entries = d["coeffs"]
            idx = np.array([e["alpha"] for e in entries], dtype=np.int64).reshape(len(entries), -1)
            c = np.array([e["c"] for e in entries], dtype=float)
            return cls(space, int(d["p"]), idx, c)
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed gPC model: {exc}") from None

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_json(cls, text: str) -> "GpcModel":
        return cls.from_dict(json.loads(text))


def extract_coefficients(X: CpFactors, B: BasisSet) -> GpcModel:
    """c_alpha = <X, W_alpha> for the whole basis, from per-dimension
    (p+1) x r tables; the grid is never expanded."""
    return GpcModel(B.space, B.p, np.array(B.indices), gpc_coefficients(X, B))


def _sparse_terms(indices: np.ndarray, p: int):
    """Each multi-index as at most p (dimension, degree) pairs, padded with
    (0, 0) which evaluates to psi_0 = 1."""
    n = len(indices)
    width = max(p, 1)
    dims = np.zeros((n, width), dtype=np.int64)
    degs = np.zeros((n, width), dtype=np.int64)
    rows, cols = np.nonzero(indices)
    slot = np.zeros(n, dtype=np.int64)
    for row, col in zip(rows, cols):
        dims[row, slot[row]] = col
        degs[row, slot[row]] = indices[row, col]
        slot[row] += 1
    return dims, degs


def evaluate(model: GpcModel, xi, chunk: int = 4096):
    """Surrogate value at one parameter vector (returns float) or at each row
    of an (n, d) array (returns an array)."""
    xi = np.asarray(xi, dtype=float)
    single = xi.ndim == 1
    pts = np.atleast_2d(xi)
    if pts.shape[1] != model.d:
        raise ValidationError(f"expected {model.d} parameters, got {pts.shape[1]}")
    if not np.all(np.isfinite(pts)):
        raise ValidationError("parameters must be finite")
    keep = np.flatnonzero(model.coeffs)
    idx, c = model.indices[keep], model.coeffs[keep]
    dims, degs = _sparse_terms(idx, model.p)
    out = np.empty(len(pts))
    for start in range(0, len(pts), chunk):
        block = pts[start:start + chunk]
        # tables[n, k, a] = psi_a(xi_k) for each point
        tables = np.stack([orthonormal_table(par.dist, model.p, block[:, k])
                           for k, par in enumerate(model.space.params)], axis=1)
        terms = tables[:, dims, degs].prod(axis=2)
        out[start:start + chunk] = terms @ c
    return float(out[0]) if single else out


def moments(model: GpcModel) -> tuple[float, float]:
    """(mean, variance): c_0 and the sum of the other squared coefficients."""
    zero = ~model.indices.any(axis=1)
    return float(model.coeffs[zero].sum()), float(np.sum(model.coeffs[~zero] ** 2))


@dataclass(frozen=True)
class SparsityReport:
    kept: int
    total: int
    magnitudes: np.ndarray
    order: np.ndarray


def sparsity_report(model: GpcModel, threshold: float = 0.0) -> SparsityReport:
    """Count of |c_alpha| > threshold and all magnitudes sorted descending;
    ``order`` gives the basis rows in that sorted order."""
    if threshold < 0:
        raise ValidationError("threshold must be >= 0")
    mags = np.abs(model.coeffs)
    order = np.argsort(-mags, kind="stable")
    return SparsityReport(int(np.sum(mags > threshold)), len(mags), mags[order], order)


@dataclass(frozen=True)
class DensityEstimate:
    grid: np.ndarray
    density: np.ndarray
    sample_count: int
    bandwidth: float
    point_mass: float | None = None
    samples: np.ndarray | None = None

    def histogram(self, bins: int = 50):
        """(density, edges) of the underlying samples, for auditing the KDE."""
        if self.samples is None:
            raise ValidationError("no samples retained")
        return np.histogram(self.samples, bins=bins, density=True)

    def to_csv(self) -> str:
        lines = ["value,density"]
        lines += [f"{x!r},{f!r}" for x, f in zip(self.grid.tolist(), self.density.tolist())]
        return "\n".join(lines) + "\n"


def sample_outputs(model: GpcModel, n_samples: int, seed: int) -> np.ndarray:
    """Surrogate outputs at n_samples seeded draws from the joint distribution."""
    rng = np.random.default_rng(seed)
    return evaluate(model, model.space.sample(rng, n_samples))


def density(model: GpcModel, n_samples: int = 5000, seed: int = 0,
            grid_size: int = 512) -> DensityEstimate:
    """Gaussian KDE of the surrogate output with Silverman's bandwidth.

    A constant surrogate yields an estimate with ``point_mass`` set to the
    constant and no density curve.
    """
    if n_samples < 100:
        raise ValidationError("need at least 100 samples")
    if grid_size < 2:
        raise ValidationError("grid_size must be >= 2")
    y = sample_outputs(model, n_samples, seed)
    spread = np.std(y)
    if spread <= 1e-12 * max(1.0, abs(float(np.mean(y)))):
        return DensityEstimate(np.array([float(np.mean(y))]), np.array([1.0]), n_samples, 0.0,
                               point_mass=float(np.mean(y)), samples=y)
    kde = gaussian_kde(y, bw_method="silverman")
    h = float(np.sqrt(kde.covariance[0, 0]))
    grid = np.linspace(y.min() - 3 * h, y.max() + 3 * h, grid_size)
    return DensityEstimate(grid, kde(grid), n_samples, h, samples=y)
