"""Batch workflow: sampling plans, simulator file exchange, synthetic
benchmarks and report bundles."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .basis import (BasisSet, Distribution, ParameterSpace, basis_size, build_basis,
                    grid_points, orthonormal_table)
from .errors import ValidationError
from .recovery import CvReport, FitResult
from .surrogate import GpcModel, density, moments, sparsity_report
from .tensor import CpFactors, SampleSet

# sample counts of Smolyak sparse grids for the two benchmark scales,
# quoted for comparison only
SPARSE_GRID_SAMPLES = {"mems46": 4512, "osc57": 6844}


def grid_size(space: ParameterSpace) -> int:
    return space.grid_size()


def format_grid_size(n: int, digits: int = 2) -> str:
    """Scientific rendering of an exact integer, e.g. 3**46 -> '8.9e21'."""
    if n <= 0:
        raise ValidationError("grid size must be positive")
    exp = len(str(n)) - 1
    shift = exp - (digits - 1)
    # round half up on exact integers
    mant = n if shift <= 0 else (2 * n + 10 ** shift) // (2 * 10 ** shift)
    if shift < 0:
        mant *= 10 ** -shift
    if len(str(mant)) > digits:
        mant //= 10
        exp += 1
    text = str(mant)
    return f"{text[0]}.{text[1:]}e{exp}" if digits > 1 else f"{text}e{exp}"


def space_hash(space: ParameterSpace) -> str:
    canonical = json.dumps(space.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class SamplePlan:
    """Grid points chosen for simulation; ``ids`` run 1..n."""

    space: ParameterSpace
    indices: np.ndarray
    points: np.ndarray
    space_ref: str = ""

    def __post_init__(self):
        if not self.space_ref:
            object.__setattr__(self, "space_ref", space_hash(self.space))

    def __len__(self):
        return len(self.indices)

    @property
    def ids(self) -> np.ndarray:
        return np.arange(1, len(self) + 1)

    def to_csv(self) -> str:
        d = self.space.d
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["sample_id"] + [f"i_{k + 1}" for k in range(d)]
                   + [f"xi_{k + 1}" for k in range(d)])
        for sid, idx, pt in zip(self.ids, self.indices, self.points):
            w.writerow([int(sid)] + [int(i) for i in idx] + [format(float(x), ".17g") for x in pt])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, space: ParameterSpace, text: str) -> "SamplePlan":
        rows = list(csv.reader(io.StringIO(text)))
        d = space.d
        if not rows or len(rows[0]) != 1 + 2 * d or rows[0][0] != "sample_id":
            raise ValidationError(f"plan header does not match a {d}-parameter space")
        idx = np.empty((len(rows) - 1, d), dtype=np.int64)
        for n, row in enumerate(rows[1:]):
            try:
                if int(row[0]) != n + 1:
                    raise ValidationError(f"plan row {n + 2}: sample ids must run 1..n")
                idx[n] = [int(v) for v in row[1:1 + d]]
            except (ValueError, IndexError):
                raise ValidationError(f"plan row {n + 2}: unparseable") from None
        pts = grid_points(space, idx)
        return cls(space, idx, pts)


def make_plan(space: ParameterSpace, n_samples: int, seed: int) -> SamplePlan:
    """Draw n_samples distinct grid indices uniformly without replacement.

    Indices are drawn per dimension and duplicates rejected, so the grid is
    never enumerated; when n_samples is a large fraction of a small grid the
    remaining points are taken from a seeded permutation instead.
    """
    total = space.grid_size()
    if not 1 <= n_samples <= total:
        raise ValidationError(f"n_samples={n_samples} must lie in [1, {total}]")
    rng = np.random.default_rng(seed)
    shape = np.asarray(space.shape)
    if total <= 4 * n_samples:
        flat = rng.permutation(total)[:n_samples]
        idx = np.column_stack(np.unravel_index(flat, tuple(shape), order="F")) + 1
    else:
        seen: set[tuple[int, ...]] = set()
        chosen = []
        while len(chosen) < n_samples:
            draws = rng.integers(1, shape + 1, size=(n_samples - len(chosen), len(shape)))
            for row in map(tuple, draws.tolist()):
                if row not in seen:
                    seen.add(row)
                    chosen.append(row)
        idx = np.array(chosen, dtype=np.int64)
    return SamplePlan(space, idx, grid_points(space, idx))


@dataclass(frozen=True)
class SyntheticModel:
    """y(xi) = sum_j prod_k g_{j,k}(xi_k) + noise.

    ``terms[j, k, a]`` are the coefficients of g_{j,k} in the orthonormal
    polynomials of parameter k, so the exact gPC coefficients follow by
    multiplying them out.
    """

    name: str
    space: ParameterSpace
    terms: np.ndarray
    noise: float = 0.0
    p: int = 2

    def __post_init__(self):
        terms = np.asarray(self.terms, dtype=float)
        if terms.ndim != 3 or terms.shape[1] != self.space.d or terms.shape[2] > self.p + 1:
            raise ValidationError("terms must have shape (rank, d, <= p+1)")
        deg = np.array([[np.max(np.flatnonzero(g), initial=0) for g in term] for term in terms])
        if np.any(deg.sum(axis=1) > self.p):
            raise ValidationError("each rank-1 term must have total degree <= p")
        object.__setattr__(self, "terms", terms)

    @property
    def rank(self) -> int:
        return len(self.terms)

    def __call__(self, xi) -> np.ndarray:
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        if xi.shape[1] != self.space.d:
            raise ValidationError(f"expected {self.space.d} parameters, got {xi.shape[1]}")
        deg = self.terms.shape[2] - 1
        out = np.zeros(len(xi))
        tables = [orthonormal_table(par.dist, deg, xi[:, k]) for k, par in enumerate(self.space.params)]
        for term in self.terms:
            prod = np.ones(len(xi))
            for k, g in enumerate(term):
                prod *= tables[k] @ g
            out += prod
        return out

    def cp_factors(self, B: BasisSet) -> CpFactors:
        """Exact CP factors of the noiseless output tensor on B's grid."""
        deg = self.terms.shape[2]
        return CpFactors(tuple(
            np.stack([B.node_tables[k][:, :deg] @ term[k] for term in self.terms], axis=1)
            for k in range(self.space.d)))

    def gpc(self) -> GpcModel:
        """Exact expansion coefficients (each term has degree <= p)."""
        coeffs: dict[tuple[int, ...], float] = {}
        for term in self.terms:
            parts = [[(a, c) for a, c in enumerate(g) if c != 0] for g in term]
            if any(not part for part in parts):
                continue
            # only non-constant factors branch
            active = [k for k, part in enumerate(parts) if part != [(0, part[0][1])]]
            base = math.prod(part[0][1] for k, part in enumerate(parts) if k not in active)

            def expand(pos, alpha, value):
                if pos == len(active):
                    key = tuple(alpha)
                    coeffs[key] = coeffs.get(key, 0.0) + value
                    return
                k = active[pos]
                for a, c in parts[k]:
                    alpha[k] = a
                    expand(pos + 1, alpha, value * c)
                alpha[k] = 0

            expand(0, [0] * self.space.d, base)
        return GpcModel.from_mapping(self.space, self.p, coeffs)


def _sparse_model(name: str, d: int, terms_by_rank: list[dict[int, list[float]]], noise=0.0) -> SyntheticModel:
    space = ParameterSpace.iid(d, Distribution.gaussian(0.0, 1.0), 3)
    terms = np.zeros((len(terms_by_rank), d, 3))
    terms[:, :, 0] = 1.0
    for j, factors in enumerate(terms_by_rank):
        for k, coeffs in factors.items():
            terms[j, k] = 0.0
            terms[j, k, :len(coeffs)] = coeffs
    return SyntheticModel(name, space, terms, noise)


def mems46() -> SyntheticModel:
    """46 standard-gaussian parameters, exact rank 2, six active gPC terms."""
    return _sparse_model("mems46", 46, [
        {2: [1.0, 0.1, 0.03]},
        {9: [0.06, 0.05], 26: [1.0, 0.8]},
    ])


def osc57() -> SyntheticModel:
    """57 standard-gaussian parameters, exact rank 2, six active gPC terms."""
    return _sparse_model("osc57", 57, [
        {4: [1.0, -0.12, 0.02]},
        {17: [0.08, 0.06], 40: [1.0, -0.7]},
    ])


BUNDLED_MODELS = {"mems46": (mems46, 300), "osc57": (osc57, 500)}


def bundled_model(name: str) -> SyntheticModel:
    try:
        return BUNDLED_MODELS[name][0]()
    except KeyError:
        raise ValidationError(f"unknown synthetic model {name!r}; choose from "
                              f"{sorted(BUNDLED_MODELS)}") from None


def run_synthetic(model: SyntheticModel, plan: SamplePlan, noise_seed: int = 0) -> SampleSet:
    """Evaluate the synthetic model at the plan's grid points."""
    if plan.space.d != model.space.d:
        raise ValidationError(f"plan has d={plan.space.d}, model has d={model.space.d}")
    y = model(plan.points)
    if model.noise:
        y = y + model.noise * np.random.default_rng(noise_seed).standard_normal(len(y))
    return SampleSet(plan.indices, y)


def results_csv(plan: SamplePlan, values) -> str:
    lines = ["sample_id,value"]
    lines += [f"{int(i)},{format(float(v), '.17g')}" for i, v in zip(plan.ids, values)]
    return "\n".join(lines) + "\n"


def ingest_results(plan: SamplePlan, results) -> SampleSet:
    """SampleSet from a ``sample_id,value`` CSV (path or text) covering
    every plan row exactly once."""
    text = Path(results).read_text() if isinstance(results, (str, os.PathLike)) \
        and not str(results).lstrip().startswith("sample_id") else str(results)
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != ["sample_id", "value"]:
        raise ValidationError("row 1: expected header 'sample_id,value'")
    values: dict[int, float] = {}
    for rownum, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 2:
            raise ValidationError(f"row {rownum}: expected 2 fields, got {len(row)}")
        try:
            sid, val = int(row[0]), float(row[1])
        except ValueError:
            raise ValidationError(f"row {rownum}: unparseable row {row!r}") from None
        if not math.isfinite(val):
            raise ValidationError(f"row {rownum}: non-finite value {row[1]!r}")
        if sid in values:
            raise ValidationError(f"row {rownum}: duplicate sample id {sid}")
        if not 1 <= sid <= len(plan):
            raise ValidationError(f"row {rownum}: sample id {sid} not in plan")
        values[sid] = val
    missing = [i for i in range(1, len(plan) + 1) if i not in values]
    if missing:
        raise ValidationError(f"missing sample id {missing[0]}"
                              + (f" (and {len(missing) - 1} more)" if len(missing) > 1 else ""))
    return SampleSet(plan.indices, np.array([values[i] for i in range(1, len(plan) + 1)]))


def atomic_write(path, text: str):
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@dataclass
class ReportBundle:
    out_dir: Path
    summary: dict
    files: dict[str, Path] = field(default_factory=dict)


def report(fit: FitResult, model: GpcModel, S: SampleSet, holdout: CvReport | None,
           out_dir, density_samples: int = 5000, seed: int = 0,
           sparsity_threshold: float | None = None) -> ReportBundle:
    """Write cost history, coefficients, sparsity, density, moments and a
    run summary into ``out_dir``."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create report directory {out}: {exc}") from exc
    files = {}

    def put(name, text):
        path = out / name
        try:
            atomic_write(path, text)
        except OSError as exc:
            raise OSError(f"failed writing {path}: {exc}") from exc
        files[name] = path

    put("cost_history.csv", "sweep,cost\n" + "".join(
        f"{i},{format(c, '.17g')}\n" for i, c in enumerate(fit.cost_history, start=1)))
    put("coefficients.json", model.to_json())

    mags = np.abs(model.coeffs)
    threshold = 1e-6 * mags.max() if sparsity_threshold is None else sparsity_threshold
    sp = sparsity_report(model, threshold)
    lines = ["rank,alpha,magnitude"]
    for rank, (row, mag) in enumerate(zip(sp.order, sp.magnitudes), start=1):
        alpha = " ".join(str(int(a)) for a in model.indices[row])
        lines.append(f"{rank},{alpha},{format(float(mag), '.17g')}")
    put("sparsity.csv", "\n".join(lines) + "\n")

    dens = density(model, density_samples, seed)
    if dens.point_mass is not None:
        put("density.csv", f"value,density\n{format(dens.point_mass, '.17g')},inf\n")
    else:
        put("density.csv", dens.to_csv())
        dens_hist, edges = dens.histogram()
        put("histogram.csv", "left,right,density\n" + "".join(
            f"{edges[i]!r},{edges[i + 1]!r},{dens_hist[i]!r}\n" for i in range(len(dens_hist))))

    mean, var = moments(model)
    put("moments.txt", f"mean {format(mean, '.17g')}\nvariance {format(var, '.17g')}\n"
                       f"stddev {format(math.sqrt(var), '.17g')}\n")

    total = model.space.grid_size()
    n_basis = basis_size(model.d, model.p)
    summary = {
        "samples": len(S),
        "grid_size": str(total),
        "grid_size_approx": format_grid_size(total),
        "basis_count": n_basis,
        "samples_per_basis": len(S) / n_basis,
        "kept_coefficients": sp.kept,
        "sparsity_threshold": threshold,
        "selected_lambda": holdout.selected[0] if holdout else None,
        "selected_rank": holdout.selected[1] if holdout else fit.factors.rank,
        "holdout_relative_error": (holdout.holdout_error if holdout and
                                   math.isfinite(holdout.holdout_error) else "n/a"),
        "sweeps": fit.sweeps_used,
        "converged": fit.converged,
        "final_cost": fit.cost_history[-1] if fit.cost_history else None,
    }
    put("summary.json", json.dumps(summary, indent=1) + "\n")
    return ReportBundle(out, summary, files)
