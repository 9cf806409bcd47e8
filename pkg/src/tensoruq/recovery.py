"""Low-rank plus l1-sparse tensor recovery by alternating minimization.

Minimizes

    1/2 sum_{i in Omega} (x_i - y_i)^2 + lam * sum_alpha |<X, W_alpha>|

over the CP factors of X. With all factors but U_k fixed, both terms are
linear in U_k, so each step is a generalized lasso in q_k * r unknowns,
solved by ADMM.
"""

from __future__ import annotations

import itertools
import logging
import warnings
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Sequence

import numpy as np
from numba import njit

from .basis import BasisSet
from .errors import ValidationError
from .tensor import (CpFactors, SampleSet, cp_entries, coefficient_tables,
                     gpc_coefficients, residual_on_omega, sampled_rows)

log = logging.getLogger(__name__)

RIDGE = 1e-10
RELAX = 1.6
DEFAULT_LAMBDA_GRID = (0.001, 0.01, 0.1, 1.0)


@dataclass(frozen=True)
class RecoveryConfig:
    rank: int = 2
    lam: float = 0.01
    max_sweeps: int = 200
    sweep_tol: float = 1e-6
    subproblem_tol: float = 1e-8
    subproblem_max_iter: int = 2000
    init_seed: int = 0
    admm_rho: float = 1.0

    def __post_init__(self):
        if self.rank < 1:
            raise ValidationError(f"rank must be >= 1, got {self.rank}")
        if self.lam < 0:
            raise ValidationError(f"lambda must be >= 0, got {self.lam}")
        if min(self.sweep_tol, self.subproblem_tol, self.admm_rho) <= 0:
            raise ValidationError("tolerances and rho must be positive")
        if self.max_sweeps < 1 or self.subproblem_max_iter < 1:
            raise ValidationError("iteration budgets must be positive")


@dataclass
class FitResult:
    factors: CpFactors
    cost_history: list[float]
    converged: bool
    sweeps_used: int
    initial_cost: float = float("nan")
    subproblem_failures: int = 0
    step_costs: list[float] = field(default_factory=list, repr=False)


@dataclass
class CvReport:
    candidates: list[tuple[float, int, float]]
    selected: tuple[float, int]
    holdout_fraction: float
    holdout_error: float
    fit: FitResult | None = None
    candidate_fits: list[FitResult] = field(default_factory=list, repr=False)


class SubproblemResult(NamedTuple):
    z: np.ndarray
    u: np.ndarray
    iterations: int
    converged: bool


def objective(X: CpFactors, S: SampleSet, B: BasisSet, lam: float) -> float:
    """Data-fit on the observed entries plus lam times the l1 norm of the
    gPC coefficients of X."""
    res = residual_on_omega(X, S)
    cost = 0.5 * float(res @ res)
    if lam:
        cost += lam * float(np.abs(gpc_coefficients(X, B)).sum())
    return cost


def _leave_one_out(prods: np.ndarray, k: int) -> np.ndarray:
    """Product over axis 1 of ``prods`` skipping position k."""
    return prods[:, :k].prod(axis=1) * prods[:, k + 1:].prod(axis=1)


def _assemble(k, u_shape, row_idx, loo_samples, coef_col, loo_coef):
    q, r = u_shape
    n = len(row_idx)
    A = np.zeros((n, q * r))
    # z[i + q*j] = U_k[i, j]
    cols = row_idx[:, None] + q * np.arange(r)[None, :]
    np.put_along_axis(A, cols, loo_samples, axis=1)
    # C[alpha, i + q*j] = What_k[i, alpha_k] * loo_coef[alpha, j]
    C = (coef_col[:, :, None] * loo_coef[:, None, :]).reshape(len(loo_coef), q * r, order="F")
    return A, C


def subproblem_operators(k: int, X: CpFactors, S: SampleSet, B: BasisSet):
    """Linear operators of the dimension-k subproblem.

    With ``z = U_k.ravel(order="F")`` the data term equals 1/2 ||A z - b||^2
    and the penalty equals lam * ||C z||_1. ``k`` is a 0-based axis.

    Returns
    -------
    A : (|Omega|, q_k r) array
    b : (|Omega|,) array of observations
    C : (n_basis, q_k r) array
    """
    if not 0 <= k < X.d:
        raise ValidationError(f"dimension {k} out of range [0, {X.d})")
    rows = sampled_rows(X, S.indices)
    tables = coefficient_tables(X, B)
    coef = np.stack([t[B.indices[:, m]] for m, t in enumerate(tables)], axis=1)
    A, C = _assemble(k, X.factors[k].shape, S.indices[:, k] - 1,
                     _leave_one_out(rows, k),
                     B.weighted_tables[k].T[B.indices[:, k]], _leave_one_out(coef, k))
    return A, np.array(S.values), C


def _soft(x, kappa):
    return np.sign(x) * np.maximum(np.abs(x) - kappa, 0.0)


def _sub_cost(A, b, C, lam, z):
    res = A @ z - b
    return 0.5 * float(res @ res) + lam * float(np.abs(C @ z).sum())


def solve_subproblem(A, b, C, lam, z0, tol=1e-8, max_iter=2000, rho=1.0, *, u0=None):
    """Minimize 1/2 ||A z - b||^2 + lam ||C z||_1 by ADMM on the split w = C z.

    ``u0`` optionally warm-starts the scaled dual. The returned iterate is
    never worse than ``z0`` in objective value; ``converged`` is False when
    the residual test was not met within ``max_iter``.
    """
    A = np.asarray(A, dtype=float)
    C = np.asarray(C, dtype=float)
    b = np.asarray(b, dtype=float)
    z0 = np.asarray(z0, dtype=float)
    n = A.shape[1]
    if A.shape[0] != b.shape[0] or C.shape[1] != n or z0.shape != (n,):
        raise ValidationError("non-conformable subproblem operators")
    if lam < 0:
        raise ValidationError(f"lambda must be >= 0, got {lam}")

    AtA = A.T @ A
    Atb = A.T @ b
    if lam == 0:
        z = np.linalg.solve(AtA + RIDGE * np.eye(n), Atb)
        u = np.zeros(C.shape[0])
        if _sub_cost(A, b, C, 0.0, z) > _sub_cost(A, b, C, 0.0, z0):
            z = z0
        return SubproblemResult(z, u, 1, True)

    # rho is relative to the operator scales so that it is unit-free
    c_norm = np.linalg.norm(C)
    if c_norm > 0 and np.any(A):
        rho = rho * np.linalg.norm(A) ** 2 / c_norm ** 2
    # u0 and the returned u are unscaled multipliers of the constraint C z = w
    u = np.zeros(C.shape[0]) if u0 is None else np.asarray(u0, dtype=float) / rho
    z, u, rho, it, converged = _admm(AtA, Atb, np.ascontiguousarray(C), float(lam),
                                     z0.copy(), u, float(rho),
                                     tol * (1.0 + np.linalg.norm(b)),
                                     tol * (1.0 + np.linalg.norm(Atb)), int(max_iter))
    if _sub_cost(A, b, C, lam, z) > _sub_cost(A, b, C, lam, z0):
        z = z0.copy()
    return SubproblemResult(z, rho * u, it, converged)


@njit(cache=True)
def _admm(AtA, Atb, C, lam, z, u, rho, thresh_primal, thresh_dual, max_iter):
    """Over-relaxed ADMM loop with residual balancing; returns the scaled
    dual and the final rho."""
    m, n = C.shape
    Ct = np.ascontiguousarray(C.T)
    CtC = Ct @ C
    ridge = RIDGE * np.eye(n)
    M_inv = np.linalg.inv(AtA + rho * CtC + ridge)
    Cz = C @ z
    w = np.empty(m)
    dw = np.empty(m)
    kappa = lam / rho
    for i in range(m):
        v = Cz[i] + u[i]
        w[i] = np.sign(v) * max(abs(v) - kappa, 0.0)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        z = M_inv @ (Atb + rho * (Ct @ (w - u)))
        Cz = C @ z
        kappa = lam / rho
        primal = 0.0
        for i in range(m):
            relaxed = RELAX * Cz[i] + (1.0 - RELAX) * w[i]
            v = relaxed + u[i]
            w_new = np.sign(v) * max(abs(v) - kappa, 0.0)
            dw[i] = w_new - w[i]
            w[i] = w_new
            u[i] += relaxed - w_new
            primal += (Cz[i] - w_new) ** 2
        r_primal = np.sqrt(primal) / thresh_primal
        r_dual = rho * np.sqrt(np.sum((Ct @ dw) ** 2)) / thresh_dual
        if r_primal <= 1.0 and r_dual <= 1.0:
            converged = True
            break
        # residual balancing
        if it % 10 == 0 and (r_primal > 10 * r_dual or r_dual > 10 * r_primal):
            factor = 2.0 if r_primal > r_dual else 0.5
            rho *= factor
            u /= factor
            M_inv = np.linalg.inv(AtA + rho * CtC + ridge)
    return z, u, rho, it, converged


def init_factors(shape, r: int, seed: int, S: SampleSet | None = None) -> CpFactors:
    """Seeded U[0.5, 1.5] factors, scaled so mean |x| over S equals mean |y|.

    ``shape`` is a grid shape or anything with a ``.shape`` attribute.
    """
    if r < 1:
        raise ValidationError(f"rank must be >= 1, got {r}")
    shape = tuple(getattr(shape, "shape", shape))
    rng = np.random.default_rng(seed)
    factors = [rng.uniform(0.5, 1.5, size=(q, r)) for q in shape]
    X = CpFactors(tuple(factors))
    if S is not None:
        target = float(np.mean(np.abs(S.values)))
        current = float(np.mean(np.abs(cp_entries(X, S.indices))))
        scale = (target / current) ** (1.0 / len(shape))
        X = CpFactors(tuple(u * scale for u in factors))
    return X


class _SweepState:
    """Factors plus their gathered sample rows and coefficient tables, kept
    in sync so that one dimension can be swapped in O(n r + |B| r)."""

    def __init__(self, factors, S: SampleSet, B: BasisSet, lam: float):
        self.zero_idx = S.indices - 1
        self.b = np.array(S.values)
        self.alpha = B.indices
        self.wt = B.weighted_tables
        self.lam = lam
        self.coef_cols = [w.T[self.alpha[:, k]] for k, w in enumerate(self.wt)]
        self.load(factors)

    def load(self, factors):
        self.factors = [np.array(u, dtype=float) for u in factors]
        self.rows = np.stack([u[self.zero_idx[:, k]] for k, u in enumerate(self.factors)], axis=1)
        self.coef = np.stack([(w.T @ u)[self.alpha[:, k]]
                              for k, (w, u) in enumerate(zip(self.wt, self.factors))], axis=1)

    def set(self, k, u):
        self.factors[k] = u
        self.rows[:, k] = u[self.zero_idx[:, k]]
        self.coef[:, k] = (self.wt[k].T @ u)[self.alpha[:, k]]

    def operators(self, k):
        return _assemble(k, self.factors[k].shape, self.zero_idx[:, k],
                         _leave_one_out(self.rows, k), self.coef_cols[k],
                         _leave_one_out(self.coef, k))

    def cost(self) -> float:
        res = self.rows.prod(axis=1).sum(axis=1) - self.b
        cost = 0.5 * float(res @ res)
        if self.lam:
            cost += self.lam * float(np.abs(self.coef.prod(axis=1).sum(axis=1)).sum())
        return cost


def fit(S: SampleSet, B: BasisSet, cfg: RecoveryConfig, init: CpFactors | None = None) -> FitResult:
    """Alternating minimization over dimensions 0..d-1, repeated in sweeps.

    Each sweep solves the convex subproblem of every dimension in turn.
    Stops when the relative change of the objective over one sweep drops
    below ``cfg.sweep_tol`` or after ``cfg.max_sweeps`` sweeps.
    """
    shape = B.space.shape
    if len(S) < 1:
        raise ValidationError("empty sample set")
    S.check_shape(shape)
    r = cfg.rank
    if len(S) < r * max(shape):
        warnings.warn(f"only {len(S)} samples for rank {r}; recovery is likely ill-posed",
                      stacklevel=2)
    X = init if init is not None else init_factors(shape, r, cfg.init_seed, S)
    if X.shape != shape or X.rank != r:
        raise ValidationError("initial factors do not match grid and rank")

    state = _SweepState(X.factors, S, B, cfg.lam)
    cost = initial = state.cost()
    ysq = float(state.b @ state.b)
    history: list[float] = []
    steps: list[float] = []
    failures = 0
    converged = False
    sweep = 0
    for sweep in range(1, cfg.max_sweeps + 1):
        prev = cost
        for k in range(len(shape)):
            A, C = state.operators(k)
            res = solve_subproblem(A, state.b, C, cfg.lam, state.factors[k].ravel(order="F"),
                                   cfg.subproblem_tol, cfg.subproblem_max_iter, cfg.admm_rho)
            failures += not res.converged
            state.set(k, res.z.reshape((shape[k], r), order="F"))
            steps.append(state.cost())
        cost = steps[-1]
        history.append(cost)
        change = abs(prev - cost) / max(abs(prev), np.finfo(float).tiny)
        log.debug("sweep %d cost %.6e rel change %.3e", sweep, cost, change)
        if change < cfg.sweep_tol or cost <= 1e-30 * max(ysq, 1.0):
            converged = True
            break
    if failures:
        log.info("%d subproblems hit the ADMM iteration cap", failures)
    return FitResult(CpFactors(tuple(state.factors)), history, converged, sweep, initial,
                     failures, steps)


def holdout_error(X: CpFactors, S: SampleSet) -> float:
    """||x - y|| / ||y|| over the entries of S."""
    pred = cp_entries(X, S.indices)
    denom = np.linalg.norm(S.values)
    num = np.linalg.norm(pred - S.values)
    if denom == 0:
        return 0.0 if num == 0 else float("inf")
    return float(num / denom)


def split_holdout(S: SampleSet, holdout_fraction: float, seed: int):
    """Seeded shuffle split into (train, holdout)."""
    if not 0 < holdout_fraction < 0.5:
        raise ValidationError(f"holdout fraction must be in (0, 0.5), got {holdout_fraction}")
    perm = np.random.default_rng(seed).permutation(len(S))
    n_hold = int(round(holdout_fraction * len(S)))
    if n_hold < 1:
        raise ValidationError("holdout is empty after split")
    if n_hold >= len(S):
        raise ValidationError("training set is empty after split")
    return S.subset(np.sort(perm[n_hold:])), S.subset(np.sort(perm[:n_hold]))


def cross_validate(S: SampleSet, B: BasisSet, lambda_grid: Sequence[float] = DEFAULT_LAMBDA_GRID,
                   rank_grid: Sequence[int] = (2,), holdout_fraction: float = 0.2, seed: int = 0,
                   base: RecoveryConfig | None = None, refit: bool = True) -> CvReport:
    """Holdout selection of (lambda, rank), then a refit on all of S.

    Every candidate starts from its own seeded initial guess. Ties go to
    the smaller rank, then the smaller lambda.
    """
    if not len(lambda_grid) or not len(rank_grid):
        raise ValidationError("candidate grids must be non-empty")
    base = base or RecoveryConfig()
    train, hold = split_holdout(S, holdout_fraction, seed)
    candidates = []
    fits = []
    for r, lam in itertools.product(sorted(rank_grid), sorted(lambda_grid)):
        cfg = replace(base, rank=int(r), lam=float(lam))
        result = fit(train, B, cfg)
        fits.append(result)
        err = holdout_error(result.factors, hold)
        log.info("cv rank=%d lambda=%g holdout error %.3e (%d sweeps)", r, lam, err,
                 result.sweeps_used)
        candidates.append((float(lam), int(r), err))
    best = min(candidates, key=lambda c: (c[2], c[1], c[0]))
    report = CvReport(candidates, (best[0], best[1]), holdout_fraction, best[2],
                      candidate_fits=fits)
    if refit:
        report.fit = fit(S, B, replace(base, rank=best[1], lam=best[0]))
    return report
