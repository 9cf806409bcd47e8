"""Command line front end.

    tensoruq plan   --config CFG --n-samples N --seed S --out-dir D
    tensoruq synth  --model mems46 --plan D/plan.csv --seed S --out-dir D
    tensoruq fit    --config CFG --plan D/plan.csv --results D/results.csv --out-dir D
    tensoruq eval   --coefficients D/coefficients.json --xi 0.1,0.2,...
    tensoruq report --fit-dir D --out-dir R

``--config`` is a JSON file holding the parameter space plus optional
``"p"``, ``"recovery"`` and ``"cv"`` sections, or the name of a bundled
synthetic model. Exit status is 0 on success, 1 on invalid input and 2 when
the optimizer did not converge.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, fields, replace
from pathlib import Path

import numpy as np

from .basis import ParameterSpace, build_basis
from .errors import NonConvergenceError, ValidationError
from .pipeline import (BUNDLED_MODELS, SamplePlan, atomic_write, bundled_model, ingest_results,
                       make_plan, report, results_csv, run_synthetic)
from .recovery import DEFAULT_LAMBDA_GRID, CvReport, FitResult, RecoveryConfig, cross_validate, fit
from .surrogate import GpcModel, evaluate, extract_coefficients
from .tensor import CpFactors, SampleSet

EXIT_OK, EXIT_INVALID, EXIT_NONCONVERGED = 0, 1, 2


def load_config(ref: str) -> dict:
    """Config dict from a JSON path or a bundled model name."""
    if ref in BUNDLED_MODELS:
        model = bundled_model(ref)
        return {**model.space.to_dict(), "p": model.p, "model": ref,
                "n_samples": BUNDLED_MODELS[ref][1]}
    try:
        cfg = json.loads(Path(ref).read_text())
    except OSError as exc:
        raise ValidationError(f"cannot read config {ref}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config {ref} is not valid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise ValidationError(f"config {ref} must be a JSON object")
    return cfg


def recovery_config(cfg: dict, args) -> RecoveryConfig:
    known = {f.name for f in fields(RecoveryConfig)}
    section = cfg.get("recovery", {})
    unknown = set(section) - known
    if unknown:
        raise ValidationError(f"unknown recovery settings {sorted(unknown)}")
    rc = RecoveryConfig(**section)
    if args.seed is not None:
        rc = replace(rc, init_seed=args.seed)
    return rc


def _space(cfg: dict) -> ParameterSpace:
    return ParameterSpace.from_dict(cfg)


def _read_plan(cfg: dict, path) -> SamplePlan:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ValidationError(f"cannot read plan {path}: {exc}") from None
    return SamplePlan.from_csv(_space(cfg), text)


def cmd_plan(args) -> int:
    cfg = load_config(args.config)
    n = args.n_samples or cfg.get("n_samples")
    if not n:
        raise ValidationError("--n-samples is required")
    plan = make_plan(_space(cfg), int(n), args.seed or 0)
    out = Path(args.out_dir) / "plan.csv"
    atomic_write(out, plan.to_csv())
    print(f"wrote {len(plan)} samples of a {plan.space.grid_size()}-point grid to {out}")
    return EXIT_OK


def cmd_synth(args) -> int:
    model = bundled_model(args.model)
    plan = _read_plan({**model.space.to_dict()}, args.plan)
    samples = run_synthetic(model, plan, args.seed or 0)
    out = Path(args.out_dir) / "results.csv"
    atomic_write(out, results_csv(plan, samples.values))
    print(f"wrote {len(samples)} synthetic results to {out}")
    return EXIT_OK


def _save_fit(out_dir: Path, fit_result: FitResult, cv: CvReport | None, model: GpcModel,
              samples: SampleSet, cfg: dict, rc: RecoveryConfig):
    out_dir.mkdir(parents=True, exist_ok=True)
    np.savez(out_dir / "factors.npz", *fit_result.factors.factors)
    atomic_write(out_dir / "coefficients.json", model.to_json())
    atomic_write(out_dir / "samples.json", json.dumps(
        {"indices": samples.indices.tolist(), "values": samples.values.tolist()}))
    record = {
        "config": {k: v for k, v in cfg.items() if k != "params"},
        "space": model.space.to_dict(),
        "recovery": asdict(rc),
        "cost_history": fit_result.cost_history,
        "converged": fit_result.converged,
        "sweeps_used": fit_result.sweeps_used,
        "cv": None if cv is None else {
            "candidates": [{"lambda": lam, "rank": r, "holdout_error": e}
                           for lam, r, e in cv.candidates],
            "selected": {"lambda": cv.selected[0], "rank": cv.selected[1]},
            "holdout_fraction": cv.holdout_fraction,
            "holdout_error": cv.holdout_error,
        },
    }
    atomic_write(out_dir / "fit.json", json.dumps(record, indent=1))


def _load_fit(fit_dir: Path):
    try:
        record = json.loads((fit_dir / "fit.json").read_text())
        model = GpcModel.from_json((fit_dir / "coefficients.json").read_text())
        samples_raw = json.loads((fit_dir / "samples.json").read_text())
        with np.load(fit_dir / "factors.npz") as npz:
            factors = CpFactors(tuple(npz[f"arr_{k}"] for k in range(len(npz.files))))
    except (OSError, KeyError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot load fit from {fit_dir}: {exc}") from None
    fit_result = FitResult(factors, record["cost_history"], record["converged"],
                           record["sweeps_used"])
    cv = None
    if record.get("cv"):
        c = record["cv"]
        cv = CvReport([(e["lambda"], e["rank"], e["holdout_error"]) for e in c["candidates"]],
                      (c["selected"]["lambda"], c["selected"]["rank"]),
                      c["holdout_fraction"], c["holdout_error"])
    samples = SampleSet(np.array(samples_raw["indices"]), np.array(samples_raw["values"]))
    return fit_result, cv, model, samples


def cmd_fit(args) -> int:
    cfg = load_config(args.config)
    space = _space(cfg)
    basis = build_basis(space, int(cfg.get("p", 2)))
    plan = _read_plan(cfg, args.plan)
    samples = ingest_results(plan, Path(args.results))
    rc = recovery_config(cfg, args)
    cv_cfg = cfg.get("cv", {})
    lambdas = args.lam or cv_cfg.get("lambda_grid", list(DEFAULT_LAMBDA_GRID))
    ranks = args.rank or cv_cfg.get("rank_grid", [rc.rank])
    if len(lambdas) == 1 and len(ranks) == 1 and not args.holdout:
        rc = replace(rc, lam=float(lambdas[0]), rank=int(ranks[0]))
        cv, result = None, fit(samples, basis, rc)
    else:
        cv = cross_validate(samples, basis, lambdas, ranks,
                            args.holdout or cv_cfg.get("holdout_fraction", 0.2),
                            args.seed or 0, base=rc)
        result = cv.fit
        rc = replace(rc, lam=cv.selected[0], rank=cv.selected[1])
    model = extract_coefficients(result.factors, basis)
    _save_fit(Path(args.out_dir), result, cv, model, samples, cfg, rc)
    msg = f"{result.sweeps_used} sweeps, final cost {result.cost_history[-1]:.6g}"
    if cv is not None:
        msg += (f"; selected lambda={cv.selected[0]:g} rank={cv.selected[1]}, "
                f"holdout error {cv.holdout_error:.3e}")
    print(msg)
    if not result.converged:
        raise NonConvergenceError(f"no convergence within {rc.max_sweeps} sweeps")
    return EXIT_OK


def cmd_eval(args) -> int:
    try:
        model = GpcModel.from_json(Path(args.coefficients).read_text())
    except OSError as exc:
        raise ValidationError(f"cannot read {args.coefficients}: {exc}") from None
    if args.xi:
        try:
            pts = np.array([[float(v) for v in args.xi.split(",")]])
        except ValueError:
            raise ValidationError(f"--xi must be comma separated numbers, got {args.xi!r}") from None
    elif args.points:
        try:
            pts = np.loadtxt(args.points, delimiter=",", ndmin=2)
        except (OSError, ValueError) as exc:
            raise ValidationError(f"cannot read points from {args.points}: {exc}") from None
    else:
        raise ValidationError("give --xi or --points")
    for value in np.atleast_1d(evaluate(model, pts)):
        print(format(float(value), ".17g"))
    return EXIT_OK


def cmd_report(args) -> int:
    fit_result, cv, model, samples = _load_fit(Path(args.fit_dir))
    bundle = report(fit_result, model, samples, cv, args.out_dir,
                    density_samples=args.density_samples, seed=args.seed or 0)
    print(json.dumps(bundle.summary, indent=1))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tensoruq", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", required=True, help="config JSON or bundled model name")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out-dir", default=".")

    p = sub.add_parser("plan", help="draw the sampling plan")
    common(p)
    p.add_argument("--n-samples", type=int)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("synth", help="evaluate a bundled synthetic model on a plan")
    common(p, config=False)
    p.add_argument("--model", required=True, choices=sorted(BUNDLED_MODELS))
    p.add_argument("--plan", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("fit", help="recover the tensor and extract the gPC model")
    common(p)
    p.add_argument("--plan", required=True)
    p.add_argument("--results", required=True)
    p.add_argument("--lambda", dest="lam", type=float, nargs="+")
    p.add_argument("--rank", type=int, nargs="+")
    p.add_argument("--holdout", type=float, default=None)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("eval", help="evaluate a fitted surrogate")
    p.add_argument("--coefficients", required=True)
    p.add_argument("--xi", help="comma separated parameter vector")
    p.add_argument("--points", help="CSV file with one parameter vector per row")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="write the report bundle of a fit")
    common(p, config=False)
    p.add_argument("--fit-dir", required=True)
    p.add_argument("--density-samples", type=int, default=5000)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValidationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NonConvergenceError as exc:
        print(f"warning: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED


if __name__ == "__main__":
    sys.exit(main())
