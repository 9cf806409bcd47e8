import json

import numpy as np
import pytest

from tensoruq.basis import Distribution, Parameter, ParameterSpace
from tensoruq.cli import EXIT_INVALID, EXIT_NONCONVERGED, EXIT_OK, main
from tensoruq.pipeline import make_plan, results_csv


@pytest.fixture
def workdir(tmp_path):
    """Small 4-parameter problem with a rank-1 response, planned and simulated."""
    space = ParameterSpace((Parameter("a", Distribution.gaussian(1.0, 0.1), 3),
                            Parameter("b", Distribution.uniform(0.0, 2.0), 3),
                            Parameter("c", Distribution.gaussian(), 3),
                            Parameter("e", Distribution.gaussian(), 3)))
    cfg = {**space.to_dict(), "p": 2,
           "recovery": {"rank": 1, "max_sweeps": 50},
           "cv": {"lambda_grid": [0.001, 0.01], "rank_grid": [1], "holdout_fraction": 0.2}}
    (tmp_path / "cfg.json").write_text(json.dumps(cfg))
    assert main(["plan", "--config", str(tmp_path / "cfg.json"), "--n-samples", "60",
                 "--seed", "3", "--out-dir", str(tmp_path)]) == EXIT_OK
    plan_text = (tmp_path / "plan.csv").read_text()
    from tensoruq.pipeline import SamplePlan
    plan = SamplePlan.from_csv(space, plan_text)
    x = plan.points
    y = x[:, 0] * (1 + 0.2 * x[:, 1]) * (1 + 0.1 * x[:, 2])
    (tmp_path / "results.csv").write_text(results_csv(plan, y))
    return tmp_path


def test_plan_fit_eval_report(workdir, capsys):
    cfg = str(workdir / "cfg.json")
    rc = main(["fit", "--config", cfg, "--plan", str(workdir / "plan.csv"),
               "--results", str(workdir / "results.csv"), "--out-dir", str(workdir / "fit")])
    assert rc == EXIT_OK
    record = json.loads((workdir / "fit" / "fit.json").read_text())
    assert record["cv"]["selected"]["rank"] == 1
    assert len(record["cv"]["candidates"]) == 2

    capsys.readouterr()
    assert main(["eval", "--coefficients", str(workdir / "fit" / "coefficients.json"),
                 "--xi", "1.0,1.0,0.0,0.0"]) == EXIT_OK
    value = float(capsys.readouterr().out)
    assert value == pytest.approx(1.2, rel=1e-2)

    assert main(["report", "--fit-dir", str(workdir / "fit"), "--out-dir",
                 str(workdir / "rep"), "--density-samples", "500"]) == EXIT_OK
    summary = json.loads((workdir / "rep" / "summary.json").read_text())
    assert summary["samples"] == 60 and summary["basis_count"] == 15
    assert summary["grid_size"] == "81"


def test_single_lambda_skips_cv(workdir):
    rc = main(["fit", "--config", str(workdir / "cfg.json"), "--plan", str(workdir / "plan.csv"),
               "--results", str(workdir / "results.csv"), "--lambda", "0.01", "--rank", "1",
               "--out-dir", str(workdir / "fit1")])
    assert rc == EXIT_OK
    record = json.loads((workdir / "fit1" / "fit.json").read_text())
    assert record["cv"] is None and record["recovery"]["lam"] == 0.01


def test_non_convergence_exit_code(workdir):
    cfg = json.loads((workdir / "cfg.json").read_text())
    cfg["recovery"] = {"rank": 1, "max_sweeps": 1, "sweep_tol": 1e-15}
    (workdir / "tight.json").write_text(json.dumps(cfg))
    rc = main(["fit", "--config", str(workdir / "tight.json"), "--plan",
               str(workdir / "plan.csv"), "--results", str(workdir / "results.csv"),
               "--lambda", "0.01", "--out-dir", str(workdir / "fit2")])
    assert rc == EXIT_NONCONVERGED
    assert (workdir / "fit2" / "coefficients.json").exists()


@pytest.mark.parametrize("edit", [
    lambda t: t.replace("\n2,", "\n2,nan-ish,"),
    lambda t: t.replace("\n2,", "\n1,"),
    lambda t: "\n".join(l for l in t.splitlines() if not l.startswith("5,")) + "\n",
])
def test_bad_results_exit_1(workdir, edit, capsys):
    bad = workdir / "bad.csv"
    bad.write_text(edit((workdir / "results.csv").read_text()))
    rc = main(["fit", "--config", str(workdir / "cfg.json"), "--plan", str(workdir / "plan.csv"),
               "--results", str(bad), "--out-dir", str(workdir / "x")])
    assert rc == EXIT_INVALID
    err = capsys.readouterr().err
    assert "row" in err or "missing sample id 5" in err


def test_validation_errors_exit_1(tmp_path, capsys):
    assert main(["plan", "--config", str(tmp_path / "nope.json"), "--n-samples", "3"]) \
        == EXIT_INVALID
    (tmp_path / "bad.json").write_text("{not json")
    assert main(["plan", "--config", str(tmp_path / "bad.json"), "--n-samples", "3"]) \
        == EXIT_INVALID
    (tmp_path / "big.json").write_text(json.dumps(
        ParameterSpace.iid(2, Distribution.gaussian(), 3).to_dict()))
    assert main(["plan", "--config", str(tmp_path / "big.json"), "--n-samples", "10",
                 "--out-dir", str(tmp_path)]) == EXIT_INVALID
    (tmp_path / "extra.json").write_text(json.dumps(
        {**ParameterSpace.iid(2, Distribution.gaussian(), 3).to_dict(),
         "recovery": {"bogus": 1}}))
    assert main(["fit", "--config", str(tmp_path / "extra.json"), "--plan", "p", "--results",
                 "r"]) == EXIT_INVALID
    assert main(["eval", "--coefficients", str(tmp_path / "none.json"), "--xi", "1"]) \
        == EXIT_INVALID


def test_bundled_model_plan_and_synth(tmp_path):
    assert main(["plan", "--config", "mems46", "--seed", "1", "--out-dir", str(tmp_path)]) \
        == EXIT_OK
    lines = (tmp_path / "plan.csv").read_text().splitlines()
    assert len(lines) == 301 and lines[0].startswith("sample_id,i_1,")
    assert main(["synth", "--model", "mems46", "--plan", str(tmp_path / "plan.csv"),
                 "--out-dir", str(tmp_path)]) == EXIT_OK
    res = (tmp_path / "results.csv").read_text().splitlines()
    assert res[0] == "sample_id,value" and len(res) == 301


def test_plan_is_seeded(tmp_path):
    for sub in ("a", "b"):
        main(["plan", "--config", "osc57", "--seed", "4", "--n-samples", "50",
              "--out-dir", str(tmp_path / sub)])
    assert (tmp_path / "a" / "plan.csv").read_text() == (tmp_path / "b" / "plan.csv").read_text()


def test_eval_points_file(workdir, capsys):
    main(["fit", "--config", str(workdir / "cfg.json"), "--plan", str(workdir / "plan.csv"),
          "--results", str(workdir / "results.csv"), "--lambda", "0.001",
          "--out-dir", str(workdir / "f")])
    pts = workdir / "pts.csv"
    np.savetxt(pts, [[1.0, 1.0, 0.0, 0.0], [1.1, 0.5, 1.0, -1.0]], delimiter=",")
    capsys.readouterr()
    assert main(["eval", "--coefficients", str(workdir / "f" / "coefficients.json"),
                 "--points", str(pts)]) == EXIT_OK
    assert len(capsys.readouterr().out.split()) == 2
