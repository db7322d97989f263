import json

import pandas as pd
import pytest
from click.testing import CliRunner

from replen.cli import cli

TINY = "tests/replen/data/tiny.json"
SDP_EXAMPLE = "data/instances/sdp_example.json"


@pytest.fixture
def runner():
    return CliRunner()


def invoke(runner, *args):
    return runner.invoke(cli, [str(a) for a in args], catch_exceptions=False)


def test_solve(runner, tmp_path):
    out = tmp_path / "plan.json"
    result = invoke(runner, "solve", TINY, "--segments", 4, "--out", out)
    assert result.exit_code == 0, result.output
    plan = json.loads(out.read_text())
    assert plan["kind"] == "rs"
    assert plan["group_periods"][0] == 1


def test_solve_stationary(runner, tmp_path):
    out = tmp_path / "plan.json"
    result = invoke(
        runner, "solve-stationary", "tests/replen/data/stationary.json", "--out", out
    )
    assert result.exit_code == 0, result.output
    assert json.loads(out.read_text())["kind"] == "stationary"


def test_exact_mode_is_limited_to_short_horizons(runner, tmp_path):
    long = tmp_path / "long.json"
    long.write_text(
        json.dumps(
            {
                "horizon": 16,
                "group_cost": 50,
                "initial_inventory": [0],
                "items": [
                    {"fixed_cost": 5, "holding": 1, "penalty": 10, "lead_time": 0,
                     "rates": [10] * 16}
                ],
            }
        )
    )
    result = invoke(runner, "solve", long, "--segments", 3)
    assert result.exit_code == 2
    heuristic = invoke(runner, "solve", long, "--segments", 3, "--mode", "heuristic",
                       "--out", tmp_path / "plan.json")
    assert heuristic.exit_code == 0, heuristic.output


def test_sdp(runner, tmp_path):
    out, table = tmp_path / "sdp.json", tmp_path / "values.csv"
    result = invoke(runner, "sdp", SDP_EXAMPLE, "--table", table, "--out", out)
    assert result.exit_code == 0, result.output
    assert json.loads(out.read_text())["cost"] == pytest.approx(69.6232, abs=1e-3)
    assert len(pd.read_csv(table)) > 0


def test_sdp_surface_needs_ranges(runner, tmp_path):
    result = invoke(runner, "sdp", SDP_EXAMPLE, "--surface", tmp_path / "surface.csv")
    assert result.exit_code == 2


def test_sigma_maps(runner, tmp_path):
    out = tmp_path / "sigma.csv"
    args = [SDP_EXAMPLE, "--range", "0:1", "--range", "0:1", "--out", out]
    result = invoke(runner, "sdp-sigma-map", *args)
    assert result.exit_code == 0, result.output
    frame = pd.read_csv(out)
    assert len(frame) == 4
    assert bool(frame.loc[(frame["I1"] == 0) & (frame["I2"] == 0), "in_sigma"].iloc[0])
    result = invoke(runner, "sigma-map", *args)
    assert result.exit_code == 0, result.output


def test_bad_range(runner):
    result = invoke(runner, "sigma-map", SDP_EXAMPLE, "--range", "0-20", "--range", "0:20")
    assert result.exit_code == 2
    assert "is not a range" in result.output


def test_export_and_check(runner, tmp_path):
    model, solution = tmp_path / "tiny.mps", tmp_path / "tiny.sol"
    result = invoke(
        runner, "export-model", TINY, "--segments", 4, "--solve", "--solution", solution,
        "--out", model,
    )
    assert result.exit_code == 0, result.output
    assert model.read_text().startswith("NAME")
    report = tmp_path / "check.json"
    result = invoke(runner, "check-solution", model, solution, "--out", report)
    assert result.exit_code == 0, result.output
    assert json.loads(report.read_text())["feasible"]

    broken = tmp_path / "broken.sol"
    broken.write_text(
        "".join(
            "d_1=0.5\n" if line.startswith("d_1=") else line + "\n"
            for line in solution.read_text().splitlines()
        )
    )
    result = invoke(runner, "check-solution", model, broken, "--out", report)
    assert result.exit_code == 1
    assert not json.loads(report.read_text())["feasible"]


def test_export_lp(runner, tmp_path):
    model = tmp_path / "tiny.lp"
    result = invoke(
        runner, "export-model", TINY, "--segments", 3, "--format", "lp", "--out", model
    )
    assert result.exit_code == 0, result.output
    assert "Minimize" in model.read_text()


def test_simulate(runner, tmp_path):
    plan, out = tmp_path / "plan.json", tmp_path / "sim.json"
    invoke(runner, "solve", TINY, "--segments", 4, "--out", plan)
    result = invoke(runner, "simulate", TINY, "--plan", plan, "--reps", 500, "--out", out)
    assert result.exit_code == 0, result.output
    report = json.loads(out.read_text())
    assert report["replications"] == 500
    assert report["mean_total"] > 0
    result = invoke(runner, "simulate", SDP_EXAMPLE, "--sdp", "--reps", 500, "--out", out)
    assert result.exit_code == 0, result.output


def test_simulate_needs_one_source(runner, tmp_path):
    assert invoke(runner, "simulate", TINY).exit_code == 2
    plan = tmp_path / "plan.json"
    invoke(runner, "solve", TINY, "--segments", 4, "--out", plan)
    assert invoke(runner, "simulate", TINY, "--plan", plan, "--sdp").exit_code == 2


def test_compare(runner, tmp_path):
    out = tmp_path / "gaps.csv"
    result = invoke(
        runner, "compare", "--gaps", "data/literature/atkins_iyogun_gaps.csv", "--out", out
    )
    assert result.exit_code == 0, result.output
    table = pd.read_csv(out).set_index("instance_key")
    assert table.at["K50-h2-b30", "QS"] == pytest.approx(4.38, abs=0.005)
    assert invoke(runner, "compare").exit_code == 2


def test_bench(runner, tmp_path):
    out = tmp_path / "bench.csv"
    result = runner.invoke(
        cli,
        ["bench", "--suite", "tests/replen/data/suite.json", "--out", str(out)],
        env={"REPLEN_REPLICATIONS": "1000"},
    )
    assert result.exit_code == 0, result.output
    assert set(pd.read_csv(out)["status"]) == {"pass"}
    result = invoke(runner, "bench", "--suite", "tests/replen/data/suite.json", "--env", "strict")
    assert result.exit_code == 1
