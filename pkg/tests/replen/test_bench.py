import io
import json

import pytest

from replen.bench import (
    BenchRunner,
    EntryState,
    ExpectStep,
    Storage,
    build_step,
    load_suite,
    parse_suite,
    run_bench,
)
from replen.config import Settings
from replen.errors import ConfigError, StepAssertionError, StepRequirementError
from replen.ui import UI

SETTINGS = Settings(replications=1000)


def quiet() -> UI:
    return UI(file=io.StringIO())


def state(results=None, params=None) -> EntryState:
    s = EntryState("test", Storage(params or {}), SETTINGS)
    s.results.update(results or {})
    return s


def test_storage_nested_items():
    storage = Storage({"data_dir": "data"})
    storage["entries.first"] = {"cost": 1.5}
    assert storage["params"] == {"data_dir": "data"}
    assert storage.as_dict()["entries"]["first"]["cost"] == 1.5
    assert "entries" in storage
    assert storage["missing"] is None


def test_build_step_errors():
    with pytest.raises(ConfigError):
        build_step({"path": "x"})
    with pytest.raises(ConfigError, match="unknown step"):
        build_step({"step": "bake"})
    with pytest.raises(ConfigError, match="invalid arguments"):
        build_step({"step": "sdp", "colour": "red"})
    with pytest.raises(ConfigError):
        build_step({"step": "simulate", "target": "forecast"})
    with pytest.raises(ConfigError):
        build_step({"step": "load_instance"})


@pytest.mark.parametrize(
    "spec",
    [
        {"path": "a", "provenance": "GUESS", "equals": 1},
        {"path": "a", "provenance": "PAPER"},
        {"path": "a", "provenance": "PAPER", "equals": 1, "min": 0},
        {"path": "a", "provenance": "PAPER", "value": 1, "abs_tol": -1},
    ],
)
def test_expectations_are_validated(spec):
    with pytest.raises(ConfigError):
        ExpectStep(**spec)


def test_expectation_kinds():
    s = state({"plan": {"cost": 100.4, "periods": [1, 3]}, "flag": True})
    ExpectStep("plan.cost", "PAPER", value=100, abs_tol=0.5).execute(s)
    ExpectStep("plan.cost", "DERIVED", value=100, rel_tol=0.01).execute(s)
    ExpectStep("plan.cost", "DERIVED", min=100, max=101).execute(s)
    ExpectStep("plan.periods", "TRIVIAL", equals=[1, 3]).execute(s)
    ExpectStep("flag", "TRIVIAL", equals=True).execute(s)
    assert [c["status"] for c in s.checks] == ["pass"] * 5
    assert s.checks[0]["expected"] == "100 ±0.5"
    with pytest.raises(StepAssertionError):
        ExpectStep("plan.cost", "PAPER", value=100, abs_tol=0.1).execute(s)
    with pytest.raises(StepAssertionError, match="selects nothing"):
        ExpectStep("plan.missing", "PAPER", min=0).execute(s)
    with pytest.raises(StepAssertionError):
        ExpectStep("flag", "PAPER", min=0).execute(s)
    assert s.checks[-1]["status"] == "fail"


def test_templated_fields_are_rendered_and_restored():
    s = state({"sdp": {"cost": 65.4}}, params={"target": 65.0})
    step = ExpectStep("sdp.cost", "PAPER", value="{{ storage.params.target }}", abs_tol=0.5)
    step.execute(s)
    assert step.value == "{{ storage.params.target }}"
    assert s.checks[0]["status"] == "pass"


def test_undefined_template_values_are_requirements():
    step = build_step({"step": "load_instance", "path": "{{ storage.params.nowhere }}/x.json"})
    with pytest.raises(StepRequirementError):
        step.execute(state())


def test_steps_need_their_inputs():
    with pytest.raises(StepRequirementError):
        build_step({"step": "solve"}).execute(state())
    with pytest.raises(StepRequirementError):
        build_step({"step": "simulate", "target": "policy"}).execute(state())


def test_load_and_solve_steps():
    s = state()
    build_step({"step": "load_instance", "path": "tests/replen/data/tiny.json"}).execute(s)
    build_step({"step": "solve", "segments": 4}).execute(s)
    assert s.results["instance"] == {"name": "tiny", "horizon": 3, "items": 2, "stationary": False}
    assert s.results["plan"]["audit"] == pytest.approx(s.results["plan"]["model_cost"])
    build_step({"step": "simulate", "replications": 500, "seed": 1}).execute(s)
    assert s.results["simulation"]["replications"] == 500
    assert "bound_slack" in s.results["simulation"]


def test_dataset_instances():
    s = state()
    build_step(
        {
            "step": "load_instance",
            "dataset": "data/datasets/atkins_iyogun.json",
            "items": [0, 1],
            "K": 50,
            "h": 2,
            "b": 30,
            "sub_periods": 1,
            "horizon": 4,
        }
    ).execute(s)
    assert s.results["instance"]["stationary"]
    assert s.results["instance"]["items"] == 2
    build_step({"step": "solve_stationary"}).execute(s)
    build_step({"step": "brute_force", "formulation": "stationary"}).execute(s)
    assert s.results["brute_force"]["gap"] == pytest.approx(0.0, abs=1e-6)
    assert s.results["plan"]["too_frequent"] in (True, False)


def test_parse_suite_reports_lines():
    text = '{\n  "entries": [\n    {"name": "a", "steps": []}\n  ]\n}'
    with pytest.raises(ConfigError, match="x.json:3:"):
        parse_suite(text, "x.json")
    with pytest.raises(ConfigError, match="x.json:3:"):
        parse_suite('{\n  "title": "t"\n  "entries": []\n}', "x.json")
    with pytest.raises(ConfigError, match="unknown field"):
        parse_suite('{"recipes": []}', "x.json")
    dup = '{"entries": [{"name": "a", "steps": [{"step": "sdp"}]}, {"name": "a", "steps": []}]}'
    with pytest.raises(ConfigError, match="duplicate"):
        parse_suite(dup)
    with pytest.raises(ConfigError, match="must match"):
        parse_suite('{"entries": [{"name": "a b", "steps": [{"step": "sdp"}]}]}')
    bad_step = '{\n"entries": [\n{"name": "a",\n "steps": [{"step": "fly"}]}]}'
    with pytest.raises(ConfigError, match="<suite>:3: entry 'a': unknown step"):
        parse_suite(bad_step)


def test_environments():
    suite = load_suite("tests/replen/data/suite.json")
    assert suite.title == "test bench"
    assert [e.name for e in suite.entries] == ["tiny-plan", "gaps", "reuse"]
    assert suite.params_for()["qs_gap"] == 4.38
    assert suite.params_for("strict")["qs_gap"] == 4.0
    assert suite.params_for("strict")["replications"] == 2000
    with pytest.raises(ConfigError, match="unknown environment"):
        suite.params_for("prod")


def test_run_bench(tmp_path):
    out = tmp_path / "summary.csv"
    result = run_bench("tests/replen/data/suite.json", settings=SETTINGS, ui=quiet(), out=out)
    assert result.passed, result.table.to_dict(orient="records")
    assert result.exit_code == 0
    assert result.counts()["pass"] == 5
    assert out.read_text().startswith("entry,check,provenance,expected,actual,status,message")


def test_failed_expectations_fail_their_entry_only():
    result = run_bench(
        "tests/replen/data/suite.json", env="strict", settings=SETTINGS, ui=quiet()
    )
    assert not result.passed
    assert result.exit_code == 1
    status = {o.name: o.status for o in result.outcomes}
    assert status == {"tiny-plan": "pass", "gaps": "fail", "reuse": "pass"}
    failed = result.table[result.table["status"] == "fail"]
    assert list(failed["entry"]) == ["gaps"]
    assert "4.0" in failed["message"].iloc[0]


def test_missing_requirements_stop_the_bench():
    suite = parse_suite(
        json.dumps(
            {
                "entries": [
                    {"name": "first", "steps": [{"step": "sdp"}]},
                    {
                        "name": "second",
                        "steps": [{"step": "expect", "path": "x", "equals": 1,
                                   "provenance": "TRIVIAL"}],
                    },
                ]
            }
        )
    )
    result = BenchRunner(suite, settings=SETTINGS, ui=quiet()).run()
    status = {o.name: o.status for o in result.outcomes}
    assert status == {"first": "error", "second": "skipped"}
    assert list(result.table["status"]) == ["error", "skipped"]


def test_parallel_entries_keep_their_order():
    result = run_bench("tests/replen/data/suite.json", jobs=2, settings=SETTINGS, ui=quiet())
    assert [o.name for o in result.outcomes] == ["tiny-plan", "gaps", "reuse"]
    assert result.outcomes[1].status == "pass"


class RecordingRunner(BenchRunner):
    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.ran = []

    def run_entry(self, entry):
        self.ran.append(entry.name)
        return super().run_entry(entry)


@pytest.mark.parametrize("jobs", [1, 2])
def test_missing_requirements_stop_parallel_benches_too(jobs):
    steps = [{"step": "sdp"}]
    suite = parse_suite(
        json.dumps(
            {"entries": [{"name": n, "steps": steps} for n in ("a", "b", "c", "d")]}
        )
    )
    runner = RecordingRunner(suite, settings=SETTINGS, ui=quiet(), jobs=jobs)
    result = runner.run()
    assert "a" in runner.ran
    assert not {"c", "d"} & set(runner.ran)
    assert [o.status for o in result.outcomes] == ["error", "skipped", "skipped", "skipped"]
    assert runner.storage["entries"] == {}


def test_snapshots_do_not_see_later_entries():
    storage = Storage()
    storage["entries.first"] = {"cost": 1.5}
    snapshot = storage.snapshot()
    storage["entries.second"] = {"cost": 2.5}
    assert list(snapshot["entries"]) == ["first"]


def test_notes_qualify_the_provenance():
    s = state({"gap": 4.38})
    step = ExpectStep("gap", "PAPER", value=4.38, abs_tol=0.005, note="back-computed costs")
    step.execute(s)
    assert s.checks[0]["provenance"] == "PAPER: back-computed costs"
    assert ExpectStep("gap", "PAPER", value=4.38).label == "PAPER"


def test_reproduction_suite_marks_circular_and_deviating_checks():
    suite = load_suite("data/suites/reproduction.json")
    expectations = {
        (entry.name, step.path): step
        for entry in suite.entries
        for step in entry.build()
        if isinstance(step, ExpectStep)
    }
    for (name, _), step in expectations.items():
        if name.startswith("literature-"):
            assert step.note
    sdp_cost = expectations[("sdp-example", "sdp.cost")]
    assert sdp_cost.provenance == "DERIVED"
    assert "65.4" in sdp_cost.note
