from __future__ import annotations

import json
import logging
import re
import typing as t
from collections import deque
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import islice
from pathlib import Path

import click
import jmespath
import pandas as pd

from replen.bench.steps import EntryState, ExpectStep, Step, build_step
from replen.bench.storage import Storage
from replen.config import Settings
from replen.errors import (
    ConfigError,
    ReplenError,
    StepAssertionError,
    StepExecutionError,
    StepRequirementError,
)
from replen.ui import UI, StepRenderer

logger = logging.getLogger(__name__)

SUITE_FIELDS = {"title", "params", "environments", "entries"}
ENTRY_FIELDS = {"name", "steps"}
COLUMNS = ["entry", "check", "provenance", "expected", "actual", "status", "message"]

_ENTRY_NAME = re.compile(r"^[A-Za-z0-9_-]+$")

PASS = "pass"
FAIL = "fail"
ERROR = "error"
SKIPPED = "skipped"


@dataclass(frozen=True)
class Entry:
    name: str
    steps: t.Tuple[t.Dict[str, t.Any], ...]
    line: int = 0

    def build(self) -> t.List[Step]:
        return [build_step(s) for s in self.steps]


@dataclass(frozen=True)
class Suite:
    """
    Suite is an ordered collection of entries. Every entry loads an instance,
    runs solvers and simulations on it and checks the results against expected
    values that carry their provenance.
    """

    title: str
    params: t.Dict[str, t.Any] = field(default_factory=dict)
    environments: t.Dict[str, t.Any] = field(default_factory=dict)
    entries: t.Tuple[Entry, ...] = ()
    source: str = "<suite>"

    def params_for(self, env: t.Optional[str] = None) -> t.Dict[str, t.Any]:
        """Suite params with the selected environment merged over them."""
        if env is None:
            return dict(self.params)
        selected = jmespath.search(env, self.environments)
        if not isinstance(selected, dict):
            known = ", ".join(sorted(self.environments)) or "none"
            raise ConfigError(f"{self.source}: unknown environment {env!r} (known: {known})")
        return {**self.params, **selected}


def _line_of(text: str, needle: str, default: int = 1) -> int:
    index = text.find(needle)
    return text.count("\n", 0, index) + 1 if index >= 0 else default


def parse_suite(text: str, source: str = "<suite>") -> Suite:
    """
    Parse a suite document. Every problem is reported as a ConfigError that
    points at the line of the offending entry.
    """
    try:
        data = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(f"{source}:{err.lineno}: {err.msg}")
    if not isinstance(data, dict):
        raise ConfigError(f"{source}:1: a suite must be a JSON object")
    unknown = set(data) - SUITE_FIELDS
    if unknown:
        key = sorted(unknown)[0]
        raise ConfigError(f"{source}:{_line_of(text, json.dumps(key))}: unknown field {key!r}")
    params = data.get("params", {})
    environments = data.get("environments", {})
    for key, value in (("params", params), ("environments", environments)):
        if not isinstance(value, dict):
            line = _line_of(text, json.dumps(key))
            raise ConfigError(f"{source}:{line}: {key} must be an object")
    raw_entries = data.get("entries", [])
    if not isinstance(raw_entries, list):
        line = _line_of(text, '"entries"')
        raise ConfigError(f"{source}:{line}: entries must be a list")

    entries, seen = [], set()
    for position, raw in enumerate(raw_entries):
        name = raw.get("name") if isinstance(raw, dict) else None
        line = _line_of(text, f'"name": {json.dumps(name)}') if name else 1
        where = f"{source}:{line}"
        if not isinstance(raw, dict) or not isinstance(name, str):
            raise ConfigError(f"{where}: entry {position} needs a name")
        if not _ENTRY_NAME.match(name):
            raise ConfigError(f"{where}: entry name {name!r} must match {_ENTRY_NAME.pattern}")
        if name in seen:
            raise ConfigError(f"{where}: duplicate entry {name!r}")
        seen.add(name)
        unknown = set(raw) - ENTRY_FIELDS
        if unknown:
            raise ConfigError(f"{where}: entry {name!r} has unknown fields {sorted(unknown)}")
        steps = raw.get("steps", [])
        if not isinstance(steps, list) or not steps:
            raise ConfigError(f"{where}: entry {name!r} needs a non-empty list of steps")
        entry = Entry(name=name, steps=tuple(steps), line=line)
        try:
            entry.build()
        except ConfigError as err:
            raise ConfigError(f"{where}: entry {name!r}: {err.args[0]}")
        entries.append(entry)

    return Suite(
        title=str(data.get("title", source)),
        params=params,
        environments=environments,
        entries=tuple(entries),
        source=source,
    )


def load_suite(path: t.Union[str, Path]) -> Suite:
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise ConfigError(f"can not read suite {path}: {err}")
    return parse_suite(text, str(path))


@dataclass
class EntryOutcome:
    name: str
    status: str
    rows: t.List[t.Dict[str, t.Any]]
    results: t.Dict[str, t.Any]
    error: t.Optional[Exception] = None


@dataclass(frozen=True)
class BenchResult:
    table: pd.DataFrame
    outcomes: t.Tuple[EntryOutcome, ...] = ()

    @property
    def passed(self) -> bool:
        return bool((self.table["status"] == PASS).all()) if len(self.table) else True

    @property
    def exit_code(self) -> int:
        return 0 if self.passed else 1

    def counts(self) -> t.Dict[str, int]:
        return {s: int((self.table["status"] == s).sum()) for s in (PASS, FAIL, ERROR, SKIPPED)}


class BenchRunner:
    """
    BenchRunner prepares the storage, runs the entries of a suite and renders one
    progress line per entry. A failed expectation fails its entry and the bench
    goes on with the next one; a missing requirement stops the bench.
    """

    def __init__(
        self,
        suite: Suite,
        settings: t.Optional[Settings] = None,
        ui: t.Optional[UI] = None,
        env: t.Optional[str] = None,
        jobs: int = 1,
    ) -> None:
        if jobs < 1:
            raise ConfigError(f"jobs must be >= 1, got {jobs}")
        self.suite = suite
        self.settings = settings or Settings.from_env()
        self.ui = ui if ui else UI()
        self.storage = Storage(suite.params_for(env))
        self.jobs = jobs

    def run(self) -> BenchResult:
        self.ui.title(self.suite.title)
        self.analize()
        outcomes: t.List[EntryOutcome] = []
        stopped = False
        running = self.outcomes()
        try:
            for entry in self.suite.entries:
                outcome = self.skipped(entry) if stopped else next(running)
                outcomes.append(outcome)
                self.record(outcome)
                self.render(outcome)
                if isinstance(outcome.error, StepRequirementError):
                    stopped = True
                    running.close()
        finally:
            running.close()
        rows = [row for o in outcomes for row in o.rows]
        table = pd.DataFrame.from_records(rows, columns=COLUMNS)
        result = BenchResult(table=table, outcomes=tuple(outcomes))
        self.summary(result)
        return result

    def outcomes(self) -> t.Iterator[EntryOutcome]:
        """
        Yield entry outcomes in suite order. With more than one job at most `jobs`
        entries are in flight; the next one is submitted only once the caller
        resumes, so closing the generator leaves the remaining entries unrun.
        """
        entries = iter(self.suite.entries)
        if self.jobs == 1:
            for entry in entries:
                yield self.run_entry(entry)
            return
        with ThreadPoolExecutor(max_workers=self.jobs) as pool:
            window: t.Deque[Future] = deque(
                pool.submit(self.run_entry, e) for e in islice(entries, self.jobs)
            )
            try:
                while window:
                    outcome = window.popleft().result()
                    yield outcome
                    window.extend(pool.submit(self.run_entry, e) for e in islice(entries, 1))
            finally:
                for future in window:
                    future.cancel()

    def record(self, outcome: EntryOutcome) -> None:
        if outcome.status == PASS:
            self.storage[f"entries.{outcome.name}"] = outcome.results

    def run_entry(self, entry: Entry) -> EntryOutcome:
        state = EntryState(entry.name, self.storage, self.settings)
        steps = entry.build()
        status, error, message = PASS, None, ""
        done = 0
        for step in steps:
            try:
                step.execute(state)
                done += 1
            except StepAssertionError as err:
                # The first failed expectation fails the entry, the rest are not evaluated.
                err.add(step)
                err.add(entry.name)
                status, error, message = FAIL, err, str(err)
                done += 1
                break
            except StepRequirementError as err:
                err.add(step)
                err.add(entry.name)
                status, error, message = ERROR, err, str(err)
                break
            except ReplenError as err:
                status, error, message = ERROR, err, str(err)
                break
            except Exception as ex:
                error = StepExecutionError(
                    f"unexpected error executing the step {step.kind}({step}): {ex}"
                )
                logger.exception("entry %s crashed in %s", entry.name, step.kind)
                status, message = ERROR, str(error)
                break
        rows = [dict(entry=entry.name, message="", **c) for c in state.checks]
        if status == FAIL:
            rows[-1]["message"] = message
        elif status != PASS:
            rows.append(self.row(entry.name, "-", "", "", status, message))
        for step in steps[done:]:
            if isinstance(step, ExpectStep):
                rows.append(
                    self.row(entry.name, step.path, step.label, step.describe(), SKIPPED)
                )
        if not rows:
            rows.append(self.row(entry.name, "-", "", "", status, message))
        return EntryOutcome(entry.name, status, rows, state.results, error)

    @staticmethod
    def row(entry, check, provenance, expected, status, message="") -> t.Dict[str, t.Any]:
        return {
            "entry": entry,
            "check": check,
            "provenance": provenance,
            "expected": expected,
            "actual": "",
            "status": status,
            "message": message,
        }

    def skipped(self, entry: Entry) -> EntryOutcome:
        rows = [
            self.row(entry.name, s.path, s.label, s.describe(), SKIPPED)
            for s in entry.build()
            if isinstance(s, ExpectStep)
        ] or [self.row(entry.name, "-", "", "", SKIPPED)]
        return EntryOutcome(entry.name, SKIPPED, rows, {})

    def render(self, outcome: EntryOutcome) -> None:
        renderer = StepRenderer(outcome.name, ui=self.ui)
        checks = sum(1 for r in outcome.rows if r["status"] == PASS)
        if outcome.status == PASS:
            renderer.update(f"ok ({checks} checks)", status=StepRenderer.STATUS_COMPLETE)
        elif outcome.status == FAIL:
            renderer.update("fail", status=StepRenderer.STATUS_FAIL)
            self.ui.failure(err=outcome.error)
        elif outcome.status == SKIPPED:
            renderer.update("skipped", status=StepRenderer.STATUS_SKIPPED)
        else:
            renderer.update("error", status=StepRenderer.STATUS_ERROR)
            self.ui.error(err=outcome.error)

    def analize(self) -> None:
        entries = len(self.suite.entries)
        checks = sum(
            1 for e in self.suite.entries for s in e.steps if s.get("step") == "expect"
        )
        title = click.style("Running bench", underline=True)
        self.ui.echo(
            f" {title} {click.style(entries or 'no', fg='magenta')} entr"
            f"{'y' if entries == 1 else 'ies'}, "
            f"{click.style(checks or 'no', fg='magenta')} check{'' if checks == 1 else 's'}\n"
        )

    def summary(self, result: BenchResult) -> None:
        counts = result.counts()
        parts = ", ".join(f"{n} {s}" for s, n in counts.items() if n)
        verdict = "All checks passed" if result.passed else "Bench failed"
        self.ui.echo(f"\n{verdict}: {parts or 'nothing to check'}\n")


def run_bench(
    suite: t.Union[Suite, str, Path],
    *,
    env: t.Optional[str] = None,
    jobs: int = 1,
    settings: t.Optional[Settings] = None,
    ui: t.Optional[UI] = None,
    out: t.Optional[t.Union[str, Path]] = None,
) -> BenchResult:
    """Run a suite and write the summary table as CSV when `out` is given."""
    suite = suite if isinstance(suite, Suite) else load_suite(suite)
    result = BenchRunner(suite, settings=settings, ui=ui, env=env, jobs=jobs).run()
    if out is not None:
        result.table.to_csv(out, index=False)
    return result
