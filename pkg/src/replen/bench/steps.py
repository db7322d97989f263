from __future__ import annotations

import json
import logging
import math
import re
import typing as t

import jmespath
from jinja2 import Environment, StrictUndefined
from jinja2.exceptions import UndefinedError

from replen import milp, planner, sdp, sigma, simulator, stationary
from replen.bench.storage import Storage
from replen.config import Settings
from replen.domain import Instance, load_instance
from replen.errors import (
    ConfigError,
    StepAssertionError,
    StepExecutionError,
    StepRequirementError,
)

logger = logging.getLogger(__name__)

PROVENANCE = ("PAPER", "TRIVIAL", "DERIVED")


class EntryState:
    """
    Everything the steps of one bench entry share: the loaded instance, solved
    objects (plan, value function) and the plain results expectations select from.
    """

    def __init__(self, name: str, storage: Storage, settings: Settings) -> None:
        self.name = name
        self.storage = storage
        self.settings = settings
        self.instance: t.Optional[Instance] = None
        self.plan: t.Optional[planner.Plan] = None
        self.value_function: t.Optional[sdp.ValueFunction] = None
        self.results: t.Dict[str, t.Any] = {}
        self.checks: t.List[t.Dict[str, t.Any]] = []

    def require_instance(self) -> Instance:
        if self.instance is None:
            raise StepRequirementError("no instance loaded; add a load_instance step first")
        return self.instance

    def require_plan(self) -> planner.Plan:
        if self.plan is None:
            raise StepRequirementError("no plan solved; add a solve step first")
        return self.plan

    def require_value_function(self) -> sdp.ValueFunction:
        if self.value_function is None:
            raise StepRequirementError("no SDP solved; add an sdp step first")
        return self.value_function


class Step:
    """
    Step is a unit of work of a bench entry. Fields listed in `templated` are
    Jinja2 templates rendered right before the step runs, with `storage` (suite
    params and finished entries) and `entry` (results so far) as context.
    """

    kind: str = "step"
    regex_tojson = re.compile(r".*\|.*tojson.*")
    templated: t.Sequence[str] = ()

    def __init__(self, *, title: str = None) -> None:
        self.title = title if title else self.kind
        self.jinja_env = Environment(undefined=StrictUndefined)
        self.templates: t.Dict[str, t.Any] = {}

    def execute(self, state: EntryState) -> None:
        try:
            self.render_templated({"storage": state.storage.snapshot(), "entry": state.results})
            self.process(state)
        finally:
            self.restore_templated_values()

    def process(self, state: EntryState) -> None:
        raise NotImplementedError("Base Step should never be called directly.")

    def render_templated(self, params: t.Dict[str, t.Any]) -> None:
        for attr_name in self.templated:
            value = getattr(self, attr_name)
            self.templates[attr_name] = value
            if value is not None:
                setattr(self, attr_name, self.render_value(value, params))

    def render_value(self, value: t.Any, params: t.Dict[str, t.Any]) -> t.Any:
        """
        Render lists and dicts recursively. A rendered string that reads as JSON
        (a number, a list) is decoded so templated numbers arrive as numbers.
        """
        if isinstance(value, list):
            return [self.render_value(v, params) for v in value]
        if isinstance(value, dict):
            return {k: self.render_value(v, params) for k, v in value.items()}
        if not isinstance(value, str):
            return value
        rendered = self.render_string(value, params)
        if "{{" not in value and self.regex_tojson.match(value) is None:
            return rendered
        try:
            return json.loads(rendered)
        except ValueError:
            return rendered

    def render_string(self, value: str, params: t.Dict[str, t.Any]) -> str:
        try:
            return self.jinja_env.from_string(value).render(params)
        except UndefinedError as err:
            raise StepRequirementError(f"{err} on template '{value}'")
        except Exception as err:
            raise StepExecutionError(f"error rendering {value!r}: {err}")

    def restore_templated_values(self) -> None:
        for key, value in self.templates.items():
            setattr(self, key, value)

    def __str__(self) -> str:
        return self.title


class LoadInstanceStep(Step):
    """Load an instance file, or discretize one instance out of a parameter dataset."""

    kind = "load_instance"
    templated = ("path", "dataset", "items", "K", "h", "b", "sub_periods", "horizon")

    def __init__(
        self,
        path: str = None,
        dataset: str = None,
        items: t.Optional[t.Sequence[int]] = None,
        K: float = None,
        h: float = None,
        b: float = None,
        sub_periods: int = 1,
        horizon: int = None,
        **kwargs,
    ) -> None:
        super().__init__(**kwargs)
        if (path is None) == (dataset is None):
            raise ConfigError("load_instance needs exactly one of path or dataset")
        self.path = path
        self.dataset = dataset
        self.items = items
        self.K, self.h, self.b = K, h, b
        self.sub_periods = sub_periods
        self.horizon = horizon

    def process(self, state: EntryState) -> None:
        if self.path is not None:
            inst = load_instance(self.path)
        else:
            if None in (self.K, self.h, self.b, self.horizon):
                raise StepRequirementError("a dataset instance needs K, h, b and horizon")
            data = stationary.load_dataset(self.dataset)
            items = self.items if self.items is not None else range(len(data["items"]))
            inst = stationary.discretize(
                data, list(items), self.K, self.h, self.b, int(self.sub_periods), int(self.horizon)
            )
        state.instance = inst
        state.results["instance"] = {
            "name": inst.name,
            "horizon": inst.horizon,
            "items": inst.n_items,
            "stationary": inst.is_stationary(),
        }


class SolvePlanStep(Step):
    kind = "solve"
    templated = ("segments", "mode")

    def __init__(self, segments: int = None, mode: str = "exact", **kwargs) -> None:
        super().__init__(**kwargs)
        self.segments = segments
        self.mode = mode

    def process(self, state: EntryState) -> None:
        inst = state.require_instance()
        segments = int(self.segments or state.settings.segments)
        plan = planner.solve_rs(inst, segments, self.mode)
        state.plan = plan
        state.results["plan"] = plan.to_dict()
        state.results["plan"]["audit"] = planner.audit_plan(inst, plan, segments)


class SolveStationaryStep(Step):
    kind = "solve_stationary"
    templated = ("mode", "horizon", "sub_periods")

    def __init__(
        self, mode: str = "exact", horizon: int = None, sub_periods: int = 1, **kwargs
    ) -> None:
        super().__init__(**kwargs)
        self.mode = mode
        self.horizon = horizon
        self.sub_periods = sub_periods

    def process(self, state: EntryState) -> None:
        inst = state.require_instance()
        horizon = int(self.horizon) if self.horizon is not None else None
        plan = stationary.solve_stationary(inst, horizon, self.mode)
        state.plan = plan
        state.results["plan"] = plan.to_dict()
        state.results["plan"]["too_frequent"] = stationary.too_frequent(
            plan, int(self.sub_periods)
        )


class BruteForceStep(Step):
    """Solve the model of the entry's formulation by enumeration and compare with the plan."""

    kind = "brute_force"
    templated = ("formulation", "segments", "binary_limit")

    def __init__(
        self, formulation: str = "rs", segments: int = None, binary_limit: int = None, **kwargs
    ) -> None:
        super().__init__(**kwargs)
        if formulation not in ("rs", "stationary"):
            raise ConfigError(f"unknown formulation {formulation!r}, expected rs or stationary")
        self.formulation = formulation
        self.segments = segments
        self.binary_limit = binary_limit

    def process(self, state: EntryState) -> None:
        inst = state.require_instance()
        if self.formulation == "rs":
            model = milp.build_rs_model(inst, int(self.segments or state.settings.segments))
        else:
            model = stationary.stationary_model(inst)
        limit = int(self.binary_limit or state.settings.binary_limit)
        solution = milp.brute_force_solve(model, limit)
        result = {"status": solution.status, "objective": solution.objective}
        if state.plan is not None and solution.objective is not None:
            result["gap"] = solution.objective - state.plan.model_cost
        state.results["brute_force"] = result


class SolveSdpStep(Step):
    kind = "sdp"
    templated = ("state_cap",)

    def __init__(self, state_cap: int = None, **kwargs) -> None:
        super().__init__(**kwargs)
        self.state_cap = state_cap

    def process(self, state: EntryState) -> None:
        inst = state.require_instance()
        cap = int(self.state_cap or state.settings.sdp_state_cap)
        vf = sdp.solve_sdp(inst, state_cap=cap)
        opening = [int(i) for i in inst.initial_inventory]
        state.value_function = vf
        state.results["sdp"] = {
            "cost": vf.cost_to_go(1, opening),
            "action": list(sdp.optimal_policy_actions(vf, opening, 1)),
            "states": vf.grid.size,
        }


class SimulateStep(Step):
    """
    Simulate the entry's plan or its SDP policy. With a `reference` value the
    result says whether the confidence interval covers it.
    """

    kind = "simulate"
    templated = ("target", "replications", "seed", "warmup", "reference")

    def __init__(
        self,
        target: str = "plan",
        replications: int = None,
        seed: int = None,
        warmup: int = 0,
        reference: float = None,
        **kwargs,
    ) -> None:
        super().__init__(**kwargs)
        if target not in ("plan", "policy"):
            raise ConfigError(f"simulate target must be plan or policy, got {target!r}")
        self.target = target
        self.replications = replications
        self.seed = seed
        self.warmup = warmup
        self.reference = reference

    def process(self, state: EntryState) -> None:
        inst = state.require_instance()
        cfg = simulator.SimConfig(
            replications=int(self.replications or state.settings.replications),
            seed=int(self.seed if self.seed is not None else state.settings.seed),
            warmup=int(self.warmup),
        )
        if self.target == "plan":
            plan = state.require_plan()
            report = simulator.simulate_plan(inst, plan, cfg)
        else:
            report = simulator.simulate_policy(inst, state.require_value_function(), cfg)
        result = report.to_dict()
        result.pop("period_means")
        if self.target == "plan":
            result["bound_slack"] = (
                report.mean_total - state.plan.model_cost + 3 * report.half_width
            )
        if self.reference is not None:
            result["covers_reference"] = report.covers(float(self.reference))
        state.results["simulation"] = result


class SigmaAgreementStep(Step):
    """Compare the (R,S) order regions with the SDP decisions over a box of inventories."""

    kind = "sigma_agreement"
    templated = ("ranges", "period", "segments", "mode")

    def __init__(
        self,
        ranges: t.Sequence[t.Sequence[int]],
        period: int = 1,
        segments: int = None,
        mode: str = None,
        **kwargs,
    ) -> None:
        super().__init__(**kwargs)
        self.ranges = ranges
        self.period = period
        self.segments = segments
        self.mode = mode

    def process(self, state: EntryState) -> None:
        inst = state.require_instance()
        vf = state.require_value_function()
        ranges = [(int(lo), int(hi)) for lo, hi in self.ranges]
        k = int(self.period)
        segments = int(self.segments or state.settings.segments)
        approx = sigma.sigma_map(inst, ranges, k, segments, self.mode)
        exact = sigma.sdp_sigma_map(vf, ranges, k)
        state.results["sigma"] = {
            "agreement": sigma.agreement(approx, exact),
            "cells": len(approx.decisions),
            "violations": len(sigma.staircase_violations(approx)),
            "sdp_violations": len(sigma.staircase_violations(exact)),
        }


class CompareLiteratureStep(Step):
    """
    Gap table against literature costs, from our costs and a long literature
    table, or from a published gap table.
    """

    kind = "compare"
    templated = ("ours", "literature", "gaps")

    def __init__(
        self, ours: str = None, literature: str = None, gaps: str = None, **kwargs
    ) -> None:
        super().__init__(**kwargs)
        if gaps is None and (ours is None or literature is None):
            raise ConfigError("compare needs ours and literature, or gaps")
        self.ours = ours
        self.literature = literature
        self.gaps = gaps

    def process(self, state: EntryState) -> None:
        if self.gaps is not None:
            ours, literature = simulator.costs_from_gaps(self.gaps)
        else:
            ours, literature = simulator.read_costs(self.ours), self.literature
        table = simulator.compare_literature(ours, literature)
        policies = [c for c in table.columns if c not in ("instance_key", simulator.OURS)]
        policies.remove("best_policy")
        rows = table.set_index("instance_key")
        state.results["comparison"] = {
            "gaps": {
                key: {p: _clean(rows.at[key, p]) for p in policies}
                for key in rows.index
                if key != "average"
            },
            "average": {p: _clean(rows.at["average", p]) for p in policies},
            "best": {k: rows.at[k, "best_policy"] for k in rows.index if k != "average"},
        }


def _clean(value: t.Any) -> t.Optional[float]:
    value = float(value)
    return None if math.isnan(value) else value


_MISSING = object()


class ExpectStep(Step):
    """
    Check a value selected with a JMESPath expression out of the entry results.
    Exactly one kind of expectation: `equals`, `value` with `abs_tol`/`rel_tol`,
    or a `min`/`max` range. Every expectation names where its value comes from.
    An optional `note` qualifies the provenance in the summary table.
    """

    kind = "expect"
    templated = ("path", "value", "equals", "min", "max")

    def __init__(
        self,
        path: str,
        provenance: str,
        equals: t.Any = _MISSING,
        value: float = None,
        abs_tol: float = 0.0,
        rel_tol: float = 0.0,
        min: float = None,
        max: float = None,
        note: str = "",
        **kwargs,
    ) -> None:
        super().__init__(**kwargs)
        if provenance not in PROVENANCE:
            raise ConfigError(
                f"expectation on {path!r} has provenance {provenance!r}, expected one of "
                f"{', '.join(PROVENANCE)}"
            )
        kinds = [equals is not _MISSING, value is not None, min is not None or max is not None]
        if sum(kinds) != 1:
            raise ConfigError(f"expectation on {path!r} needs one of equals, value or min/max")
        if abs_tol < 0 or rel_tol < 0:
            raise ConfigError(f"expectation on {path!r} has a negative tolerance")
        self.title = kwargs.get("title") or f"expect {path}"
        self.path = path
        self.provenance = provenance
        self.equals = equals
        self.value = value
        self.abs_tol = abs_tol
        self.rel_tol = rel_tol
        self.min = min
        self.max = max
        self.note = note

    @property
    def label(self) -> str:
        return f"{self.provenance}: {self.note}" if self.note else self.provenance

    def describe(self) -> str:
        if self.equals is not _MISSING:
            return f"== {json.dumps(self.equals)}"
        if self.value is not None:
            tol = []
            if self.abs_tol:
                tol.append(f"±{self.abs_tol:g}")
            if self.rel_tol:
                tol.append(f"±{self.rel_tol:.2%}")
            return f"{self.value} {' '.join(tol)}".strip()
        bounds = []
        if self.min is not None:
            bounds.append(f">= {self.min}")
        if self.max is not None:
            bounds.append(f"<= {self.max}")
        return " and ".join(bounds)

    def holds(self, actual: t.Any) -> bool:
        if self.equals is not _MISSING:
            return actual == self.equals
        if not isinstance(actual, (int, float)) or isinstance(actual, bool):
            return False
        if self.value is not None:
            return math.isclose(actual, self.value, rel_tol=self.rel_tol, abs_tol=self.abs_tol)
        above = self.min is None or actual >= self.min
        return above and (self.max is None or actual <= self.max)

    def process(self, state: EntryState) -> None:
        actual = jmespath.search(self.path, state.results)
        ok = actual is not None and self.holds(actual)
        state.checks.append(
            {
                "check": self.path,
                "provenance": self.label,
                "expected": self.describe(),
                "actual": json.dumps(actual, default=str),
                "status": "pass" if ok else "fail",
            }
        )
        if actual is None:
            raise StepAssertionError(f"{self.path} selects nothing from the entry results")
        if not ok:
            raise StepAssertionError(f"{self.path} is {actual}, expected {self.describe()}")


STEPS: t.Dict[str, t.Type[Step]] = {
    cls.kind: cls
    for cls in (
        LoadInstanceStep,
        SolvePlanStep,
        SolveStationaryStep,
        BruteForceStep,
        SolveSdpStep,
        SimulateStep,
        SigmaAgreementStep,
        CompareLiteratureStep,
        ExpectStep,
    )
}


def build_step(spec: t.Mapping[str, t.Any]) -> Step:
    """Build a step from its suite document, e.g. {"step": "solve", "segments": 11}."""
    if not isinstance(spec, dict) or "step" not in spec:
        raise ConfigError(f"a step must be an object with a 'step' kind: {spec!r}")
    args = dict(spec)
    kind = args.pop("step")
    if kind not in STEPS:
        raise ConfigError(f"unknown step {kind!r}, expected one of {', '.join(sorted(STEPS))}")
    try:
        return STEPS[kind](**args)
    except TypeError as err:
        raise ConfigError(f"invalid arguments for step {kind!r}: {err}")

