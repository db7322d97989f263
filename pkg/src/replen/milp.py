"""
Mixed-integer models of the planning problem as explicit row/column structures.

`build_rs_model` writes the nonstationary (R,S) model with piecewise-linear loss
cuts, `build_stationary_model` the shortest-path model of stationary cycles.
Models export to MPS and CPLEX LP text, parse back from it, evaluate candidate
assignments and, when tiny, are solved by enumeration for reference.

Row families of the (R,S) model (n item, t period, j receipt period, i segment):

    link_n_t        d_t − y_n_t ≥ 0
    first_n         y_n_1 = 1
    pre_bal_n_t     I_n_t = I0 − E[d_1..t]                       t ≤ L
    pre_B_n_t_i     loss cut at the opening inventory            t ≤ L
    pre_H_n_t_i     complementary cut at the opening inventory   t ≤ L
    cutoff_n_t      y_n_t = 0                                    t > T − L
    bal_n_t         I_n_t + λ_t − I_n_t−1 ≥ 0
    bigm_n_t        I_n_t + λ_t − I_n_t−1 ≤ M·y_n_t−L
    sel_n_t         Σ_j P_n_j_t = 1
    recent_n_j_t    P_n_j_t ≥ y_n_j−L − Σ_{k=j−L+1..t−L} y_n_k
    B_n_t_i         loss cuts, the partition picked by P_n_j_t
    H_n_t_i         complementary cuts, the partition picked by P_n_j_t
"""
from __future__ import annotations

import logging
import math
import re
import typing as t
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.stats import poisson

from replen.domain import DEFAULT_QUANTILE, Instance, partition
from replen.errors import (
    DependencyError,
    ExportError,
    InfeasibleScheduleError,
    InputError,
    ResourceCapError,
)

logger = logging.getLogger(__name__)

BINARY = "binary"
CONTINUOUS = "continuous"
SENSES = (">=", "<=", "=")
OBJECTIVE_ROW = "COST"
DEFAULT_BINARY_LIMIT: int = 22
CHUNK: int = 1 << 16

_NAME = re.compile(r"^[A-Za-z_][A-Za-z0-9_.\[\]]*$")


@dataclass(frozen=True)
class Variable:
    name: str
    kind: str = CONTINUOUS
    lower: float = 0.0
    upper: float = math.inf


@dataclass(frozen=True)
class Constraint:
    name: str
    coefs: t.Tuple[t.Tuple[str, float], ...]
    sense: str
    rhs: float = 0.0

    def activity(self, values: t.Mapping[str, float]) -> float:
        return sum(c * values[v] for v, c in self.coefs)

    def slack(self, values: t.Mapping[str, float]) -> float:
        """Signed slack: negative when the row is violated."""
        lhs = self.activity(values)
        if self.sense == ">=":
            return lhs - self.rhs
        if self.sense == "<=":
            return self.rhs - lhs
        return -abs(lhs - self.rhs)


@dataclass(frozen=True)
class Model:
    """
    Model is immutable; coefficients are kept in variable declaration order so that
    two models with the same content compare equal.
    """

    name: str
    variables: t.Tuple[Variable, ...]
    constraints: t.Tuple[Constraint, ...]
    objective: t.Tuple[t.Tuple[str, float], ...]
    metadata: t.Dict[str, t.Any] = field(default_factory=dict, compare=False, repr=False)

    @cached_property
    def index(self) -> t.Dict[str, int]:
        return {v.name: i for i, v in enumerate(self.variables)}

    @cached_property
    def rows_of(self) -> t.Dict[str, t.List[Constraint]]:
        rows: t.Dict[str, t.List[Constraint]] = {v.name: [] for v in self.variables}
        for row in self.constraints:
            for v, _ in row.coefs:
                rows[v].append(row)
        return rows

    def variable(self, name: str) -> Variable:
        return self.variables[self.index[name]]

    def constraint(self, name: str) -> Constraint:
        for row in self.constraints:
            if row.name == name:
                return row
        raise KeyError(name)

    def objective_value(self, values: t.Mapping[str, float]) -> float:
        return float(sum(c * values[v] for v, c in self.objective))

    @property
    def binaries(self) -> t.List[str]:
        return [v.name for v in self.variables if v.kind == BINARY]


class ModelBuilder:
    def __init__(self, name: str) -> None:
        self.name = name
        self._variables: t.Dict[str, Variable] = {}
        self._rows: t.List[Constraint] = []
        self._row_names: t.Set[str] = set()
        self._objective: t.Dict[str, float] = {}

    def add_var(self, name: str, kind: str = CONTINUOUS, lower=0.0, upper=math.inf, cost=0.0):
        if name in self._variables:
            raise ExportError(f"duplicate variable name {name!r}")
        if kind == BINARY:
            lower, upper = 0.0, 1.0
        self._variables[name] = Variable(name, kind, float(lower), float(upper))
        if cost:
            self._objective[name] = self._objective.get(name, 0.0) + float(cost)
        return name

    def add_row(self, name: str, coefs: t.Mapping[str, float], sense: str, rhs: float = 0.0):
        if sense not in SENSES:
            raise ExportError(f"row {name}: unknown sense {sense!r}")
        if name in self._row_names:
            raise ExportError(f"duplicate row name {name!r}")
        unknown = [v for v in coefs if v not in self._variables]
        if unknown:
            raise ExportError(f"row {name} references undeclared variables {unknown}")
        self._row_names.add(name)
        self._rows.append(Constraint(name, tuple(coefs.items()), sense, float(rhs)))

    def build(self, **metadata) -> Model:
        order = {name: i for i, name in enumerate(self._variables)}

        def canonical(pairs):
            merged: t.Dict[str, float] = {}
            for v, c in pairs:
                merged[v] = merged.get(v, 0.0) + float(c)
            kept = [(v, c) for v, c in merged.items() if c != 0]
            return tuple(sorted(kept, key=lambda p: order[p[0]]))

        return Model(
            name=self.name,
            variables=tuple(self._variables.values()),
            constraints=tuple(
                Constraint(r.name, canonical(r.coefs), r.sense, r.rhs) for r in self._rows
            ),
            objective=canonical(self._objective.items()),
            metadata=metadata,
        )


def big_m(inst: Instance, n: int, t_: int, quantile: float = DEFAULT_QUANTILE) -> float:
    """
    Bound on the expected quantity received in period t_: the largest
    order-up-to position any plan uses plus the largest expected backlog.
    """
    opening = inst.initial_inventory[n]
    total = inst.mean_demand(n, 1, inst.horizon)
    level_bound = max(opening, 0.0) + total + float(poisson.ppf(quantile, total))
    backlog = float(poisson.ppf(quantile, inst.mean_demand(n, 1, t_)))
    return level_bound + backlog + max(0.0, -opening)


def rs_census(inst: Instance, W: int) -> t.Tuple[int, int]:
    """Variable and row counts of `build_rs_model(inst, W)`."""
    T = inst.horizon
    n_vars, n_rows = T, 0
    for item in inst.items:
        L, m = item.lead_time, T - item.lead_time
        n_vars += 4 * T + m * (m + 1) // 2
        n_rows += T + 1 + 2 * L + (2 * W + 1) * T + 3 * m + m * (m + 1) // 2
    return n_vars, n_rows


def build_rs_model(inst: Instance, W: int = 11, quantile: float = DEFAULT_QUANTILE) -> Model:
    """
    The nonstationary (R,S) model. The closing inventory of period t is written
    as I_n_t = S − E[demand since placement]; with equal-probability partitions
    the cut slopes do not depend on the partition, so the cuts stay linear once
    the receipt period is selected through P_n_j_t.
    """
    T, K = inst.horizon, inst.group_cost
    slopes = np.arange(W + 1) / W
    mb = ModelBuilder(inst.name or "rs")
    for t_ in inst.periods:
        mb.add_var(f"d_{t_}", BINARY, cost=K)
    for n, item in enumerate(inst.items):
        L = item.lead_time
        for t_ in inst.periods:
            mb.add_var(f"y_{n}_{t_}", BINARY, cost=item.fixed_cost)
        for t_ in inst.periods:
            mb.add_var(f"I_{n}_{t_}", lower=-math.inf)
            mb.add_var(f"B_{n}_{t_}", cost=item.penalty)
            mb.add_var(f"H_{n}_{t_}", cost=item.holding)
        for t_ in range(L + 1, T + 1):
            for j in range(L + 1, t_ + 1):
                mb.add_var(f"P_{n}_{j}_{t_}", BINARY)

    for n, item in enumerate(inst.items):
        L, opening = item.lead_time, inst.initial_inventory[n]
        for t_ in inst.periods:
            mb.add_row(f"link_{n}_{t_}", {f"d_{t_}": 1, f"y_{n}_{t_}": -1}, ">=")
        mb.add_row(f"first_{n}", {f"y_{n}_1": 1}, "=", 1)

        for t_ in range(1, L + 1):
            mean = inst.mean_demand(n, 1, t_)
            part = partition(inst.demand(n, 1, t_, quantile), W)
            I, B, H = f"I_{n}_{t_}", f"B_{n}_{t_}", f"H_{n}_{t_}"
            mb.add_row(f"pre_bal_{n}_{t_}", {I: 1}, "=", opening - mean)
            for i, s in enumerate(slopes):
                rhs = (s - 1) * mean + part.intercepts[i] + part.total_mean
                mb.add_row(f"pre_B_{n}_{t_}_{i}", {B: 1, I: -(s - 1)}, ">=", rhs)
            for i in range(1, W + 1):
                rhs = slopes[i] * mean + part.intercepts[i]
                mb.add_row(f"pre_H_{n}_{t_}_{i}", {H: 1, I: -slopes[i]}, ">=", rhs)

        for t_ in range(T - L + 1, T + 1):
            mb.add_row(f"cutoff_{n}_{t_}", {f"y_{n}_{t_}": 1}, "=", 0)

        for t_ in range(L + 1, T + 1):
            I, B, H = f"I_{n}_{t_}", f"B_{n}_{t_}", f"H_{n}_{t_}"
            rate = item.rates[t_ - 1]
            flow = {I: 1.0}
            rhs = -rate
            if t_ > 1:
                flow[f"I_{n}_{t_ - 1}"] = -1.0
            else:
                rhs += opening
            mb.add_row(f"bal_{n}_{t_}", flow, ">=", rhs)
            M = big_m(inst, n, t_, quantile)
            mb.add_row(f"bigm_{n}_{t_}", {**flow, f"y_{n}_{t_ - L}": -M}, "<=", rhs)

            receipts = range(L + 1, t_ + 1)
            mb.add_row(f"sel_{n}_{t_}", {f"P_{n}_{j}_{t_}": 1 for j in receipts}, "=", 1)
            for j in receipts:
                coefs = {f"P_{n}_{j}_{t_}": 1.0, f"y_{n}_{j - L}": -1.0}
                for k in range(j - L + 1, t_ - L + 1):
                    coefs[f"y_{n}_{k}"] = 1.0
                mb.add_row(f"recent_{n}_{j}_{t_}", coefs, ">=")

            parts = {j: partition(inst.demand(n, j - L, t_, quantile), W) for j in receipts}
            means = {j: inst.mean_demand(n, j - L, t_) for j in receipts}
            for i, s in enumerate(slopes):
                coefs = {B: 1.0, I: -(s - 1)}
                for j in receipts:
                    p = parts[j]
                    offset = (s - 1) * means[j] + p.intercepts[i] + p.total_mean
                    coefs[f"P_{n}_{j}_{t_}"] = -offset
                mb.add_row(f"B_{n}_{t_}_{i}", coefs, ">=")
            for i in range(1, W + 1):
                coefs = {H: 1.0, I: -slopes[i]}
                for j in receipts:
                    coefs[f"P_{n}_{j}_{t_}"] = -(slopes[i] * means[j] + parts[j].intercepts[i])
                mb.add_row(f"H_{n}_{t_}_{i}", coefs, ">=")

    model = mb.build(kind="rs", instance=inst, segments=W, quantile=quantile)
    logger.info("built (R,S) model %s: %d variables, %d rows", model.name,
                len(model.variables), len(model.constraints))
    return model


def build_stationary_model(inst: Instance, tables: t.Optional[t.Sequence[t.Any]]) -> Model:
    """
    Shortest-path model over stationary cycles. `tables` holds one cycle table per
    item (see `replen.stationary.CycleTable`); the first-period order flags P_j are
    data taken from the tables.
    """
    T, K = inst.horizon, inst.group_cost
    if not tables or len(tables) != inst.n_items:
        raise DependencyError("the stationary model needs one cycle-cost table per item")
    for n, table in enumerate(tables):
        if table.horizon < T:
            raise DependencyError(f"cycle table of item {n} covers {table.horizon} < {T} periods")

    mb = ModelBuilder(inst.name or "stationary")
    for i in range(1, T + 1):
        mb.add_var(f"d_{i}", BINARY, cost=K)
    for n, table in enumerate(tables):
        for i in range(1, T + 1):
            for j in range(i, T + 1):
                cost = table.first_cost(j) if i == 1 else table.cost(i, j)
                mb.add_var(f"Y_{n}_{i}_{j}", BINARY, cost=cost)

    for n, table in enumerate(tables):
        mb.add_row(f"start_{n}", {f"Y_{n}_1_{j}": 1 for j in range(1, T + 1)}, "=", 1)
        for i in range(2, T + 1):
            coefs = {f"Y_{n}_{i}_{j}": 1.0 for j in range(i, T + 1)}
            coefs.update({f"Y_{n}_{k}_{i - 1}": -1.0 for k in range(1, i)})
            mb.add_row(f"flow_{n}_{i}", coefs, "=", 0)
        mb.add_row(f"end_{n}", {f"Y_{n}_{i}_{T}": 1 for i in range(1, T + 1)}, "=", 1)
        coefs = {"d_1": 1.0}
        coefs.update({f"Y_{n}_1_{j}": -float(table.orders_first(j)) for j in range(1, T + 1)})
        mb.add_row(f"first_arc_{n}", coefs, ">=")
        for i in range(2, T + 1):
            coefs = {f"d_{i}": 1.0}
            coefs.update({f"Y_{n}_{i}_{j}": -1.0 for j in range(i, T + 1)})
            mb.add_row(f"open_{n}_{i}", coefs, ">=")

    return mb.build(kind="stationary", instance=inst, horizon=T)


@dataclass(frozen=True)
class Violation:
    row: str
    slack: float


@dataclass(frozen=True)
class Evaluation:
    feasible: bool
    violations: t.Tuple[Violation, ...]
    objective: float


def _tolerance(rhs: float) -> float:
    return 1e-6 * max(1.0, abs(rhs))


def evaluate(model: Model, assignment: t.Mapping[str, float]) -> Evaluation:
    """Check bounds, integrality and every row; report violated ones with their slack."""
    missing = [v.name for v in model.variables if v.name not in assignment]
    if missing:
        raise InputError(f"assignment misses {len(missing)} variables, e.g. {missing[:5]}")
    violations = []
    for v in model.variables:
        x = assignment[v.name]
        if x < v.lower - _tolerance(v.lower if math.isfinite(v.lower) else 0):
            violations.append(Violation(f"bound:{v.name}", x - v.lower))
        if x > v.upper + _tolerance(v.upper if math.isfinite(v.upper) else 0):
            violations.append(Violation(f"bound:{v.name}", v.upper - x))
        if v.kind == BINARY and abs(x - round(x)) > 1e-6:
            violations.append(Violation(f"integrality:{v.name}", -abs(x - round(x))))
    for row in model.constraints:
        slack = row.slack(assignment)
        if slack < -_tolerance(row.rhs):
            violations.append(Violation(row.name, slack))
    return Evaluation(
        feasible=not violations,
        violations=tuple(violations),
        objective=model.objective_value(assignment),
    )


def _tighten(model: Model, values: t.Dict[str, float], name: str) -> float:
    """Smallest value of `name` meeting its lower bound and all its ≥ rows."""
    best = model.variable(name).lower
    for row in model.rows_of[name]:
        coef = dict(row.coefs)[name]
        if row.sense != ">=" or coef <= 0:
            continue
        others = sum(c * values[v] for v, c in row.coefs if v != name)
        best = max(best, (row.rhs - others) / coef)
    return best


def _stationary_arcs(plan_periods: t.Sequence[int], T: int) -> t.List[t.Tuple[int, int]]:
    starts = list(plan_periods)
    if not starts or starts[0] != 1:
        starts = [1] + starts
    ends = [s - 1 for s in starts[1:]] + [T]
    return list(zip(starts, ends))


def plan_assignment(model: Model, plan) -> t.Dict[str, float]:
    """
    Full variable assignment of `model` realizing `plan`: binaries from the plan,
    closing inventories from the order-up-to levels, cut variables at their
    smallest feasible values.
    """
    inst: t.Optional[Instance] = model.metadata.get("instance")
    kind = model.metadata.get("kind")
    if inst is None or kind not in ("rs", "stationary"):
        raise DependencyError("the model carries no instance metadata to map a plan onto")
    plan.check(inst)
    values = {v.name: 0.0 for v in model.variables}
    for t_, d in enumerate(plan.group_orders, start=1):
        values[f"d_{t_}"] = float(d)

    if kind == "stationary":
        for n in range(inst.n_items):
            for i, j in _stationary_arcs(plan.item_periods(n), inst.horizon):
                values[f"Y_{n}_{i}_{j}"] = 1.0
        return values

    for n, item in enumerate(inst.items):
        L = item.lead_time
        periods = plan.item_periods(n)
        for p in periods:
            values[f"y_{n}_{p}"] = 1.0
        for t_ in inst.periods:
            placed = [p for p in periods if p + L <= t_]
            if placed:
                p = placed[-1]
                values[f"I_{n}_{t_}"] = plan.order_up_to[n][p] - inst.mean_demand(n, p, t_)
                values[f"P_{n}_{p + L}_{t_}"] = 1.0
            else:
                values[f"I_{n}_{t_}"] = inst.initial_inventory[n] - inst.mean_demand(n, 1, t_)
        for t_ in inst.periods:
            for prefix in ("B", "H"):
                name = f"{prefix}_{n}_{t_}"
                values[name] = _tighten(model, values, name)
    return values


@dataclass(frozen=True)
class SolutionFile:
    status: str
    values: t.Dict[str, float]
    objective: t.Optional[float] = None

    def to_text(self) -> str:
        lines = [f"# status={self.status}"]
        if self.objective is not None:
            lines.append(f"# objective={self.objective!r}")
        lines += [f"{name}={value!r}" for name, value in self.values.items()]
        return "\n".join(lines) + "\n"


def read_solution(text: str) -> SolutionFile:
    """
    Parse `name=value` (or `name value`) lines; `#` starts a comment, except the
    `# objective=` and `# status=` headers.
    """
    values: t.Dict[str, float] = {}
    objective, status = None, "external"
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if line.startswith("#"):
            header = line.lstrip("#").strip()
            if header.startswith("objective="):
                objective = float(header.split("=", 1)[1])
            elif header.startswith("status="):
                status = header.split("=", 1)[1].strip()
            continue
        if not line:
            continue
        parts = line.split("=", 1) if "=" in line else line.split()
        if len(parts) != 2:
            raise InputError(f"solution line {number}: expected name=value, got {raw!r}")
        try:
            values[parts[0].strip()] = float(parts[1])
        except ValueError:
            raise InputError(f"solution line {number}: {parts[1].strip()!r} is not a number")
    return SolutionFile(status=status, values=values, objective=objective)


def _free_decisions(model: Model, decisions: t.Sequence[str]):
    """Split decision binaries into free ones and those pinned by single-variable equalities."""
    fixed: t.Dict[str, float] = {}
    for row in model.constraints:
        if row.sense == "=" and len(row.coefs) == 1 and row.coefs[0][0] in decisions:
            name, coef = row.coefs[0]
            value = row.rhs / coef
            if name in fixed and abs(fixed[name] - value) > 1e-9:
                return None, None
            fixed[name] = value
    if any(v not in (0.0, 1.0) for v in fixed.values()):
        return None, None
    return [d for d in decisions if d not in fixed], fixed


def _rs_tables(model, inst, free, fixed):
    from replen.planner import RSPlanner

    planner = RSPlanner(inst, model.metadata.get("segments", 11),
                        quantile=model.metadata.get("quantile", DEFAULT_QUANTILE))
    position = {name: b for b, name in enumerate(free)}
    tables = []
    for n in range(inst.n_items):
        names = [f"y_{n}_{t_}" for t_ in inst.periods]
        bits = [position[v] for v in names if v in position]
        base = [t_ for t_, v in enumerate(names, start=1) if fixed.get(v) == 1.0]
        periods_of = [t_ for t_, v in enumerate(names, start=1) if v in position]
        table = np.empty(1 << len(bits))
        for mask in range(len(table)):
            chosen = [periods_of[b] for b in range(len(bits)) if mask >> b & 1]
            try:
                table[mask] = planner.schedule_cost(n, sorted(base + chosen)).holding_penalty
            except InfeasibleScheduleError:
                table[mask] = math.inf
        tables.append((bits, table))
    return tables, planner


def _stationary_paths(model: Model, inst: Instance, n: int):
    """Arc costs and first-arc order flags of item n, read back from the model."""
    T = inst.horizon
    costs = dict(model.objective)
    arcs = {
        (i, j): costs.get(f"Y_{n}_{i}_{j}", 0.0) for i in range(1, T + 1) for j in range(i, T + 1)
    }
    first = dict(model.constraint(f"first_arc_{n}").coefs)
    orders = {j: -first.get(f"Y_{n}_1_{j}", 0.0) > 0 for j in range(1, T + 1)}
    return arcs, orders


def _shortest_path(T, arcs, usable):
    best = [math.inf] * (T + 2)
    nxt: t.List[t.Optional[int]] = [None] * (T + 2)
    best[T + 1] = 0.0
    for i in range(T, 0, -1):
        for j in range(i, T + 1):
            if usable(i, j) and arcs[i, j] + best[j + 1] < best[i]:
                best[i], nxt[i] = arcs[i, j] + best[j + 1], j
    path, i = [], 1
    while i <= T and nxt[i] is not None:
        path.append((i, nxt[i]))
        i = nxt[i] + 1
    return best[1], path


def _stationary_usable(orders, groups):
    return lambda i, j: (i in groups) if i > 1 else (1 in groups or not orders[j])


def _stationary_tables(model, inst, free):
    T = inst.horizon
    position = {name: b for b, name in enumerate(free)}
    bits = [position[f"d_{i}"] for i in range(1, T + 1) if f"d_{i}" in position]
    tables = []
    for n in range(inst.n_items):
        arcs, orders = _stationary_paths(model, inst, n)
        table = np.empty(1 << len(bits))
        for mask in range(len(table)):
            groups = {i for b, i in enumerate(range(1, T + 1)) if mask >> b & 1}
            table[mask] = _shortest_path(T, arcs, _stationary_usable(orders, groups))[0]
        tables.append((bits, table))
    return tables


def brute_force_solve(model: Model, binary_limit: int = DEFAULT_BINARY_LIMIT) -> SolutionFile:
    """
    Reference optimum by enumeration of the free decision binaries (group and
    item order flags). Every other variable is completed item by item: for an
    (R,S) model with the order-up-to levels fitted by the planner's slope scan,
    for a stationary model by a shortest path over the arcs the group orders open.
    """
    inst: t.Optional[Instance] = model.metadata.get("instance")
    kind = model.metadata.get("kind")
    if inst is None or kind not in ("rs", "stationary"):
        raise DependencyError("brute force needs a model built by build_rs_model or "
                              "build_stationary_model")
    if kind == "rs":
        decisions = [f"d_{t_}" for t_ in inst.periods] + [
            f"y_{n}_{t_}" for n in range(inst.n_items) for t_ in inst.periods
        ]
    else:
        decisions = [f"d_{t_}" for t_ in inst.periods]
    free, fixed = _free_decisions(model, decisions)
    if free is None:
        logger.info("model %s has contradictory fixed rows", model.name)
        return SolutionFile(status="infeasible", values={}, objective=math.inf)
    if len(free) > binary_limit:
        raise ResourceCapError(
            f"{len(free)} free binaries exceed the brute-force limit of {binary_limit} "
            f"(REPLEN_BINARY_LIMIT)"
        )

    known = set(decisions)
    rows = [r for r in model.constraints if r.coefs and all(v in known for v, _ in r.coefs)]
    position = {name: b for b, name in enumerate(free)}
    A = np.zeros((len(rows), len(free)))
    shift = np.zeros(len(rows))
    for r, row in enumerate(rows):
        for v, c in row.coefs:
            if v in position:
                A[r, position[v]] = c
            else:
                shift[r] += c * fixed[v]
    rhs = np.array([row.rhs for row in rows]) - shift
    tol = np.array([_tolerance(row.rhs) for row in rows])
    geq = np.array([row.sense == ">=" for row in rows], dtype=bool)
    leq = np.array([row.sense == "<=" for row in rows], dtype=bool)
    costs = dict(model.objective)
    linear = np.array([costs.get(v, 0.0) for v in free])
    constant = sum(costs.get(v, 0.0) * x for v, x in fixed.items())

    if kind == "rs":
        tables, planner = _rs_tables(model, inst, free, fixed)
    else:
        tables = _stationary_tables(model, inst, free)

    best_cost, best_index = math.inf, None
    total = 1 << len(free)
    shifts = np.arange(len(free), dtype=np.int64)
    for start in range(0, total, CHUNK):
        index = np.arange(start, min(start + CHUNK, total), dtype=np.int64)
        X = ((index[:, None] >> shifts[None, :]) & 1).astype(float)
        activity = X @ A.T
        ok = np.ones(len(index), dtype=bool)
        if rows:
            ok &= np.all(np.where(geq, activity >= rhs - tol, True), axis=1)
            ok &= np.all(np.where(leq, activity <= rhs + tol, True), axis=1)
            ok &= np.all(np.where(~geq & ~leq, np.abs(activity - rhs) <= tol, True), axis=1)
        value = constant + X @ linear
        for bits, table in tables:
            mask = np.zeros(len(index), dtype=np.int64)
            for k, b in enumerate(bits):
                mask |= ((index >> b) & 1) << k
            value = value + table[mask]
        value = np.where(ok & np.isfinite(value), value, math.inf)
        k = int(np.argmin(value))
        if value[k] < best_cost - 1e-12:
            best_cost, best_index = float(value[k]), int(index[k])
    logger.debug("brute force over %d assignments of %s: best %.6f", total, model.name, best_cost)

    if best_index is None:
        return SolutionFile(status="infeasible", values={}, objective=math.inf)

    chosen = {**fixed, **{v: float(best_index >> b & 1) for v, b in position.items()}}
    if kind == "rs":
        groups = [t_ for t_ in inst.periods if chosen[f"d_{t_}"] == 1.0]
        schedules = [
            planner.schedule_cost(
                n, [t_ for t_ in inst.periods if chosen[f"y_{n}_{t_}"] == 1.0]
            )
            for n in range(inst.n_items)
        ]
        values = plan_assignment(model, planner.make_plan(groups, schedules))
    else:
        values = {v.name: 0.0 for v in model.variables}
        groups = {t_ for t_ in inst.periods if chosen[f"d_{t_}"] == 1.0}
        for t_ in groups:
            values[f"d_{t_}"] = 1.0
        for n in range(inst.n_items):
            arcs, orders = _stationary_paths(model, inst, n)
            _, path = _shortest_path(inst.horizon, arcs, _stationary_usable(orders, groups))
            for i, j in path:
                values[f"Y_{n}_{i}_{j}"] = 1.0

    check = evaluate(model, values)
    if not check.feasible:
        raise DependencyError(
            f"completed assignment violates {[v.row for v in check.violations[:5]]}"
        )
    return SolutionFile(status="optimal", values=values, objective=check.objective)


def _check_names(model: Model) -> None:
    seen: t.Set[str] = set()
    for name in [v.name for v in model.variables] + [r.name for r in model.constraints]:
        if not _NAME.match(name):
            raise ExportError(f"name {name!r} can not be written to MPS/LP")
        if name in seen or name == OBJECTIVE_ROW:
            raise ExportError(f"name collision on {name!r}")
        seen.add(name)


def _num(x: float) -> str:
    return repr(float(x))


def export(model: Model, fmt: str = "mps") -> str:
    fmt = fmt.lower()
    _check_names(model)
    if fmt == "mps":
        return to_mps(model)
    if fmt == "lp":
        return to_lp(model)
    raise ExportError(f"unknown export format {fmt!r}, expected mps or lp")


def to_mps(model: Model) -> str:
    """
    Column-aligned MPS. Names may exceed eight characters, so the columns are padded
    to the longest name (the layout free-MPS readers accept).
    """
    _check_names(model)
    width = max([len(OBJECTIVE_ROW)] + [len(v.name) for v in model.variables]
                + [len(r.name) for r in model.constraints])
    sense = {">=": "G", "<=": "L", "=": "E"}
    lines = [f"NAME          {model.name}", "ROWS", f" N  {OBJECTIVE_ROW}"]
    lines += [f" {sense[r.sense]}  {r.name}" for r in model.constraints]

    entries: t.Dict[str, t.List[t.Tuple[str, float]]] = {v.name: [] for v in model.variables}
    for v, c in model.objective:
        entries[v].append((OBJECTIVE_ROW, c))
    for row in model.constraints:
        for v, c in row.coefs:
            entries[v].append((row.name, c))

    lines.append("COLUMNS")
    in_marker, quoted = False, "'MARKER'"
    for v in model.variables:
        binary = v.kind == BINARY
        if binary != in_marker:
            tag = "'INTORG'" if binary else "'INTEND'"
            lines.append(f"    {'MARKER':<{width}}  {quoted:<{width}}  {tag}")
            in_marker = binary
        column = entries[v.name] or [(OBJECTIVE_ROW, 0.0)]
        for row, c in column:
            lines.append(f"    {v.name:<{width}}  {row:<{width}}  {_num(c)}")
    if in_marker:
        lines.append(f"    {'MARKER':<{width}}  {quoted:<{width}}  'INTEND'")

    lines.append("RHS")
    for row in model.constraints:
        if row.rhs != 0:
            lines.append(f"    {'RHS':<{width}}  {row.name:<{width}}  {_num(row.rhs)}")

    lines.append("BOUNDS")
    for v in model.variables:
        if v.kind == BINARY:
            lines.append(f" BV BND       {v.name}")
        elif v.lower == -math.inf and v.upper == math.inf:
            lines.append(f" FR BND       {v.name}")
        else:
            if v.lower == -math.inf:
                lines.append(f" MI BND       {v.name}")
            elif v.lower != 0:
                lines.append(f" LO BND       {v.name:<{width}}  {_num(v.lower)}")
            if v.upper != math.inf:
                lines.append(f" UP BND       {v.name:<{width}}  {_num(v.upper)}")
    lines.append("ENDATA")
    return "\n".join(lines) + "\n"


def parse_mps(text: str) -> Model:
    section, name = None, ""
    senses: t.Dict[str, str] = {}
    order: t.List[str] = []
    columns: t.Dict[str, t.List[t.Tuple[str, float]]] = {}
    kinds: t.Dict[str, str] = {}
    rhs: t.Dict[str, float] = {}
    lower: t.Dict[str, float] = {}
    upper: t.Dict[str, float] = {}
    inverse = {"G": ">=", "L": "<=", "E": "="}
    for number, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip() or raw.startswith("*"):
            continue
        fields = raw.split()
        if not raw[0].isspace():
            section = fields[0]
            if section == "NAME":
                name = fields[1] if len(fields) > 1 else ""
            continue
        try:
            if section == "ROWS":
                if fields[0] != "N":
                    senses[fields[1]] = inverse[fields[0]]
                    order.append(fields[1])
            elif section == "COLUMNS":
                if len(fields) == 3 and fields[1] == "'MARKER'":
                    continue
                var = fields[0]
                if var not in columns:
                    columns[var] = []
                    kinds[var] = CONTINUOUS
                for row, value in zip(fields[1::2], fields[2::2]):
                    columns[var].append((row, float(value)))
            elif section == "RHS":
                for row, value in zip(fields[1::2], fields[2::2]):
                    rhs[row] = float(value)
            elif section == "BOUNDS":
                kind, var = fields[0], fields[2]
                if kind == "BV":
                    kinds[var] = BINARY
                elif kind == "FR":
                    lower[var], upper[var] = -math.inf, math.inf
                elif kind == "MI":
                    lower[var] = -math.inf
                elif kind == "LO":
                    lower[var] = float(fields[3])
                elif kind == "UP":
                    upper[var] = float(fields[3])
                else:
                    raise ExportError(f"MPS line {number}: unsupported bound type {kind}")
        except (IndexError, KeyError, ValueError) as err:
            raise ExportError(f"MPS line {number}: can not parse {raw!r} ({err})")

    mb = ModelBuilder(name)
    for var in columns:
        if kinds[var] == BINARY:
            mb.add_var(var, BINARY)
        else:
            mb.add_var(var, CONTINUOUS, lower.get(var, 0.0), upper.get(var, math.inf))
    rows: t.Dict[str, t.Dict[str, float]] = {r: {} for r in order}
    for var, column in columns.items():
        for row, value in column:
            if row == OBJECTIVE_ROW:
                if value:
                    mb._objective[var] = value
            else:
                rows[row][var] = value
    for row in order:
        mb.add_row(row, rows[row], senses[row], rhs.get(row, 0.0))
    return mb.build()


def _terms(pairs: t.Sequence[t.Tuple[str, float]], per_line: int = 6) -> str:
    tokens = []
    for k, (v, c) in enumerate(pairs):
        sign = "-" if c < 0 else "+"
        tokens.append(f"{sign} {_num(abs(c))} {v}" if k else f"{_num(c)} {v}")
    lines = [" ".join(tokens[k : k + per_line]) for k in range(0, len(tokens), per_line)]
    return "\n   ".join(lines)


def _bound(x: float) -> str:
    return "-inf" if x == -math.inf else "+inf" if x == math.inf else _num(x)


def to_lp(model: Model) -> str:
    """CPLEX LP text; the Bounds section lists every variable in declaration order."""
    _check_names(model)
    lines = [f"\\ Problem name: {model.name}", "Minimize"]
    lines.append(f" obj: {_terms(model.objective)}".rstrip())
    lines.append("Subject To")
    for row in model.constraints:
        lhs = _terms(row.coefs) if row.coefs else "0.0"
        lines.append(f" {row.name}: {lhs} {row.sense} {_num(row.rhs)}")
    lines.append("Bounds")
    for v in model.variables:
        if v.lower == -math.inf and v.upper == math.inf:
            lines.append(f" {v.name} free")
        else:
            lines.append(f" {_bound(v.lower)} <= {v.name} <= {_bound(v.upper)}")
    binaries = model.binaries
    if binaries:
        lines.append("Binaries")
        lines += [" " + " ".join(binaries[k : k + 8]) for k in range(0, len(binaries), 8)]
    lines.append("End")
    return "\n".join(lines) + "\n"


def _parse_terms(tokens: t.List[str]) -> t.Dict[str, float]:
    terms: t.Dict[str, float] = {}
    sign, k = 1.0, 0
    while k < len(tokens):
        token = tokens[k]
        if token in "+-":
            sign = -1.0 if token == "-" else 1.0
            k += 1
            continue
        coef = float(token)
        terms[tokens[k + 1]] = terms.get(tokens[k + 1], 0.0) + sign * coef
        sign, k = 1.0, k + 2
    return terms


def parse_lp(text: str) -> Model:
    name, section = "", None
    chunks: t.Dict[str, t.List[str]] = {"objective": [], "rows": [], "bounds": [], "binaries": []}
    headers = {"minimize": "objective", "subject to": "rows", "bounds": "bounds",
               "binaries": "binaries", "end": None}
    for raw in text.splitlines():
        line = raw.strip()
        if line.startswith("\\"):
            if "Problem name:" in line:
                name = line.split("Problem name:", 1)[1].strip()
            continue
        if line.lower() in headers:
            section = headers[line.lower()]
            continue
        if line and section:
            chunks[section].append(line)

    try:
        objective_tokens = " ".join(chunks["objective"]).split()
        if objective_tokens and objective_tokens[0].endswith(":"):
            objective_tokens = objective_tokens[1:]
        objective = _parse_terms(objective_tokens)

        rows = []
        for token in " ".join(chunks["rows"]).split():
            if token.endswith(":"):
                rows.append([token[:-1]])
            else:
                rows[-1].append(token)

        bounds: t.Dict[str, t.Tuple[float, float]] = {}
        for line in chunks["bounds"]:
            fields = line.split()
            if len(fields) == 2 and fields[1] == "free":
                bounds[fields[0]] = (-math.inf, math.inf)
            else:
                bounds[fields[2]] = (float(fields[0]), float(fields[4]))
        binaries = set(" ".join(chunks["binaries"]).split())
    except (IndexError, ValueError) as err:
        raise ExportError(f"can not parse LP text: {err}")

    mb = ModelBuilder(name)
    for var, (lo, hi) in bounds.items():
        if var in binaries:
            mb.add_var(var, BINARY)
        else:
            mb.add_var(var, CONTINUOUS, lo, hi)
    mb._objective.update({v: c for v, c in objective.items() if c})
    for tokens in rows:
        row_name, body = tokens[0], tokens[1:]
        sense_at = next(k for k, tok in enumerate(body) if tok in SENSES)
        terms = _parse_terms(body[:sense_at]) if body[:sense_at] != ["0.0"] else {}
        mb.add_row(row_name, terms, body[sense_at], float(body[sense_at + 1]))
    return mb.build()


def parse_model(text: str, fmt: str) -> Model:
    return parse_mps(text) if fmt.lower() == "mps" else parse_lp(text)
