"""
Stationary demand: order-up-to levels from the critical-ratio condition, cycle
costs that depend only on the cycle length, and the coordinated shortest-path
plan over them.
"""
from __future__ import annotations

import itertools
import json
import logging
import math
import typing as t
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy.stats import poisson

from replen import milp
from replen.domain import DemandDist, Instance, ItemSpec, loss_exact
from replen.errors import DomainError, InvalidInstanceError, ModeError
from replen.planner import EXACT_HORIZON_LIMIT, MODES, Plan

logger = logging.getLogger(__name__)

_TOL = 1e-9


def order_up_to_stationary(
    m: int, lead_time: int, rate: float, holding: float, penalty: float
) -> int:
    """
    Smallest integer S >= 0 with Σ_{t=1..m} P[Poisson((t+L)·λ) <= S] >= m·b/(h+b).
    """
    if m < 1:
        raise DomainError(f"cycle length must be >= 1, got {m}")
    if rate == 0:
        return 0
    target = m * penalty / (holding + penalty)
    means = (np.arange(1, m + 1) + lead_time) * rate

    def mass(S: int) -> float:
        return float(poisson.cdf(S, means).sum())

    lo, hi = 0, int(poisson.ppf(1 - 1e-12, means[-1])) + 1
    if mass(lo) >= target:
        return 0
    while mass(hi) < target:
        hi *= 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if mass(mid) >= target:
            hi = mid
        else:
            lo = mid
    return hi


def _run_cost(item: ItemSpec, x: float, first: int, last: int, rate: float) -> float:
    total = 0.0
    for u in range(first, last + 1):
        loss, comp = loss_exact(x, DemandDist(u * rate))
        total += item.holding * comp + item.penalty * loss
    return total


def cycle_cost_stationary(
    item: ItemSpec, i: int, j: int, S: t.Optional[float] = None
) -> float:
    """
    k + Σ_{u=1..m} [h·L̂(S − L·λ, d_u) + b·L(S − L·λ, d_u)] over a cycle of length
    m = j − i + 1, d_u being the demand of u periods. The cycle is shifted by the
    lead time, so the cost does not depend on where it starts.
    """
    if j < i:
        raise DomainError(f"cycle end {j} precedes its start {i}")
    rate = item.rates[0]
    m = j - i + 1
    if S is None:
        S = order_up_to_stationary(m, item.lead_time, rate, item.holding, item.penalty)
    return item.fixed_cost + _run_cost(item, S - item.lead_time * rate, 1, m, rate)


def no_order_first_cost(item: ItemSpec, j: int, opening: float) -> float:
    """
    Holding and penalty cost of running the opening inventory down until the order
    of period j + 1 arrives, over the same shifted periods an order placed in
    period 1 would cover.
    """
    if j < 1:
        raise DomainError(f"cycle end must be >= 1, got {j}")
    rate = item.rates[0]
    return _run_cost(item, opening, item.lead_time + 1, item.lead_time + j, rate)


@dataclass(frozen=True, eq=False)
class CycleTable:
    """
    Per item: the level and cost of a cycle of every length up to the horizon, and
    the cost of not ordering in period 1 before a first order in j + 1.
    """

    item: int
    horizon: int
    levels: np.ndarray
    costs: np.ndarray
    no_order: np.ndarray

    def level(self, i: int, j: int) -> float:
        return float(self.levels[j - i + 1])

    def cost(self, i: int, j: int) -> float:
        return float(self.costs[j - i + 1])

    def orders_first(self, j: int) -> bool:
        return bool(self.costs[j] < self.no_order[j])

    def first_cost(self, j: int) -> float:
        return min(float(self.costs[j]), float(self.no_order[j]))


def build_tables(inst: Instance) -> t.List[CycleTable]:
    if not inst.is_stationary():
        raise InvalidInstanceError("stationary planning needs constant demand rates")
    T = inst.horizon
    tables = []
    for n, item in enumerate(inst.items):
        rate = item.rates[0]
        levels, costs, no_order = np.zeros(T + 1), np.zeros(T + 1), np.full(T + 1, math.inf)
        for m in range(1, T + 1):
            levels[m] = order_up_to_stationary(m, item.lead_time, rate, item.holding,
                                               item.penalty)
            costs[m] = cycle_cost_stationary(item, 1, m, levels[m])
            no_order[m] = no_order_first_cost(item, m, inst.initial_inventory[n])
        for a in (levels, costs, no_order):
            a.setflags(write=False)
        tables.append(CycleTable(n, T, levels, costs, no_order))
    return tables


def with_horizon(inst: Instance, horizon: int) -> Instance:
    """The stationary instance repeated (or cut) to `horizon` periods."""
    if not inst.is_stationary():
        raise InvalidInstanceError("stationary planning needs constant demand rates")
    items = tuple(
        replace(i, rates=(i.rates[0],) * horizon, lead_time=min(i.lead_time, horizon - 1))
        for i in inst.items
    )
    return replace(inst, horizon=horizon, items=items)


@dataclass(frozen=True)
class ItemPath:
    item: int
    arcs: t.Tuple[t.Tuple[int, int], ...]
    orders: t.Tuple[int, ...]
    cost: float


class StationaryPlanner:
    def __init__(self, inst: Instance) -> None:
        self.inst = inst
        self.tables = build_tables(inst)
        self._groups: t.Dict[t.FrozenSet[int], t.Tuple[float, t.List[ItemPath]]] = {}

    def item_path(self, n: int, groups: t.AbstractSet[int]) -> ItemPath:
        """Cheapest cover of 1..T by cycles whose orders fall in `groups`."""
        T, table = self.inst.horizon, self.tables[n]
        best = [math.inf] * (T + 2)
        nxt: t.List[t.Optional[int]] = [None] * (T + 2)
        best[T + 1] = 0.0
        for i in range(T, 0, -1):
            for j in range(i, T + 1):
                if i > 1:
                    if i not in groups:
                        continue
                    arc = table.cost(i, j)
                elif table.orders_first(j) and 1 not in groups:
                    continue
                else:
                    arc = table.first_cost(j)
                if arc + best[j + 1] < best[i] - _TOL:
                    best[i], nxt[i] = arc + best[j + 1], j
        arcs, i = [], 1
        while i <= T and nxt[i] is not None:
            arcs.append((i, nxt[i]))
            i = nxt[i] + 1
        orders = tuple(a for a, b in arcs if a > 1 or table.orders_first(b))
        return ItemPath(n, tuple(arcs), orders, best[1])

    def group_cost(self, groups: t.Iterable[int]) -> t.Tuple[float, t.List[ItemPath]]:
        key = frozenset(groups)
        if key not in self._groups:
            paths = [self.item_path(n, key) for n in range(self.inst.n_items)]
            cost = self.inst.group_cost * len(key) + sum(p.cost for p in paths)
            self._groups[key] = (cost, paths)
        return self._groups[key]

    def solve(self, mode: str = "exact") -> Plan:
        if mode not in MODES:
            raise ModeError(f"unknown mode {mode!r}, expected one of {MODES}")
        T, K = self.inst.horizon, self.inst.group_cost
        everything = frozenset(range(1, T + 1))
        if mode == "exact":
            if T > EXACT_HORIZON_LIMIT:
                raise ModeError(
                    f"exact mode enumerates 2^T group schedules and is limited to "
                    f"T <= {EXACT_HORIZON_LIMIT} (T={T}); use --mode heuristic"
                )
            bound = sum(self.item_path(n, everything).cost for n in range(self.inst.n_items))
            incumbent = None
            for r in range(T + 1):
                if incumbent and K * r + bound >= incumbent[0] - _TOL:
                    break
                for combo in itertools.combinations(range(1, T + 1), r):
                    cost, paths = self.group_cost(combo)
                    if incumbent is None or cost < incumbent[0] - _TOL:
                        incumbent = (cost, frozenset(combo), paths)
            cost, groups, paths = incumbent
        else:
            groups = set().union(*[self.item_path(n, everything).orders
                                   for n in range(self.inst.n_items)])
            cost, paths = self.group_cost(groups)
            while True:
                used = set().union(*[p.orders for p in paths])
                if used != groups:
                    groups = used
                    cost, paths = self.group_cost(groups)
                    continue
                moves = [groups - {g} for g in sorted(groups)]
                moves += [groups | {g} for g in range(1, T + 1) if g not in groups]
                best = None
                for move in moves:
                    value, found = self.group_cost(move)
                    if value < cost - _TOL and (best is None or value < best[0] - _TOL):
                        best = (value, move, found)
                if best is None:
                    break
                cost, groups, paths = best
            groups = frozenset(groups)
        logger.info("stationary %s plan: cost %.4f, %.4f per period, group periods %s", mode,
                    cost, cost / T, sorted(groups))
        return self.make_plan(groups, paths)

    def make_plan(self, groups: t.AbstractSet[int], paths: t.Sequence[ItemPath]) -> Plan:
        T = self.inst.horizon
        levels = []
        costs = []
        for path, item in zip(paths, self.inst.items):
            ends = dict(path.arcs)
            levels.append({i: self.tables[path.item].level(i, ends[i]) for i in path.orders})
            fixed = item.fixed_cost * len(path.orders)
            costs.append({"fixed_cost": fixed, "holding_penalty": path.cost - fixed})
        group_total = self.inst.group_cost * len(groups)
        return Plan(
            kind="stationary",
            horizon=T,
            group_orders=tuple(p in groups for p in range(1, T + 1)),
            item_orders=tuple(tuple(p in path.orders for p in range(1, T + 1)) for path in paths),
            order_up_to=tuple(levels),
            model_cost=group_total + sum(p.cost for p in paths),
            group_cost_total=group_total,
            item_costs=tuple(costs),
            forced_first=False,
            extra={"arcs": [[list(a) for a in p.arcs] for p in paths]},
        )


def solve_stationary(
    inst: Instance, horizon: t.Optional[int] = None, mode: str = "exact"
) -> Plan:
    if horizon is not None:
        inst = with_horizon(inst, horizon)
    return StationaryPlanner(inst).solve(mode)


def stationary_model(inst: Instance, horizon: t.Optional[int] = None) -> milp.Model:
    if horizon is not None:
        inst = with_horizon(inst, horizon)
    return milp.build_stationary_model(inst, build_tables(inst))


DATASET_FIELDS = {"name", "items", "penalty", "holding", "group_cost"}


def load_dataset(path: t.Union[str, Path]) -> t.Dict[str, t.Any]:
    """
    A parameter grid: items (fixed cost, rate, fractional lead time) shared by all
    instances, and lists of penalty, holding and group costs.
    """
    try:
        with open(path) as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as err:
        raise InvalidInstanceError(f"can not read dataset {path}: {err}")
    missing = DATASET_FIELDS - set(data)
    if missing:
        raise InvalidInstanceError(f"dataset {path} misses {sorted(missing)}")
    for n, item in enumerate(data["items"]):
        if set(item) != {"fixed_cost", "rate", "lead_time"}:
            raise InvalidInstanceError(
                f"dataset item {n} needs exactly fixed_cost, rate and lead_time"
            )
    return data


def filtered_grid(dataset: t.Mapping[str, t.Any]) -> t.List[t.Dict[str, float]]:
    """
    Keep the combinations where fixed and holding/penalty costs trade off: K > b >= h.
    """
    return [
        {"K": K, "h": h, "b": b}
        for K in dataset["group_cost"]
        for h in dataset["holding"]
        for b in dataset["penalty"]
        if K > b >= h
    ]


def discretize(
    dataset: t.Mapping[str, t.Any],
    items: t.Sequence[int],
    K: float,
    h: float,
    b: float,
    sub_periods: int,
    horizon: int,
) -> Instance:
    """
    Split every period into `sub_periods`: rates and per-period holding and penalty
    costs are divided, fixed costs stay, lead times are rounded half up to whole
    sub-periods.
    """
    if sub_periods < 1:
        raise DomainError(f"sub-periods must be >= 1, got {sub_periods}")
    specs = []
    for n in items:
        raw = dataset["items"][n]
        lead = int(math.floor(raw["lead_time"] * sub_periods + 0.5))
        specs.append(
            ItemSpec(
                fixed_cost=raw["fixed_cost"],
                holding=h / sub_periods,
                penalty=b / sub_periods,
                lead_time=min(lead, horizon - 1),
                rates=(raw["rate"] / sub_periods,) * horizon,
            )
        )
    return Instance(
        horizon=horizon,
        group_cost=K,
        items=tuple(specs),
        initial_inventory=(0.0,) * len(specs),
        name=f"{dataset['name']}-K{K:g}-h{h:g}-b{b:g}",
    )


def order_frequency(plan: Plan, sub_periods: int) -> float:
    """Group orders per original period."""
    return len(plan.group_periods) * sub_periods / plan.horizon


def too_frequent(plan: Plan, sub_periods: int, limit: float = 2.0) -> bool:
    """Instances ordering more than `limit` times per original period coordinate trivially."""
    return order_frequency(plan, sub_periods) > limit
