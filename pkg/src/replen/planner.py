"""
(R,S) planning for the nonstationary joint replenishment problem.

A plan fixes, before any demand is observed, the periods in which the group
orders (δ), the periods in which each item orders (y), and the order-up-to
position S of every item order. Expected holding and penalty costs are priced
with the piecewise-linear lower bounds of `replen.domain.loss_lb`, so the plan
cost is the optimum of the linearized mixed-integer model built by
`replen.milp.build_rs_model`.

The search is combinatorial:
- a replenishment cycle of item n placed in period i covers the receipt
  periods i+L..j; its order-up-to level minimizes a convex piecewise-linear
  function and is found by scanning the breakpoints;
- given the group order periods, every item picks its own order periods by a
  shortest path over cycles;
- the group order periods are enumerated (exact) or improved by coordinate
  descent (heuristic).
"""
from __future__ import annotations

import itertools
import logging
import typing as t
from dataclasses import dataclass, field

import numpy as np

from replen.domain import DEFAULT_QUANTILE, DemandPartition, Instance, loss_lb, partition
from replen.errors import (
    DomainError,
    InfeasibleCycleError,
    InfeasibleScheduleError,
    InputError,
    ModeError,
)

logger = logging.getLogger(__name__)

DEFAULT_SEGMENTS: int = 11
EXACT_HORIZON_LIMIT: int = 14
MODES = ("exact", "heuristic")

_TOL = 1e-9

Pieces = t.List[t.Tuple[DemandPartition, float]]


@dataclass(frozen=True)
class CycleCost:
    item: int
    placement: int
    receipt: int
    end: int
    order_up_to: float
    cost: float


@dataclass(frozen=True)
class ItemSchedule:
    """
    Order periods of one item, the order-up-to level of each order and its costs.
    `projected` tells whether some level had to be raised above its cycle optimum
    to keep expected order quantities nonnegative.
    """

    item: int
    periods: t.Tuple[int, ...]
    levels: t.Tuple[float, ...]
    fixed_cost: float
    holding_penalty: float
    projected: bool = False

    @property
    def cost(self) -> float:
        return self.fixed_cost + self.holding_penalty


@dataclass(frozen=True)
class Plan:
    """
    Plan holds the (R,S) policy parameters and the cost the model assigns to them.
    """

    kind: str
    horizon: int
    group_orders: t.Tuple[bool, ...]
    item_orders: t.Tuple[t.Tuple[bool, ...], ...]
    order_up_to: t.Tuple[t.Dict[int, float], ...]
    model_cost: float
    group_cost_total: float
    item_costs: t.Tuple[t.Dict[str, float], ...]
    segments: t.Optional[int] = None
    forced_first: bool = True
    extra: t.Dict[str, t.Any] = field(default_factory=dict, compare=False)

    @property
    def n_items(self) -> int:
        return len(self.item_orders)

    @property
    def group_periods(self) -> t.List[int]:
        return [p for p, d in enumerate(self.group_orders, start=1) if d]

    def item_periods(self, n: int) -> t.List[int]:
        return [p for p, y in enumerate(self.item_orders[n], start=1) if y]

    @property
    def cost_per_period(self) -> float:
        return self.model_cost / self.horizon

    def check(self, inst: Instance) -> None:
        """
        Raise an InputError when the plan does not fit the shape of the instance.
        """
        if self.horizon != inst.horizon or len(self.group_orders) != inst.horizon:
            raise InputError(f"plan horizon {self.horizon} does not match T={inst.horizon}")
        if self.n_items != inst.n_items:
            raise InputError(f"plan has {self.n_items} items, instance has {inst.n_items}")
        for n, orders in enumerate(self.item_orders):
            if len(orders) != inst.horizon:
                raise InputError(f"item {n} order flags do not cover the horizon")
            missing = [p for p in self.item_periods(n) if p not in self.order_up_to[n]]
            if missing:
                raise InputError(f"item {n} orders in {missing} without an order-up-to level")

    def to_dict(self) -> t.Dict[str, t.Any]:
        return {
            "kind": self.kind,
            "horizon": self.horizon,
            "segments": self.segments,
            "forced_first": self.forced_first,
            "model_cost": self.model_cost,
            "cost_per_period": self.cost_per_period,
            "group_cost_total": self.group_cost_total,
            "group_orders": list(self.group_orders),
            "group_periods": self.group_periods,
            "items": [
                {
                    "orders": list(self.item_orders[n]),
                    "periods": self.item_periods(n),
                    "order_up_to": {str(p): s for p, s in sorted(self.order_up_to[n].items())},
                    **self.item_costs[n],
                }
                for n in range(self.n_items)
            ],
            **self.extra,
        }

    @classmethod
    def from_dict(cls, data: t.Mapping[str, t.Any]) -> Plan:
        try:
            items = data["items"]
            return cls(
                kind=data.get("kind", "rs"),
                horizon=int(data["horizon"]),
                group_orders=tuple(bool(d) for d in data["group_orders"]),
                item_orders=tuple(tuple(bool(y) for y in i["orders"]) for i in items),
                order_up_to=tuple(
                    {int(p): float(s) for p, s in i["order_up_to"].items()} for i in items
                ),
                model_cost=float(data["model_cost"]),
                group_cost_total=float(data.get("group_cost_total", 0.0)),
                item_costs=tuple(
                    {k: float(i[k]) for k in ("fixed_cost", "holding_penalty") if k in i}
                    for i in items
                ),
                segments=data.get("segments"),
                forced_first=bool(data.get("forced_first", True)),
            )
        except (KeyError, TypeError, ValueError, AttributeError) as err:
            raise InputError(f"malformed plan document: {err}")


def scan_minimizer(pieces: Pieces, holding: float, penalty: float) -> float:
    """
    Smallest minimizer of Σ [b·loss_lb(x − s) + h·comp_lb(x − s)] over the pieces
    (partition, shift s). The right derivative jumps by (h+b)·p at every
    conditional mean, starting from −b per piece.
    """
    points = np.concatenate([p.cond_means + s for p, s in pieces])
    jumps = np.concatenate([p.masses for p, _ in pieces]) * (holding + penalty)
    order = np.argsort(points, kind="stable")
    slope = -penalty * len(pieces) + np.cumsum(jumps[order])
    reached = slope >= -1e-12 * (holding + penalty) * len(pieces)
    return float(points[order][int(np.argmax(reached))])


def pieces_cost(pieces: Pieces, x: float, holding: float, penalty: float) -> float:
    total = 0.0
    for p, s in pieces:
        loss, comp = loss_lb(x - s, p)
        total += penalty * loss + holding * comp
    return total


class RSPlanner:
    """
    RSPlanner solves one instance; it memoizes partitions, cycles and schedules so that
    the group search reuses them.

    With `forced_first` every item orders in period 1. Without it an item may
    start by running down its opening inventory: the periods before its first
    receipt are priced as a carry-in from the opening inventory.
    """

    def __init__(
        self,
        inst: Instance,
        segments: int = DEFAULT_SEGMENTS,
        *,
        forced_first: bool = True,
        quantile: float = DEFAULT_QUANTILE,
    ) -> None:
        if int(segments) != segments or segments < 1:
            raise DomainError(f"the number of segments must be a positive integer: {segments}")
        self.inst = inst
        self.segments = int(segments)
        self.forced_first = forced_first
        self.quantile = quantile
        self._partitions: t.Dict[t.Tuple[int, int, int], DemandPartition] = {}
        self._cycles: t.Dict[t.Tuple[int, int, int], CycleCost] = {}
        self._carry: t.Dict[t.Tuple[int, int], float] = {}
        self._schedules: t.Dict[t.Tuple[int, t.Tuple[int, ...]], ItemSchedule] = {}
        self._best: t.Dict[t.Tuple[int, t.FrozenSet[int]], ItemSchedule] = {}
        self._groups: t.Dict[t.FrozenSet[int], t.Tuple[float, t.List[ItemSchedule]]] = {}

    def demand_partition(self, n: int, first: int, last: int) -> DemandPartition:
        key = (n, first, last)
        if key not in self._partitions:
            dist = self.inst.demand(n, first, last, self.quantile)
            self._partitions[key] = partition(dist, self.segments)
        return self._partitions[key]

    def cycle_pieces(self, n: int, i: int, j: int, shift: float = 0.0) -> Pieces:
        lead = self.inst.items[n].lead_time
        return [(self.demand_partition(n, i, t), shift) for t in range(i + lead, j + 1)]

    def cycle_cost(self, n: int, i: int, j: int) -> CycleCost:
        key = (n, i, j)
        if key in self._cycles:
            return self._cycles[key]
        item = self.inst.items[n]
        receipt = i + item.lead_time
        if i < 1 or receipt > self.inst.horizon:
            raise InfeasibleCycleError(
                f"item {n}: an order placed in period {i} is received in period {receipt}, "
                f"outside the horizon 1..{self.inst.horizon}"
            )
        if not receipt <= j <= self.inst.horizon:
            raise InfeasibleCycleError(
                f"item {n}: cycle end {j} must lie in {receipt}..{self.inst.horizon}"
            )
        pieces = self.cycle_pieces(n, i, j)
        level = scan_minimizer(pieces, item.holding, item.penalty)
        cycle = CycleCost(
            item=n,
            placement=i,
            receipt=receipt,
            end=j,
            order_up_to=level,
            cost=pieces_cost(pieces, level, item.holding, item.penalty),
        )
        self._cycles[key] = cycle
        return cycle

    def carry_in_cost(self, n: int, last: int) -> float:
        """Expected cost of periods 1..last served from the opening inventory alone."""
        key = (n, last)
        if key not in self._carry:
            item = self.inst.items[n]
            x = self.inst.initial_inventory[n]
            total = 0.0
            for t_ in range(1, last + 1):
                loss, comp = loss_lb(x, self.demand_partition(n, 1, t_))
                total += item.penalty * loss + item.holding * comp
            self._carry[key] = total
        return self._carry[key]

    def _cycle_ends(self, n: int, periods: t.Sequence[int]) -> t.List[int]:
        lead = self.inst.items[n].lead_time
        return [q + lead - 1 for q in periods[1:]] + [self.inst.horizon]

    def _first_receipt_gap(self, n: int, periods: t.Sequence[int]) -> int:
        lead = self.inst.items[n].lead_time
        return periods[0] + lead - 1 if periods else self.inst.horizon

    def lower_bound(self, n: int, periods: t.Sequence[int]) -> float:
        """Schedule cost with every level at its cycle optimum (coupling ignored)."""
        item = self.inst.items[n]
        total = self.carry_in_cost(n, self._first_receipt_gap(n, periods))
        for p, e in zip(periods, self._cycle_ends(n, periods)):
            total += item.fixed_cost + self.cycle_cost(n, p, e).cost
        return total

    def schedule_cost(self, n: int, periods: t.Sequence[int]) -> ItemSchedule:
        """
        Price a fixed set of order periods. Levels are fitted jointly so that no
        order has a negative expected quantity: in the coordinates
        U = S + E[demand before the placement] the constraint reads U nondecreasing
        and U >= opening inventory, which pool-adjacent-violators solves exactly
        for convex cycle costs.
        """
        periods = tuple(sorted(periods))
        key = (n, periods)
        if key in self._schedules:
            return self._schedules[key]
        item = self.inst.items[n]
        cutoff = self.inst.horizon - item.lead_time
        if any(p < 1 or p > cutoff for p in periods):
            raise InfeasibleScheduleError(
                f"item {n}: order periods {list(periods)} must lie in 1..{cutoff}"
            )
        if self.forced_first and (not periods or periods[0] != 1):
            raise InfeasibleScheduleError(f"item {n}: the first order must be placed in period 1")

        blocks: t.List[t.Tuple[Pieces, float, t.List[int]]] = []
        cycles = []
        for idx, (p, e) in enumerate(zip(periods, self._cycle_ends(n, periods))):
            shift = self.inst.mean_demand(n, 1, p - 1)
            pieces = self.cycle_pieces(n, p, e, shift)
            cycles.append((p, e, shift))
            blocks.append((pieces, scan_minimizer(pieces, item.holding, item.penalty), [idx]))
            while len(blocks) > 1 and blocks[-2][1] > blocks[-1][1] + _TOL:
                top, prev = blocks.pop(), blocks.pop()
                merged = prev[0] + top[0]
                value = scan_minimizer(merged, item.holding, item.penalty)
                blocks.append((merged, value, prev[2] + top[2]))

        opening = self.inst.initial_inventory[n]
        position = {}
        for _, value, members in blocks:
            for idx in members:
                position[idx] = max(value, opening)

        levels, holding_penalty, projected = [], 0.0, False
        for idx, (p, e, shift) in enumerate(cycles):
            level = position[idx] - shift
            cycle = self.cycle_cost(n, p, e)
            if abs(level - cycle.order_up_to) > _TOL:
                projected = True
                cost = pieces_cost(self.cycle_pieces(n, p, e), level, item.holding, item.penalty)
            else:
                level, cost = cycle.order_up_to, cycle.cost
            levels.append(level)
            holding_penalty += cost
        holding_penalty += self.carry_in_cost(n, self._first_receipt_gap(n, periods))

        schedule = ItemSchedule(
            item=n,
            periods=periods,
            levels=tuple(levels),
            fixed_cost=item.fixed_cost * len(periods),
            holding_penalty=holding_penalty,
            projected=projected,
        )
        self._schedules[key] = schedule
        return schedule

    def per_item_schedule(self, n: int, allowed: t.Iterable[int]) -> ItemSchedule:
        """
        Cheapest order periods of item n among `allowed`: shortest path over cycles,
        then a joint fit of the levels. When the fit has to move a level, the
        path may no longer be optimal and the allowed subsets are searched
        exhaustively, pruned by their uncoupled cost.
        """
        item = self.inst.items[n]
        cutoff = self.inst.horizon - item.lead_time
        nodes = sorted({p for p in allowed if 1 <= p <= cutoff})
        key = (n, frozenset(nodes))
        if key in self._best:
            return self._best[key]
        if self.forced_first and (not nodes or nodes[0] != 1):
            raise InfeasibleScheduleError(
                f"item {n}: receipt periods {1 + item.lead_time}..{self.inst.horizon} "
                f"can not be covered without an order in period 1"
            )

        best: t.Dict[int, t.Tuple[float, t.Optional[int]]] = {}
        for idx in reversed(range(len(nodes))):
            p = nodes[idx]
            choice = (item.fixed_cost + self.cycle_cost(n, p, self.inst.horizon).cost, None)
            for q in nodes[idx + 1 :]:
                value = item.fixed_cost + self.cycle_cost(n, p, q + item.lead_time - 1).cost
                value += best[q][0]
                if value < choice[0] - _TOL:
                    choice = (value, q)
            best[p] = choice

        starts = [(self.carry_in_cost(n, p + item.lead_time - 1) + best[p][0], p) for p in nodes]
        if self.forced_first:
            starts = starts[:1]
        else:
            starts.append((self.carry_in_cost(n, self.inst.horizon), None))
        _, first = min(starts, key=lambda s: (s[0], s[1] is None, s[1] or 0))

        path: t.List[int] = []
        while first is not None:
            path.append(first)
            first = best[first][1]
        schedule = self.schedule_cost(n, path)
        if schedule.projected:
            logger.debug("item %d: levels projected on %s, searching all schedules", n, path)
            schedule = self._search_schedules(n, nodes, schedule)
        self._best[key] = schedule
        return schedule

    def _search_schedules(
        self, n: int, nodes: t.List[int], incumbent: ItemSchedule
    ) -> ItemSchedule:
        head, rest = ([1], nodes[1:]) if self.forced_first else ([], nodes)
        for r in range(len(rest) + 1):
            for combo in itertools.combinations(rest, r):
                periods = head + list(combo)
                if self.lower_bound(n, periods) >= incumbent.cost - _TOL:
                    continue
                candidate = self.schedule_cost(n, periods)
                if candidate.cost < incumbent.cost - _TOL:
                    incumbent = candidate
        return incumbent

    def group_cost(self, group: t.Iterable[int]) -> t.Tuple[float, t.List[ItemSchedule]]:
        key = frozenset(group)
        if key not in self._groups:
            schedules = [self.per_item_schedule(n, key) for n in range(self.inst.n_items)]
            cost = self.inst.group_cost * len(key) + sum(s.cost for s in schedules)
            self._groups[key] = (cost, schedules)
        return self._groups[key]

    def solve(self, mode: str = "exact", first_group: t.Optional[bool] = None) -> Plan:
        """
        Best plan. `first_group` pins the group order of period 1 (True: the group
        orders in period 1, False: it does not); with `forced_first` it is always True.
        """
        if mode not in MODES:
            raise ModeError(f"unknown mode {mode!r}, expected one of {MODES}")
        if self.forced_first:
            if first_group is False:
                raise ModeError("period 1 always has a group order when the first order is forced")
            first_group = True
        if mode == "exact":
            if self.inst.horizon > EXACT_HORIZON_LIMIT:
                raise ModeError(
                    f"exact mode enumerates 2^(T-1) group schedules and is limited to "
                    f"T <= {EXACT_HORIZON_LIMIT} (T={self.inst.horizon}); use --mode heuristic"
                )
            group, cost, schedules = self._solve_exact(first_group)
        else:
            group, cost, schedules = self._solve_heuristic(first_group)
        logger.info("%s plan for %s: cost %.4f, group periods %s", mode, self.inst.name, cost,
                    sorted(group))
        return self.make_plan(group, schedules)

    def _first_options(self, first_group: t.Optional[bool]) -> t.List[t.List[int]]:
        if first_group is None:
            return [[], [1]]
        return [[1]] if first_group else [[]]

    def _solve_exact(self, first_group):
        T, K = self.inst.horizon, self.inst.group_cost
        everything = range(1, T + 1)
        bound = sum(self.per_item_schedule(n, everything).cost for n in range(self.inst.n_items))
        incumbent: t.Optional[t.Tuple[float, t.FrozenSet[int], t.List[ItemSchedule]]] = None
        rest = list(range(2, T + 1))
        visited = 0
        for r in range(len(rest) + 1):
            for head in self._first_options(first_group):
                if incumbent and K * (len(head) + r) + bound >= incumbent[0] - _TOL:
                    continue
                for combo in itertools.combinations(rest, r):
                    group = frozenset(head + list(combo))
                    cost, schedules = self.group_cost(group)
                    visited += 1
                    if incumbent is None or cost < incumbent[0] - _TOL:
                        incumbent = (cost, group, schedules)
        logger.debug("exact search evaluated %d group schedules", visited)
        cost, group, schedules = incumbent
        return group, cost, schedules

    def _solve_heuristic(self, first_group):
        T = self.inst.horizon
        locked = {1} if first_group else set()
        banned = {1} if first_group is False else set()
        everything = [p for p in range(1, T + 1) if p not in banned]
        group = set(locked)
        for n in range(self.inst.n_items):
            group |= set(self.per_item_schedule(n, everything).periods)
        cost, schedules = self.group_cost(group)
        while True:
            used = set(locked).union(*[s.periods for s in schedules])
            if used != group:
                group = used
                cost, schedules = self.group_cost(group)
                continue
            moves = [group - {g} for g in sorted(group - locked)]
            moves += [group | {g} for g in everything if g not in group]
            best = None
            for move in moves:
                value, scheds = self.group_cost(move)
                if value < cost - _TOL and (best is None or value < best[0] - _TOL):
                    best = (value, move, scheds)
            if best is None:
                break
            cost, group, schedules = best
        return frozenset(group), cost, schedules

    def make_plan(self, group: t.Iterable[int], schedules: t.Sequence[ItemSchedule]) -> Plan:
        T = self.inst.horizon
        group = frozenset(group)
        group_total = self.inst.group_cost * len(group)
        return Plan(
            kind="rs",
            horizon=T,
            group_orders=tuple(p in group for p in range(1, T + 1)),
            item_orders=tuple(tuple(p in s.periods for p in range(1, T + 1)) for s in schedules),
            order_up_to=tuple(dict(zip(s.periods, s.levels)) for s in schedules),
            model_cost=group_total + sum(s.cost for s in schedules),
            group_cost_total=group_total,
            item_costs=tuple(
                {"fixed_cost": s.fixed_cost, "holding_penalty": s.holding_penalty}
                for s in schedules
            ),
            segments=self.segments,
            forced_first=self.forced_first,
        )


def cycle_cost(inst: Instance, n: int, i: int, j: int, W: int = DEFAULT_SEGMENTS) -> CycleCost:
    return RSPlanner(inst, W).cycle_cost(n, i, j)


def per_item_schedule(
    inst: Instance, n: int, allowed: t.Iterable[int], W: int = DEFAULT_SEGMENTS
) -> ItemSchedule:
    return RSPlanner(inst, W).per_item_schedule(n, allowed)


def solve_rs(inst: Instance, W: int = DEFAULT_SEGMENTS, mode: str = "exact") -> Plan:
    return RSPlanner(inst, W).solve(mode)


def audit_plan(inst: Instance, plan: Plan, W: t.Optional[int] = None) -> float:
    """
    Recompute the model objective of a plan period by period from (δ, y, S):
    in every period the stock is the last received order-up-to level (or the
    opening inventory) minus the demand accumulated since its placement.
    """
    plan.check(inst)
    W = W or plan.segments or DEFAULT_SEGMENTS
    total = inst.group_cost * sum(plan.group_orders)
    for n, item in enumerate(inst.items):
        periods = plan.item_periods(n)
        total += item.fixed_cost * len(periods)
        for t_ in inst.periods:
            placed = [p for p in periods if p + item.lead_time <= t_]
            if placed:
                start, level = placed[-1], plan.order_up_to[n][placed[-1]]
            else:
                start, level = 1, inst.initial_inventory[n]
            part = partition(inst.demand(n, start, t_), W)
            loss, comp = loss_lb(level, part)
            total += item.penalty * loss + item.holding * comp
    return float(total)
