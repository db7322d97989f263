"""
Order or not: approximating the optimal (σ, S) rule with (R,S) plans.

An opening inventory vector I at period k is classified by planning periods
k..T twice, once with a group order in period k and once without, from I,
with item fixed costs dropped, zero lead times and no forced first order.
"""
from __future__ import annotations

import itertools
import logging
import typing as t
from dataclasses import dataclass, replace

import numpy as np
import pandas as pd

from replen.domain import Instance
from replen.errors import DomainError
from replen.planner import DEFAULT_SEGMENTS, EXACT_HORIZON_LIMIT, RSPlanner
from replen.sdp import ValueFunction

logger = logging.getLogger(__name__)

ORDER_TOLERANCE = 1e-6


@dataclass(frozen=True)
class SigmaDecision:
    in_sigma: bool
    order_up_to: t.Tuple[float, ...]
    cost: float
    cost_without_group: float


def reduced_instance(inst: Instance, state: t.Sequence[float], k: int = 1) -> Instance:
    """Periods k..T from `state`, without item fixed costs and lead times."""
    if len(state) != inst.n_items:
        raise DomainError(f"expected {inst.n_items} inventory values, got {len(state)}")
    window = inst.window(k)
    items = tuple(replace(i, fixed_cost=0.0, lead_time=0) for i in window.items)
    return replace(window, items=items, initial_inventory=tuple(float(s) for s in state))


def classify(
    inst: Instance,
    state: t.Sequence[float],
    k: int = 1,
    W: int = DEFAULT_SEGMENTS,
    mode: t.Optional[str] = None,
) -> SigmaDecision:
    sub = reduced_instance(inst, state, k)
    mode = mode or ("exact" if sub.horizon <= EXACT_HORIZON_LIMIT else "heuristic")
    planner = RSPlanner(sub, W, forced_first=False)
    ordering = planner.solve(mode, first_group=True)
    waiting = planner.solve(mode, first_group=False)
    in_sigma = ordering.model_cost < waiting.model_cost - ORDER_TOLERANCE
    if in_sigma:
        levels = tuple(
            ordering.order_up_to[n].get(1, float(state[n])) for n in range(sub.n_items)
        )
        return SigmaDecision(
            in_sigma=True,
            order_up_to=levels,
            cost=ordering.model_cost,
            cost_without_group=ordering.model_cost - sub.group_cost,
        )
    return SigmaDecision(
        in_sigma=False,
        order_up_to=tuple(float(s) for s in state),
        cost=waiting.model_cost,
        cost_without_group=waiting.model_cost,
    )


@dataclass(frozen=True, eq=False)
class SigmaMap:
    period: int
    axes: t.Tuple[np.ndarray, ...]
    decisions: t.Dict[t.Tuple[int, ...], SigmaDecision]

    def cells(self) -> t.Iterator[t.Tuple[int, ...]]:
        return itertools.product(*[[int(v) for v in a] for a in self.axes])

    def __getitem__(self, state: t.Sequence[int]) -> SigmaDecision:
        return self.decisions[tuple(int(s) for s in state)]

    def to_frame(self) -> pd.DataFrame:
        N = len(self.axes)
        records = []
        for cell in self.cells():
            d = self.decisions[cell]
            record = {f"I{n + 1}": cell[n] for n in range(N)}
            record["in_sigma"] = d.in_sigma
            record.update({f"S{n + 1}": d.order_up_to[n] for n in range(N)})
            record["G"] = d.cost
            record["G_without_K"] = d.cost_without_group
            records.append(record)
        return pd.DataFrame.from_records(records)


def _axes(inst: Instance, ranges: t.Sequence[t.Tuple[int, int]]) -> t.Tuple[np.ndarray, ...]:
    if len(ranges) != inst.n_items:
        raise DomainError(f"expected {inst.n_items} ranges, got {len(ranges)}")
    axes = []
    for lo, hi in ranges:
        if lo > hi:
            raise DomainError(f"empty inventory range [{lo}, {hi}]")
        axes.append(np.arange(lo, hi + 1))
    return tuple(axes)


def sigma_map(
    inst: Instance,
    ranges: t.Sequence[t.Tuple[int, int]],
    k: int = 1,
    W: int = DEFAULT_SEGMENTS,
    mode: t.Optional[str] = None,
) -> SigmaMap:
    axes = _axes(inst, ranges)
    decisions = {}
    for cell in itertools.product(*[[int(v) for v in a] for a in axes]):
        decisions[cell] = classify(inst, cell, k, W, mode)
    ordered = sum(d.in_sigma for d in decisions.values())
    logger.info("sigma map at period %d: %d of %d cells order", k, ordered, len(decisions))
    return SigmaMap(period=k, axes=axes, decisions=decisions)


def sdp_sigma_map(
    vf: ValueFunction, ranges: t.Sequence[t.Tuple[int, int]], k: int = 1
) -> SigmaMap:
    """The same map read from the optimal actions of a solved SDP."""
    axes = _axes(vf.inst, ranges)
    if not 1 <= k <= vf.inst.horizon:
        raise DomainError(f"period {k} is outside 1..{vf.inst.horizon}")
    decisions = {}
    for cell in itertools.product(*[[int(v) for v in a] for a in axes]):
        order = vf.actions[k - 1][vf.grid.index(cell)]
        cost = vf.cost_to_go(k, cell)
        in_sigma = bool(np.any(order > 0))
        decisions[cell] = SigmaDecision(
            in_sigma=in_sigma,
            order_up_to=tuple(float(s + q) for s, q in zip(cell, order)),
            cost=cost,
            cost_without_group=cost - vf.inst.group_cost if in_sigma else cost,
        )
    return SigmaMap(period=k, axes=axes, decisions=decisions)


def staircase_violations(smap: SigmaMap) -> t.List[t.Dict[str, t.Any]]:
    """
    Cells outside σ whose upper neighbour along some axis is inside σ again.
    """
    found = []
    for cell in smap.cells():
        if smap.decisions[cell].in_sigma:
            continue
        for axis in range(len(smap.axes)):
            upper = list(cell)
            upper[axis] += 1
            neighbour = smap.decisions.get(tuple(upper))
            if neighbour is not None and neighbour.in_sigma:
                found.append({"cell": cell, "axis": axis})
    return found


def agreement(a: SigmaMap, b: SigmaMap) -> float:
    """Share of cells on which two maps take the same order decision."""
    if len(a.axes) != len(b.axes) or any(
        not np.array_equal(x, y) for x, y in zip(a.axes, b.axes)
    ):
        raise DomainError("maps cover different inventory grids")
    cells = list(a.cells())
    same = sum(a.decisions[c].in_sigma == b.decisions[c].in_sigma for c in cells)
    return same / len(cells)
