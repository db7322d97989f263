"""
Stochastic dynamic programming over integer inventory vectors.

The recursion is the ground truth of small instances (at most three items, zero
lead times): C_t(I) = min over orders of the ordering cost plus
G_t(I + Q), with G_t(y) = L_t(y) + E[C_{t+1}(y − d_t)] and C_{T+1} = 0.
"""
from __future__ import annotations

import itertools
import logging
import math
import typing as t
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy.stats import poisson

from replen.domain import DEFAULT_QUANTILE, DemandDist, Instance, loss_exact
from replen.errors import DomainError, ResourceCapError

logger = logging.getLogger(__name__)

DEFAULT_STATE_CAP: int = 10_000_000
MAX_ITEMS: int = 3

_TIE = 1e-9
CLAMP_WARNING = 1e-6


@dataclass(frozen=True)
class StateGrid:
    """Inclusive integer inventory range of every item."""

    lo: t.Tuple[int, ...]
    hi: t.Tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.lo) != len(self.hi):
            raise DomainError("grid bounds must have one entry per item")
        for lo, hi in zip(self.lo, self.hi):
            if not lo <= 0 <= hi:
                raise DomainError(f"grid range [{lo}, {hi}] must contain 0")

    @classmethod
    def for_instance(cls, inst: Instance, quantile: float = DEFAULT_QUANTILE) -> StateGrid:
        """
        Wide enough that the opening inventory can run out and be restored over
        the whole horizon. With `bound` the high quantile of total horizon demand,
        the range is [min(I0, 0) − bound, max(I0, 0) + 2·bound]: no order-up-to
        level worth considering exceeds `bound`, and it is placed on top of
        whatever stock is already there.
        """
        lo, hi = [], []
        for n, item in enumerate(inst.items):
            bound = _demand_bound(item.rates, quantile)
            opening = int(math.floor(inst.initial_inventory[n]))
            lo.append(min(opening, 0) - bound)
            hi.append(max(int(math.ceil(inst.initial_inventory[n])), 0) + 2 * bound)
        return cls(lo=tuple(lo), hi=tuple(hi))

    @property
    def shape(self) -> t.Tuple[int, ...]:
        return tuple(h - l + 1 for l, h in zip(self.lo, self.hi))

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def values(self, n: int) -> np.ndarray:
        return np.arange(self.lo[n], self.hi[n] + 1)

    def contains(self, state: t.Sequence[int]) -> bool:
        return len(state) == len(self.lo) and all(
            l <= s <= h for s, l, h in zip(state, self.lo, self.hi)
        )

    def index(self, state: t.Sequence[float]) -> t.Tuple[int, ...]:
        if any(int(s) != s for s in state):
            raise DomainError(f"inventory vectors on the grid are integer: {tuple(state)}")
        if not self.contains(state):
            raise DomainError(f"inventory {tuple(state)} is outside the grid {self.lo}..{self.hi}")
        return tuple(int(s) - l for s, l in zip(state, self.lo))


def _demand_bound(rates: t.Sequence[float], quantile: float) -> int:
    total = sum(rates)
    return int(math.ceil(poisson.ppf(quantile, total))) if total > 0 else 0


def clamped_mass(inst: Instance, grid: StateGrid) -> t.List[float]:
    """
    Probability, per item, that demand over the horizon carries the opening
    inventory below the grid without any order. Those states are priced at the
    lowest cell, which understates their backorder cost.
    """
    masses = []
    for n, item in enumerate(inst.items):
        room = int(math.floor(inst.initial_inventory[n])) - grid.lo[n]
        total = sum(item.rates)
        masses.append(float(poisson.sf(room, total)) if total > 0 else 0.0)
    return masses


@dataclass(frozen=True, eq=False)
class ValueFunction:
    """
    Solved tables, one array per period: `cost[t-1]` holds C_t, `positioned[t-1]`
    holds G_t over post-order positions and `actions[t-1]` the optimal order vectors.
    """

    inst: Instance
    grid: StateGrid
    cost: t.Tuple[np.ndarray, ...]
    positioned: t.Tuple[np.ndarray, ...]
    actions: t.Tuple[np.ndarray, ...]
    quantile: float = DEFAULT_QUANTILE

    def _check_period(self, period: int) -> None:
        if not 1 <= period <= self.inst.horizon:
            raise DomainError(f"period {period} is outside 1..{self.inst.horizon}")

    def cost_to_go(self, period: int, state: t.Sequence[int]) -> float:
        self._check_period(period)
        return float(self.cost[period - 1][self.grid.index(state)])

    def ordering_cost(self, order: t.Sequence[int]) -> float:
        ordering = [n for n, q in enumerate(order) if q > 0]
        if not ordering:
            return 0.0
        return self.inst.group_cost + sum(self.inst.items[n].fixed_cost for n in ordering)

    def minimand(self, period: int, state: t.Sequence[int], order: t.Sequence[int]) -> float:
        """Ordering cost plus G_t at the resulting position."""
        self._check_period(period)
        position = [s + q for s, q in zip(state, order)]
        return self.ordering_cost(order) + float(
            self.positioned[period - 1][self.grid.index(position)]
        )


def _immediate_cost(inst: Instance, grid: StateGrid, period: int, quantile: float) -> np.ndarray:
    total = np.zeros(grid.shape)
    for n, item in enumerate(inst.items):
        dist = DemandDist(item.rates[period - 1], quantile)
        loss, comp = loss_exact(grid.values(n).astype(float), dist)
        shape = [1] * len(grid.shape)
        shape[n] = -1
        total = total + (item.penalty * loss + item.holding * comp).reshape(shape)
    return total


def _expectation(table: np.ndarray, pmfs: t.Sequence[np.ndarray]) -> np.ndarray:
    """E[table(y − d)] for independent demands; states below the grid read its lowest cell."""
    out = table
    for n, pmf in enumerate(pmfs):
        idx = np.arange(out.shape[n])
        acc = np.zeros_like(out)
        for d, p in enumerate(pmf):
            if p > 0:
                acc += p * np.take(out, np.maximum(idx - d, 0), axis=n)
        out = acc
    return out


def _suffix_best(values, keys, picks, axis: int):
    """Best (value, key) among all cells at or above each cell along `axis`."""
    values, keys, picks = values.copy(), keys.copy(), picks.copy()
    v, k, p = (np.moveaxis(a, axis, 0) for a in (values, keys, picks))
    for i in range(v.shape[0] - 2, -1, -1):
        better = (v[i + 1] < v[i] - _TIE) | ((v[i + 1] <= v[i] + _TIE) & (k[i + 1] < k[i]))
        v[i] = np.where(better, v[i + 1], v[i])
        k[i] = np.where(better, k[i + 1], k[i])
        p[i] = np.where(better[..., None], p[i + 1], p[i])
    return values, keys, picks


def solve_sdp(
    inst: Instance,
    grid: t.Optional[StateGrid] = None,
    *,
    state_cap: int = DEFAULT_STATE_CAP,
    quantile: float = DEFAULT_QUANTILE,
) -> ValueFunction:
    """
    Backward induction over all periods. Ties between actions go to the smallest
    total order quantity and then to the lexicographically smallest order vector;
    not ordering wins every tie.
    """
    if inst.n_items > MAX_ITEMS:
        raise DomainError(f"the SDP oracle handles at most {MAX_ITEMS} items, got {inst.n_items}")
    if any(item.lead_time != 0 for item in inst.items):
        raise DomainError("the SDP oracle requires zero lead times")
    grid = grid or StateGrid.for_instance(inst, quantile)
    if len(grid.lo) != inst.n_items:
        raise DomainError(f"grid has {len(grid.lo)} axes for {inst.n_items} items")
    pairs = grid.size * inst.horizon
    if pairs > state_cap:
        raise ResourceCapError(
            f"{pairs} state-period pairs exceed the SDP state cap of {state_cap} "
            f"(REPLEN_SDP_STATE_CAP)"
        )
    logger.info("SDP over grid %s..%s (%d states, T=%d)", grid.lo, grid.hi, grid.size,
                inst.horizon)
    for n, mass in enumerate(clamped_mass(inst, grid)):
        if mass > CLAMP_WARNING:
            logger.warning(
                "item %d: demand leaves the grid below %d with probability %.2e, "
                "those states are priced at the lowest cell", n, grid.lo[n], mass
            )

    N, shape = inst.n_items, grid.shape
    own = np.stack(np.indices(shape), axis=-1)
    base = max(shape) + 1
    weights = base ** np.arange(N - 1, -1, -1, dtype=np.int64)
    own_keys = own.sum(axis=-1).astype(np.int64) * base**N + own @ weights
    subsets = [
        s for r in range(1, N + 1) for s in itertools.combinations(range(N), r)
    ]

    costs, positioned, actions = [], [], []
    following = np.zeros(shape)
    for period in range(inst.horizon, 0, -1):
        pmfs = [DemandDist(item.rates[period - 1], quantile).pmf for item in inst.items]
        G = _immediate_cost(inst, grid, period, quantile) + _expectation(following, pmfs)
        best_v, best_k, best_p = G.copy(), own_keys.copy(), own.copy()
        for subset in subsets:
            v, k, p = G, own_keys, own
            for axis in subset:
                v, k, p = _suffix_best(v, k, p, axis)
            v = v + inst.group_cost + sum(inst.items[n].fixed_cost for n in subset)
            better = (v < best_v - _TIE) | ((v <= best_v + _TIE) & (k < best_k))
            best_v = np.where(better, v, best_v)
            best_k = np.where(better, k, best_k)
            best_p = np.where(better[..., None], p, best_p)
        for table in (best_v, G):
            table.setflags(write=False)
        order = best_p - own
        order.setflags(write=False)
        costs.append(best_v)
        positioned.append(G)
        actions.append(order)
        following = best_v

    vf = ValueFunction(
        inst=inst,
        grid=grid,
        cost=tuple(reversed(costs)),
        positioned=tuple(reversed(positioned)),
        actions=tuple(reversed(actions)),
        quantile=quantile,
    )
    if grid.contains([int(i) for i in inst.initial_inventory]) and all(
        int(i) == i for i in inst.initial_inventory
    ):
        logger.info("C_1(%s) = %.6f", inst.initial_inventory,
                    vf.cost_to_go(1, [int(i) for i in inst.initial_inventory]))
    return vf


def optimal_policy_actions(
    vf: ValueFunction, state: t.Sequence[int], period: int
) -> t.Tuple[int, ...]:
    vf._check_period(period)
    return tuple(int(q) for q in vf.actions[period - 1][vf.grid.index(state)])


@dataclass(frozen=True, eq=False)
class CostSurface:
    """G_1 at the optimal post-order position, over a rectangle of opening inventories."""

    axes: t.Tuple[np.ndarray, ...]
    values: np.ndarray

    def at(self, state: t.Sequence[int]) -> float:
        idx = tuple(int(np.searchsorted(a, s)) for a, s in zip(self.axes, state))
        return float(self.values[idx])

    def argmin(self) -> t.Tuple[int, ...]:
        idx = np.unravel_index(int(np.argmin(self.values)), self.values.shape)
        return tuple(int(a[i]) for a, i in zip(self.axes, idx))

    def to_frame(self) -> pd.DataFrame:
        mesh = np.meshgrid(*self.axes, indexing="ij")
        columns = {f"I{n + 1}": m.ravel() for n, m in enumerate(mesh)}
        columns["cost"] = self.values.ravel()
        return pd.DataFrame(columns)


def cost_grid(
    inst: Instance, vf: ValueFunction, ranges: t.Sequence[t.Tuple[int, int]]
) -> CostSurface:
    """
    C_1(I) minus the ordering cost paid at the optimum, i.e. G_1(I + Q*(I)),
    for every I in the inclusive `ranges`.
    """
    if len(ranges) != inst.n_items:
        raise DomainError(f"expected {inst.n_items} ranges, got {len(ranges)}")
    axes = []
    for n, (lo, hi) in enumerate(ranges):
        if lo > hi:
            raise DomainError(f"empty range [{lo}, {hi}] for item {n}")
        if lo < vf.grid.lo[n] or hi > vf.grid.hi[n]:
            raise DomainError(
                f"range [{lo}, {hi}] of item {n} leaves the grid "
                f"[{vf.grid.lo[n]}, {vf.grid.hi[n]}]"
            )
        axes.append(np.arange(lo, hi + 1))
    window = tuple(slice(lo - g, hi - g + 1) for (lo, hi), g in zip(ranges, vf.grid.lo))
    own = np.stack(np.indices(vf.grid.shape), axis=-1)[window]
    target = own + vf.actions[0][window]
    values = vf.positioned[0][tuple(np.moveaxis(target, -1, 0))]
    return CostSurface(axes=tuple(axes), values=values)


def value_table(vf: ValueFunction, periods: t.Optional[t.Iterable[int]] = None) -> pd.DataFrame:
    """Long table with columns I1..IN, t, cost, Q1..QN."""
    N = vf.inst.n_items
    mesh = np.meshgrid(*[vf.grid.values(n) for n in range(N)], indexing="ij")
    frames = []
    for period in periods or vf.inst.periods:
        columns = {f"I{n + 1}": m.ravel() for n, m in enumerate(mesh)}
        columns["t"] = np.full(vf.grid.size, period)
        columns["cost"] = vf.cost[period - 1].ravel()
        for n in range(N):
            columns[f"Q{n + 1}"] = vf.actions[period - 1][..., n].ravel()
        frames.append(pd.DataFrame(columns))
    return pd.concat(frames, ignore_index=True)
