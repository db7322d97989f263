"""
Problem instances, Poisson demand and first-order loss functions.

Periods are numbered from 1 to ``horizon`` everywhere in replen; items are
indexed from 0.
"""
from __future__ import annotations

import json
import logging
import math
import typing as t
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.stats import poisson

from replen.errors import DomainError, InvalidInstanceError

logger = logging.getLogger(__name__)

DEFAULT_QUANTILE: float = 1.0 - 1e-9

INSTANCE_FIELDS = {"name", "horizon", "group_cost", "initial_inventory", "items"}
ITEM_FIELDS = {"fixed_cost", "holding", "penalty", "lead_time", "rates"}


@dataclass(frozen=True)
class ItemSpec:
    """
    Costs, lead time and per-period Poisson rates of a single item.
    """

    fixed_cost: float
    holding: float
    penalty: float
    lead_time: int
    rates: t.Tuple[float, ...]

    def __post_init__(self) -> None:
        rates = tuple(float(r) for r in self.rates)
        object.__setattr__(self, "rates", rates)
        if not all(math.isfinite(r) for r in rates):
            raise InvalidInstanceError(f"item rates must be finite: {rates}")
        if any(r < 0 for r in rates):
            raise InvalidInstanceError(f"item rates must be >= 0: {rates}")
        if not self.fixed_cost >= 0:
            raise InvalidInstanceError(f"fixed_cost must be >= 0, got {self.fixed_cost}")
        if not (self.holding > 0 and self.penalty > 0):
            raise InvalidInstanceError(
                f"holding and penalty must be > 0, got h={self.holding} b={self.penalty}"
            )
        if int(self.lead_time) != self.lead_time or self.lead_time < 0:
            raise InvalidInstanceError(f"lead_time must be an integer >= 0: {self.lead_time}")
        object.__setattr__(self, "lead_time", int(self.lead_time))

    @property
    def critical_ratio(self) -> float:
        return self.penalty / (self.penalty + self.holding)


@dataclass(frozen=True)
class Instance:
    """
    Instance is the complete description of a joint replenishment problem:
    horizon T, group cost K, items and the opening inventory of every item.
    """

    horizon: int
    group_cost: float
    items: t.Tuple[ItemSpec, ...]
    initial_inventory: t.Tuple[float, ...]
    name: str = field(default="", compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "items", tuple(self.items))
        object.__setattr__(
            self, "initial_inventory", tuple(float(i) for i in self.initial_inventory)
        )
        if int(self.horizon) != self.horizon or self.horizon < 1:
            raise InvalidInstanceError(f"horizon must be a positive integer: {self.horizon}")
        object.__setattr__(self, "horizon", int(self.horizon))
        if not self.group_cost >= 0:
            raise InvalidInstanceError(f"group_cost must be >= 0, got {self.group_cost}")
        if len(self.items) == 0:
            raise InvalidInstanceError("an instance needs at least one item")
        if len(self.initial_inventory) != len(self.items):
            raise InvalidInstanceError(
                f"initial_inventory has {len(self.initial_inventory)} values "
                f"for {len(self.items)} items"
            )
        for n, item in enumerate(self.items):
            if len(item.rates) != self.horizon:
                raise InvalidInstanceError(
                    f"item {n} has {len(item.rates)} rates for a horizon of {self.horizon}"
                )
            if item.lead_time >= self.horizon:
                raise InvalidInstanceError(
                    f"item {n} lead time {item.lead_time} must be below the horizon"
                )

    @property
    def n_items(self) -> int:
        return len(self.items)

    @property
    def periods(self) -> range:
        return range(1, self.horizon + 1)

    def mean_demand(self, n: int, first: int, last: int) -> float:
        """Expected demand of item n over periods first..last (0 when the range is empty)."""
        if last < first:
            return 0.0
        return float(sum(self.items[n].rates[first - 1 : last]))

    def demand(self, n: int, first: int, last: int, quantile: float = DEFAULT_QUANTILE):
        """Demand of item n over periods first..last."""
        return convolve(self.items[n].rates[max(first, 1) - 1 : max(last, 0)], quantile)

    def replace(self, **changes) -> Instance:
        return replace(self, **changes)

    def window(self, first: int) -> Instance:
        """The same problem restricted to periods first..T."""
        if not 1 <= first <= self.horizon:
            raise DomainError(f"period {first} is outside 1..{self.horizon}")
        items = [replace(i, rates=i.rates[first - 1 :]) for i in self.items]
        lead = [min(i.lead_time, self.horizon - first) for i in items]
        items = [replace(i, lead_time=lt) for i, lt in zip(items, lead)]
        return replace(self, horizon=self.horizon - first + 1, items=tuple(items))

    def select(self, items: t.Sequence[int]) -> Instance:
        """A sub-instance made of the given items."""
        return replace(
            self,
            items=tuple(self.items[n] for n in items),
            initial_inventory=tuple(self.initial_inventory[n] for n in items),
        )

    def is_stationary(self) -> bool:
        return all(len(set(i.rates)) == 1 for i in self.items)


def instance_from_dict(data: t.Mapping[str, t.Any]) -> Instance:
    unknown = set(data) - INSTANCE_FIELDS
    if unknown:
        raise InvalidInstanceError(f"unknown instance fields: {sorted(unknown)}")
    missing = (INSTANCE_FIELDS - {"name"}) - set(data)
    if missing:
        raise InvalidInstanceError(f"missing instance fields: {sorted(missing)}")
    items = []
    for n, raw in enumerate(data["items"]):
        unknown = set(raw) - ITEM_FIELDS
        if unknown:
            raise InvalidInstanceError(f"unknown fields in item {n}: {sorted(unknown)}")
        missing = ITEM_FIELDS - set(raw)
        if missing:
            raise InvalidInstanceError(f"missing fields in item {n}: {sorted(missing)}")
        items.append(ItemSpec(**raw))
    return Instance(
        horizon=data["horizon"],
        group_cost=data["group_cost"],
        items=tuple(items),
        initial_inventory=tuple(data["initial_inventory"]),
        name=data.get("name", ""),
    )


def instance_to_dict(inst: Instance) -> t.Dict[str, t.Any]:
    data = {
        "horizon": inst.horizon,
        "group_cost": inst.group_cost,
        "initial_inventory": list(inst.initial_inventory),
        "items": [
            {
                "fixed_cost": i.fixed_cost,
                "holding": i.holding,
                "penalty": i.penalty,
                "lead_time": i.lead_time,
                "rates": list(i.rates),
            }
            for i in inst.items
        ],
    }
    if inst.name:
        data["name"] = inst.name
    return data


def load_instance(path: t.Union[str, Path]) -> Instance:
    """
    Read an instance JSON document. Unknown fields are rejected.
    """
    try:
        with open(path) as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as err:
        raise InvalidInstanceError(f"can not read instance {path}: {err}")
    inst = instance_from_dict(data)
    if not inst.name:
        inst = replace(inst, name=Path(path).stem)
    logger.debug("loaded instance %s: T=%d N=%d", inst.name, inst.horizon, inst.n_items)
    return inst


@lru_cache(maxsize=8192)
def _truncated_pmf(mean: float, quantile: float) -> np.ndarray:
    if mean == 0:
        pmf = np.ones(1)
    else:
        upper = int(poisson.ppf(quantile, mean))
        pmf = poisson.pmf(np.arange(upper + 1), mean)
        pmf = pmf / pmf.sum()
    pmf.setflags(write=False)
    return pmf


@dataclass(frozen=True)
class DemandDist:
    """
    Poisson demand truncated at `quantile` and renormalized.
    """

    mean: float
    quantile: float = DEFAULT_QUANTILE
    kind: str = "poisson"

    def __post_init__(self) -> None:
        if not (math.isfinite(self.mean) and self.mean >= 0):
            raise InvalidInstanceError(f"demand mean must be finite and >= 0: {self.mean}")
        if not 0 < self.quantile < 1:
            raise DomainError(f"truncation quantile must be in (0, 1): {self.quantile}")

    @property
    def pmf(self) -> np.ndarray:
        return _truncated_pmf(float(self.mean), float(self.quantile))

    @property
    def support(self) -> np.ndarray:
        return np.arange(len(self.pmf), dtype=float)

    @property
    def upper(self) -> int:
        return len(self.pmf) - 1

    @property
    def expected(self) -> float:
        """Mean of the truncated distribution."""
        return float(self.pmf @ self.support)


def convolve(rates: t.Iterable[float], quantile: float = DEFAULT_QUANTILE) -> DemandDist:
    """
    Demand over consecutive periods: the sum of independent Poisson variables is Poisson.
    """
    rates = [float(r) for r in rates]
    if any(r < 0 for r in rates):
        raise InvalidInstanceError(f"demand rates must be >= 0: {rates}")
    return DemandDist(mean=float(sum(rates)), quantile=quantile)


@dataclass(frozen=True, eq=False)
class DemandPartition:
    """
    W regions of a demand support with their probability masses and conditional means.
    """

    masses: np.ndarray
    cond_means: np.ndarray
    total_mean: float

    @property
    def size(self) -> int:
        return len(self.masses)

    @property
    def slopes(self) -> np.ndarray:
        """Slopes of the W+1 segments of the complementary bound, empty prefix first."""
        return np.concatenate(([0.0], np.cumsum(self.masses)))

    @property
    def intercepts(self) -> np.ndarray:
        return np.concatenate(([0.0], -np.cumsum(self.masses * self.cond_means)))


def partition(dist: DemandDist, W: int) -> DemandPartition:
    """
    Equal-probability partition of the support into W regions.

    Atoms are walked in increasing order; an atom whose probability straddles a
    multiple of 1/W is split between the two adjacent regions, so every region
    has mass 1/W.
    """
    if int(W) != W or W < 1:
        raise DomainError(f"the number of regions must be a positive integer, got {W}")
    W = int(W)
    pmf = dist.pmf
    upper = np.cumsum(pmf)
    upper[-1] = 1.0
    lower = np.concatenate(([0.0], upper[:-1]))
    edges = np.arange(W + 1) / W
    # overlap[i, k]: probability of atom k that falls into region i
    overlap = np.clip(
        np.minimum(upper[None, :], edges[1:, None]) - np.maximum(lower[None, :], edges[:-1, None]),
        0.0,
        None,
    )
    masses = overlap.sum(axis=1)
    means = overlap @ dist.support / masses
    means = np.maximum.accumulate(means)
    masses.setflags(write=False)
    means.setflags(write=False)
    return DemandPartition(masses=masses, cond_means=means, total_mean=float(masses @ means))


def _shape_like(x, *values):
    if np.ndim(x) == 0:
        return tuple(float(v.reshape(-1)[0]) for v in values)
    shape = np.shape(x)
    return tuple(v.reshape(shape) for v in values)


def loss_exact(x, dist: DemandDist):
    """
    First-order loss E[max(d - x, 0)] and its complement E[max(x - d, 0)].
    `x` may be a scalar or an array.
    """
    xs = np.asarray(x, dtype=float).reshape(-1, 1)
    k = dist.support[None, :]
    loss = np.maximum(k - xs, 0.0) @ dist.pmf
    comp = np.maximum(xs - k, 0.0) @ dist.pmf
    return _shape_like(x, loss, comp)


def loss_lb(x, part: DemandPartition):
    """
    Piecewise-linear lower bounds of the loss function and of its complement.

    The complementary bound is the upper envelope of W+1 affine segments
    x·Σ_{k<=i} p_k − Σ_{k<=i} p_k·E[d|region k], i = 0..W (i = 0 is the zero
    segment). The loss bound follows from L̂ − L = x − mean, so it equals
    Σ p_i·max(E[d|region i] − x, 0): nonnegative and below the exact loss.
    """
    xs = np.asarray(x, dtype=float).reshape(1, -1)
    comp = np.max(part.slopes[:, None] * xs + part.intercepts[:, None], axis=0)
    loss = np.maximum(comp + (part.total_mean - xs[0]), 0.0)
    return _shape_like(x, loss, comp)
