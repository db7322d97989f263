"""
Monte Carlo evaluation of replenishment plans and SDP policies.

Every replication walks periods 1..H: orders due in the period are received,
the policy places its orders against the inventory position, Poisson demand is
drawn and end-of-period holding and backorder costs are charged. Replications
are simulated in chunks; chunk c draws from its own Philox stream spawned from
the run seed, so a report only depends on (seed, replications, chunk).
"""
from __future__ import annotations

import logging
import math
import typing as t
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from scipy.stats import norm

from replen.domain import Instance
from replen.errors import DomainError, InputError, SimulationError
from replen.planner import Plan
from replen.sdp import ValueFunction

logger = logging.getLogger(__name__)

DEFAULT_REPLICATIONS = 100_000
DEFAULT_CHUNK = 10_000
CONFIDENCE = 0.95
ESCAPE_LIMIT = 1e-3
OURS = "RS"

CATEGORIES = ("group_fixed", "item_fixed", "holding", "penalty")


@dataclass(frozen=True)
class SimConfig:
    replications: int = DEFAULT_REPLICATIONS
    seed: int = 0
    warmup: int = 0
    horizon: t.Optional[int] = None
    chunk: int = DEFAULT_CHUNK

    def __post_init__(self) -> None:
        if self.replications < 1:
            raise DomainError(f"replications must be >= 1, got {self.replications}")
        if self.chunk < 1:
            raise DomainError(f"chunk must be >= 1, got {self.chunk}")
        if self.warmup < 0:
            raise DomainError(f"warmup must be >= 0, got {self.warmup}")

    def periods(self, inst: Instance) -> int:
        horizon = inst.horizon if self.horizon is None else self.horizon
        if not 1 <= horizon <= inst.horizon:
            raise InputError(f"simulation horizon {horizon} is outside 1..{inst.horizon}")
        if self.warmup >= horizon:
            raise DomainError(f"warmup {self.warmup} leaves no period out of {horizon}")
        return horizon


@dataclass(frozen=True)
class SimReport:
    mean_total: float
    mean_per_period: float
    half_width: float
    breakdown: t.Dict[str, float]
    seed: int
    replications: int
    horizon: int
    warmup: int = 0
    mean_per_period_after_warmup: float = math.nan
    period_means: t.Tuple[float, ...] = field(default=(), compare=False)
    escapes: int = 0

    @property
    def interval(self) -> t.Tuple[float, float]:
        return self.mean_total - self.half_width, self.mean_total + self.half_width

    def covers(self, value: float) -> bool:
        lo, hi = self.interval
        return lo <= value <= hi

    def to_dict(self) -> t.Dict[str, t.Any]:
        return {
            "mean_total": self.mean_total,
            "mean_per_period": self.mean_per_period,
            "mean_per_period_after_warmup": self.mean_per_period_after_warmup,
            "half_width": self.half_width,
            "interval": list(self.interval),
            "breakdown": dict(self.breakdown),
            "seed": self.seed,
            "replications": self.replications,
            "horizon": self.horizon,
            "warmup": self.warmup,
            "period_means": list(self.period_means),
            "escapes": self.escapes,
        }


class _Tally:
    """Per-replication totals and per-period sums collected over the chunks."""

    def __init__(self, horizon: int) -> None:
        self.totals: t.List[np.ndarray] = []
        self.categories: t.Dict[str, t.List[np.ndarray]] = {c: [] for c in CATEGORIES}
        self.period_sums = np.zeros(horizon)
        self.escapes = 0

    def add(self, parts: t.Dict[str, np.ndarray], per_period: np.ndarray) -> None:
        for c in CATEGORIES:
            self.categories[c].append(parts[c])
        self.totals.append(sum(parts[c] for c in CATEGORIES))
        self.period_sums += per_period.sum(axis=0)

    def report(self, cfg: SimConfig, horizon: int) -> SimReport:
        totals = np.concatenate(self.totals)
        n = totals.size
        mean = float(np.mean(totals))
        if n > 1:
            half = float(norm.ppf(0.5 + CONFIDENCE / 2) * np.std(totals, ddof=1) / math.sqrt(n))
        else:
            half = 0.0
        breakdown = {c: float(np.mean(np.concatenate(v))) for c, v in self.categories.items()}
        period_means = self.period_sums / n
        return SimReport(
            mean_total=mean,
            mean_per_period=mean / horizon,
            half_width=half,
            breakdown=breakdown,
            seed=cfg.seed,
            replications=n,
            horizon=horizon,
            warmup=cfg.warmup,
            mean_per_period_after_warmup=float(np.mean(period_means[cfg.warmup :])),
            period_means=tuple(float(x) for x in period_means),
            escapes=self.escapes,
        )


def _streams(cfg: SimConfig) -> t.Iterator[t.Tuple[int, np.random.Generator]]:
    chunks = -(-cfg.replications // cfg.chunk)
    seeds = np.random.SeedSequence(cfg.seed).spawn(chunks)
    for c, seq in enumerate(seeds):
        size = min(cfg.chunk, cfg.replications - c * cfg.chunk)
        yield size, np.random.Generator(np.random.Philox(seq))


def _rates(inst: Instance, horizon: int) -> np.ndarray:
    return np.array([item.rates[:horizon] for item in inst.items], dtype=float).T


def _end_of_period(inst: Instance, net: np.ndarray) -> t.Tuple[np.ndarray, np.ndarray]:
    h = np.array([i.holding for i in inst.items])
    b = np.array([i.penalty for i in inst.items])
    return (np.maximum(net, 0.0) * h).sum(axis=1), (np.maximum(-net, 0.0) * b).sum(axis=1)


def _fixed_costs(inst: Instance, placed: np.ndarray) -> t.Tuple[np.ndarray, np.ndarray]:
    k = np.array([i.fixed_cost for i in inst.items])
    group = np.where(placed.any(axis=1), inst.group_cost, 0.0)
    return group, (placed * k).sum(axis=1)


def simulate_plan(inst: Instance, plan: Plan, cfg: t.Optional[SimConfig] = None) -> SimReport:
    """
    Simulate a static (R,S) plan: in every period where item n is reviewed, its
    inventory position is raised to S; an order of quantity zero costs nothing.
    """
    cfg = cfg or SimConfig()
    plan.check(inst)
    horizon = cfg.periods(inst)
    N = inst.n_items
    leads = [item.lead_time for item in inst.items]
    rates = _rates(inst, horizon)
    levels = np.full((horizon, N), np.nan)
    for n in range(N):
        for p in plan.item_periods(n):
            if p <= horizon:
                levels[p - 1, n] = plan.order_up_to[n][p]
    reviewed = ~np.isnan(levels)
    tally = _Tally(horizon)
    logger.info(
        "simulating %s plan over %d periods, %d replications", plan.kind, horizon, cfg.replications
    )
    for size, rng in _streams(cfg):
        net = np.tile(np.asarray(inst.initial_inventory, dtype=float), (size, 1))
        pipeline = np.zeros((size, N, horizon + max(leads) + 1))
        parts = {c: np.zeros(size) for c in CATEGORIES}
        per_period = np.zeros((size, horizon))
        for p in range(horizon):
            net += pipeline[:, :, p]
            if reviewed[p].any():
                position = net + pipeline[:, :, p + 1 :].sum(axis=2)
                quantity = np.where(reviewed[p], np.maximum(levels[p] - position, 0.0), 0.0)
                placed = quantity > 0
                group, item = _fixed_costs(inst, placed)
                parts["group_fixed"] += group
                parts["item_fixed"] += item
                per_period[:, p] += group + item
                for n in np.flatnonzero(reviewed[p]):
                    if leads[n] == 0:
                        net[:, n] += quantity[:, n]
                    else:
                        pipeline[:, n, p + leads[n]] += quantity[:, n]
            net -= rng.poisson(rates[p], size=(size, N))
            holding, penalty = _end_of_period(inst, net)
            parts["holding"] += holding
            parts["penalty"] += penalty
            per_period[:, p] += holding + penalty
        tally.add(parts, per_period)
    report = tally.report(cfg, horizon)
    logger.info("simulated mean %.4f ± %.4f", report.mean_total, report.half_width)
    return report


def simulate_policy(
    inst: Instance, vf: ValueFunction, cfg: t.Optional[SimConfig] = None
) -> SimReport:
    """
    Simulate the state-dependent optimal policy stored in a solved SDP. States
    outside the grid are clamped for the lookup and counted as escapes.
    """
    cfg = cfg or SimConfig()
    if inst.n_items != vf.inst.n_items or inst.horizon != vf.inst.horizon:
        raise InputError("instance does not match the solved value function")
    opening = inst.initial_inventory
    if any(int(i) != i for i in opening) or not vf.grid.contains([int(i) for i in opening]):
        raise DomainError(f"opening inventory {opening} is not a state of the grid")
    horizon = cfg.periods(inst)
    N = inst.n_items
    rates = _rates(inst, horizon)
    lo = np.array(vf.grid.lo)
    hi = np.array(vf.grid.hi)
    tally = _Tally(horizon)
    for size, rng in _streams(cfg):
        net = np.tile(np.asarray(opening, dtype=np.int64), (size, 1))
        parts = {c: np.zeros(size) for c in CATEGORIES}
        per_period = np.zeros((size, horizon))
        for p in range(horizon):
            outside = ((net < lo) | (net > hi)).any(axis=1)
            tally.escapes += int(outside.sum())
            idx = np.clip(net, lo, hi) - lo
            quantity = vf.actions[p][tuple(idx[:, n] for n in range(N))]
            group, item = _fixed_costs(inst, quantity > 0)
            parts["group_fixed"] += group
            parts["item_fixed"] += item
            net = net + quantity - rng.poisson(rates[p], size=(size, N))
            holding, penalty = _end_of_period(inst, net)
            parts["holding"] += holding
            parts["penalty"] += penalty
            per_period[:, p] += group + item + holding + penalty
        tally.add(parts, per_period)
    rate = tally.escapes / (cfg.replications * horizon)
    if rate > ESCAPE_LIMIT:
        raise SimulationError(
            f"{tally.escapes} of {cfg.replications * horizon} states left the SDP grid "
            f"({rate:.2%}); widen the grid"
        )
    if tally.escapes:
        logger.warning("%d states left the SDP grid and were clamped", tally.escapes)
    return tally.report(cfg, horizon)


def instance_key(K: float, h: float, b: float) -> str:
    return f"K{K:g}-h{h:g}-b{b:g}"


def read_literature(source: t.Union[str, Path, pd.DataFrame]) -> pd.DataFrame:
    """Literature costs in long format: instance_key, policy, cost (source optional)."""
    frame = source if isinstance(source, pd.DataFrame) else pd.read_csv(source)
    missing = {"instance_key", "policy", "cost"} - set(frame.columns)
    if missing:
        raise InputError(f"literature table lacks the columns {sorted(missing)}")
    return frame


def read_costs(source: t.Union[str, Path, pd.DataFrame]) -> t.Dict[str, float]:
    """Costs of our own policy keyed by instance: columns instance_key, cost."""
    frame = source if isinstance(source, pd.DataFrame) else pd.read_csv(source)
    if not {"instance_key", "cost"} <= set(frame.columns):
        raise InputError("cost table needs the columns instance_key and cost")
    return {str(k): float(c) for k, c in zip(frame["instance_key"], frame["cost"])}


def compare_literature(
    ours: t.Mapping[str, t.Union[float, SimReport]],
    literature: t.Union[str, Path, pd.DataFrame],
) -> pd.DataFrame:
    """
    Percentage gap (competitor − ours) / ours × 100 of every literature policy,
    one row per instance plus an `average` row. Keys known to only one side
    produce blank cells.
    """
    costs = {
        k: (v.mean_per_period if isinstance(v, SimReport) else float(v)) for k, v in ours.items()
    }
    lit = read_literature(literature)
    wide = lit.drop_duplicates(["instance_key", "policy"]).pivot(
        index="instance_key", columns="policy", values="cost"
    )
    policies = list(dict.fromkeys(lit["policy"]))
    keys = list(costs) + [k for k in wide.index if k not in costs]
    records = []
    for key in keys:
        own = costs.get(key, math.nan)
        record: t.Dict[str, t.Any] = {"instance_key": key, OURS: own}
        candidates = {OURS: own}
        for policy in policies:
            value = wide.at[key, policy] if key in wide.index else math.nan
            candidates[policy] = value
            record[policy] = (value - own) / own * 100 if own and not pd.isna(value) else math.nan
        known = {p: c for p, c in candidates.items() if not pd.isna(c)}
        record["best_policy"] = min(known, key=known.get) if known else ""
        records.append(record)
    columns = ["instance_key", OURS, *policies, "best_policy"]
    table = pd.DataFrame.from_records(records, columns=columns)
    average = {"instance_key": "average", OURS: math.nan, "best_policy": ""}
    average.update({p: table[p].mean() for p in policies})
    table = pd.concat([table, pd.DataFrame([average])], ignore_index=True)
    logger.info("compared %d instances against %d policies", len(keys), len(policies))
    return table


def costs_from_gaps(
    gaps: t.Union[str, Path, pd.DataFrame], source: str = ""
) -> t.Tuple[t.Dict[str, float], pd.DataFrame]:
    """
    Back-compute competitor costs from a published gap table with columns K, h,
    b, the (R,S) cost `rs` and one Δ% column per competitor policy.
    """
    frame = gaps if isinstance(gaps, pd.DataFrame) else pd.read_csv(gaps)
    base = {"K", "h", "b", "rs"}
    if not base <= set(frame.columns):
        raise InputError(f"gap table needs the columns {sorted(base)}")
    policies = [c for c in frame.columns if c not in base]
    ours: t.Dict[str, float] = {}
    records = []
    for row in frame.to_dict(orient="records"):
        key = instance_key(row["K"], row["h"], row["b"])
        ours[key] = float(row["rs"])
        for policy in policies:
            if pd.isna(row[policy]):
                continue
            cost = round(row["rs"] * (1 + row[policy] / 100), 2)
            records.append({"instance_key": key, "policy": policy, "cost": cost, "source": source})
    return ours, pd.DataFrame.from_records(
        records, columns=["instance_key", "policy", "cost", "source"]
    )
