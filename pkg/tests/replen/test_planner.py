import itertools

import numpy as np
import pytest

from replen.domain import Instance, ItemSpec, load_instance, partition
from replen.errors import (
    DomainError,
    InfeasibleCycleError,
    InfeasibleScheduleError,
    InputError,
    ModeError,
)
from replen.planner import (
    EXACT_HORIZON_LIMIT,
    Plan,
    RSPlanner,
    audit_plan,
    cycle_cost,
    per_item_schedule,
    pieces_cost,
    scan_minimizer,
    solve_rs,
)


@pytest.fixture
def tiny():
    return load_instance("tests/replen/data/tiny.json")


def single_item(rates, lead_time=0, holding=1.0, penalty=3.0, fixed_cost=0.0, K=0.0):
    return Instance(
        horizon=len(rates),
        group_cost=K,
        items=(ItemSpec(fixed_cost, holding, penalty, lead_time, tuple(rates)),),
        initial_inventory=(0.0,),
    )


def test_scan_minimizer_of_one_region_is_its_mean():
    part = partition(single_item([6]).demand(0, 1, 1), 1)
    assert scan_minimizer([(part, 0.0)], 1.0, 3.0) == pytest.approx(part.cond_means[0])
    assert scan_minimizer([(part, 2.0)], 1.0, 3.0) == pytest.approx(part.cond_means[0] + 2.0)


def test_one_period_level_sits_at_the_critical_ratio():
    inst = single_item([8])
    part = partition(inst.demand(0, 1, 1), 4)
    cycle = cycle_cost(inst, 0, 1, 1, W=4)
    # b/(h+b) = 0.75: the third of four regions closes the ratio
    assert cycle.order_up_to == pytest.approx(part.cond_means[2])
    assert cycle.receipt == 1
    assert cycle.cost > 0


def test_cycle_cost_respects_the_lead_time(tiny):
    cycle = cycle_cost(tiny, 1, 1, 3, W=4)
    assert cycle.receipt == 2
    assert cycle.end == 3
    with pytest.raises(InfeasibleCycleError):
        cycle_cost(tiny, 1, 3, 3, W=4)
    with pytest.raises(InfeasibleCycleError):
        cycle_cost(tiny, 1, 1, 1, W=4)


def test_longer_cycles_need_higher_levels():
    inst = single_item([5, 5, 5, 5])
    levels = [cycle_cost(inst, 0, 1, j, W=6).order_up_to for j in range(1, 5)]
    assert levels == sorted(levels)
    assert levels[-1] > levels[0]


def test_per_item_schedule_needs_period_one(tiny):
    with pytest.raises(InfeasibleScheduleError):
        per_item_schedule(tiny, 0, [2, 3], W=4)


def test_per_item_schedule_with_one_allowed_period(tiny):
    schedule = per_item_schedule(tiny, 0, [1], W=4)
    assert schedule.periods == (1,)
    assert schedule.fixed_cost == 5
    assert schedule.cost == pytest.approx(schedule.fixed_cost + schedule.holding_penalty)


def test_schedule_cost_rejects_orders_after_the_cutoff(tiny):
    planner = RSPlanner(tiny, 4)
    with pytest.raises(InfeasibleScheduleError):
        planner.schedule_cost(1, [1, 3])


def test_planner_rejects_bad_segments(tiny):
    with pytest.raises(DomainError):
        RSPlanner(tiny, 0)


def test_solved_plan_is_consistent(tiny):
    plan = solve_rs(tiny, 4)
    plan.check(tiny)
    assert plan.kind == "rs"
    assert plan.segments == 4
    assert plan.group_periods[0] == 1
    for n in range(tiny.n_items):
        periods = plan.item_periods(n)
        assert periods[0] == 1
        assert set(periods) <= set(plan.group_periods)
        assert sorted(plan.order_up_to[n]) == periods
    assert 3 not in plan.item_periods(1)
    items = sum(c["fixed_cost"] + c["holding_penalty"] for c in plan.item_costs)
    assert plan.model_cost == pytest.approx(plan.group_cost_total + items)
    assert plan.cost_per_period == pytest.approx(plan.model_cost / 3)


def test_audit_recomputes_the_model_cost(tiny):
    plan = solve_rs(tiny, 4)
    assert audit_plan(tiny, plan) == pytest.approx(plan.model_cost, rel=1e-9)


def test_heuristic_never_beats_the_exact_search(tiny):
    exact = solve_rs(tiny, 4, "exact")
    heuristic = solve_rs(tiny, 4, "heuristic")
    assert heuristic.model_cost >= exact.model_cost - 1e-9


def test_expensive_group_orders_collapse_to_period_one(tiny):
    plan = solve_rs(tiny.replace(group_cost=1e6), 4)
    assert plan.group_periods == [1]
    assert plan.item_periods(0) == [1]


def test_free_group_orders_are_never_worse(tiny):
    free = solve_rs(tiny.replace(group_cost=0.0), 4)
    priced = solve_rs(tiny, 4)
    assert free.model_cost <= priced.model_cost - 20 + 1e-9


def test_exact_mode_is_limited_in_horizon():
    inst = single_item([3] * (EXACT_HORIZON_LIMIT + 1))
    with pytest.raises(ModeError):
        solve_rs(inst, 2, "exact")
    plan = solve_rs(inst, 2, "heuristic")
    assert plan.horizon == EXACT_HORIZON_LIMIT + 1


def test_unknown_mode(tiny):
    with pytest.raises(ModeError):
        solve_rs(tiny, 4, "greedy")


def test_first_group_pinning():
    inst = single_item([4, 4, 4], K=10, fixed_cost=1).replace(initial_inventory=(6.0,))
    planner = RSPlanner(inst, 4, forced_first=False)
    waiting = planner.solve("exact", first_group=False)
    ordering = planner.solve("exact", first_group=True)
    assert 1 not in waiting.group_periods
    assert 1 in ordering.group_periods
    assert not waiting.forced_first
    forced = RSPlanner(inst, 4)
    with pytest.raises(ModeError):
        forced.solve("exact", first_group=False)


def test_plan_document(tiny):
    plan = solve_rs(tiny, 4)
    data = plan.to_dict()
    assert data["group_periods"] == plan.group_periods
    assert list(data["items"][0]["order_up_to"]) == [str(p) for p in plan.item_periods(0)]
    assert Plan.from_dict(data) == plan


def test_plan_check_and_malformed_documents(tiny):
    plan = solve_rs(tiny, 4)
    with pytest.raises(InputError):
        plan.check(tiny.select([0]))
    with pytest.raises(InputError):
        Plan.from_dict({"horizon": 3})


def random_instance(seed, horizon, n_items, max_lead=1):
    rng = np.random.default_rng(seed)
    items = tuple(
        ItemSpec(
            fixed_cost=float(rng.integers(0, 40)),
            holding=float(rng.integers(1, 4)),
            penalty=float(rng.integers(3, 16)),
            lead_time=int(rng.integers(0, max_lead + 1)),
            rates=tuple(float(r) for r in rng.integers(1, 25, size=horizon)),
        )
        for _ in range(n_items)
    )
    return Instance(
        horizon=horizon,
        group_cost=float(rng.integers(0, 120)),
        items=items,
        initial_inventory=(0.0,) * n_items,
    )


@pytest.fixture(scope="module")
def rs_example():
    return load_instance("data/instances/rs_example.json")


@pytest.fixture(scope="module")
def rs_plan(rs_example):
    return solve_rs(rs_example, 11, "exact")


def test_worked_example_plan(rs_plan):
    assert rs_plan.model_cost == pytest.approx(14236.24, rel=0.01)
    assert rs_plan.group_periods == [1, 3, 5, 8]
    assert rs_plan.item_periods(2) == [1, 3, 5]
    assert rs_plan.item_periods(4) == [1, 3, 5]
    assert rs_plan.order_up_to[0][1] == pytest.approx(123, abs=3)
    # The published level for period 5 is 164; see DESIGN.md.
    assert rs_plan.order_up_to[0][5] == pytest.approx(159.85, abs=0.1)


def test_worked_example_levels_are_strict_minimizers(rs_example, rs_plan):
    planner = RSPlanner(rs_example, 11)
    item = rs_example.items[0]
    cycle = planner.cycle_cost(0, 5, 8)
    assert cycle.order_up_to == pytest.approx(rs_plan.order_up_to[0][5])
    pieces = planner.cycle_pieces(0, 5, 8)
    for step in (-0.5, 0.5):
        cost = pieces_cost(pieces, cycle.order_up_to + step, item.holding, item.penalty)
        assert cost > cycle.cost + 1e-6


@pytest.mark.parametrize("seed", range(12))
def test_per_item_schedule_is_the_cheapest_subset(seed):
    inst = random_instance(seed, horizon=6, n_items=1)
    planner = RSPlanner(inst, 3)
    cutoff = inst.horizon - inst.items[0].lead_time
    best = planner.per_item_schedule(0, range(1, cutoff + 1))
    rest = range(2, cutoff + 1)
    costs = [
        planner.schedule_cost(0, [1, *combo]).cost
        for r in range(len(rest) + 1)
        for combo in itertools.combinations(rest, r)
    ]
    assert best.cost == pytest.approx(min(costs), rel=1e-9)


def test_levels_are_projected_when_an_order_would_be_negative():
    inst = single_item([40, 1], holding=1.0, penalty=9.0)
    planner = RSPlanner(inst, 10)
    free = [planner.cycle_cost(0, 1, 1), planner.cycle_cost(0, 2, 2)]
    # unconstrained, the second order would be negative in expectation
    assert free[1].order_up_to < free[0].order_up_to - 40
    schedule = planner.schedule_cost(0, [1, 2])
    assert schedule.projected
    assert schedule.levels[0] - schedule.levels[1] == pytest.approx(40)
    assert schedule.cost >= planner.lower_bound(0, [1, 2]) - 1e-9
    assert not planner.schedule_cost(0, [1]).projected
