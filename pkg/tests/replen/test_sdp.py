import logging

import numpy as np
import pytest

from replen.domain import Instance, ItemSpec, load_instance
from replen.errors import DomainError, ResourceCapError
from replen.sdp import (
    StateGrid,
    clamped_mass,
    cost_grid,
    optimal_policy_actions,
    solve_sdp,
    value_table,
)


@pytest.fixture(scope="module")
def example():
    return load_instance("data/instances/sdp_example.json")


@pytest.fixture(scope="module")
def solved(example):
    return solve_sdp(example)


def test_expected_cost_of_the_example(solved):
    # The published figure is 65.4; see DESIGN.md for the conventions checked.
    assert solved.cost_to_go(1, [0, 0]) == pytest.approx(69.6232, abs=1e-3)


def test_optimal_action_attains_the_cost_to_go(solved):
    action = optimal_policy_actions(solved, [0, 0], 1)
    assert any(q > 0 for q in action)
    assert solved.minimand(1, [0, 0], action) == pytest.approx(solved.cost_to_go(1, [0, 0]))


@pytest.mark.parametrize("order", [(0, 0), (5, 5), (10, 0), (0, 12), (20, 20)])
def test_no_action_beats_the_optimum(solved, order):
    assert solved.minimand(1, [0, 0], order) >= solved.cost_to_go(1, [0, 0]) - 1e-9


def test_plenty_of_stock_orders_nothing(solved):
    top = list(solved.grid.hi)
    assert optimal_policy_actions(solved, top, 1) == (0, 0)
    assert optimal_policy_actions(solved, [40, 40], 4) == (0, 0)


def test_states_must_be_on_the_grid(solved):
    with pytest.raises(DomainError):
        solved.cost_to_go(1, [solved.grid.hi[0] + 1, 0])
    with pytest.raises(DomainError):
        solved.cost_to_go(1, [0.5, 0])
    with pytest.raises(DomainError):
        solved.cost_to_go(5, [0, 0])


def test_grid_covers_the_total_demand(example, solved):
    grid = solved.grid
    assert grid.lo[0] < -24 and grid.hi[0] > 24
    assert grid.contains((0, 0))
    assert grid.size == grid.shape[0] * grid.shape[1]
    with pytest.raises(DomainError):
        StateGrid(lo=(1,), hi=(5,))


def test_oracle_limits(example):
    item = example.items[0]
    four = Instance(horizon=4, group_cost=1, items=(item,) * 4, initial_inventory=(0,) * 4)
    with pytest.raises(DomainError):
        solve_sdp(four)
    lead = ItemSpec(0, 1, 5, 1, item.rates)
    with pytest.raises(DomainError):
        solve_sdp(example.replace(items=(item, lead)))
    with pytest.raises(ResourceCapError):
        solve_sdp(example, state_cap=10)


def test_small_grid_with_single_item():
    inst = Instance(
        horizon=2,
        group_cost=0,
        items=(ItemSpec(0, 1, 4, 0, (2, 2)),),
        initial_inventory=(0,),
    )
    vf = solve_sdp(inst, StateGrid(lo=(-10,), hi=(15,)))
    # without ordering costs the policy is a base stock: every low state reaches one level
    levels = {s + optimal_policy_actions(vf, [s], 2)[0] for s in range(-10, 0)}
    assert len(levels) == 1


def test_cost_surface(example, solved):
    surface = cost_grid(example, solved, [(0, 4), (0, 2)])
    assert surface.values.shape == (5, 3)
    frame = surface.to_frame()
    assert list(frame.columns) == ["I1", "I2", "cost"]
    assert len(frame) == 15
    low, high = surface.argmin()
    assert 0 <= low <= 4 and 0 <= high <= 2
    assert surface.at((0, 0)) == pytest.approx(solved.cost_to_go(1, [0, 0]) - 10)
    with pytest.raises(DomainError):
        cost_grid(example, solved, [(0, 4)])


def test_value_table(solved):
    table = value_table(solved, periods=[1, 4])
    assert list(table.columns) == ["I1", "I2", "t", "cost", "Q1", "Q2"]
    assert len(table) == 2 * solved.grid.size
    assert set(table["t"]) == {1, 4}


def test_stored_actions_satisfy_the_recursion(solved):
    rng = np.random.default_rng(7)
    grid = solved.grid
    for _ in range(100):
        period = int(rng.integers(1, solved.inst.horizon + 1))
        state = [int(rng.integers(lo, hi + 1)) for lo, hi in zip(grid.lo, grid.hi)]
        action = optimal_policy_actions(solved, state, period)
        value = solved.cost_to_go(period, state)
        assert solved.minimand(period, state, action) == pytest.approx(value, abs=1e-6)
        other = [int(rng.integers(0, hi - s + 1)) for s, hi in zip(state, grid.hi)]
        assert solved.minimand(period, state, other) >= value - 1e-6


def test_items_decouple_without_a_group_cost():
    first = ItemSpec(3, 1, 5, 0, (3, 6, 9, 6))
    second = ItemSpec(2, 2, 8, 0, (4, 2, 5, 3))
    joint = Instance(horizon=4, group_cost=0, items=(first, second), initial_inventory=(0, 0))
    alone = [
        solve_sdp(Instance(horizon=4, group_cost=0, items=(item,), initial_inventory=(0,)))
        for item in (first, second)
    ]
    vf = solve_sdp(joint)
    expected = sum(a.cost_to_go(1, [0]) for a in alone)
    assert vf.cost_to_go(1, [0, 0]) == pytest.approx(expected, abs=1e-6)


def test_truncation_and_grid_width_do_not_move_the_cost(example, solved):
    tighter = solve_sdp(example, quantile=1 - 1e-12)
    assert tighter.cost_to_go(1, [0, 0]) == pytest.approx(solved.cost_to_go(1, [0, 0]), abs=1e-3)
    grid = solved.grid
    wider = StateGrid(lo=tuple(l - 10 for l in grid.lo), hi=tuple(h + 10 for h in grid.hi))
    widened = solve_sdp(example, wider)
    assert widened.cost_to_go(1, [0, 0]) == pytest.approx(solved.cost_to_go(1, [0, 0]), abs=1e-5)


def test_grid_leaves_room_to_order_up(example, solved):
    grid = solved.grid
    for n, item in enumerate(example.items):
        assert grid.hi[n] >= 2 * sum(item.rates)
        assert grid.hi[n] == -2 * grid.lo[n]
    assert clamped_mass(example, grid) == pytest.approx([0.0, 0.0], abs=1e-6)


def test_narrow_grids_warn_about_clamped_states(caplog):
    inst = Instance(
        horizon=2,
        group_cost=0,
        items=(ItemSpec(0, 1, 4, 0, (2, 2)),),
        initial_inventory=(0,),
    )
    with caplog.at_level(logging.WARNING, logger="replen.sdp"):
        solve_sdp(inst)
    assert not caplog.records
    with caplog.at_level(logging.WARNING, logger="replen.sdp"):
        solve_sdp(inst, StateGrid(lo=(-2,), hi=(15,)))
    assert "leaves the grid below -2" in caplog.text
    assert clamped_mass(inst, StateGrid(lo=(-2,), hi=(15,)))[0] > 0.5
