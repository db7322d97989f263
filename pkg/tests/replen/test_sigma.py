import numpy as np
import pytest

from replen.domain import load_instance
from replen.errors import DomainError
from replen.sdp import solve_sdp
from replen.sigma import (
    SigmaDecision,
    SigmaMap,
    agreement,
    classify,
    reduced_instance,
    sdp_sigma_map,
    sigma_map,
    staircase_violations,
)


@pytest.fixture(scope="module")
def example():
    return load_instance("data/instances/sdp_example.json")


@pytest.fixture(scope="module")
def solved(example):
    return solve_sdp(example)


def test_reduced_instance_drops_item_costs_and_lead_times():
    tiny = load_instance("tests/replen/data/tiny.json")
    sub = reduced_instance(tiny, (3, -2), k=2)
    assert sub.horizon == 2
    assert sub.initial_inventory == (3.0, -2.0)
    assert all(i.fixed_cost == 0 and i.lead_time == 0 for i in sub.items)
    assert sub.items[0].rates == (2.0, 5.0)
    with pytest.raises(DomainError):
        reduced_instance(tiny, (3,))


def test_empty_stock_orders(example):
    decision = classify(example, (0, 0), k=1, W=4)
    assert decision.in_sigma
    assert all(s > 0 for s in decision.order_up_to)
    assert decision.cost_without_group == pytest.approx(decision.cost - 10)


def test_plenty_of_stock_waits(example):
    decision = classify(example, (60, 60), k=1, W=4)
    assert not decision.in_sigma
    assert decision.order_up_to == (60.0, 60.0)
    assert decision.cost == decision.cost_without_group


def test_sdp_map_reads_the_optimal_actions(solved):
    smap = sdp_sigma_map(solved, [(0, 2), (30, 31)], k=1)
    assert smap[(0, 30)].in_sigma
    assert smap[(0, 30)].order_up_to[1] == 30
    high = sdp_sigma_map(solved, [(40, 41), (40, 41)], k=1)
    assert not any(d.in_sigma for d in high.decisions.values())
    with pytest.raises(DomainError):
        sdp_sigma_map(solved, [(0, 2), (0, 2)], k=5)


def test_rs_map_on_a_small_box(example, solved):
    approx = sigma_map(example, [(0, 1), (0, 1)], k=1, W=4)
    exact = sdp_sigma_map(solved, [(0, 1), (0, 1)], k=1)
    assert len(approx.decisions) == 4
    assert 0.0 <= agreement(approx, exact) <= 1.0
    assert agreement(approx, approx) == 1.0
    frame = approx.to_frame()
    assert list(frame.columns) == ["I1", "I2", "in_sigma", "S1", "S2", "G", "G_without_K"]
    assert len(frame) == 4


def test_agreement_needs_the_same_grid(example, solved):
    a = sdp_sigma_map(solved, [(0, 1), (0, 1)])
    b = sdp_sigma_map(solved, [(0, 2), (0, 1)])
    with pytest.raises(DomainError):
        agreement(a, b)
    with pytest.raises(DomainError):
        sigma_map(example, [(2, 1), (0, 1)])


def decision(in_sigma):
    return SigmaDecision(in_sigma=in_sigma, order_up_to=(0.0,), cost=0.0, cost_without_group=0.0)


def test_staircase_violations():
    axes = (np.arange(0, 4),)
    regular = SigmaMap(1, axes, {(i,): decision(i < 2) for i in range(4)})
    assert staircase_violations(regular) == []
    broken = SigmaMap(1, axes, {(0,): decision(True), (1,): decision(False),
                                (2,): decision(True), (3,): decision(False)})
    assert staircase_violations(broken) == [{"cell": (1,), "axis": 0}]


def test_rs_map_agrees_with_the_sdp_on_most_cells(example, solved):
    box = [(0, 20), (0, 20)]
    approx = sigma_map(example, box, k=1)
    exact = sdp_sigma_map(solved, box, k=1)
    assert agreement(approx, exact) >= 0.9
    assert exact[(0, 0)].in_sigma and not exact[(20, 20)].in_sigma
