import numpy as np
import pytest

from replen.domain import (
    DemandDist,
    Instance,
    ItemSpec,
    convolve,
    instance_from_dict,
    instance_to_dict,
    load_instance,
    loss_exact,
    loss_lb,
    partition,
)
from replen.errors import DomainError, InvalidInstanceError


def item(**changes):
    values = dict(fixed_cost=5, holding=1, penalty=9, lead_time=0, rates=(4, 2, 5))
    values.update(changes)
    return ItemSpec(**values)


@pytest.mark.parametrize(
    "changes",
    [
        {"rates": (4, -1, 5)},
        {"rates": (4, float("nan"), 5)},
        {"holding": 0},
        {"penalty": -2},
        {"fixed_cost": -1},
        {"lead_time": 1.5},
        {"lead_time": -1},
    ],
)
def test_item_spec_rejects_invalid_fields(changes):
    with pytest.raises(InvalidInstanceError):
        item(**changes)


def test_item_spec_normalizes_rates_and_lead_time():
    spec = item(rates=[1, 2, 3], lead_time=2.0)
    assert spec.rates == (1.0, 2.0, 3.0)
    assert spec.lead_time == 2
    assert isinstance(spec.lead_time, int)
    assert spec.critical_ratio == pytest.approx(0.9)


def test_instance_validation():
    with pytest.raises(InvalidInstanceError):
        Instance(horizon=4, group_cost=1, items=(item(),), initial_inventory=(0,))
    with pytest.raises(InvalidInstanceError):
        Instance(horizon=3, group_cost=1, items=(item(),), initial_inventory=(0, 0))
    with pytest.raises(InvalidInstanceError):
        Instance(horizon=3, group_cost=1, items=(item(lead_time=3),), initial_inventory=(0,))
    with pytest.raises(InvalidInstanceError):
        Instance(horizon=3, group_cost=-1, items=(item(),), initial_inventory=(0,))
    with pytest.raises(InvalidInstanceError):
        Instance(horizon=3, group_cost=1, items=(), initial_inventory=())


def test_load_instance_names_it_after_the_file():
    inst = load_instance("tests/replen/data/tiny.json")
    assert inst.name == "tiny"
    assert inst.horizon == 3
    assert inst.n_items == 2
    assert inst.items[1].lead_time == 1
    assert list(inst.periods) == [1, 2, 3]
    assert inst.mean_demand(0, 2, 3) == 7
    assert inst.mean_demand(0, 3, 2) == 0


def test_load_instance_rejects_unknown_fields():
    with pytest.raises(InvalidInstanceError, match="color"):
        load_instance("tests/replen/data/unknown_field.json")


def test_load_instance_reports_unreadable_files():
    with pytest.raises(InvalidInstanceError, match="can not read"):
        load_instance("tests/replen/data/missing.json")


def test_instance_document_keeps_every_field():
    inst = load_instance("tests/replen/data/tiny.json")
    assert instance_from_dict(instance_to_dict(inst)) == inst


def test_window_and_select():
    inst = load_instance("tests/replen/data/tiny.json")
    tail = inst.window(2)
    assert tail.horizon == 2
    assert tail.items[0].rates == (2.0, 5.0)
    assert tail.items[1].lead_time == 1
    last = inst.window(3)
    assert last.items[1].lead_time == 0
    with pytest.raises(DomainError):
        inst.window(4)
    single = inst.select([1])
    assert single.n_items == 1
    assert single.items[0] == inst.items[1]


def test_demand_dist_is_a_truncated_poisson():
    dist = DemandDist(6.0)
    assert dist.pmf.sum() == pytest.approx(1.0)
    assert dist.expected == pytest.approx(6.0, abs=1e-6)
    assert dist.upper == len(dist.support) - 1
    assert not dist.pmf.flags.writeable


def test_demand_dist_of_zero_mean_is_a_point_mass():
    dist = DemandDist(0.0)
    assert list(dist.pmf) == [1.0]
    assert dist.expected == 0.0


def test_demand_dist_validation():
    with pytest.raises(InvalidInstanceError):
        DemandDist(-1.0)
    with pytest.raises(DomainError):
        DemandDist(3.0, quantile=1.0)


def test_convolve_adds_the_rates():
    assert convolve([2, 3, 4.5]).mean == 9.5
    assert convolve([]).mean == 0
    with pytest.raises(InvalidInstanceError):
        convolve([1, -1])


@pytest.mark.parametrize("W", [1, 2, 4, 11])
def test_partition_regions_have_equal_mass(W):
    dist = DemandDist(7.0)
    part = partition(dist, W)
    assert part.size == W
    np.testing.assert_allclose(part.masses, np.full(W, 1 / W))
    assert np.all(np.diff(part.cond_means) >= 0)
    assert part.total_mean == pytest.approx(dist.expected)


def test_partition_rejects_bad_sizes():
    with pytest.raises(DomainError):
        partition(DemandDist(3.0), 0)
    with pytest.raises(DomainError):
        partition(DemandDist(3.0), 2.5)


def test_loss_exact_complement_identity():
    dist = DemandDist(5.0)
    xs = np.arange(-3, 15)
    loss, comp = loss_exact(xs, dist)
    np.testing.assert_allclose(loss - comp, dist.expected - xs, atol=1e-12)
    assert np.all(loss >= 0) and np.all(comp >= 0)


def test_loss_exact_scalar_returns_floats():
    loss, comp = loss_exact(0, DemandDist(4.0))
    assert isinstance(loss, float)
    assert loss == pytest.approx(4.0, abs=1e-6)
    assert comp == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("W", [1, 3, 8])
def test_loss_bounds_stay_below_the_exact_loss(W):
    dist = DemandDist(9.0)
    part = partition(dist, W)
    xs = np.linspace(-5, 30, 71)
    loss, comp = loss_exact(xs, dist)
    lb_loss, lb_comp = loss_lb(xs, part)
    assert np.all(lb_loss >= 0)
    assert np.all(lb_loss <= loss + 1e-9)
    assert np.all(lb_comp <= comp + 1e-9)
    np.testing.assert_allclose(lb_loss - lb_comp, part.total_mean - xs, atol=1e-9)


def test_loss_bounds_tighten_when_the_partition_is_refined():
    dist = DemandDist(9.0)
    xs = np.linspace(0, 20, 41)
    coarse, _ = loss_lb(xs, partition(dist, 2))
    fine, _ = loss_lb(xs, partition(dist, 4))
    assert np.all(fine >= coarse - 1e-9)


def test_single_region_bound_is_the_jensen_bound():
    dist = DemandDist(6.0)
    _, comp = loss_lb(np.array([2.0, 6.0, 10.0]), partition(dist, 1))
    np.testing.assert_allclose(
        comp, np.maximum(np.array([2.0, 6.0, 10.0]) - dist.expected, 0), atol=1e-12
    )
