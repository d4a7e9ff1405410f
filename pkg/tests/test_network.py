from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from flowcuts.network import (
    MINUS, PLUS, Arc, FlowBalanceRef, Network, NotFound,
    flow_balance_row, incident_endpoint_count,
)
from tests.conftest import SUPPLY, arc_id


def test_negative_row_at_node_2(spiked_cycle):
    coeffs, rhs = flow_balance_row(spiked_cycle, FlowBalanceRef(2, MINUS))
    assert coeffs == {
        arc_id(2, 1): Fraction(-1),
        arc_id(2, 3): Fraction(-1),
        arc_id(6, 2): Fraction(1),
    }
    assert rhs == -Fraction(SUPPLY[2])


def test_isolated_node_empty_row():
    net = Network([1, 2, 3], [Arc(1, 1, 2)], {3: 4}, {1: 1})
    coeffs, rhs = flow_balance_row(net, FlowBalanceRef(3, PLUS))
    assert coeffs == {}
    assert rhs == Fraction(4)


def test_rows_negate(spiked_cycle):
    for n in spiked_cycle.nodes:
        cp, rp = flow_balance_row(spiked_cycle, FlowBalanceRef(n, PLUS))
        cm, rm = flow_balance_row(spiked_cycle, FlowBalanceRef(n, MINUS))
        assert rp + rm == 0
        assert {a: -c for a, c in cp.items()} == cm


def test_rows_sum_to_zero(spiked_cycle):
    total: dict[int, Fraction] = {}
    for n in spiked_cycle.nodes:
        coeffs, _ = flow_balance_row(spiked_cycle, FlowBalanceRef(n, PLUS))
        for a, c in coeffs.items():
            total[a] = total.get(a, Fraction(0)) + c
    assert all(v == 0 for v in total.values())


@given(st.integers(2, 8), st.integers(0, 40), st.randoms())
def test_random_network_row_negation(n, extra_seed, rnd):
    nodes = list(range(n))
    arcs = []
    aid = 0
    for _ in range(extra_seed % (2 * n) + 1):
        t, h = rnd.sample(nodes, 2)
        arcs.append(Arc(aid, t, h))
        aid += 1
    net = Network(nodes, arcs, {i: rnd.randint(-5, 5) for i in nodes},
                  {a.id: rnd.randint(0, 9) for a in arcs})
    for node in nodes:
        cp, rp = flow_balance_row(net, FlowBalanceRef(node, PLUS))
        cm, rm = flow_balance_row(net, FlowBalanceRef(node, MINUS))
        assert rp == -rm
        assert cp == {a: -c for a, c in cm.items()}


def test_incidence_counts(spiked_cycle):
    assert incident_endpoint_count(spiked_cycle, {8, 4, 1, 2, 6}, arc_id(1, 5)) == 1
    assert incident_endpoint_count(spiked_cycle, set(), arc_id(1, 5)) == 0
    assert incident_endpoint_count(spiked_cycle, {1, 5}, arc_id(1, 5)) == 2


def test_unknown_ids_raise(spiked_cycle):
    with pytest.raises(NotFound):
        flow_balance_row(spiked_cycle, FlowBalanceRef(99, PLUS))
    with pytest.raises(NotFound):
        spiked_cycle.arc(99)


def test_validation_rejects_bad_networks():
    with pytest.raises(ValueError):
        Network([1], [Arc(1, 1, 1)], {}, {1: 1})  # self loop
    with pytest.raises(ValueError):
        Network([1, 2], [Arc(1, 1, 3)], {}, {1: 1})  # undeclared endpoint
    with pytest.raises(ValueError):
        Network([1, 2], [Arc(1, 1, 2)], {}, {1: -2})  # negative capacity
    with pytest.raises(ValueError):
        Network([1, 2], [Arc(1, 1, 2), Arc(1, 2, 1)], {}, {1: 1})  # dup arc id


def test_parallel_arcs_supported():
    net = Network([1, 2], [Arc(1, 1, 2), Arc(2, 1, 2)], {1: 1, 2: -1},
                  {1: 3, 2: 4})
    coeffs, _ = flow_balance_row(net, FlowBalanceRef(1, PLUS))
    assert coeffs == {1: Fraction(1), 2: Fraction(1)}


def test_one_sided_networks_restrict_refs():
    net = Network([1, 2], [Arc(1, 1, 2)], {1: 5, 2: -5}, {1: 9},
                  one_sided={1: MINUS, 2: MINUS})
    assert net.allowed_signs(1) == (MINUS,)
    assert all(r.sign == MINUS for r in net.balance_refs())


def test_json_round_trip(spiked_cycle):
    d = spiked_cycle.to_json_dict()
    back = Network.from_json_dict(d)
    assert back.nodes == spiked_cycle.nodes
    assert back.arcs == spiked_cycle.arcs
    assert back.supply == spiked_cycle.supply
    assert back.capacity == spiked_cycle.capacity
