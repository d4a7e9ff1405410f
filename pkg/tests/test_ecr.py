import random
from fractions import Fraction

import pytest

from flowcuts import ecr
from flowcuts.ecr import (
    ConditionViolated, CutWeights, EcrAssignment, aggregate, closed_form_cut,
    relax_all, relax_most_violated, weights_for,
)
from flowcuts.model import Point
from flowcuts.network import MINUS, PLUS, FlowBalanceRef as R
from tests.conftest import CAP, SUPPLY, arc_id

F = Fraction


def spike_tree_assignment():
    # class anchored at arc (1,5), body rows at {8-, 2-}, pendant rows at
    # {4+, 1+, 6+}
    return EcrAssignment(
        class_k=arc_id(1, 5),
        sign=PLUS,
        I=(frozenset({R(8, MINUS), R(2, MINUS)}),),
        Ibar=frozenset({R(4, PLUS), R(1, PLUS), R(6, PLUS)}),
    )


def test_five_node_tree_aggregation_exact(spike_set1):
    agg = aggregate(spike_set1, spike_tree_assignment())
    f = {n: F(SUPPLY[n]) for n in SUPPLY}
    assert agg.remaining() == [
        ((arc_id(2, 3), 1), F(-1)),
        ((arc_id(4, 3), 1), F(-1)),
    ]
    assert agg.lin_y == [f[8] + f[2] + f[1] + f[4] + f[6]]
    assert {a: c for a, c in agg.lin_x.items() if c} == {
        arc_id(1, 5): F(1),
        arc_id(2, 1): F(-1),
        arc_id(4, 3): F(1),
        arc_id(8, 4): F(-1),
        arc_id(6, 2): F(1),
    }
    assert agg.lin_z == {arc_id(1, 5): F(-1)}
    assert agg.const == -(f[1] + f[4] + f[6])
    assert agg.cancel_count == 5
    assert agg.required_cancellations == 5
    assert all(agg.constraint_flags.values())


def test_five_node_tree_yields_nine_cuts(spike_set1):
    agg = aggregate(spike_set1, spike_tree_assignment())
    cuts = relax_all(agg, spike_set1)
    assert len(cuts) == 9
    assert len({c.normalized_key() for c in cuts}) == 9


def test_empty_assignment_recovers_envelope_rows(spike_set1):
    aid = arc_id(1, 5)
    u = F(CAP[aid])
    plus = EcrAssignment(class_k=aid, sign=PLUS, I=(frozenset(),))
    minus = EcrAssignment(class_k=aid, sign=MINUS, I=(frozenset(),))
    got = set()
    for a in (plus, minus):
        agg = aggregate(spike_set1, a)
        assert agg.cancel_count == 0  # conditions vacuous
        for cut in relax_all(agg, spike_set1):
            got.add((cut.q, cut.r, cut.s, cut.t))
    # x - z >= 0, u y - z >= 0, z >= 0, z - x - u y >= -u, and the 0 >= 0 rows
    assert (((aid, F(1)),), (F(0),), ((aid, F(-1)),), F(0)) in got
    assert ((), (u,), ((aid, F(-1)),), F(0)) in got
    assert ((), (F(0),), ((aid, F(1)),), F(0)) in got
    assert (((aid, F(-1)),), (-u,), ((aid, F(1)),), -u) in got
    assert ((), (F(0),), (), F(0)) in got
    assert len(got) == 5


def test_weight_two_pattern_is_rejected(spike_set2):
    # base product y1 * x(8,4); unit weights leave one term in three
    # aggregated products, which pairwise cancellation cannot clear
    a = EcrAssignment(
        class_k=arc_id(8, 4),
        sign=PLUS,
        I=(
            frozenset({R(4, PLUS), R(3, PLUS)}),
            frozenset({R(2, MINUS)}),
        ),
        Ibar=frozenset({R(1, PLUS)}),
        J=frozenset({arc_id(4, 1)}),
        Jbar=frozenset({arc_id(2, 3)}),
    )
    with pytest.raises(ConditionViolated) as e:
        aggregate(spike_set2, a)
    assert e.value.condition == "C1"
    assert "3 products" in e.value.detail


def test_missing_row_direction_rejected(spike_set1):
    net = spike_set1.net
    from flowcuts.model import BilinearSet
    from flowcuts.network import Network

    one_sided = Network(net.nodes, net.arcs, net.supply, net.capacity,
                        one_sided={n: MINUS for n in net.nodes})
    S = BilinearSet(one_sided, 1, spike_set1.triples)
    with pytest.raises(ConditionViolated):
        aggregate(S, spike_tree_assignment())  # needs 4+, 1+, 6+


def test_assignment_invariants():
    with pytest.raises(ValueError):
        EcrAssignment(1, 0, (frozenset(),))
    a = EcrAssignment(1, PLUS, (frozenset({R(1, PLUS)}),),
                      Ibar=frozenset({R(1, MINUS)}))
    with pytest.raises(ValueError):
        a.validate(1)  # node with both directions
    b = EcrAssignment(1, PLUS, (frozenset(),), J=frozenset({1}),
                      Jbar=frozenset({1}))
    with pytest.raises(ValueError):
        b.validate(1)


def _mk_point(S, rnd):
    x = {a: rnd.uniform(0, float(S.net.capacity[a])) for a in sorted(S.net.capacity)}
    y = [rnd.uniform(0, 1.0 / S.m) for _ in range(S.m)]
    z = {t.k: rnd.uniform(-2, float(S.net.capacity[t.arc])) for t in S.triples}
    return Point(x, y, z)


def test_most_violated_matches_enumeration(spike_set1, spike_set2):
    rnd = random.Random(4)
    for S, assignment in (
        (spike_set1, spike_tree_assignment()),
        (spike_set2, EcrAssignment(
            class_k=arc_id(1, 5), sign=PLUS,
            I=(frozenset({R(1, MINUS), R(2, MINUS), R(6, MINUS)}),
               frozenset()),
        )),
    ):
        agg = aggregate(S, assignment)
        cuts = relax_all(agg, S)
        for _ in range(60):
            p = _mk_point(S, rnd)
            best = relax_most_violated(agg, S, p)
            # most violated = least slack in the ">= 0" form
            target = min(float(c.lhs(p) - c.t) for c in cuts)
            assert float(best.lhs(p) - best.t) == pytest.approx(target, abs=1e-9)


def test_tie_break_prefers_fixed_order(spike_set1):
    agg = aggregate(spike_set1, spike_tree_assignment())
    # remaining terms are negative; z = x*y ties option values when the
    # point sits on the product surface with x at zero
    x = {a: 0.0 for a in sorted(spike_set1.net.capacity)}
    y = [0.0]
    z = {t.k: 0.0 for t in spike_set1.triples}
    # all three options value 0 except "ub" (= u - 0 - 0 > 0)
    cut = relax_most_violated(agg, spike_set1, Point(x, y, z))
    assert "lb@" in cut.provenance and "z@" not in cut.provenance


def test_closed_form_matches_aggregate_relax(spike_set1):
    agg = aggregate(spike_set1, spike_tree_assignment())
    # relax both surviving terms through their product variables
    terms = agg.remaining()
    picks = [(t, c, "z") for t, c in terms]
    w = weights_for(spike_set1, agg.assignment, picks)
    direct = closed_form_cut(spike_set1, w)
    chosen = [
        (t, opt)
        for (t, c) in terms
        for opt in ecr._term_options(spike_set1, t, c)
        if opt.kind == "z"
    ]
    built = ecr._build_cut(spike_set1, agg, chosen)
    assert direct.q == built.q
    assert direct.r == built.r
    assert direct.s == built.s
    assert direct.t == built.t


def test_zero_weights_give_trivial_row(spike_set1):
    w = CutWeights(m=1)
    cut = closed_form_cut(spike_set1, w)
    assert cut.q == () and cut.s == () and cut.t == 0


def test_cut_json_round_trip(spike_set1):
    agg = aggregate(spike_set1, spike_tree_assignment())
    cut = relax_all(agg, spike_set1)[0]
    from flowcuts.ecr import LinearCut

    back = LinearCut.from_json_dict(cut.to_json_dict(), spike_set1.m)
    assert back.q == cut.q and back.r == cut.r
    assert back.s == cut.s and back.t == cut.t
