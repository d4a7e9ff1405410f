from fractions import Fraction

import pytest

from flowcuts.model import BilinearSet, Triple
from flowcuts.network import Arc, Network

# the eight-node spiked-cycle graph: a directed 4-cycle body {1,2,3,4} with
# one pendant node hanging off each body node
SPIKE_ARCS = {
    1: (1, 5),
    2: (2, 1),
    3: (4, 1),
    4: (2, 3),
    5: (4, 3),
    6: (6, 2),
    7: (3, 7),
    8: (8, 4),
}
SUPPLY = {1: 2, 2: 3, 3: 5, 4: 7, 5: 11, 6: 13, 7: 17, 8: 19}
CAP = {1: 23, 2: 29, 3: 31, 4: 37, 5: 41, 6: 43, 7: 47, 8: 53}


def arc_id(tail: int, head: int) -> int:
    for aid, pair in SPIKE_ARCS.items():
        if pair == (tail, head):
            return aid
    raise KeyError((tail, head))


@pytest.fixture
def spiked_cycle() -> Network:
    arcs = [Arc(aid, t, h) for aid, (t, h) in sorted(SPIKE_ARCS.items())]
    return Network(range(1, 9), arcs, SUPPLY, CAP)


@pytest.fixture
def spike_set1(spiked_cycle) -> BilinearSet:
    """m = 1, one product per arc, product id = arc id."""
    triples = [Triple(aid, aid, 1) for aid in sorted(SPIKE_ARCS)]
    return BilinearSet(spiked_cycle, 1, triples)


@pytest.fixture
def spike_set2(spiked_cycle) -> BilinearSet:
    """m = 2, products for every (arc, slot) pair."""
    triples = [Triple(aid, aid, 1) for aid in sorted(SPIKE_ARCS)]
    triples += [Triple(8 + aid, aid, 2) for aid in sorted(SPIKE_ARCS)]
    return BilinearSet(spiked_cycle, 2, triples)


F = Fraction
