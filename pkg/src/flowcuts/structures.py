"""Graph structures that generate cancel-and-relax assignments.

For one simplex slot, every connected node set touching exactly one endpoint
of the anchored arc yields assignments (one per two-part split of the set).
For several slots, node sets live in per-slot parallel copies of the network
and must be vertically connected through shared connection nodes and arcs;
a label propagation pass then fixes each member's row direction so every
bilinear term cancels against exactly one partner.
"""

from __future__ import annotations

import itertools
import random
from collections import deque
from dataclasses import dataclass, field
from typing import Iterator

from .ecr import EcrAssignment
from .model import BilinearSet
from .network import MINUS, PLUS, FlowBalanceRef, Network


class CaseMismatch(Exception):
    """Requested case tag contradicts the anchor's incidence."""


class LabelConflict(Exception):
    """Propagation reached a member with two different labels."""


@dataclass(frozen=True)
class TreeStructure:
    """Connected node set with a split, anchored at one arc."""

    nodes: frozenset[int]
    anchor_arc: int
    part1: frozenset[int]
    part2: frozenset[int]
    case: str | None = None  # "i".."iv"; derived when omitted

    def __post_init__(self):
        if self.part1 | self.part2 != self.nodes or self.part1 & self.part2:
            raise ValueError("parts must split the node set")


_CASES = {("h", PLUS): "i", ("h", MINUS): "ii",
          ("t", PLUS): "iii", ("t", MINUS): "iv"}


def _anchor_side(net: Network, ts: TreeStructure) -> str:
    a = net.arc(ts.anchor_arc)
    t_in, h_in = a.tail in ts.nodes, a.head in ts.nodes
    if t_in == h_in:
        raise CaseMismatch(
            f"arc {ts.anchor_arc} must touch exactly one node of the set")
    return "t" if t_in else "h"


def tree_to_assignment(ts: TreeStructure, S: BilinearSet,
                       sign: int) -> EcrAssignment:
    """Row directions for the split, per the anchored side and class sign.

    When the anchor's head is inside the set, part1 takes positive rows for
    a plus class; when the tail is inside, directions flip.  The opposite
    class sign flips everything again.
    """
    if S.m != 1:
        raise ValueError("tree structures apply to single-slot sets")
    side = _anchor_side(S.net, ts)
    case = _CASES[(side, sign)]
    if ts.case is not None and ts.case != case:
        raise CaseMismatch(
            f"structure tagged case {ts.case} but incidence/sign give {case}")
    s1 = PLUS if case in ("i", "iv") else MINUS
    triple = None
    for t in S.triples:
        if t.arc == ts.anchor_arc:
            triple = t
            break
    if triple is None:
        raise ValueError(f"no product on arc {ts.anchor_arc}")
    return EcrAssignment(
        class_k=triple.k,
        sign=sign,
        I=(frozenset(FlowBalanceRef(n, s1) for n in ts.part1),),
        Ibar=frozenset(FlowBalanceRef(n, -s1) for n in ts.part2),
    )


def enumerate_trees(net: Network, anchor_arc: int, max_nodes: int,
                    partition_cap: int = 1 << 10,
                    seed: int = 0) -> Iterator[TreeStructure]:
    """All connected node sets of bounded size touching exactly one anchor
    endpoint, each with its two-part splits.

    Splits beyond ``partition_cap`` per set are sampled (seeded) instead of
    enumerated.  Deterministic order: by size, then sorted node tuple.
    """
    if max_nodes < 1:
        return
    a = net.arc(anchor_arc)
    banned_pair = {a.tail, a.head}
    level = sorted(
        {frozenset({a.tail}), frozenset({a.head})}, key=sorted)
    seen: set[frozenset[int]] = set(level)
    rng = random.Random(seed)
    while level:
        nxt: set[frozenset[int]] = set()
        for nodes in level:
            yield from _with_partitions(nodes, anchor_arc, partition_cap, rng)
            if len(nodes) == max_nodes:
                continue
            grown = set()
            for v in nodes:
                grown.update(net.neighbors(v))
            for v in sorted(grown - nodes):
                new = nodes | {v}
                if banned_pair <= new or new in seen:
                    continue
                seen.add(new)
                nxt.add(new)
        level = sorted(nxt, key=sorted)


def _with_partitions(nodes, anchor_arc, cap, rng):
    order = sorted(nodes)
    total = 1 << len(order)
    if total <= cap:
        masks = range(total)
    else:
        masks = sorted(rng.sample(range(total), cap))
    for mask in masks:
        p1 = frozenset(n for i, n in enumerate(order) if mask >> i & 1)
        yield TreeStructure(nodes, anchor_arc, p1, nodes - p1)


# ---------------------------------------------------------------------------
# forests for several simplex slots
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ForestStructure:
    """Per-slot node sets plus connection nodes/arcs, anchored at a class.

    The trees of slot ``j`` are the connected components induced by
    ``forests[j-1]``; labels are attached by :func:`label_forest`.
    """

    forests: tuple[frozenset[int], ...]
    conn_nodes: frozenset[int]
    conn_arcs: frozenset[int]
    class_k: int
    sign: int

    @property
    def node_members(self) -> int:
        return sum(len(f) for f in self.forests) + len(self.conn_nodes)

    def key(self):
        return (
            tuple(tuple(sorted(f)) for f in self.forests),
            tuple(sorted(self.conn_nodes)),
            tuple(sorted(self.conn_arcs)),
        )

    def to_json_dict(self) -> dict:
        return {
            "forests": [sorted(f) for f in self.forests],
            "conn_nodes": sorted(self.conn_nodes),
            "conn_arcs": sorted(self.conn_arcs),
            "class_k": self.class_k,
            "sign": self.sign,
        }


@dataclass
class ForestCheck:
    ok: bool
    failed: str | None = None
    detail: str = ""


def _components(net: Network, nodes: frozenset[int]) -> list[frozenset[int]]:
    left = set(nodes)
    comps = []
    while left:
        start = min(left)
        comp = {start}
        queue = deque([start])
        while queue:
            v = queue.popleft()
            for w in net.neighbors(v):
                if w in left and w not in comp:
                    comp.add(w)
                    queue.append(w)
        left -= comp
        comps.append(frozenset(comp))
    return comps


def _connected(net: Network, nodes: frozenset[int]) -> bool:
    return len(_components(net, nodes)) <= 1


def vertically_connected(net: Network, trees, conn_nodes,
                         conn_arcs) -> bool:
    """Can the tree collection be ordered so each tree joins the previous
    ones through a connection arc or a chain of adjacent connection nodes?

    A node chain may start or end at a connection node lying inside a tree;
    membership counts as adjacency.
    """
    trees = list(trees)
    if len(trees) <= 1:
        return True

    def touches(tree_nodes, v):
        return v in tree_nodes or any(
            w in tree_nodes for w in net.neighbors(v))

    reach = {0}
    changed = True
    while changed and len(reach) < len(trees):
        changed = False
        for i in range(len(trees)):
            if i in reach:
                continue
            tn = trees[i]
            linked = False
            for aid in sorted(conn_arcs):
                arc = net.arc(aid)
                if (arc.tail in tn or arc.head in tn) and any(
                    arc.tail in trees[r] or arc.head in trees[r]
                    for r in reach
                ):
                    linked = True
                    break
            if not linked and conn_nodes:
                frontier = {v for v in conn_nodes if touches(tn, v)}
                seen = set(frontier)
                while frontier and not linked:
                    if any(touches(trees[r], v)
                           for v in frontier for r in reach):
                        linked = True
                        break
                    frontier = {
                        w
                        for v in frontier for w in net.neighbors(v)
                        if w in conn_nodes and w not in seen
                    }
                    seen |= frontier
            if linked:
                reach.add(i)
                changed = True
    return len(reach) == len(trees)


def validate_forest(fs: ForestStructure, S: BilinearSet) -> ForestCheck:
    """Check the structural conditions; failure is a value, not an error.

    Condition ids: trees per slot (always satisfied for set-based slots),
    vertical connectivity, union-tree with arc incidence, anchor incidence,
    per-slot arc incidence, and isolation of shared connection nodes.
    """
    net = S.net
    m = len(fs.forests)
    base = S.triple(fs.class_k)
    union = frozenset().union(*fs.forests, fs.conn_nodes) if m else fs.conn_nodes
    forest_nodes = frozenset().union(*fs.forests) if m else frozenset()

    trees = [(j + 1, comp)
             for j, f in enumerate(fs.forests)
             for comp in _components(net, f)]

    if forest_nodes:
        if not vertically_connected(net, [t for _, t in trees],
                                    fs.conn_nodes, fs.conn_arcs):
            return ForestCheck(False, "vertical-connectivity",
                               "a slot tree cannot join the collection")

        if not _connected(net, union):
            return ForestCheck(False, "union-tree",
                               "forest plus connection nodes are disconnected")
        for aid in sorted(fs.conn_arcs):
            arc = net.arc(aid)
            if arc.tail not in union and arc.head not in union:
                return ForestCheck(False, "union-tree",
                                   f"connection arc {aid} floats free")

    in_anchor_scope = fs.conn_nodes | fs.forests[base.j - 1] if m else fs.conn_nodes
    arc = net.arc(base.arc)
    ends_in = int(arc.tail in in_anchor_scope) + int(arc.head in in_anchor_scope)
    if (base.arc in fs.conn_arcs) == (ends_in == 1):
        return ForestCheck(
            False, "anchor-incidence",
            f"arc {base.arc}: in connection arcs={base.arc in fs.conn_arcs}, "
            f"incident members={ends_in}")

    for aid in sorted(fs.conn_arcs):
        a = net.arc(aid)
        for j in range(m):
            scope = fs.conn_nodes | fs.forests[j]
            if int(a.tail in scope) + int(a.head in scope) > 1:
                return ForestCheck(
                    False, "arc-incidence",
                    f"connection arc {aid} touches two members of slot {j+1}")

    for j in range(m):
        shared = fs.conn_nodes & fs.forests[j]
        for v in sorted(shared):
            if any(w in shared for w in net.neighbors(v)):
                return ForestCheck(
                    False, "shared-node-isolation",
                    f"node {v} is adjacent to another shared node in slot {j+1}")
            incident = {a.id for a in net.incident_arcs(v)}
            bad = incident & fs.conn_arcs
            if j + 1 == base.j and base.arc in incident:
                bad = bad | {base.arc}
            if bad:
                return ForestCheck(
                    False, "shared-node-isolation",
                    f"node {v} touches arcs {sorted(bad)} in slot {j+1}")

    return ForestCheck(True)


def pairwise_safe(fs: ForestStructure, S: BilinearSet) -> bool:
    """Stronger isolation for shared connection nodes: no neighbor of such a
    node may contribute any product in the same slot.  Structures passing
    this (on top of :func:`validate_forest`) always aggregate cleanly."""
    net = S.net
    for j in range(len(fs.forests)):
        shared = fs.conn_nodes & fs.forests[j]
        for v in shared:
            scope = (fs.forests[j] | fs.conn_nodes) - {v}
            if any(w in scope for w in net.neighbors(v)):
                return False
    return True


def label_forest(fs: ForestStructure, S: BilinearSet,
                 strict: bool = False) -> EcrAssignment:
    """Propagate row-direction labels out from the anchor (Algorithm 1 style)
    and emit the assignment.

    Every neighbor rule makes the one bilinear term shared by the two
    members cancel.  Members keep the first label they receive; a later
    contradicting implication is ignored (the aggregation stage then rejects
    the assignment) unless ``strict`` is set, in which case it raises
    :class:`LabelConflict` immediately.  A member the propagation cannot
    reach, or an ambiguous anchor seed, always raises.
    """
    net = S.net
    base = S.triple(fs.class_k)
    m = len(fs.forests)
    anchor = net.arc(base.arc)

    members: set[tuple] = set()
    for j, f in enumerate(fs.forests, start=1):
        members.update(("F", j, v) for v in f)
    members.update(("C", v) for v in fs.conn_nodes)
    members.update(("A", a) for a in fs.conn_arcs)

    labels: dict[tuple, int] = {}
    queue: deque[tuple] = deque()

    def put(member, label, why):
        old = labels.get(member)
        if old is None:
            labels[member] = label
            queue.append(member)
        elif old != label and strict:
            raise LabelConflict(f"{member} relabeled via {why}")

    # seed next to the anchor arc
    sign = fs.sign
    if ("A", base.arc) in members:
        put(("A", base.arc), sign, "anchor")
    else:
        seeds = []
        for v, side in ((anchor.tail, "t"), (anchor.head, "h")):
            if ("F", base.j, v) in members:
                seeds.append((("F", base.j, v),
                              sign if side == "h" else -sign))
            elif ("C", v) in members:
                seeds.append((("C", v), sign if side == "t" else -sign))
        if len(seeds) != 1:
            raise LabelConflict(
                f"anchor arc {base.arc} admits {len(seeds)} seeds")
        put(seeds[0][0], seeds[0][1], "anchor")

    while queue:
        member = queue.popleft()
        lab = labels[member]
        kind = member[0]
        if kind == "F":
            _, j, v = member
            for w in net.neighbors(v):
                if ("F", j, w) in members:
                    put(("F", j, w), lab, member)
                if ("C", w) in members:
                    put(("C", w), -lab, member)
            if ("C", v) in members:
                put(("C", v), lab, member)
            for a in net.incident_arcs(v):
                if ("A", a.id) in members:
                    put(("A", a.id), lab if v == a.tail else -lab, member)
        elif kind == "C":
            _, v = member
            for j in range(1, m + 1):
                if ("F", j, v) in members:
                    put(("F", j, v), lab, member)
            for w in net.neighbors(v):
                for j in range(1, m + 1):
                    if ("F", j, w) in members:
                        put(("F", j, w), -lab, member)
                if ("C", w) in members:
                    put(("C", w), lab, member)
            for a in net.incident_arcs(v):
                if ("A", a.id) in members:
                    put(("A", a.id), -lab if v == a.tail else lab, member)
        else:
            _, aid = member
            a = net.arc(aid)
            for j in range(1, m + 1):
                if ("F", j, a.tail) in members:
                    put(("F", j, a.tail), lab, member)
                if ("F", j, a.head) in members:
                    put(("F", j, a.head), -lab, member)
            if ("C", a.tail) in members:
                put(("C", a.tail), -lab, member)
            if ("C", a.head) in members:
                put(("C", a.head), lab, member)

    unreached = members - set(labels)
    if unreached:
        raise LabelConflict(f"members never labeled: {sorted(unreached)}")

    I = tuple(
        frozenset(
            FlowBalanceRef(v, labels[("F", j, v)]) for v in fs.forests[j - 1])
        for j in range(1, m + 1)
    )
    ibar = frozenset(
        FlowBalanceRef(v, labels[("C", v)]) for v in fs.conn_nodes)
    J = frozenset(a for a in fs.conn_arcs if labels[("A", a)] == PLUS)
    Jbar = frozenset(a for a in fs.conn_arcs if labels[("A", a)] == MINUS)
    return EcrAssignment(class_k=fs.class_k, sign=fs.sign, I=I, Ibar=ibar,
                         J=J, Jbar=Jbar)


def enumerate_forests(S: BilinearSet, class_k: int, sign: int, budget: int,
                      priority_arcs: tuple[int, ...] = (),
                      max_states: int = 200_000) -> Iterator[ForestStructure]:
    """Grow candidate structures outward from the anchor, bounded by a node
    budget, and yield those passing validation and pairwise safety.

    ``priority_arcs`` biases the growth order toward the endpoints of the
    listed arcs.  Deterministic: breadth-first by member count with sorted
    tie-breaks.
    """
    net = S.net
    base = S.triple(class_k)
    m = S.m
    anchor = net.arc(base.arc)
    priority_nodes = []
    for aid in priority_arcs:
        a = net.arc(aid)
        priority_nodes += [a.tail, a.head]
    rank = {v: i for i, v in enumerate(priority_nodes)}
    nkey = lambda v: (rank.get(v, len(rank)), v)

    empty = tuple(frozenset() for _ in range(m))

    def mk(forests, conn, arcs):
        return ForestStructure(tuple(forests), frozenset(conn),
                               frozenset(arcs), class_k, sign)

    seeds = [mk(empty, (), {base.arc})]
    for v in (anchor.tail, anchor.head):
        fj = list(empty)
        fj[base.j - 1] = frozenset({v})
        seeds.append(mk(fj, (), ()))
        seeds.append(mk(empty, {v}, ()))

    def ok_partial(fs: ForestStructure) -> bool:
        scope = fs.conn_nodes | fs.forests[base.j - 1]
        ends = int(anchor.tail in scope) + int(anchor.head in scope)
        if base.arc in fs.conn_arcs and ends > 0:
            return False
        if ends > 1:
            return False
        for aid in fs.conn_arcs:
            a = net.arc(aid)
            for j in range(m):
                sc = fs.conn_nodes | fs.forests[j]
                if int(a.tail in sc) + int(a.head in sc) > 1:
                    return False
        for j in range(m):
            shared = fs.conn_nodes & fs.forests[j]
            for v in shared:
                sc = (fs.forests[j] | fs.conn_nodes) - {v}
                if any(w in sc for w in net.neighbors(v)):
                    return False
                incident = {a.id for a in net.incident_arcs(v)}
                if incident & fs.conn_arcs:
                    return False
                if j + 1 == base.j and base.arc in incident:
                    return False
        return True

    seen: set = set()
    queue: deque[ForestStructure] = deque()
    for fs in seeds:
        if fs.node_members <= budget and ok_partial(fs) and fs.key() not in seen:
            seen.add(fs.key())
            queue.append(fs)

    states = 0
    while queue:
        fs = queue.popleft()
        states += 1
        if states > max_states:
            return
        check = validate_forest(fs, S)
        if check.ok and pairwise_safe(fs, S):
            yield fs

        if fs.node_members >= budget:
            continue
        union = frozenset().union(*fs.forests, fs.conn_nodes)
        touch = set(union)
        for aid in fs.conn_arcs:
            a = net.arc(aid)
            touch.update((a.tail, a.head))
        candidates: list[ForestStructure] = []
        # grow a slot forest
        for j in range(m):
            cand = set()
            for v in fs.forests[j]:
                cand.update(net.neighbors(v))
            for v in fs.conn_nodes:
                cand.add(v)
                cand.update(net.neighbors(v))
            for aid in fs.conn_arcs:
                a = net.arc(aid)
                cand.update((a.tail, a.head))
            if not union and not fs.conn_arcs:
                cand.update((anchor.tail, anchor.head))
            for v in sorted(cand - fs.forests[j], key=nkey):
                nf = list(fs.forests)
                nf[j] = fs.forests[j] | {v}
                candidates.append(mk(nf, fs.conn_nodes, fs.conn_arcs))
        # grow connection nodes
        cand = set()
        for v in touch:
            cand.add(v)
            cand.update(net.neighbors(v))
        for v in sorted(cand - fs.conn_nodes, key=nkey):
            candidates.append(mk(fs.forests, fs.conn_nodes | {v}, fs.conn_arcs))
        # grow connection arcs
        for a in sorted(net.arcs):
            if a.id in fs.conn_arcs or a.id == base.arc:
                continue
            if a.tail in touch or a.head in touch:
                candidates.append(
                    mk(fs.forests, fs.conn_nodes, fs.conn_arcs | {a.id}))
        for nfs in candidates:
            if nfs.key() in seen or not ok_partial(nfs):
                continue
            seen.add(nfs.key())
            queue.append(nfs)
