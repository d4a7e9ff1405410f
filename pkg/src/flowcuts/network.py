"""Directed networks and exact flow-balance constraint algebra.

Arc flows live in a polytope described by per-node balance rows plus
``0 <= x <= u`` capacity bounds.  Each node contributes a *positive* row
(outflow minus inflow at least the node value) and its negation; one-sided
networks restrict a node to a single printed row direction.  Coefficients
are kept as :class:`fractions.Fraction` so downstream aggregation can test
for exact zeros.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping

PLUS = 1
MINUS = -1

_SIGN_CHAR = {PLUS: "+", MINUS: "-"}


class NotFound(KeyError):
    """Unknown node or arc id."""


@dataclass(frozen=True, order=True)
class Arc:
    id: int
    tail: int
    head: int


@dataclass(frozen=True, order=True)
class FlowBalanceRef:
    """A node's balance row with its direction: ``(node, +1)`` is the row
    ``sum(out) - sum(in) >= supply``, ``(node, -1)`` its negation."""

    node: int
    sign: int

    def __post_init__(self):
        if self.sign not in (PLUS, MINUS):
            raise ValueError(f"sign must be +1 or -1, got {self.sign}")

    def __str__(self) -> str:
        return f"{self.node}{_SIGN_CHAR[self.sign]}"


def _frac(v) -> Fraction:
    return v if isinstance(v, Fraction) else Fraction(v)


class Network:
    """Immutable directed network with rational supplies and capacities.

    Arc ids are opaque integers, so parallel arcs are allowed.  ``one_sided``
    maps a node to the only row sign it may contribute; nodes absent from the
    map contribute both signs.
    """

    def __init__(
        self,
        nodes: Iterable[int],
        arcs: Iterable[Arc | tuple],
        supply: Mapping[int, Fraction | int],
        capacity: Mapping[int, Fraction | int],
        one_sided: Mapping[int, int] | None = None,
    ):
        self.nodes: tuple[int, ...] = tuple(nodes)
        self.arcs: tuple[Arc, ...] = tuple(
            a if isinstance(a, Arc) else Arc(*a) for a in arcs
        )
        if len(set(self.nodes)) != len(self.nodes):
            raise ValueError("duplicate node ids")
        ids = [a.id for a in self.arcs]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate arc ids")
        node_set = set(self.nodes)
        for a in self.arcs:
            if a.tail == a.head:
                raise ValueError(f"self-loop on arc {a.id}")
            if a.tail not in node_set or a.head not in node_set:
                raise ValueError(f"arc {a.id} references undeclared node")
        self.supply: dict[int, Fraction] = {
            n: _frac(supply.get(n, 0)) for n in self.nodes
        }
        self.capacity: dict[int, Fraction] = {}
        for a in self.arcs:
            u = _frac(capacity[a.id])
            if u < 0:
                raise ValueError(f"negative capacity on arc {a.id}")
            self.capacity[a.id] = u
        self.one_sided: dict[int, int] = dict(one_sided or {})
        for n, s in self.one_sided.items():
            if n not in node_set or s not in (PLUS, MINUS):
                raise ValueError(f"bad one_sided entry {n}: {s}")

        self._by_id = {a.id: a for a in self.arcs}
        self._out: dict[int, tuple[Arc, ...]] = {n: () for n in self.nodes}
        self._in: dict[int, tuple[Arc, ...]] = {n: () for n in self.nodes}
        for a in sorted(self.arcs):
            self._out[a.tail] += (a,)
            self._in[a.head] += (a,)

    # -- lookups -------------------------------------------------------

    def arc(self, arc_id: int) -> Arc:
        try:
            return self._by_id[arc_id]
        except KeyError:
            raise NotFound(f"arc {arc_id}") from None

    def has_node(self, node: int) -> bool:
        return node in self._out

    def out_arcs(self, node: int) -> tuple[Arc, ...]:
        return self._out[node]

    def in_arcs(self, node: int) -> tuple[Arc, ...]:
        return self._in[node]

    def incident_arcs(self, node: int) -> tuple[Arc, ...]:
        return tuple(sorted(self._out[node] + self._in[node]))

    def neighbors(self, node: int) -> tuple[int, ...]:
        seen = {a.head for a in self._out[node]} | {a.tail for a in self._in[node]}
        return tuple(sorted(seen))

    def arcs_between(self, u: int, v: int) -> tuple[Arc, ...]:
        """Arcs joining u and v in either direction."""
        return tuple(
            a
            for a in self.incident_arcs(u)
            if (a.tail, a.head) in ((u, v), (v, u))
        )

    def allowed_signs(self, node: int) -> tuple[int, ...]:
        if not self.has_node(node):
            raise NotFound(f"node {node}")
        s = self.one_sided.get(node)
        return (PLUS, MINUS) if s is None else (s,)

    def balance_refs(self) -> tuple[FlowBalanceRef, ...]:
        """All available rows, in deterministic order."""
        out = []
        for n in sorted(self.nodes):
            for s in sorted(self.allowed_signs(n), reverse=True):
                out.append(FlowBalanceRef(n, s))
        return tuple(out)

    # -- serialization ---------------------------------------------------

    def to_json_dict(self) -> dict:
        d = {
            "nodes": [{"id": n, "supply": str(self.supply[n])} for n in self.nodes],
            "arcs": [
                {
                    "id": a.id,
                    "tail": a.tail,
                    "head": a.head,
                    "capacity": str(self.capacity[a.id]),
                }
                for a in self.arcs
            ],
        }
        if self.one_sided:
            d["one_sided"] = {str(n): s for n, s in sorted(self.one_sided.items())}
        return d

    @classmethod
    def from_json_dict(cls, d: dict) -> "Network":
        nodes = [n["id"] for n in d["nodes"]]
        supply = {n["id"]: Fraction(n.get("supply", 0)) for n in d["nodes"]}
        arcs = [Arc(a["id"], a["tail"], a["head"]) for a in d["arcs"]]
        capacity = {a["id"]: Fraction(a["capacity"]) for a in d["arcs"]}
        one_sided = {int(k): v for k, v in d.get("one_sided", {}).items()}
        return cls(nodes, arcs, supply, capacity, one_sided or None)


def flow_balance_row(
    net: Network, ref: FlowBalanceRef
) -> tuple[dict[int, Fraction], Fraction]:
    """Coefficients and rhs of the row ``coeffs . x >= rhs`` for ``ref``."""
    if not net.has_node(ref.node):
        raise NotFound(f"node {ref.node}")
    s = Fraction(ref.sign)
    coeffs: dict[int, Fraction] = {}
    for a in net.out_arcs(ref.node):
        coeffs[a.id] = coeffs.get(a.id, Fraction(0)) + s
    for a in net.in_arcs(ref.node):
        coeffs[a.id] = coeffs.get(a.id, Fraction(0)) - s
    return coeffs, s * net.supply[ref.node]


def incident_endpoint_count(net: Network, node_set, arc_id: int) -> int:
    """How many of the arc's two endpoints lie in ``node_set``."""
    a = net.arc(arc_id)
    return int(a.tail in node_set) + int(a.head in node_set)
