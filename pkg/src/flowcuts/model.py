"""Bilinear sets over network polytopes and their linear relaxations.

The core object couples arc flows ``x`` in a network polytope with simplex
variables ``y`` through products ``z_k = x_i * y_j``.  This module builds
the three relaxations the rest of the package compares: the McCormick
envelope LP, the exact disjunctive extended formulation, and level-1 RLT
for the benchmark programs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

from . import lp
from .network import Network, flow_balance_row


@dataclass(frozen=True, order=True)
class Triple:
    """Bilinear product ``z_k = x_arc * y_j`` (j is a 1-based simplex slot)."""

    k: int
    arc: int
    j: int


class BilinearSet:
    """Flows in a network polytope times a simplex, with product variables.

    ``y_names`` labels the simplex slots for reporting and for lifting cuts
    into an enclosing program; it defaults to ``(1, .., m)``.
    """

    def __init__(self, net: Network, m: int, triples, y_names=None):
        self.net = net
        self.m = int(m)
        self.triples: tuple[Triple, ...] = tuple(
            t if isinstance(t, Triple) else Triple(*t) for t in triples
        )
        if self.m < 1:
            raise ValueError("m must be positive")
        self.y_names = tuple(y_names) if y_names else tuple(range(1, self.m + 1))
        if len(self.y_names) != self.m:
            raise ValueError("y_names length mismatch")
        self._by_k: dict[int, Triple] = {}
        self._by_pair: dict[tuple[int, int], Triple] = {}
        for t in self.triples:
            if t.k in self._by_k:
                raise ValueError(f"duplicate product id {t.k}")
            if not (1 <= t.j <= self.m):
                raise ValueError(f"y index out of range in {t}")
            net.arc(t.arc)  # raises NotFound for unknown arcs
            if (t.arc, t.j) in self._by_pair:
                raise ValueError(f"duplicate (arc, j) pair in {t}")
            if net.capacity[t.arc] == math.inf:
                raise ValueError(f"product arc {t.arc} needs a finite capacity")
            self._by_k[t.k] = t
            self._by_pair[(t.arc, t.j)] = t

    def triple(self, k: int) -> Triple:
        return self._by_k[k]

    def triple_for(self, arc: int, j: int) -> Triple | None:
        return self._by_pair.get((arc, j))

    @property
    def kappa(self) -> int:
        return len(self.triples)

    def to_json_dict(self) -> dict:
        d = self.net.to_json_dict()
        d["m"] = self.m
        d["triples"] = [{"k": t.k, "i": t.arc, "j": t.j} for t in self.triples]
        return d

    @classmethod
    def from_json_dict(cls, d: dict) -> "BilinearSet":
        net = Network.from_json_dict(d)
        trs = [Triple(t["k"], t["i"], t["j"]) for t in d["triples"]]
        return cls(net, d["m"], trs)


@dataclass
class Point:
    """A candidate solution (x; y; z) in a set's own coordinates."""

    x: dict[int, float]
    y: list[float]
    z: dict[int, float]

    def to_json_dict(self) -> dict:
        return {
            "x": {str(a): v for a, v in sorted(self.x.items())},
            "y": list(self.y),
            "z": {str(k): v for k, v in sorted(self.z.items())},
        }


# deterministic LP variable names
def xvar(arc: int) -> str:
    return f"x{arc}"


def yvar(name) -> str:
    return f"y{name}"


def zvar(k: int) -> str:
    return f"z{k}"


def _add_mccormick_rows(model: lp.LpModel, za: str, xa: str, ya: str, u: float,
                        tag: str) -> None:
    model.add_constraint({za: 1.0}, lp.GE, 0.0, name=f"mc0_{tag}")
    model.add_constraint({za: 1.0, ya: -u, xa: -1.0}, lp.GE, -u, name=f"mc1_{tag}")
    model.add_constraint({za: 1.0, ya: -u}, lp.LE, 0.0, name=f"mc2_{tag}")
    model.add_constraint({za: 1.0, xa: -1.0}, lp.LE, 0.0, name=f"mc3_{tag}")


def _add_network_rows(model: lp.LpModel, net: Network, var_of, prefix="fb") -> None:
    for ref in net.balance_refs():
        coeffs, rhs = flow_balance_row(net, ref)
        row = {var_of(a): float(c) for a, c in sorted(coeffs.items())}
        if row:
            model.add_constraint(row, lp.GE, float(rhs), name=f"{prefix}_{ref}")
        elif rhs > 0:
            # empty row with positive rhs: polytope is empty
            model.add_constraint({}, lp.GE, float(rhs), name=f"{prefix}_{ref}")


def mccormick(S: BilinearSet) -> lp.LpModel:
    """McCormick envelope relaxation of the set (objective left at zero)."""
    model = lp.LpModel("mccormick")
    for a in sorted(S.net.capacity):
        model.add_var(xvar(a), 0.0, float(S.net.capacity[a]))
    for name in S.y_names:
        model.add_var(yvar(name), 0.0, 1.0)
    for t in sorted(S.triples):
        model.add_var(zvar(t.k), -math.inf, math.inf)
    _add_network_rows(model, S.net, xvar)
    model.add_constraint({yvar(n): 1.0 for n in S.y_names}, lp.LE, 1.0,
                         name="simplex")
    for t in sorted(S.triples):
        u = float(S.net.capacity[t.arc])
        _add_mccormick_rows(model, zvar(t.k), xvar(t.arc),
                            yvar(S.y_names[t.j - 1]), u, str(t.k))
    return model


def extended_formulation(S: BilinearSet) -> lp.LpModel:
    """Exact convex-hull description in a lifted space.

    Adds per-slot flow copies ``w^j`` and product copies ``v^j_k``; the
    projection onto (x; y; z) is conv(S).
    """
    model = lp.LpModel("extended")
    for a in sorted(S.net.capacity):
        model.add_var(xvar(a), 0.0, float(S.net.capacity[a]))
    for name in S.y_names:
        model.add_var(yvar(name), 0.0, 1.0)
    for t in sorted(S.triples):
        model.add_var(zvar(t.k), -math.inf, math.inf)
    wv = {}
    for j in range(1, S.m + 1):
        for a in sorted(S.net.capacity):
            wv[(j, a)] = model.add_var(f"w{j}_{a}", -math.inf, math.inf)
    vv = {}
    for j in range(1, S.m + 1):
        for t in sorted(S.triples):
            vv[(j, t.k)] = model.add_var(f"v{j}_{t.k}", -math.inf, math.inf)

    # products tie to the lifted flow copy of their own slot, zero elsewhere
    for t in sorted(S.triples):
        for j in range(1, S.m + 1):
            coeffs = {vv[(j, t.k)]: -1.0}
            if j == t.j:
                coeffs[wv[(j, t.arc)]] = 1.0
            model.add_constraint(coeffs, lp.EQ, 0.0, name=f"tie{j}_{t.k}")
    for t in sorted(S.triples):
        coeffs = {zvar(t.k): 1.0}
        for j in range(1, S.m + 1):
            coeffs[vv[(j, t.k)]] = -1.0
        model.add_constraint(coeffs, lp.EQ, 0.0, name=f"zsum_{t.k}")

    # each copy satisfies the scaled network rows; the residual copy too
    for j in range(1, S.m + 1):
        for ref in S.net.balance_refs():
            coeffs, rhs = flow_balance_row(S.net, ref)
            row = {wv[(j, a)]: float(c) for a, c in sorted(coeffs.items())}
            row[yvar(S.y_names[j - 1])] = row.get(yvar(S.y_names[j - 1]), 0.0) - float(rhs)
            model.add_constraint(row, lp.GE, 0.0, name=f"net{j}_{ref}")
    for ref in S.net.balance_refs():
        coeffs, rhs = flow_balance_row(S.net, ref)
        row: dict[str, float] = {}
        for a, c in sorted(coeffs.items()):
            row[xvar(a)] = float(c)
            for j in range(1, S.m + 1):
                row[wv[(j, a)]] = -float(c)
        for name in S.y_names:
            row[yvar(name)] = row.get(yvar(name), 0.0) + float(rhs)
        model.add_constraint(row, lp.GE, float(rhs), name=f"netr_{ref}")

    # 0 <= w^j <= u y_j and 0 <= x - sum_j w^j <= u (1 - sum_j y_j)
    for j in range(1, S.m + 1):
        for a in sorted(S.net.capacity):
            u = float(S.net.capacity[a])
            model.add_constraint({wv[(j, a)]: 1.0}, lp.GE, 0.0, name=f"wlo{j}_{a}")
            row = {wv[(j, a)]: 1.0, yvar(S.y_names[j - 1]): -u}
            model.add_constraint(row, lp.LE, 0.0, name=f"whi{j}_{a}")
    for a in sorted(S.net.capacity):
        u = float(S.net.capacity[a])
        lo = {xvar(a): 1.0}
        hi = {xvar(a): 1.0}
        for j in range(1, S.m + 1):
            lo[wv[(j, a)]] = -1.0
            hi[wv[(j, a)]] = -1.0
        model.add_constraint(lo, lp.GE, 0.0, name=f"rlo_{a}")
        for name in S.y_names:
            hi[yvar(name)] = hi.get(yvar(name), 0.0) + u
        model.add_constraint(hi, lp.LE, u, name=f"rhi_{a}")

    model.add_constraint({yvar(n): 1.0 for n in S.y_names}, lp.LE, 1.0,
                         name="simplex")
    return model


def set_objective_from_point_costs(model: lp.LpModel, S: BilinearSet,
                                   cx: dict, cy, cz: dict,
                                   minimize: bool = True) -> None:
    obj = {}
    for a, c in cx.items():
        obj[xvar(a)] = float(c)
    for j, c in enumerate(cy, start=1):
        if c:
            obj[yvar(S.y_names[j - 1])] = float(c)
    for k, c in cz.items():
        obj[zvar(k)] = float(c)
    model.set_objective(obj, minimize=minimize)


def solution_point(S: BilinearSet, sol: lp.LpSolution) -> Point:
    x = {a: sol.x[xvar(a)] for a in sorted(S.net.capacity)}
    y = [sol.x[yvar(n)] for n in S.y_names]
    z = {t.k: sol.x[zvar(t.k)] for t in sorted(S.triples)}
    return Point(x, y, z)


# ---------------------------------------------------------------------------
# benchmark programs (bilinear MIPs with several y variables)
# ---------------------------------------------------------------------------


@dataclass
class BilinearProgram:
    """A benchmark MIP: network flows, binary switches y, products z.

    ``triples`` reuse :class:`Triple` with ``j`` holding the y id.  ``y_rows``
    are the linear side constraints among the y variables (budget row or
    pairwise conflicts).
    """

    name: str
    net: Network
    y_ids: tuple[int, ...]
    triples: tuple[Triple, ...]
    y_rows: tuple[tuple[dict, str, Fraction], ...]
    obj_x: dict[int, Fraction]
    obj_y: dict[int, Fraction]
    obj_z: dict[int, Fraction]
    meta: dict = field(default_factory=dict)

    def triple_for(self, arc: int, y_id: int) -> Triple | None:
        for t in self.triples:
            if t.arc == arc and t.j == y_id:
                return t
        return None


def program_objective(bp: BilinearProgram) -> dict[str, float]:
    obj: dict[str, float] = {}
    for a, c in sorted(bp.obj_x.items()):
        obj[xvar(a)] = float(c)
    for y, c in sorted(bp.obj_y.items()):
        obj[yvar(y)] = float(c)
    for k, c in sorted(bp.obj_z.items()):
        obj[zvar(k)] = float(c)
    return obj


def mccormick_program(bp: BilinearProgram) -> lp.LpModel:
    """Continuous McCormick relaxation of the program."""
    model = lp.LpModel(f"mccormick_{bp.name}")
    for a in sorted(bp.net.capacity):
        model.add_var(xvar(a), 0.0, float(bp.net.capacity[a]))
    for y in bp.y_ids:
        model.add_var(yvar(y), 0.0, 1.0)
    for t in sorted(bp.triples):
        model.add_var(zvar(t.k), -math.inf, math.inf)
    _add_network_rows(model, bp.net, xvar)
    for i, (coeffs, sense, rhs) in enumerate(bp.y_rows):
        model.add_constraint({yvar(y): float(c) for y, c in sorted(coeffs.items())},
                             sense, float(rhs), name=f"yrow{i}")
    for t in sorted(bp.triples):
        u = float(bp.net.capacity[t.arc])
        _add_mccormick_rows(model, zvar(t.k), xvar(t.arc), yvar(t.j), u, str(t.k))
    model.set_objective(program_objective(bp))
    return model


def rlt1(bp: BilinearProgram) -> lp.LpModel:
    """Level-1 RLT: every flow row and every flow bound is multiplied by
    each y and by (1 - y), with products linearized.

    Products reuse the program's z variables whenever the (arc, y) pair has
    one; the rest get fresh bounded product variables.
    """
    model = mccormick_program(bp)
    model.name = f"rlt1_{bp.name}"
    refs = bp.net.balance_refs()
    rows = []
    for ref in refs:
        coeffs, rhs = flow_balance_row(bp.net, ref)
        if coeffs:
            rows.append((str(ref), coeffs, rhs))
    for y in bp.y_ids:
        prod: dict[int, str] = {}
        for a in sorted(bp.net.capacity):
            t = bp.triple_for(a, y)
            if t is not None:
                prod[a] = zvar(t.k)
            else:
                w = model.add_var(f"w{y}_{a}", -math.inf, math.inf)
                # bound products = the four McCormick rows on the fresh var
                _add_mccormick_rows(model, w, xvar(a), yvar(y),
                                    float(bp.net.capacity[a]), f"{y}_{a}")
                prod[a] = w
        for tag, coeffs, rhs in rows:
            ry = {prod[a]: float(c) for a, c in sorted(coeffs.items())}
            ry[yvar(y)] = ry.get(yvar(y), 0.0) - float(rhs)
            model.add_constraint(ry, lp.GE, 0.0, name=f"r1y_{y}_{tag}")
            rc = {xvar(a): float(c) for a, c in sorted(coeffs.items())}
            for a, c in sorted(coeffs.items()):
                rc[prod[a]] = rc.get(prod[a], 0.0) - float(c)
            rc[yvar(y)] = rc.get(yvar(y), 0.0) + float(rhs)
            model.add_constraint(rc, lp.GE, float(rhs), name=f"r1c_{y}_{tag}")
    return model
