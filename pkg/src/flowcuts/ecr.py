"""Cancel-and-relax aggregation engine.

An assignment names flow-balance rows and variable bounds together with the
multiplier each one receives (``y_j`` or ``1 - sum(y)``).  Aggregating them
with the base product equality cancels bilinear terms; the survivors are
relaxed into linear expressions, one choice per term, producing valid cuts.

All aggregation arithmetic is exact (:class:`fractions.Fraction`): the
cancellation conditions count exact zeros.  Aggregation weights are fixed at
one throughout; an assignment whose cancellation pattern would need any
other weight is rejected, never silently mis-aggregated.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction

from .model import BilinearSet, Point
from .network import MINUS, PLUS, FlowBalanceRef, flow_balance_row

_F0 = Fraction(0)
_F1 = Fraction(1)


class ConditionViolated(Exception):
    """Cancellation accounting failed: not a unit-weight assignment."""

    def __init__(self, condition: str, detail: str):
        self.condition = condition
        self.detail = detail
        super().__init__(f"({condition}) {detail}")


class OptionUnavailable(Exception):
    """A surviving bilinear term has no relaxation option."""


@dataclass(frozen=True)
class EcrAssignment:
    """Constraint selection ``[I_1..I_m, Ibar | J, Jbar]`` for one class.

    ``I[j-1]`` rows are weighted by ``y_j``; ``Ibar`` rows and the ``J`` /
    ``Jbar`` bounds by ``1 - sum(y)``.  ``class_k`` is the base product id,
    ``sign`` its +-1 aggregation weight.
    """

    class_k: int
    sign: int
    I: tuple[frozenset[FlowBalanceRef], ...]
    Ibar: frozenset[FlowBalanceRef] = frozenset()
    J: frozenset[int] = frozenset()
    Jbar: frozenset[int] = frozenset()

    def __post_init__(self):
        if self.sign not in (PLUS, MINUS):
            raise ValueError("sign must be +1 or -1")

    @property
    def size(self) -> int:
        return sum(len(s) for s in self.I) + len(self.Ibar) + len(self.J) + len(self.Jbar)

    @property
    def is_empty(self) -> bool:
        return self.size == 0

    def validate(self, m: int) -> None:
        if len(self.I) != m:
            raise ValueError(f"assignment has {len(self.I)} row groups, set has m={m}")
        if self.J & self.Jbar:
            raise ValueError("an arc appears in both bound groups")
        groups = list(self.I) + [self.Ibar]
        common = frozenset.intersection(*groups) if groups else frozenset()
        if len(groups) > 1 and common:
            raise ValueError(f"rows {set(common)} appear in every group")
        signs: dict[int, set[int]] = {}
        for g in groups:
            for ref in g:
                signs.setdefault(ref.node, set()).add(ref.sign)
        twice = [n for n, s in signs.items() if len(s) > 1]
        if twice:
            raise ValueError(f"nodes {twice} appear with both row directions")

    def __str__(self) -> str:
        def refs(g):
            return "{" + ",".join(str(r) for r in sorted(g)) + "}"

        parts = [refs(g) for g in self.I] + [refs(self.Ibar)]
        arcs = lambda g: "{" + ",".join(str(a) for a in sorted(g)) + "}"
        sgn = "+" if self.sign == PLUS else "-"
        return f"class {self.class_k}{sgn} [{', '.join(parts)} | {arcs(self.J)}, {arcs(self.Jbar)}]"


@dataclass
class AggregatedInequality:
    """Exact aggregate: bilinear part + linear part + constant >= 0."""

    assignment: EcrAssignment
    bilinear: dict[tuple[int, int], Fraction]
    lin_x: dict[int, Fraction]
    lin_y: list[Fraction]
    lin_z: dict[int, Fraction]
    const: Fraction
    cancel_count: int
    required_cancellations: int
    canceled: frozenset[tuple[int, int]]
    constraint_flags: dict[str, bool] = field(default_factory=dict)

    def remaining(self) -> list[tuple[tuple[int, int], Fraction]]:
        return [(term, c) for term, c in sorted(self.bilinear.items()) if c != 0]


@dataclass(frozen=True)
class LinearCut:
    """Valid inequality  q.x + r.y + s.z >= t."""

    q: tuple[tuple[int, Fraction], ...]
    r: tuple[Fraction, ...]
    s: tuple[tuple[int, Fraction], ...]
    t: Fraction
    provenance: str = ""

    @property
    def qd(self) -> dict[int, Fraction]:
        return dict(self.q)

    @property
    def sd(self) -> dict[int, Fraction]:
        return dict(self.s)

    def lhs(self, p: Point):
        total = 0
        for a, c in self.q:
            total += c * p.x[a]
        for j, c in enumerate(self.r):
            total += c * p.y[j]
        for k, c in self.s:
            total += c * p.z[k]
        return total

    def violation(self, p: Point):
        """Positive when the point violates the cut."""
        return self.t - self.lhs(p)

    def normalized_key(self):
        """Scale-invariant identity (positive rescaling only)."""
        ents = [c for _, c in self.q] + list(self.r) + [c for _, c in self.s] + [self.t]
        nz = [c for c in ents if c != 0]
        if not nz:
            return ((), (), (), _F0)
        scale = abs(nz[0])
        for c in nz[1:]:
            # gcd over rationals: gcd of numerators / lcm of denominators
            scale = Fraction(
                _gcd(scale.numerator * c.denominator, c.numerator * scale.denominator),
                scale.denominator * c.denominator,
            )
        f = lambda v: v / scale
        return (
            tuple((a, f(c)) for a, c in self.q if c != 0),
            tuple(f(c) for c in self.r),
            tuple((k, f(c)) for k, c in self.s if c != 0),
            f(self.t),
        )

    def to_json_dict(self) -> dict:
        return {
            "q": {str(a): str(c) for a, c in self.q if c != 0},
            "r": [str(c) for c in self.r],
            "s": {str(k): str(c) for k, c in self.s if c != 0},
            "t": str(self.t),
            "provenance": self.provenance,
        }

    @classmethod
    def from_json_dict(cls, d: dict, m: int) -> "LinearCut":
        q = tuple(sorted((int(a), Fraction(c)) for a, c in d["q"].items()))
        r = tuple(Fraction(c) for c in d["r"])
        if len(r) != m:
            raise ValueError("y coefficient count mismatch")
        s = tuple(sorted((int(k), Fraction(c)) for k, c in d["s"].items()))
        return cls(q, r, s, Fraction(d["t"]), d.get("provenance", ""))


def _gcd(a: int, b: int) -> int:
    import math

    return math.gcd(abs(a), abs(b))


# ---------------------------------------------------------------------------
# aggregation
# ---------------------------------------------------------------------------


def aggregate(S: BilinearSet, a: EcrAssignment) -> AggregatedInequality:
    """Aggregate the assignment's constraints with unit weights.

    Raises :class:`ConditionViolated` when the accounting fails: fewer exact
    cancellations than selected constraints, a constraint none of whose
    products cancels, a bilinear term created by more than two constraints
    (which unit weights can never cancel pairwise), or a row direction the
    polytope does not provide.
    """
    a.validate(S.m)
    base = S.triple(a.class_k)
    m = S.m
    sgn = Fraction(a.sign)

    bilinear: dict[tuple[int, int], Fraction] = {}
    appear: dict[tuple[int, int], list[str]] = {}
    created: dict[str, set[tuple[int, int]]] = {}
    lin_x: dict[int, Fraction] = {}
    lin_y = [_F0] * m
    lin_z: dict[int, Fraction] = {}
    const = _F0

    def touch(term, coef, member):
        bilinear[term] = bilinear.get(term, _F0) + coef
        appear.setdefault(term, []).append(member)
        created.setdefault(member, set()).add(term)

    member_base = "base"
    touch((base.arc, base.j), sgn, member_base)
    lin_z[base.k] = lin_z.get(base.k, _F0) - sgn

    for j in range(1, m + 1):
        for ref in sorted(a.I[j - 1]):
            if ref.sign not in S.net.allowed_signs(ref.node):
                raise ConditionViolated(
                    "C1", f"row {ref} is not part of this polytope")
            coeffs, rhs = flow_balance_row(S.net, ref)
            member = f"I{j}:{ref}"
            for arc, c in sorted(coeffs.items()):
                touch((arc, j), c, member)
            lin_y[j - 1] -= rhs

    for ref in sorted(a.Ibar):
        if ref.sign not in S.net.allowed_signs(ref.node):
            raise ConditionViolated("C1", f"row {ref} is not part of this polytope")
        coeffs, rhs = flow_balance_row(S.net, ref)
        member = f"Ibar:{ref}"
        for arc, c in sorted(coeffs.items()):
            lin_x[arc] = lin_x.get(arc, _F0) + c
            for j in range(1, m + 1):
                touch((arc, j), -c, member)
        const -= rhs
        for j in range(1, m + 1):
            lin_y[j - 1] += rhs

    for arc in sorted(a.J):
        S.net.arc(arc)
        member = f"J:{arc}"
        lin_x[arc] = lin_x.get(arc, _F0) + _F1
        for j in range(1, m + 1):
            touch((arc, j), -_F1, member)

    for arc in sorted(a.Jbar):
        u = S.net.capacity[arc]
        member = f"Jbar:{arc}"
        const += u
        lin_x[arc] = lin_x.get(arc, _F0) - _F1
        for j in range(1, m + 1):
            lin_y[j - 1] -= u
            touch((arc, j), _F1, member)

    canceled = frozenset(t for t, c in bilinear.items() if c == 0)
    flags = {mem: bool(terms & canceled) for mem, terms in created.items()}
    required = a.size
    agg = AggregatedInequality(
        assignment=a,
        bilinear=bilinear,
        lin_x=lin_x,
        lin_y=lin_y,
        lin_z=lin_z,
        const=const,
        cancel_count=len(canceled),
        required_cancellations=required,
        canceled=canceled,
        constraint_flags=flags,
    )
    if a.is_empty:
        return agg

    for term, members in sorted(appear.items()):
        if len(members) > 2:
            arc, j = term
            raise ConditionViolated(
                "C1",
                f"term y{j}*x{arc} appears in {len(members)} products "
                f"({', '.join(members)}); pairwise unit-weight cancellation "
                "is impossible",
            )
    if agg.cancel_count < required:
        raise ConditionViolated(
            "C1", f"only {agg.cancel_count} of the required {required} "
            "bilinear terms cancel")
    bad = sorted(mem for mem, ok in flags.items() if not ok)
    if bad:
        raise ConditionViolated(
            "C2", f"no bilinear term of {bad[0]} is canceled")
    return agg


# ---------------------------------------------------------------------------
# relaxation of surviving terms
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _Option:
    kind: str  # "lb", "ub", "z"
    dx: tuple[tuple[int, Fraction], ...]
    dy: tuple[tuple[int, Fraction], ...]  # (j, delta)
    dz: tuple[tuple[int, Fraction], ...]
    dconst: Fraction


def _term_options(S: BilinearSet, term, coef) -> list[_Option]:
    arc, j = term
    mag = abs(coef)
    u = S.net.capacity[arc]
    triple = S.triple_for(arc, j)
    opts: list[_Option] = []
    if coef > 0:
        if S.m == 1:
            opts.append(_Option("lb", ((arc, mag),), (), (), _F0))
        opts.append(_Option("ub", (), ((j, mag * u),), (), _F0))
        if triple is not None:
            opts.append(_Option("z", (), (), ((triple.k, mag),), _F0))
    else:
        opts.append(_Option("lb", (), (), (), _F0))
        if S.m == 1:
            opts.append(_Option("ub", ((arc, -mag),), ((j, -mag * u),), (), mag * u))
        if triple is not None:
            opts.append(_Option("z", (), (), ((triple.k, -mag),), _F0))
    if not opts:
        raise OptionUnavailable(
            f"term y{j}*x{arc} has no bound or product relaxation")
    return opts


def _option_value(S: BilinearSet, term, coef, opt: _Option, p: Point):
    """Value the relaxation substitutes for the term at a point."""
    arc, j = term
    mag = abs(coef)
    if coef > 0:
        if opt.kind == "lb":
            return mag * p.x[arc]
        if opt.kind == "ub":
            return mag * S.net.capacity[arc] * p.y[j - 1]
        return mag * p.z[S.triple_for(arc, j).k]
    if opt.kind == "lb":
        return 0 * mag
    if opt.kind == "ub":
        u = S.net.capacity[arc]
        return mag * (u - p.x[arc] - u * p.y[j - 1])
    return -mag * p.z[S.triple_for(arc, j).k]


def _build_cut(S: BilinearSet, agg: AggregatedInequality,
               picks: list[tuple[tuple[int, int], _Option]]) -> LinearCut:
    q = dict(agg.lin_x)
    r = list(agg.lin_y)
    s = dict(agg.lin_z)
    const = agg.const
    kinds = []
    for term, opt in picks:
        kinds.append(f"{opt.kind}@y{term[1]}x{term[0]}")
        for arc, d in opt.dx:
            q[arc] = q.get(arc, _F0) + d
        for j, d in opt.dy:
            r[j - 1] += d
        for k, d in opt.dz:
            s[k] = s.get(k, _F0) + d
        const += opt.dconst
    prov = str(agg.assignment) + (" / " + ",".join(kinds) if kinds else "")
    return LinearCut(
        q=tuple(sorted((a, c) for a, c in q.items() if c != 0)),
        r=tuple(r),
        s=tuple(sorted((k, c) for k, c in s.items() if c != 0)),
        t=-const,
        provenance=prov,
    )


def relax_all(agg: AggregatedInequality, S: BilinearSet) -> list[LinearCut]:
    """Every combination of per-term relaxation options, one cut each."""
    terms = agg.remaining()
    per_term = [[(t, o) for o in _term_options(S, t, c)] for t, c in terms]
    cuts = []
    for combo in itertools.product(*per_term):
        cuts.append(_build_cut(S, agg, list(combo)))
    return cuts


def relax_most_violated(agg: AggregatedInequality, S: BilinearSet,
                        p: Point) -> LinearCut:
    """Pick, independently per term, the option of least value at ``p``.

    Linear in the number of surviving terms; ties fall to the fixed option
    order (lower bound, upper bound, product variable).
    """
    picks = []
    for term, coef in agg.remaining():
        opts = _term_options(S, term, coef)
        best = min(
            range(len(opts)),
            key=lambda i: (_option_value(S, term, coef, opts[i], p), i),
        )
        picks.append((term, opts[best]))
    return _build_cut(S, agg, picks)


# ---------------------------------------------------------------------------
# closed-form coefficients from aggregation weights
# ---------------------------------------------------------------------------


@dataclass
class CutWeights:
    """Dual-weight vector: one entry per constraint the procedure may use."""

    m: int
    beta_plus: dict[int, Fraction] = field(default_factory=dict)
    beta_minus: dict[int, Fraction] = field(default_factory=dict)
    gamma: tuple[dict[FlowBalanceRef, Fraction], ...] = ()
    theta: dict[FlowBalanceRef, Fraction] = field(default_factory=dict)
    eta: tuple[dict[int, Fraction], ...] = ()
    rho: tuple[dict[int, Fraction], ...] = ()
    lam: dict[int, Fraction] = field(default_factory=dict)
    mu: dict[int, Fraction] = field(default_factory=dict)

    def __post_init__(self):
        if not self.gamma:
            self.gamma = tuple({} for _ in range(self.m))
        if not self.eta:
            self.eta = tuple({} for _ in range(self.m))
        if not self.rho:
            self.rho = tuple({} for _ in range(self.m))


def closed_form_cut(S: BilinearSet, w: CutWeights) -> LinearCut:
    """Cut coefficients computed directly from the weight vector.

    Must agree, coefficient for coefficient, with aggregate-then-relax on
    the same selection; the differential tests enforce that identity.
    """
    q: dict[int, Fraction] = {}
    for ref, th in sorted(w.theta.items()):
        coeffs, _ = flow_balance_row(S.net, ref)
        for arc, c in coeffs.items():
            q[arc] = q.get(arc, _F0) + c * th
    for arc, lm in w.lam.items():
        q[arc] = q.get(arc, _F0) + lm
    for arc, mu in w.mu.items():
        q[arc] = q.get(arc, _F0) - mu

    r = [_F0] * S.m
    theta_rhs = _F0
    for ref, th in sorted(w.theta.items()):
        _, rhs = flow_balance_row(S.net, ref)
        theta_rhs += rhs * th
    for j in range(S.m):
        r[j] += theta_rhs
        for ref, g in sorted(w.gamma[j].items()):
            _, rhs = flow_balance_row(S.net, ref)
            r[j] -= rhs * g
        for arc, rh in w.rho[j].items():
            r[j] += S.net.capacity[arc] * rh
        for arc, mu in w.mu.items():
            r[j] -= S.net.capacity[arc] * mu

    s: dict[int, Fraction] = {}
    for k, b in w.beta_plus.items():
        s[k] = s.get(k, _F0) - b
    for k, b in w.beta_minus.items():
        s[k] = s.get(k, _F0) + b

    t = theta_rhs
    for arc, mu in w.mu.items():
        t -= S.net.capacity[arc] * mu

    return LinearCut(
        q=tuple(sorted((a, c) for a, c in q.items() if c != 0)),
        r=tuple(r),
        s=tuple(sorted((k, c) for k, c in s.items() if c != 0)),
        t=t,
        provenance="closed-form",
    )


def weights_for(S: BilinearSet, a: EcrAssignment,
                picks: list[tuple[tuple[int, int], Fraction, str]]) -> CutWeights:
    """Weight vector matching an assignment plus relaxation choices.

    ``picks`` lists (term, coefficient, option kind) for every surviving
    term, mirroring the relaxation step.
    """
    w = CutWeights(m=S.m)
    if a.sign == PLUS:
        w.beta_plus[a.class_k] = w.beta_plus.get(a.class_k, _F0) + _F1
    else:
        w.beta_minus[a.class_k] = w.beta_minus.get(a.class_k, _F0) + _F1
    for j in range(1, S.m + 1):
        for ref in a.I[j - 1]:
            w.gamma[j - 1][ref] = _F1
    for ref in a.Ibar:
        w.theta[ref] = _F1
    for arc in a.J:
        w.lam[arc] = w.lam.get(arc, _F0) + _F1
    for arc in a.Jbar:
        w.mu[arc] = w.mu.get(arc, _F0) + _F1
    for (arc, j), coef, kind in picks:
        mag = abs(coef)
        if coef > 0:
            if kind == "lb":
                w.lam[arc] = w.lam.get(arc, _F0) + mag
            elif kind == "ub":
                w.rho[j - 1][arc] = w.rho[j - 1].get(arc, _F0) + mag
            else:
                k = S.triple_for(arc, j).k
                w.beta_minus[k] = w.beta_minus.get(k, _F0) + mag
        else:
            if kind == "lb":
                w.eta[j - 1][arc] = w.eta[j - 1].get(arc, _F0) + mag
            elif kind == "ub":
                w.mu[arc] = w.mu.get(arc, _F0) + mag
            else:
                k = S.triple_for(arc, j).k
                w.beta_plus[k] = w.beta_plus.get(k, _F0) + mag
    return w
