"""Label arithmetic for BS(m,n) pre-actions.

Labels are b-orbit cardinalities: positive integers or the infinite label
``INF``.  A positive edge from an orbit of label L to one of label L' is
combinatorially possible exactly when the transfer equation holds:

    L / gcd(L, n) = L' / gcd(L', m)

with the convention gcd(k, INF) = |k|; both sides infinite also counts.

The phenotype of a finite label L collects the primes p where |m|_p = |n|_p
and |L|_p > |n|_p, with their multiplicity in L; it is invariant along
transfer edges and so is constant on connected Bass-Serre graphs.

Transfer rules pick an admissible child label for each (label, orientation);
``MAX`` and ``MIN`` are the extremal rules.  The U-turn sequence iterates the
minimal rule in the negative orientation and stabilizes at the phenotype for
label profiles produced by maximal positive rays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import sympy

from .words import GroupParams, valuation


class _InfiniteLabel:
    """Singleton infinite label/phenotype value."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "INF"

    def __deepcopy__(self, memo):
        return self

    def __reduce__(self):
        return (_InfiniteLabel, ())


INF = _InfiniteLabel()

Label = Union[int, _InfiniteLabel]
Phenotype = Union[int, _InfiniteLabel]

POSITIVE = 1
NEGATIVE = -1


def is_finite(label: Label) -> bool:
    return label is not INF


def check_label(label: Label) -> Label:
    if label is INF:
        return label
    if not isinstance(label, int) or label < 1:
        raise ValueError(f"label must be a positive integer or INF, got {label!r}")
    return label


def label_gcd(k: int, label: Label) -> int:
    """gcd against a label, with gcd(k, INF) = |k|."""
    if label is INF:
        return abs(k)
    return math.gcd(k, label)


def coset_count(label: Label, k: int) -> Label:
    """Number of b^k-cosets inside a b-orbit of the given label."""
    return abs(k) if label is INF else math.gcd(k, label)


def coset_size(label: Label, k: int) -> Label:
    """Size of each b^k-coset inside a b-orbit of the given label."""
    return INF if label is INF else label // math.gcd(k, label)


def transfer_ok(params: GroupParams, source: Label, target: Label) -> tuple[bool, Label | None]:
    """Whether a positive edge from label ``source`` to label ``target`` is
    admissible, and the common edge label when it is."""
    check_label(source)
    check_label(target)
    if source is INF or target is INF:
        if source is INF and target is INF:
            return True, INF
        return False, None
    left = source // math.gcd(source, params.n)
    right = target // math.gcd(target, params.m)
    if left == right:
        return True, left
    return False, None


def phenotype_of_label(params: GroupParams, label: Label) -> Phenotype:
    """Product of p^{|L|_p} over primes p with |m|_p = |n|_p < |L|_p."""
    check_label(label)
    if label is INF:
        return INF
    result = 1
    for p, e in sympy.factorint(label).items():
        if params.m_factors.get(p, 0) == params.n_factors.get(p, 0) < e:
            result *= p**e
    return result


def is_valid_phenotype(params: GroupParams, q: Phenotype) -> bool:
    """Whether q is actually attained by some label (q = phenotype of q)."""
    check_label(q)
    if q is INF:
        return True
    return phenotype_of_label(params, q) == q


def reduced_phenotype(params: GroupParams, q: int) -> int:
    """q / gcd(q, m) = q / gcd(q, n) for a finite phenotype value q."""
    if q is INF:
        raise ValueError("reduced phenotype is only defined for finite phenotypes")
    by_m = q // math.gcd(q, params.m)
    by_n = q // math.gcd(q, params.n)
    if by_m != by_n:
        raise ValueError(
            f"{q} is not a valid phenotype for (m, n) = ({params.m}, {params.n}):"
            f" q/gcd(q,m) = {by_m} differs from q/gcd(q,n) = {by_n}"
        )
    return by_m


def max_rule_value(params: GroupParams, label: Label, sign: int) -> Label:
    if label is INF:
        return INF
    if sign == POSITIVE:
        return params.abs_m * (label // math.gcd(label, params.n))
    return params.abs_n * (label // math.gcd(label, params.m))


def admissible_successors(params: GroupParams, label: int, sign: int) -> list[int]:
    """All finite labels L' admissible as the child of ``label`` in the given
    orientation, ascending.  Bounded by the maximum-rule value, which is
    itself admissible, so the result is never empty."""
    if label is INF:
        raise ValueError("admissible_successors needs a finite label")
    bound = max_rule_value(params, label, sign)
    out = []
    for cand in range(1, bound + 1):
        if sign == POSITIVE:
            ok, _ = transfer_ok(params, label, cand)
        else:
            ok, _ = transfer_ok(params, cand, label)
        if ok:
            out.append(cand)
    return out


@dataclass(frozen=True)
class TransferRule:
    """A total choice of child label per (label, orientation).

    ``table`` overrides finitely many inputs; lookups fall back to the named
    extremal rule ``fallback`` ("max" or "min").  Table entries are validated
    eagerly against the transfer equation.
    """

    name: str
    table: tuple[tuple[tuple[Label, int], Label], ...] = ()

    def validate(self, params: GroupParams) -> None:
        for (label, sign), value in self.table:
            if label is INF:
                if value is not INF:
                    raise ValueError("infinite labels must map to INF")
                continue
            if sign == POSITIVE:
                ok, _ = transfer_ok(params, label, value)
            else:
                ok, _ = transfer_ok(params, value, label)
            if not ok:
                raise ValueError(f"rule table entry ({label}, {sign}) -> {value} violates the transfer equation")

    def apply(self, params: GroupParams, label: Label, sign: int) -> Label:
        check_label(label)
        if sign not in (POSITIVE, NEGATIVE):
            raise ValueError(f"bad orientation {sign}")
        if label is INF:
            return INF
        for key, value in self.table:
            if key == (label, sign):
                return value
        if self.name == "max":
            return max_rule_value(params, label, sign)
        if self.name == "min":
            return admissible_successors(params, label, sign)[0]
        raise ValueError(f"unknown fallback rule {self.name!r}")


MAX = TransferRule("max")
MIN = TransferRule("min")


def custom_rule(params: GroupParams, table: dict[tuple[Label, int], Label], fallback: TransferRule) -> TransferRule:
    rule = TransferRule(fallback.name, tuple(sorted(table.items(), key=repr)))
    rule.validate(params)
    return rule


def rule_apply(params: GroupParams, rule: TransferRule, label: Label, sign: int) -> Label:
    return rule.apply(params, label, sign)


def rule_by_name(name: str) -> TransferRule:
    if name == "max":
        return MAX
    if name == "min":
        return MIN
    raise ValueError(f"unknown rule {name!r} (expected 'max' or 'min')")


class UTurnDivergence(ValueError):
    """The minimal negative-rule iteration grows without bound for this seed.

    This happens exactly when some prime p with |m|_p < |n|_p satisfies
    |L0|_p > |m|_p; seeds produced by maximal positive rays never do.
    """


class InternalConsistencyError(AssertionError):
    """An exact postcondition guaranteed by theory failed; indicates a bug."""


def uturn_bound(params: GroupParams, start: int) -> int:
    """Iteration bound for the stabilization of the U-turn sequence."""
    bound = 2
    for p in params.mn_primes():
        vm = params.m_factors.get(p, 0)
        vn = params.n_factors.get(p, 0)
        vl = valuation(p, start)
        if vm > vn and vl > vm:
            bound = max(bound, 2 + (vl - vm + (vm - vn) - 1) // (vm - vn))
    return bound


def uturn_sequence(params: GroupParams, start: int) -> list[int]:
    """Iterate l <- min{L' : L'/gcd(L',n) = l/gcd(l,m)} until it stabilizes.

    Returns the full list including the repeated fixed point's first
    occurrence only once at the end (the list stops at the first l with
    next(l) = l).  The terminal value is the phenotype of the seed.
    """
    check_label(start)
    if start is INF:
        raise ValueError("uturn_sequence needs a finite seed label")
    for p in sorted(set(params.n_factors) | set(params.m_factors)):
        vm = params.m_factors.get(p, 0)
        vn = params.n_factors.get(p, 0)
        if vm < vn and valuation(p, start) > vm:
            raise UTurnDivergence(
                f"label {start} has p-adic valuation above |m|_p at p = {p}, so the"
                " minimal iteration increases forever"
            )
    bound = uturn_bound(params, start)
    seq = [start]
    for _ in range(bound + 1):
        nxt = MIN.apply(params, seq[-1], NEGATIVE)
        if nxt == seq[-1]:
            return seq
        seq.append(nxt)
    raise InternalConsistencyError(
        f"u-turn sequence from {start} failed to stabilize within {bound} steps: {seq}"
    )
