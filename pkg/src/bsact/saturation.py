"""Ruled forest saturations: one-orbit free extensions, a lazy growth engine,
breadth-first saturation to a given Bass-Serre depth, and stabilizer words.

A non-saturated pre-action grows by one-orbit free extensions: pick a point x
whose b^n-coset has no outgoing arrow (positive case) or whose b^m-coset has
no incoming arrow (negative case), create a fresh orbit whose label the
transfer rule dictates, and join the two cosets by a single arrow.  Every
vertex added this way is itself unsaturated (|m|, |n| >= 2), so the added part
is an infinite forest; the ruled saturation is unique up to isomorphism, which
is why the growth order here can be any deterministic or seeded order.

``LazySaturation`` grows on demand while words are evaluated, so the (always
infinite) saturated action is usable as a total action; ``saturate_to_depth``
grows level by level and returns a finite truncation.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .phenotype import INF, Label, TransferRule, MAX, NEGATIVE, POSITIVE
from .preaction import (
    Arrow,
    BallEncoding,
    Point,
    PointedPreAction,
    PreAction,
    UndefinedAt,
    apply_b,
    ball_encoding,
    require_valid,
    source_modulus,
    target_modulus,
    _transport,
)
from .words import GroupParams, NormalForm, Word, britton_reduce, word

DEFAULT_FUEL = 10**6


class FuelExhausted(RuntimeError):
    """The per-call extension budget ran out."""


class AlreadySaturated(ValueError):
    """Requested extension direction is already covered at that point."""


@dataclass(frozen=True)
class ExtensionRecord:
    """One one-orbit free extension: at ``witness`` in direction ``sign`` a
    fresh orbit ``orbit_id`` of the rule-dictated ``label`` was attached, with
    base point (orbit_id, 0)."""

    sign: int
    witness: Point
    orbit_id: str
    label: Label

    @property
    def base(self) -> Point:
        return Point(self.orbit_id, 0)

    def to_json_dict(self) -> dict:
        return {
            "sign": "+" if self.sign == POSITIVE else "-",
            "witness": [self.witness.orbit, self.witness.offset],
            "orbit": self.orbit_id,
            "len": "inf" if self.label is INF else self.label,
        }


class LazySaturation:
    """Single-writer growth engine over an immutable core.

    Reads of the current state are safe between growth steps; growth needs
    exclusive access.
    """

    def __init__(self, core: PreAction | PointedPreAction, rule: TransferRule = MAX,
                 fuel: int = DEFAULT_FUEL, prefix: str = "s"):
        if isinstance(core, PointedPreAction):
            self.basepoint: Point | None = core.pre.normalize(core.basepoint)
            core = core.pre
        else:
            self.basepoint = None
        require_valid(core)
        self.core = core
        self.rule = rule
        self.params: GroupParams = core.params
        self.fuel = fuel
        self._prefix = prefix
        self._fresh = 0
        self.labels: dict[str, Label] = {oid: lab for oid, lab in core.orbits}
        self.depth: dict[str, int] = {oid: 0 for oid, _ in core.orbits}
        self.out_cover: dict[str, dict[int, Arrow]] = {oid: {} for oid, _ in core.orbits}
        self.in_cover: dict[str, dict[int, Arrow]] = {oid: {} for oid, _ in core.orbits}
        for arrow in core.arrows:
            self._register(arrow)
        self.log: list[ExtensionRecord] = []
        self._spent = 0

    # -- bookkeeping --------------------------------------------------------

    def _register(self, arrow: Arrow) -> None:
        src_mod = source_modulus(self.params, self.labels[arrow.source.orbit])
        dst_mod = target_modulus(self.params, self.labels[arrow.target.orbit])
        self.out_cover[arrow.source.orbit][arrow.source.offset % src_mod] = arrow
        self.in_cover[arrow.target.orbit][arrow.target.offset % dst_mod] = arrow

    def label(self, orbit_id: str) -> Label:
        return self.labels[orbit_id]

    def is_core_orbit(self, orbit_id: str) -> bool:
        return self.depth[orbit_id] == 0

    def normalize(self, point: Point) -> Point:
        lab = self.labels[point.orbit]
        return point if lab is INF else Point(point.orbit, point.offset % lab)

    def current(self) -> PreAction:
        """Snapshot of the realized finite part, core first then growth order."""
        orbits = tuple(self.core.orbits) + tuple(
            (rec.orbit_id, rec.label) for rec in self.log
        )
        arrows = tuple(self.core.arrows) + tuple(self._arrow_of(rec) for rec in self.log)
        return PreAction(self.params, orbits, arrows)

    def _arrow_of(self, rec: ExtensionRecord) -> Arrow:
        if rec.sign == POSITIVE:
            return Arrow(rec.witness, rec.base)
        return Arrow(rec.base, rec.witness)

    # -- growth -------------------------------------------------------------

    def _extend(self, point: Point, sign: int) -> Arrow:
        """One-orbit free extension at ``point``; the point's coset must be
        uncovered in the given direction."""
        point = self.normalize(point)
        parent_label = self.labels[point.orbit]
        if sign == POSITIVE:
            cover = self.out_cover[point.orbit]
            residue = point.offset % source_modulus(self.params, parent_label)
        else:
            cover = self.in_cover[point.orbit]
            residue = point.offset % target_modulus(self.params, parent_label)
        if residue in cover:
            raise AlreadySaturated(f"{point} already covered in direction {sign:+d}")
        self._spent += 1
        if self._spent > self.fuel:
            raise FuelExhausted(f"extension budget {self.fuel} exhausted")
        child_label = self.rule.apply(self.params, parent_label, sign)
        orbit_id = f"{self._prefix}{self._fresh}"
        self._fresh += 1
        self.labels[orbit_id] = child_label
        self.depth[orbit_id] = self.depth[point.orbit] + 1
        self.out_cover[orbit_id] = {}
        self.in_cover[orbit_id] = {}
        rec = ExtensionRecord(sign, point, orbit_id, child_label)
        self.log.append(rec)
        arrow = self._arrow_of(rec)
        self._register(arrow)
        return arrow

    def reset_fuel(self) -> None:
        self._spent = 0

    # -- the (total) action -------------------------------------------------

    def t_image(self, point: Point, sign: int, grow: bool = True,
                trace: list[tuple[Arrow, int]] | None = None) -> Point | None:
        point = self.normalize(point)
        lab = self.labels[point.orbit]
        if sign == POSITIVE:
            cover = self.out_cover[point.orbit]
            residue = point.offset % source_modulus(self.params, lab)
        else:
            cover = self.in_cover[point.orbit]
            residue = point.offset % target_modulus(self.params, lab)
        arrow = cover.get(residue)
        if arrow is None:
            if not grow:
                return None
            arrow = self._extend(point, sign)
        if trace is not None:
            trace.append((arrow, sign))
        return _transport(self.params, arrow, self.labels.__getitem__, point, forward=sign == POSITIVE)

    def apply_word(self, point: Point, w: Word, grow: bool = True,
                   trace: list[tuple[Arrow, int]] | None = None) -> Point | UndefinedAt:
        current = self.normalize(point)
        steps = 0
        for gen, exp in w.syllables:
            if gen == "b":
                lab = self.labels[current.orbit]
                off = current.offset + exp
                current = Point(current.orbit, off if lab is INF else off % lab)
                steps += abs(exp)
                continue
            sign = POSITIVE if exp > 0 else NEGATIVE
            for _ in range(abs(exp)):
                nxt = self.t_image(current, sign, grow=grow, trace=trace)
                if nxt is None:
                    return UndefinedAt(current, steps)
                current = nxt
                steps += 1
        return current

    def ball(self, point: Point, radius: int) -> BallEncoding:
        def step(pt: Point, gen: str) -> Point | None:
            if gen == "b":
                return self._b_step(pt, 1)
            if gen == "b-":
                return self._b_step(pt, -1)
            return self.t_image(pt, POSITIVE if gen == "t" else NEGATIVE)

        return ball_encoding(step, self.normalize(point), radius)

    def _b_step(self, point: Point, exp: int) -> Point:
        lab = self.labels[point.orbit]
        off = point.offset + exp
        return Point(point.orbit, off if lab is INF else off % lab)


def lazy_apply(sat: LazySaturation, point: Point, w: Word) -> Point:
    """Total evaluation in the ruled saturation, growing on demand."""
    sat.reset_fuel()
    result = sat.apply_word(point, w, grow=True)
    assert not isinstance(result, UndefinedAt)
    return result


def stabilizer_contains(sat: LazySaturation, w: Word) -> bool:
    if sat.basepoint is None:
        raise ValueError("stabilizer queries need a pointed core")
    return lazy_apply(sat, sat.basepoint, w) == sat.basepoint


# ---------------------------------------------------------------------------
# one-orbit free extension as a pure operation


def one_orbit_extension(pre: PreAction, point: Point, sign: int,
                        rule: TransferRule) -> tuple[PreAction, ExtensionRecord]:
    """Functional one-orbit free extension of a pre-action at ``point``."""
    engine = LazySaturation(pre, rule, prefix=_fresh_prefix(pre))
    engine._extend(point, sign)
    rec = engine.log[0]
    return engine.current(), rec


def _fresh_prefix(pre: PreAction) -> str:
    prefix = "e"
    while any(oid.startswith(prefix) for oid in pre.orbit_ids()):
        prefix += "x"
    return prefix


# ---------------------------------------------------------------------------
# breadth-first ruled saturation to a Bass-Serre depth


def saturate_to_depth(pointed: PointedPreAction | PreAction, rule: TransferRule,
                      depth: int, order_seed: int | None = None,
                      fuel: int = 10**7) -> tuple[PreAction, list[ExtensionRecord]]:
    """Extend level by level until every orbit within Bass-Serre distance
    ``depth - 1`` of the core is saturated; orbits at distance ``depth`` are
    realized but keep their deficits.

    The default enumeration is deterministic (orbits by id, coset residues
    ascending, positive before negative); ``order_seed`` shuffles the work
    order inside each level, which changes nothing up to isomorphism.

    Flat hot loop: level sizes grow exponentially with ``depth``, so this
    avoids the per-step objects of the lazy engine.
    """
    pre = pointed.pre if isinstance(pointed, PointedPreAction) else pointed
    require_valid(pre)
    group = pre.params
    rng = random.Random(order_seed) if order_seed is not None else None

    labels: dict[str, Label] = {oid: lab for oid, lab in pre.orbits}
    out_covered: dict[str, set[int]] = {oid: set() for oid in labels}
    in_covered: dict[str, set[int]] = {oid: set() for oid in labels}
    for arrow in pre.arrows:
        out_covered[arrow.source.orbit].add(
            arrow.source.offset % source_modulus(group, labels[arrow.source.orbit]))
        in_covered[arrow.target.orbit].add(
            arrow.target.offset % target_modulus(group, labels[arrow.target.orbit]))

    smod_cache: dict[Label, int] = {}
    tmod_cache: dict[Label, int] = {}
    rule_cache: dict[tuple[Label, int], Label] = {}

    def smod(lab: Label) -> int:
        got = smod_cache.get(lab)
        if got is None:
            got = smod_cache[lab] = source_modulus(group, lab)
        return got

    def tmod(lab: Label) -> int:
        got = tmod_cache.get(lab)
        if got is None:
            got = tmod_cache[lab] = target_modulus(group, lab)
        return got

    def child_of(lab: Label, sign: int) -> Label:
        key = (lab, sign)
        got = rule_cache.get(key)
        if got is None:
            got = rule_cache[key] = rule.apply(group, lab, sign)
        return got

    # records as flat tuples (sign, parent, residue, new_id, new_label)
    flat: list[tuple[int, str, int, str, Label]] = []
    fresh = 0
    level: list[tuple[str, Label]] = sorted((oid, labels[oid]) for oid in labels)
    for _ in range(depth):
        work: list[tuple[str, Label, int, int]] = []
        for oid, lab in level:
            oc = out_covered.get(oid, ())
            for residue in range(smod(lab)):
                if residue not in oc:
                    work.append((oid, lab, residue, POSITIVE))
            ic = in_covered.get(oid, ())
            for residue in range(tmod(lab)):
                if residue not in ic:
                    work.append((oid, lab, residue, NEGATIVE))
        if rng is not None:
            rng.shuffle(work)
        if len(flat) + len(work) > fuel:
            raise FuelExhausted(f"extension budget {fuel} exhausted at depth loop")
        created: list[tuple[str, Label]] = []
        for oid, lab, residue, sign in work:
            child_label = child_of(lab, sign)
            new_id = f"s{fresh}"
            fresh += 1
            labels[new_id] = child_label
            flat.append((sign, oid, residue, new_id, child_label))
            created.append((new_id, child_label))
            if sign == POSITIVE:
                in_covered[new_id] = {0}
                # the fresh orbit's other side is a new empty cover
            else:
                out_covered[new_id] = {0}
        level = created
    # old-level covers are irrelevant now; materialize the snapshot
    orbits = tuple(pre.orbits) + tuple((new_id, lab) for _, _, _, new_id, lab in flat)
    arrows = list(pre.arrows)
    records = []
    for sign, oid, residue, new_id, lab in flat:
        witness = Point(oid, residue)
        records.append(ExtensionRecord(sign, witness, new_id, lab))
        if sign == POSITIVE:
            arrows.append(Arrow(witness, Point(new_id, 0)))
        else:
            arrows.append(Arrow(Point(new_id, 0), witness))
    return PreAction(group, orbits, tuple(arrows)), records


# ---------------------------------------------------------------------------
# stabilizer generators


def _word_of_path(parents: dict[Point, tuple[Point, str]], point: Point) -> Word:
    gens = []
    while point in parents:
        point, gen = parents[point]
        gens.append(gen)
    mapping = {"b": ("b", 1), "b-": ("b", -1), "t": ("t", 1), "t-": ("t", -1)}
    return word(*[mapping[g] for g in reversed(gens)])


def pi1_generators(pointed: PointedPreAction) -> list[NormalForm]:
    """Britton-reduced images of fundamental-group generators of the Schreier
    graph component of the basepoint: one per non-tree positive edge of a
    breadth-first spanning tree in frozen generator order.

    Every returned word fixes the basepoint (checked).  Finite orbits only.
    """
    pre = require_valid(pointed.pre)
    for oid, lab in pre.orbits:
        if lab is INF:
            raise ValueError(
                "pi1_generators needs a finite Schreier graph; restrict or truncate first"
            )
    from .preaction import apply_t, evaluate, transitions_of

    base = pre.normalize(pointed.basepoint)
    step = transitions_of(pre)
    parents: dict[Point, tuple[Point, str]] = {}
    order = [base]
    seen = {base}
    tree_edges: set[tuple[str, Point]] = set()
    head = 0
    while head < len(order):
        current = order[head]
        head += 1
        for gen in ("b", "b-", "t", "t-"):
            nxt = step(current, gen)
            if nxt is None or nxt in seen:
                continue
            seen.add(nxt)
            parents[nxt] = (current, gen)
            if gen == "b":
                tree_edges.add(("b", current))
            elif gen == "b-":
                tree_edges.add(("b", nxt))
            elif gen == "t":
                tree_edges.add(("t", current))
            else:
                tree_edges.add(("t", nxt))
            order.append(nxt)

    generators: list[NormalForm] = []
    for current in order:
        for gen in ("b", "t"):
            target = step(current, gen)
            if target is None or (gen, current) in tree_edges:
                continue
            loop = (
                _word_of_path(parents, current)
                * word((gen, 1))
                * _word_of_path(parents, target).inverse()
            )
            nf = britton_reduce(pre.params, loop)
            end = evaluate(pre, base, loop)
            if end != base:
                raise AssertionError(f"stabilizer word {nf} does not fix the basepoint")
            generators.append(nf)
    return generators


def added_generator(params: GroupParams, record: ExtensionRecord, path: Word) -> NormalForm:
    """The stabilizer generator contributed by one finite-label extension:
    the Britton-reduced conjugate  psi(path) t^e b^{label} t^-e psi(path)^-1.

    ``path`` must read from the basepoint to the extension's witness in the
    pre-extension Schreier graph; with an infinite label no generator is
    added and this raises."""
    if record.label is INF:
        raise ValueError("infinite-label extensions add no stabilizer generator")
    sign = 1 if record.sign == POSITIVE else -1
    inner = word(("t", sign), ("b", record.label), ("t", -sign))
    return britton_reduce(params, path * inner * path.inverse())
