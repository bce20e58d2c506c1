"""Pre-actions of BS(m,n) in orbit-and-arrow form.

A pre-action is a finite list of b-orbits (each a cycle of finite length L or
a copy of Z for the infinite label) together with arrows.  An arrow from a
point x to a point y declares the t-action on the whole b^n-coset of x by
equivariance:

    (x b^{jn}) . t = y b^{jm}          for all j,

so the partial bijection tau is stored one coset at a time and the relation
t b^m t^-1 = b^n holds by construction.  Validity amounts to the transfer
equation between the two orbit labels plus pairwise disjointness of source
cosets and of target cosets.

Points are (orbit id, offset); offsets live in [0, L) on finite orbits and in
Z on infinite ones.  Values are treated as immutable after validation; every
query here is read-only.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator

from .phenotype import INF, Label, check_label, is_finite, transfer_ok
from .words import GroupParams, Word

GENERATOR_ORDER = ("b", "b-", "t", "t-")  # frozen order for canonical traversals


class InvalidPreAction(ValueError):
    """Raised when an operation requires a valid pre-action and got violations."""


@dataclass(frozen=True, order=True)
class Point:
    orbit: str
    offset: int

    def __repr__(self) -> str:
        return f"({self.orbit},{self.offset})"


@dataclass(frozen=True)
class Arrow:
    source: Point
    target: Point

    def __repr__(self) -> str:
        return f"{self.source}->{self.target}"


@dataclass(frozen=True)
class PreAction:
    params: GroupParams
    orbits: tuple[tuple[str, Label], ...]
    arrows: tuple[Arrow, ...]
    _labels: dict[str, Label] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        labels: dict[str, Label] = {}
        for orbit_id, label in self.orbits:
            if orbit_id in labels:
                raise ValueError(f"duplicate orbit id {orbit_id!r}")
            labels[orbit_id] = check_label(label)
        object.__setattr__(self, "_labels", labels)

    def label(self, orbit_id: str) -> Label:
        return self._labels[orbit_id]

    def orbit_ids(self) -> tuple[str, ...]:
        return tuple(orbit_id for orbit_id, _ in self.orbits)

    def has_orbit(self, orbit_id: str) -> bool:
        return orbit_id in self._labels

    def points(self) -> Iterator[Point]:
        """All points, for finite pre-actions only."""
        for orbit_id, label in self.orbits:
            if label is INF:
                raise ValueError(f"orbit {orbit_id!r} is infinite; cannot enumerate points")
            for offset in range(label):
                yield Point(orbit_id, offset)

    def is_finite(self) -> bool:
        return all(is_finite(label) for _, label in self.orbits)

    def normalize(self, point: Point) -> Point:
        label = self._labels[point.orbit]
        if label is INF:
            return point
        return Point(point.orbit, point.offset % label)


@dataclass(frozen=True)
class PointedPreAction:
    pre: PreAction
    basepoint: Point

    def __post_init__(self):
        if not self.pre.has_orbit(self.basepoint.orbit):
            raise ValueError(f"basepoint orbit {self.basepoint.orbit!r} not in pre-action")


def preaction(params: GroupParams, orbits: dict[str, Label] | Iterable[tuple[str, Label]],
              arrows: Iterable[Arrow] = ()) -> PreAction:
    """Convenience constructor normalizing containers."""
    items = tuple(orbits.items()) if isinstance(orbits, dict) else tuple(orbits)
    return PreAction(params, items, tuple(arrows))


def source_modulus(params: GroupParams, label: Label) -> int:
    """Residue modulus classifying b^n-cosets inside an orbit of this label."""
    return params.abs_n if label is INF else math.gcd(params.n, label)


def target_modulus(params: GroupParams, label: Label) -> int:
    """Residue modulus classifying b^m-cosets inside an orbit of this label."""
    return params.abs_m if label is INF else math.gcd(params.m, label)


# ---------------------------------------------------------------------------
# validation


@dataclass
class Diagnostics:
    violations: list[str]

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok


def validate(pre: PreAction) -> Diagnostics:
    """Check every arrow against the transfer equation, point validity and
    pairwise disjointness of source (resp. target) cosets."""
    out: list[str] = []
    seen_src: dict[tuple[str, int], int] = {}
    seen_dst: dict[tuple[str, int], int] = {}
    for idx, arrow in enumerate(pre.arrows):
        bad = False
        for end, point in (("source", arrow.source), ("target", arrow.target)):
            if not pre.has_orbit(point.orbit):
                out.append(f"arrow {idx}: {end} orbit {point.orbit!r} does not exist")
                bad = True
                continue
            label = pre.label(point.orbit)
            if label is not INF and not 0 <= point.offset < label:
                out.append(f"arrow {idx}: {end} offset {point.offset} outside [0, {label})")
        if bad:
            continue
        src_label = pre.label(arrow.source.orbit)
        dst_label = pre.label(arrow.target.orbit)
        ok, _ = transfer_ok(pre.params, src_label, dst_label)
        if not ok:
            out.append(
                f"arrow {idx}: transfer equation fails between labels"
                f" {src_label} -> {dst_label}"
            )
        src_key = (arrow.source.orbit, arrow.source.offset % source_modulus(pre.params, src_label))
        dst_key = (arrow.target.orbit, arrow.target.offset % target_modulus(pre.params, dst_label))
        if src_key in seen_src:
            out.append(f"arrow {idx}: source coset already used by arrow {seen_src[src_key]}")
        if dst_key in seen_dst:
            out.append(f"arrow {idx}: target coset already used by arrow {seen_dst[dst_key]}")
        seen_src.setdefault(src_key, idx)
        seen_dst.setdefault(dst_key, idx)
    return Diagnostics(out)


def require_valid(pre: PreAction) -> PreAction:
    diag = validate(pre)
    if not diag.ok:
        raise InvalidPreAction("; ".join(diag.violations))
    return pre


# ---------------------------------------------------------------------------
# the action of b and t


def apply_b(pre: PreAction, point: Point, exponent: int) -> Point:
    label = pre.label(point.orbit)
    if label is INF:
        return Point(point.orbit, point.offset + exponent)
    return Point(point.orbit, (point.offset + exponent) % label)


@dataclass(frozen=True)
class UndefinedAt:
    """Evaluation hit a missing t-transition after ``steps`` letters."""

    point: Point
    steps: int

    def __bool__(self) -> bool:
        return False


def _transport(params: GroupParams, arrow: Arrow, labels, point: Point, forward: bool) -> Point | None:
    """Move ``point`` across ``arrow`` (tau if forward, tau^-1 if not).

    Returns None when the point is not in the relevant coset.  The coset
    equation j*n = offset - source_offset (mod L) is solved with the extended
    Euclid inverse; the per-arrow transfer equation makes the answer
    independent of the chosen j.
    """
    near, far = (arrow.source, arrow.target) if forward else (arrow.target, arrow.source)
    step_near = params.n if forward else params.m
    step_far = params.m if forward else params.n
    if point.orbit != near.orbit:
        return None
    near_label = labels(near.orbit)
    far_label = labels(far.orbit)
    delta = point.offset - near.offset
    if near_label is INF:
        if delta % step_near:
            return None
        j = delta // step_near
        return Point(far.orbit, far.offset + j * step_far)
    g = math.gcd(step_near, near_label)
    if delta % g:
        return None
    reduced_mod = near_label // g
    j = (delta // g) * pow(step_near // g, -1, reduced_mod) % reduced_mod
    if far_label is INF:
        return Point(far.orbit, far.offset + j * step_far)
    return Point(far.orbit, (far.offset + j * step_far) % far_label)


def apply_t(pre: PreAction, point: Point, sign: int) -> Point | None:
    """One t-step (sign=+1) or t^-1-step (sign=-1); None when tau is undefined."""
    point = pre.normalize(point)
    for arrow in pre.arrows:
        moved = _transport(pre.params, arrow, pre.label, point, forward=sign > 0)
        if moved is not None:
            return moved
    return None


def evaluate(pre: PreAction, point: Point, w: Word) -> Point | UndefinedAt:
    """Left-to-right application of a word; reports the first undefined step."""
    current = pre.normalize(point)
    steps = 0
    for gen, exp in w.syllables:
        if gen == "b":
            current = apply_b(pre, current, exp)
            steps += abs(exp)
            continue
        sign = 1 if exp > 0 else -1
        for _ in range(abs(exp)):
            moved = apply_t(pre, current, sign)
            if moved is None:
                return UndefinedAt(current, steps)
            current = moved
            steps += 1
    return current


# ---------------------------------------------------------------------------
# Schreier balls


TransitionFn = Callable[[Point, str], Point | None]


def transitions_of(pre: PreAction) -> TransitionFn:
    def step(point: Point, gen: str) -> Point | None:
        if gen == "b":
            return apply_b(pre, point, 1)
        if gen == "b-":
            return apply_b(pre, point, -1)
        return apply_t(pre, point, 1 if gen == "t" else -1)

    return step


@dataclass(frozen=True)
class BallEncoding:
    """Canonical ball: BFS numbering in frozen generator order; each row is
    the four transitions of one vertex (vertex number, or None when the
    transition is undefined or leaves the ball)."""

    radius: int
    table: tuple[tuple[int | None, int | None, int | None, int | None], ...]

    def size(self) -> int:
        return len(self.table)


def ball_encoding(step: TransitionFn, basepoint: Point, radius: int) -> BallEncoding:
    order: list[Point] = [basepoint]
    index: dict[Point, int] = {basepoint: 0}
    dist: dict[Point, int] = {basepoint: 0}
    head = 0
    while head < len(order):
        current = order[head]
        head += 1
        if dist[current] == radius:
            continue
        for gen in GENERATOR_ORDER:
            nxt = step(current, gen)
            if nxt is None or nxt in index:
                continue
            index[nxt] = len(order)
            dist[nxt] = dist[current] + 1
            order.append(nxt)
    table = []
    for point in order:
        row = []
        for gen in GENERATOR_ORDER:
            nxt = step(point, gen)
            row.append(index.get(nxt) if nxt is not None else None)
        table.append(tuple(row))
    return BallEncoding(radius, tuple(table))


def schreier_ball(pointed: PointedPreAction, radius: int) -> BallEncoding:
    return ball_encoding(transitions_of(pointed.pre), pointed.pre.normalize(pointed.basepoint), radius)


def ball_equal(b1: BallEncoding, b2: BallEncoding) -> bool:
    return b1 == b2


def ball_points(pre: PreAction, basepoint: Point, radius: int) -> list[Point]:
    """The points of B(basepoint, radius), in canonical BFS order."""
    step = transitions_of(pre)
    order = [pre.normalize(basepoint)]
    index = {order[0]}
    dist = {order[0]: 0}
    head = 0
    while head < len(order):
        current = order[head]
        head += 1
        if dist[current] == radius:
            continue
        for gen in GENERATOR_ORDER:
            nxt = step(current, gen)
            if nxt is None or nxt in index:
                continue
            index.add(nxt)
            dist[nxt] = dist[current] + 1
            order.append(nxt)
    return order


def core_restriction(pointed: PointedPreAction, radius: int) -> PreAction:
    """Restrict to the b-orbits meeting B(basepoint, radius), keeping the
    arrows whose source and target orbits are both kept."""
    pre = pointed.pre
    kept = {point.orbit for point in ball_points(pre, pointed.basepoint, radius)}
    orbits = tuple((oid, label) for oid, label in pre.orbits if oid in kept)
    arrows = tuple(a for a in pre.arrows if a.source.orbit in kept and a.target.orbit in kept)
    return PreAction(pre.params, orbits, arrows)


# ---------------------------------------------------------------------------
# pointed isomorphism


def _orbit_arrows(pre: PreAction):
    by_src: dict[str, dict[int, Arrow]] = {}
    by_dst: dict[str, dict[int, Arrow]] = {}
    for arrow in pre.arrows:
        smod = source_modulus(pre.params, pre.label(arrow.source.orbit))
        tmod = target_modulus(pre.params, pre.label(arrow.target.orbit))
        by_src.setdefault(arrow.source.orbit, {})[arrow.source.offset % smod] = arrow
        by_dst.setdefault(arrow.target.orbit, {})[arrow.target.offset % tmod] = arrow
    return by_src, by_dst


def pointed_isomorphic(p1: PointedPreAction, p2: PointedPreAction) -> tuple[bool, dict[str, tuple[str, int]] | None]:
    """Decide basepoint-preserving pre-action isomorphism by synchronized
    traversal.

    Works for finite data (finitely many orbits; labels may be infinite).  An
    isomorphism restricted to one orbit is offset translation, so the whole
    candidate map is forced from the basepoint; the mapping returned sends
    orbit ids of p1 to (orbit id of p2, offset shift).
    """
    a, b = p1.pre, p2.pre
    if a.params != b.params:
        return False, None
    if len(a.orbits) != len(b.orbits) or len(a.arrows) != len(b.arrows):
        return False, None
    base1 = a.normalize(p1.basepoint)
    base2 = b.normalize(p2.basepoint)
    if a.label(base1.orbit) != b.label(base2.orbit):
        return False, None
    src1, dst1 = _orbit_arrows(a)
    src2, dst2 = _orbit_arrows(b)

    def norm_shift(orbit1: str, shift: int) -> int:
        label = a.label(orbit1)
        return shift if label is INF else shift % label

    # shift is (offset in p2) - (offset in p1), modulo the label when finite
    mapping: dict[str, tuple[str, int]] = {
        base1.orbit: (base2.orbit, norm_shift(base1.orbit, base2.offset - base1.offset))
    }
    queue = [base1.orbit]
    matched: set[str] = {base2.orbit}

    while queue:
        orbit1 = queue.pop()
        orbit2, shift = mapping[orbit1]
        label = a.label(orbit1)
        for forward, table1, table2, modulus in (
            (True, src1, src2, source_modulus(a.params, label)),
            (False, dst1, dst2, target_modulus(a.params, label)),
        ):
            rows1 = table1.get(orbit1, {})
            rows2 = table2.get(orbit2, {})
            if len(rows1) != len(rows2):
                return False, None
            for residue, arrow1 in rows1.items():
                arrow2 = rows2.get((residue + shift) % modulus)
                if arrow2 is None:
                    return False, None
                if forward:
                    near1, far1, far2 = arrow1.source, arrow1.target, arrow2.target
                else:
                    near1, far1, far2 = arrow1.target, arrow1.source, arrow2.source
                if a.label(far1.orbit) != b.label(far2.orbit):
                    return False, None
                # phi(near1) transported across arrow2 is phi(far end of
                # arrow1); arrow1 itself moves its own endpoint to far1, so a
                # single transport determines the forced far-orbit shift
                image_near = Point(orbit2, norm_shift_offset(b, orbit2, near1.offset + shift))
                moved2 = _transport(b.params, arrow2, b.label, image_near, forward)
                if moved2 is None:
                    return False, None
                far_shift = norm_shift(far1.orbit, moved2.offset - far1.offset)
                known = mapping.get(far1.orbit)
                if known is not None:
                    if known != (far2.orbit, far_shift):
                        return False, None
                else:
                    if far2.orbit in matched:
                        return False, None
                    mapping[far1.orbit] = (far2.orbit, far_shift)
                    matched.add(far2.orbit)
                    queue.append(far1.orbit)
    if len(mapping) != len(a.orbits):
        raise ValueError("pointed_isomorphic needs connected pre-actions")
    return True, mapping


def norm_shift_offset(pre: PreAction, orbit: str, offset: int) -> int:
    label = pre.label(orbit)
    return offset if label is INF else offset % label


# ---------------------------------------------------------------------------
# disjoint union


def disjoint_union(p1: PreAction, p2: PreAction) -> PreAction:
    merged, _, _ = disjoint_union_with_maps(p1, p2)
    return merged


def disjoint_union_with_maps(p1: PreAction, p2: PreAction):
    """Disjoint union with deterministic id freshening; also returns the two
    orbit-id renamings."""
    if p1.params != p2.params:
        raise ValueError("disjoint union needs equal group parameters")
    ren1 = {oid: f"u0:{oid}" for oid in p1.orbit_ids()}
    ren2 = {oid: f"u1:{oid}" for oid in p2.orbit_ids()}

    def rename(arrow: Arrow, ren: dict[str, str]) -> Arrow:
        return Arrow(
            Point(ren[arrow.source.orbit], arrow.source.offset),
            Point(ren[arrow.target.orbit], arrow.target.offset),
        )

    orbits = tuple((ren1[oid], label) for oid, label in p1.orbits) + tuple(
        (ren2[oid], label) for oid, label in p2.orbits
    )
    arrows = tuple(rename(a, ren1) for a in p1.arrows) + tuple(rename(a, ren2) for a in p2.arrows)
    return PreAction(p1.params, orbits, arrows), ren1, ren2


def is_connected(pre: PreAction) -> bool:
    """Connectivity of the Bass-Serre graph (equivalently of the Schreier graph)."""
    ids = pre.orbit_ids()
    if not ids:
        return True
    adjacency: dict[str, set[str]] = {oid: set() for oid in ids}
    for arrow in pre.arrows:
        adjacency[arrow.source.orbit].add(arrow.target.orbit)
        adjacency[arrow.target.orbit].add(arrow.source.orbit)
    seen = {ids[0]}
    stack = [ids[0]]
    while stack:
        for neighbor in adjacency[stack.pop()]:
            if neighbor not in seen:
                seen.add(neighbor)
                stack.append(neighbor)
    return len(seen) == len(ids)


# ---------------------------------------------------------------------------
# JSON serialization


def _label_to_json(label: Label):
    return "inf" if label is INF else label


def _label_from_json(value) -> Label:
    if value == "inf":
        return INF
    return int(value)


def to_json_dict(pre: PreAction, basepoint: Point | None = None,
                 basepoints: Iterable[Point] = ()) -> dict:
    doc = {
        "m": pre.params.m,
        "n": pre.params.n,
        "orbits": [{"id": oid, "len": _label_to_json(label)} for oid, label in pre.orbits],
        "arrows": [
            {"src": [a.source.orbit, a.source.offset], "dst": [a.target.orbit, a.target.offset]}
            for a in pre.arrows
        ],
    }
    if basepoint is not None:
        doc["basepoint"] = [basepoint.orbit, basepoint.offset]
    extra = [[p.orbit, p.offset] for p in basepoints]
    if extra:
        doc["basepoints"] = extra
    return doc


def from_json_dict(doc: dict) -> PreAction | PointedPreAction:
    from .words import params as make_params

    group = make_params(int(doc["m"]), int(doc["n"]))
    orbits = tuple((entry["id"], _label_from_json(entry["len"])) for entry in doc["orbits"])
    arrows = tuple(
        Arrow(Point(a["src"][0], int(a["src"][1])), Point(a["dst"][0], int(a["dst"][1])))
        for a in doc.get("arrows", ())
    )
    pre = PreAction(group, orbits, arrows)
    if "basepoint" in doc:
        bp = doc["basepoint"]
        return PointedPreAction(pre, Point(bp[0], int(bp[1])))
    return pre


def dumps(pre: PreAction, basepoint: Point | None = None, **kw) -> str:
    return json.dumps(to_json_dict(pre, basepoint), sort_keys=True, **kw)


def loads(text: str) -> PreAction | PointedPreAction:
    return from_json_dict(json.loads(text))
