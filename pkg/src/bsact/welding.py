"""Welding constructions: seed-leaving paths and transitivity witnesses.

The constructions here all follow one scheme: walk out of finite cores
through their maximal forest saturations along a common word, far enough that
the endpoints sit on fresh forest orbits with controlled labels, then weld a
small number of new orbits onto those endpoints so that one group element
moves each marked point onto its partner, and finally re-saturate.  Because
the welds happen far from the basepoints (beyond the requested ball radius),
the Schreier balls of the original cores survive unchanged.

Everything a builder claims is re-checked by ``verify_witness`` from scratch:
fresh saturations, canonical ball comparisons, and honest evaluation of the
produced conjugator.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

from .bass_serre import pre_action_phenotype
from .phenotype import (
    INF,
    MAX,
    MIN,
    NEGATIVE,
    POSITIVE,
    InternalConsistencyError,
    Label,
    phenotype_of_label,
    uturn_sequence,
)
from .preaction import (
    Arrow,
    Point,
    PointedPreAction,
    PreAction,
    disjoint_union_with_maps,
    is_connected,
    require_valid,
    source_modulus,
    target_modulus,
    validate,
)
from .saturation import LazySaturation, lazy_apply
from .bass_serre import bass_serre_graph, is_saturated
from .words import GroupParams, NormalForm, Word, britton_reduce, valuation, word
from .words import _Reducer

DEFAULT_TRIES = 16


class WeldingError(ValueError):
    """A welding precondition is violated."""


class SaturatedCoreError(WeldingError):
    """A core is already saturated: no exit path exists."""


class PhenotypeObstruction(WeldingError):
    """The requested witness kind cannot exist at this phenotype."""


class DistinctnessError(WeldingError):
    """The marked points are not pairwise distinct."""


class MixedPhenotypeError(WeldingError):
    """Cores of different phenotypes cannot be welded."""


# ---------------------------------------------------------------------------
# the shared path builder


@dataclass(frozen=True)
class SeedCertificate:
    """Per-core evidence for a seed-leaving word: the endpoint, its orbit and
    label, and the final arrow whose removal separates the core from it."""

    endpoint: Point
    terminal_orbit: str
    terminal_label: Label
    last_arrow: Arrow
    separates: bool
    label_profile_ok: bool


@dataclass(frozen=True)
class SeedPath:
    """A common word leaving every seed core through its maximal saturation.

    ``element`` is the Britton normal form with the trailing b-power stripped,
    so it ends in a positive t-syllable; ``certificates`` follow the seed
    order of the call."""

    element: NormalForm
    certificates: tuple[SeedCertificate, ...]


class _Pinch(Exception):
    pass


class _PathBuilder:
    """Grows one word simultaneously evaluated from several seed points, each
    in the maximal lazy saturation of its core.

    Appended steps are (b-offset, t-sign) pairs kept Britton-reduced, which is
    what makes the projections follow geodesics once they enter the forests;
    that monotonicity is asserted on every step.
    """

    def __init__(self, seeds: list[tuple[LazySaturation, Point]]):
        if not seeds:
            raise WeldingError("need at least one seed")
        self.group: GroupParams = seeds[0][0].params
        for engine, _ in seeds:
            if engine.params != self.group:
                raise WeldingError("seeds must share group parameters")
            if engine.rule is not MAX:
                raise WeldingError("seed-leaving paths need the maximal rule")
        self.seeds = seeds
        self.reducer = _Reducer(self.group)
        self.sylls: list[tuple[str, int]] = []
        self.pts: list[Point] = [engine.normalize(pt) for engine, pt in seeds]
        self.traces: list[list[tuple[Arrow, int]]] = [[] for _ in seeds]
        self.entered: list[bool] = [False] * len(seeds)
        self.depths: list[int] = [0] * len(seeds)
        for i, (engine, _) in enumerate(seeds):
            if engine.depth[self.pts[i].orbit] != 0:
                raise WeldingError("seed points must lie in their cores")

    # -- word-level --------------------------------------------------------

    def pinch_free(self, boff: int, sign: int) -> bool:
        stack = self.reducer.stack
        if not stack or stack[-1][1] != -sign:
            return True
        step = self.group.n if sign == POSITIVE else self.group.m
        return (self.reducer.tail + boff) % step != 0

    def append(self, boff: int, sign: int) -> None:
        if not self.pinch_free(boff, sign):
            raise _Pinch(f"appending b^{boff} t^{sign} would pinch")
        if boff:
            self.reducer.push_b(boff)
            self.sylls.append(("b", boff))
        depth_before = len(self.reducer.stack)
        self.reducer.push_t(sign)
        if len(self.reducer.stack) != depth_before + 1:
            raise InternalConsistencyError("pinch predicate missed a cancellation")
        self.sylls.append(("t", sign))
        for i, (engine, _) in enumerate(self.seeds):
            pt = self.pts[i]
            if boff:
                pt = engine._b_step(pt, boff)
            trace = self.traces[i]
            nxt = engine.t_image(pt, sign, trace=trace)
            assert nxt is not None
            self.pts[i] = nxt
            new_depth = engine.depth[nxt.orbit]
            if self.entered[i]:
                if new_depth != self.depths[i] + 1:
                    raise InternalConsistencyError(
                        "projection backtracked inside the forest"
                    )
            self.entered[i] = self.entered[i] or new_depth > 0
            self.depths[i] = new_depth

    def current_word(self) -> Word:
        return word(*self.sylls)

    def t_length(self) -> int:
        return sum(1 for gen, _ in self.sylls if gen == "t")

    def last_sign(self) -> int | None:
        stack = self.reducer.stack
        return stack[-1][1] if stack else None

    # -- graph-level search ------------------------------------------------

    def _escape_one(self, idx: int, fuel: int = 200000) -> None:
        """Extend the word so that seed ``idx`` leaves its core."""
        engine, _ = self.seeds[idx]
        bans: set[tuple[Arrow, int]] = set()
        if self.traces[idx]:
            arr, sgn = self.traces[idx][-1]
            bans.add((arr, -sgn))
        while True:
            path = self._bfs_escape(engine, self.pts[idx], bans, fuel)
            if path is None:
                raise InternalConsistencyError(
                    "no escape path found although the core is not saturated"
                )
            realized = self._realize(idx, path, bans)
            if realized:
                return

    def _bfs_escape(self, engine: LazySaturation, start: Point,
                    bans: set[tuple[Arrow, int]], fuel: int):
        """Shortest arrow path, never reversing the previous arrow, from
        ``start`` to any forest orbit; bans apply to the first step."""
        queue = deque([(start, None, [])])
        seen = {(start, None)}
        spent = 0
        while queue:
            pt, last, path = queue.popleft()
            spent += 1
            if spent > fuel:
                raise InternalConsistencyError("escape search fuel exhausted")
            for sign in (POSITIVE, NEGATIVE):
                for arrow in self._orbit_transitions(engine, pt.orbit, sign):
                    if last is None and (arrow, sign) in bans:
                        continue
                    if last is not None and last == (arrow, -sign):
                        continue
                    landing = self._landing(engine, pt, arrow, sign)
                    if engine.depth[landing.orbit] > 0:
                        return path + [(arrow, sign)]
                    key = (landing, (arrow, sign))
                    if key in seen:
                        continue
                    seen.add(key)
                    queue.append((landing, (arrow, sign), path + [(arrow, sign)]))
        return None

    def _orbit_transitions(self, engine: LazySaturation, orbit: str, sign: int):
        lab = engine.labels[orbit]
        if sign == POSITIVE:
            modulus = source_modulus(self.group, lab)
            cover = engine.out_cover[orbit]
        else:
            modulus = target_modulus(self.group, lab)
            cover = engine.in_cover[orbit]
        arrows = []
        for residue in range(modulus):
            arrow = cover.get(residue)
            if arrow is None:
                arrow = engine._extend(Point(orbit, residue), sign)
            arrows.append(arrow)
        return arrows

    def _landing(self, engine: LazySaturation, pt: Point, arrow: Arrow, sign: int) -> Point:
        boff = self._offset_to(engine, pt, arrow, sign)
        moved = engine.t_image(engine._b_step(pt, boff), sign)
        assert moved is not None
        return moved

    def _offset_to(self, engine: LazySaturation, pt: Point, arrow: Arrow, sign: int) -> int:
        lab = engine.labels[pt.orbit]
        if sign == POSITIVE:
            modulus = source_modulus(self.group, lab)
            anchor = arrow.source.offset
        else:
            modulus = target_modulus(self.group, lab)
            anchor = arrow.target.offset
        return (anchor - pt.offset) % modulus

    def _realize(self, idx: int, path, bans: set[tuple[Arrow, int]]) -> bool:
        """Append the searched path, adjusting b-offsets to stay reduced; on
        an unavoidable first-step pinch, ban that transition and report
        failure so the caller can search again."""
        engine, _ = self.seeds[idx]
        for step_no, (arrow, sign) in enumerate(path):
            pt = self.pts[idx]
            boff = self._offset_to(engine, pt, arrow, sign)
            lab = engine.labels[pt.orbit]
            modulus = source_modulus(self.group, lab) if sign == POSITIVE else target_modulus(self.group, lab)
            step = abs(self.group.n) if sign == POSITIVE else abs(self.group.m)
            attempts = 0
            while not self.pinch_free(boff, sign) and attempts * modulus < step:
                boff += modulus
                attempts += 1
            if not self.pinch_free(boff, sign):
                if step_no != 0:
                    raise InternalConsistencyError("pinch after the first escape step")
                bans.add((arrow, sign))
                return False
            self.append(boff, sign)
        return True

    def escape_all(self) -> None:
        for idx in range(len(self.seeds)):
            if self.entered[idx]:
                continue
            self._escape_one(idx)

    # -- the positive ray ----------------------------------------------------

    def ray(self, steps: int) -> None:
        for _ in range(steps):
            boff = 0 if self.pinch_free(0, POSITIVE) else 1
            self.append(boff, POSITIVE)

    def steps_needed_for_labels(self) -> int:
        need = 0
        for i, (engine, _) in enumerate(self.seeds):
            lab = engine.labels[self.pts[i].orbit]
            if lab is INF:
                continue
            q = phenotype_of_label(self.group, lab)
            need = max(need, _ray_steps_needed(self.group, lab, q))
        return need

    # -- certification -------------------------------------------------------

    def certificates(self) -> tuple[SeedCertificate, ...]:
        certs = []
        for i, (engine, _) in enumerate(self.seeds):
            endpoint = self.pts[i]
            arrow, _sign = self.traces[i][-1]
            lab = engine.labels[endpoint.orbit]
            separated = _arrow_separates(engine, arrow, endpoint.orbit)
            if lab is INF:
                profile = True
            else:
                q = phenotype_of_label(self.group, lab)
                profile = _label_profile_ok(self.group, lab, q)
            certs.append(
                SeedCertificate(endpoint, endpoint.orbit, lab, arrow, separated, profile)
            )
        return tuple(certs)


def _ray_steps_needed(group: GroupParams, label: int, q: int) -> int:
    import sympy

    need = 0
    support = set(group.mn_primes()) | set(sympy.factorint(label)) | set(sympy.factorint(q))
    for p in sorted(support):
        vm = group.m_factors.get(p, 0)
        vn = group.n_factors.get(p, 0)
        vl = valuation(p, label)
        vq = valuation(p, q)
        if vm < vn:
            if vl > vm:
                need = max(need, -(-(vl - vm) // (vn - vm)))
            elif vl < vm:
                need = max(need, 1)
        elif vm == vn:
            if vl != max(vq, vm):
                need = max(need, 1)
    return need


def _label_profile_ok(group: GroupParams, label: int, q: int) -> bool:
    import sympy

    support = set(group.mn_primes()) | set(sympy.factorint(label)) | set(sympy.factorint(q))
    for p in support:
        vm = group.m_factors.get(p, 0)
        vn = group.n_factors.get(p, 0)
        vl = valuation(p, label)
        if vm < vn and vl != vm:
            return False
        if vm == vn and vl != max(valuation(p, q), vm):
            return False
    return True


def _arrow_separates(engine: LazySaturation, arrow: Arrow, endpoint_orbit: str) -> bool:
    """Does deleting ``arrow`` disconnect every core orbit from the endpoint
    orbit in the realized Bass-Serre graph?"""
    adjacency: dict[str, set[str]] = {oid: set() for oid in engine.labels}
    for rec in engine.log:
        a = engine._arrow_of(rec)
        if a == arrow:
            continue
        adjacency[a.source.orbit].add(a.target.orbit)
        adjacency[a.target.orbit].add(a.source.orbit)
    for a in engine.core.arrows:
        if a == arrow:
            continue
        adjacency[a.source.orbit].add(a.target.orbit)
        adjacency[a.target.orbit].add(a.source.orbit)
    seen = {oid for oid in engine.labels if engine.depth[oid] == 0}
    stack = list(seen)
    while stack:
        for nxt in adjacency[stack.pop()]:
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    return endpoint_orbit not in seen


def _check_seed_core(pointed: PointedPreAction) -> None:
    require_valid(pointed.pre)
    if not is_connected(pointed.pre):
        raise WeldingError("seed cores must be transitive (connected)")
    if is_saturated(bass_serre_graph(pointed.pre)).saturated:
        raise SaturatedCoreError("core is saturated: nothing to leave through")


def leave_seed(cores: list[PointedPreAction], rule=MAX, extra_ray: int = 0) -> SeedPath:
    """A common word whose evaluation leaves every core through its maximal
    forest saturation, ending on a positive edge that separates the core from
    the endpoint orbit, with the endpoint label profile pinned for finite
    phenotypes.  Any extension by positive steps preserves both properties;
    ``extra_ray`` appends that many extra positive steps."""
    if not cores:
        raise WeldingError("need at least one core")
    if rule is not MAX:
        raise WeldingError("seed-leaving paths are only certified for the maximal rule")
    for pointed in cores:
        _check_seed_core(pointed)
    seeds = [(LazySaturation(pointed, MAX), pointed.pre.normalize(pointed.basepoint))
             for pointed in cores]
    builder = _PathBuilder(seeds)
    builder.escape_all()
    steps = builder.steps_needed_for_labels()
    if builder.last_sign() != POSITIVE and steps == 0:
        steps = 1
    builder.ray(steps + extra_ray)
    certs = builder.certificates()
    for cert in certs:
        if not (cert.separates and cert.label_profile_ok):
            raise InternalConsistencyError(f"seed path certification failed: {cert}")
    nf = britton_reduce(builder.group, builder.current_word())
    stripped = NormalForm(nf.params, nf.syllables, 0)
    if stripped.last_t_sign() != POSITIVE:
        raise InternalConsistencyError("seed path does not end on a positive edge")
    return SeedPath(stripped, certs)


# ---------------------------------------------------------------------------
# witnesses


@dataclass(frozen=True)
class VerificationCheck:
    name: str
    ok: bool
    detail: str = ""


@dataclass(frozen=True)
class VerificationReport:
    checks: tuple[VerificationCheck, ...]

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks)

    def to_json_dict(self) -> dict:
        return {
            "ok": self.ok,
            "checks": [
                {"name": c.name, "ok": c.ok, **({"detail": c.detail} if c.detail else {})}
                for c in self.checks
            ],
        }


@dataclass(frozen=True)
class WeldingWitness:
    """A conjugator together with welded cores certifying one transitivity
    move: saturating each returned core reproduces the input balls and the
    element transports each marked point onto its partner."""

    kind: str  # ht-phen1 | ht-inf | htt-finite | htt-inf
    params: GroupParams
    gamma: NormalForm
    cores: tuple[tuple[PreAction, tuple[Point, ...]], ...]
    radius: int
    g_words: tuple[NormalForm, ...] = ()
    report: VerificationReport | None = None


def _fresh_ids(taken, prefix: str, count: int) -> list[str]:
    while any(oid.startswith(prefix) for oid in taken):
        prefix += "w"
    return [f"{prefix}{i}" for i in range(count)]


def _pullback(core: PreAction, engine: LazySaturation,
              traces: list[list[tuple[Arrow, int]]]) -> PreAction:
    """The sub-pre-action of the realized saturation spanned by the core and
    the traced steps."""
    orbit_ids = list(core.orbit_ids())
    known = set(orbit_ids)
    arrows = list(core.arrows)
    arrow_set = set(arrows)
    for trace in traces:
        for arrow, _sign in trace:
            for oid in (arrow.source.orbit, arrow.target.orbit):
                if oid not in known:
                    known.add(oid)
                    orbit_ids.append(oid)
            if arrow not in arrow_set:
                arrow_set.add(arrow)
                arrows.append(arrow)
    orbits = tuple((oid, engine.labels[oid]) for oid in orbit_ids)
    return PreAction(core.params, orbits, tuple(arrows))


def _extended(pre: PreAction, new_orbits, new_arrows) -> PreAction:
    return PreAction(pre.params, tuple(pre.orbits) + tuple(new_orbits),
                     tuple(pre.arrows) + tuple(new_arrows))


def _degrees(pre: PreAction, orbit: str) -> tuple[int, int]:
    out_deg = sum(1 for a in pre.arrows if a.source.orbit == orbit)
    in_deg = sum(1 for a in pre.arrows if a.target.orbit == orbit)
    return out_deg, in_deg


def _in_residues(pre: PreAction, orbit: str) -> set[int]:
    mod = target_modulus(pre.params, pre.label(orbit))
    return {a.target.offset % mod for a in pre.arrows if a.target.orbit == orbit}


def ht_witness(core: PointedPreAction, gs: list[NormalForm], radius: int,
               tries: int = DEFAULT_TRIES) -> WeldingWitness:
    """High-transitivity witness for one pointed core of phenotype 1 or
    infinity: a welded core extending it plus gamma with
    x.g_i.gamma = x.g_{i+d}, the radius-ball at x unchanged."""
    _check_seed_core(core)
    group = core.pre.params
    q = pre_action_phenotype(core.pre)
    if q is not INF and q != 1:
        raise PhenotypeObstruction(
            f"phenotype {q} admits no highly transitive action; witnesses exist only at 1 and infinity"
        )
    if q is INF and group.abs_m == group.abs_n:
        raise PhenotypeObstruction(
            "infinite phenotype with |m| = |n| admits no primitive transitive action"
        )
    if len(gs) < 2 or len(gs) % 2:
        raise WeldingError("need an even number 2d >= 2 of group elements")
    half = len(gs) // 2
    for g in gs:
        if g.to_word().letters() > radius:
            raise WeldingError(f"element {g} is longer than the radius {radius}")

    engine = LazySaturation(core, MAX)
    base = engine.normalize(core.basepoint)
    marked = []
    for g in gs:
        pt = lazy_apply(engine, base, g.to_word())
        if engine.depth[pt.orbit] != 0:
            raise WeldingError(
                "a marked point leaves the core; the core must contain the radius ball"
            )
        marked.append(pt)
    if len(set(marked)) != len(marked):
        raise DistinctnessError("the marked points x.g_i must be pairwise distinct")

    builder = _PathBuilder([(engine, pt) for pt in marked])
    builder.escape_all()
    steps = max(builder.steps_needed_for_labels(), 1)
    builder.ray(steps)
    # the extra positive ray: longer than the path so far, and past the ball
    builder.ray(builder.t_length() + 1 + radius)

    if q == 1:
        return _ht_finish_phenotype_one(core, gs, radius, engine, builder, half, tries)
    return _ht_finish_infinite(core, gs, radius, engine, builder, half, tries)


def _terminals_clean(xi: PreAction, terminals, incoming: bool) -> bool:
    """Endpoint orbits must be true path-ends in the pulled-back pre-action:
    one edge on the arrival side, none on the other."""
    for pt in terminals:
        out_deg, in_deg = _degrees(xi, pt.orbit)
        want_out, want_in = (0, 1) if incoming else (1, 0)
        if (out_deg, in_deg) != (want_out, want_in):
            return False
    return True


def _ht_finish_phenotype_one(core, gs, radius, engine, builder, half, tries):
    group = engine.params
    for _ in range(tries):
        xi = _pullback(core.pre, engine, builder.traces)
        if _terminals_clean(xi, builder.pts, incoming=True):
            boff = _free_min_offset(group, xi, builder.pts)
            if boff is not None:
                break
        builder.ray(1)
    else:
        raise InternalConsistencyError("could not isolate the path endpoints")

    # downhill along the minimal saturation: labels follow the minimal
    # transfer iteration and reach 1
    min_len = 0
    for pt in builder.pts:
        seq = uturn_sequence(group, xi.label(pt.orbit))
        if seq[-1] != 1:
            raise InternalConsistencyError("minimal iteration does not reach label 1 at phenotype 1")
        min_len = max(min_len, len(seq) - 1)
    min_engine = LazySaturation(xi, rule=MIN, prefix="d")
    min_sylls = [("b", boff), ("t", -min_len)]
    min_traces: list[list[tuple[Arrow, int]]] = []
    finals = []
    for pt in builder.pts:
        trace: list[tuple[Arrow, int]] = []
        end = min_engine.apply_word(pt, word(*min_sylls), trace=trace)
        min_traces.append(trace)
        finals.append(end)
    for end in finals:
        if min_engine.labels[end.orbit] != 1:
            raise InternalConsistencyError("min ray ended on a label != 1")
    if len(set(finals)) != len(finals):
        raise InternalConsistencyError("min ray endpoints collided")

    eta = _pullback(xi, min_engine, min_traces)
    weld_ids = _fresh_ids(eta.orbit_ids(), "w", half)
    new_orbits = [(wid, group.abs_n) for wid in weld_ids]
    new_arrows = []
    for j in range(half):
        new_arrows.append(Arrow(Point(weld_ids[j], 0), finals[j]))
        new_arrows.append(Arrow(Point(weld_ids[j], 1), finals[j + half]))
    welded = require_valid(_extended(eta, new_orbits, new_arrows))

    total = builder.current_word() * word(*min_sylls)
    gamma = britton_reduce(group, total * word(("t", -1), ("b", 1), ("t", 1)) * total.inverse())
    witness = WeldingWitness(
        "ht-phen1", group, gamma,
        ((welded, (engine.normalize(core.basepoint),)),),
        radius, tuple(gs),
    )
    report = verify_witness(witness, (core, list(gs)), radius)
    return WeldingWitness(witness.kind, group, gamma, witness.cores, radius, tuple(gs), report)


def _free_min_offset(group, xi: PreAction, terminals) -> int | None:
    """A b-offset a in 1..|m|-1 so that every endpoint's shifted target coset
    is free of incoming arrows (the first downhill step must create a fresh
    minimal child everywhere)."""
    for boff in range(1, group.abs_m):
        good = True
        for pt in terminals:
            mod = target_modulus(group, xi.label(pt.orbit))
            if (pt.offset + boff) % mod in _in_residues(xi, pt.orbit):
                good = False
                break
        if good:
            return boff
    return None


def _ht_finish_infinite(core, gs, radius, engine, builder, half, tries):
    group = engine.params
    positive_direction = any(
        group.m_factors.get(p, 0) < group.n_factors.get(p, 0)
        for p in group.mn_primes()
    )
    # separate the marked points into distinct orbits along a t-ray
    cap = _separation_cap(group, engine, builder.pts) + tries
    if positive_direction:
        first_steps = [(0, POSITIVE)]
        step = (0, POSITIVE)
    else:
        first_steps = [(1, NEGATIVE)]
        step = (0, NEGATIVE)
    for boff, sign in first_steps:
        builder.append(boff if builder.pinch_free(boff, sign) else boff + 1, sign)
    spent = 1
    while len({pt.orbit for pt in builder.pts}) != len(builder.pts):
        if spent > cap:
            raise InternalConsistencyError("t-ray failed to separate the marked points")
        builder.append(step[0], step[1])
        spent += 1

    for _ in range(tries):
        xi = _pullback(core.pre, engine, builder.traces)
        if _terminals_clean(xi, builder.pts, incoming=positive_direction):
            break
        builder.append(step[0], step[1])
        # after extending, distinctness persists (forest moves only deeper)
    else:
        raise InternalConsistencyError("could not isolate the separated endpoints")

    weld_ids = _fresh_ids(xi.orbit_ids(), "w", half)
    new_orbits = [(wid, INF) for wid in weld_ids]
    new_arrows = []
    ends = builder.pts
    for j in range(half):
        if positive_direction:
            new_arrows.append(Arrow(Point(weld_ids[j], 0),
                                    Point(ends[j].orbit, ends[j].offset + 1)))
            new_arrows.append(Arrow(Point(weld_ids[j], 1),
                                    Point(ends[j + half].orbit, ends[j + half].offset + 1)))
        else:
            new_arrows.append(Arrow(Point(ends[j].orbit, ends[j].offset + 1),
                                    Point(weld_ids[j], 0)))
            new_arrows.append(Arrow(Point(ends[j + half].orbit, ends[j + half].offset + 1),
                                    Point(weld_ids[j], 1)))
    welded = require_valid(_extended(xi, new_orbits, new_arrows))

    total = builder.current_word()
    if positive_direction:
        conj = total * word(("b", 1), ("t", -1))
    else:
        conj = total * word(("b", 1), ("t", 1))
    gamma = britton_reduce(group, conj * word(("b", 1)) * conj.inverse())
    witness = WeldingWitness(
        "ht-inf", group, gamma,
        ((welded, (engine.normalize(core.basepoint),)),),
        radius, tuple(gs),
    )
    report = verify_witness(witness, (core, list(gs)), radius)
    return WeldingWitness(witness.kind, group, gamma, witness.cores, radius, tuple(gs), report)


def _separation_cap(group, engine, pts) -> int:
    """Effective bound for the orbit-separation ray: past the largest p-adic
    valuation of any pairwise b-offset, same-orbit collisions must break."""
    worst = 1
    primes = [p for p in group.mn_primes()
              if group.m_factors.get(p, 0) != group.n_factors.get(p, 0)]
    for i, a in enumerate(pts):
        for b in pts[i + 1:]:
            if a.orbit == b.orbit and a.offset != b.offset:
                delta = abs(a.offset - b.offset)
                for p in primes:
                    worst = max(worst, valuation(p, delta) + 1)
    return worst


def htt_witness(cores: list[PointedPreAction], radius: int,
                tries: int = DEFAULT_TRIES) -> WeldingWitness:
    """High-topological-transitivity witness: welds core_i with core_{i+d}
    into one transitive core whose saturation keeps both radius-balls, with a
    single gamma moving every basepoint x_i onto x_{i+d}."""
    if len(cores) < 2 or len(cores) % 2:
        raise WeldingError("need an even number 2d >= 2 of pointed cores")
    half = len(cores) // 2
    group = cores[0].pre.params
    for pointed in cores:
        if pointed.pre.params != group:
            raise WeldingError("cores must share group parameters")
        _check_seed_core(pointed)
    phenotypes = [pre_action_phenotype(p.pre) for p in cores]
    if len({repr(q) for q in phenotypes}) != 1:
        raise MixedPhenotypeError(f"phenotypes differ: {phenotypes}")
    q = phenotypes[0]

    engines = [LazySaturation(p, MAX) for p in cores]
    builder = _PathBuilder([
        (engine, pointed.pre.normalize(pointed.basepoint))
        for engine, pointed in zip(engines, cores)
    ])
    builder.escape_all()
    steps = max(builder.steps_needed_for_labels(), 1)
    builder.ray(steps + radius + 1)

    for _ in range(tries):
        xis = [
            _pullback(pointed.pre, engine, [trace])
            for pointed, engine, trace in zip(cores, engines, builder.traces)
        ]
        if all(
            _terminals_clean(xi, [pt], incoming=True)
            for xi, pt in zip(xis, builder.pts)
        ):
            break
        builder.ray(1)
    else:
        raise InternalConsistencyError("could not isolate the path endpoints")

    if q is INF:
        return _htt_finish_infinite(cores, radius, builder, xis, half)
    return _htt_finish_finite(cores, radius, builder, xis, half, q)


def _renamed_basepoint(pointed: PointedPreAction, renaming: dict[str, str]) -> Point:
    base = pointed.pre.normalize(pointed.basepoint)
    return Point(renaming[base.orbit], base.offset)


def _htt_finish_infinite(cores, radius, builder, xis, half):
    group = builder.group
    welded_cores = []
    for j in range(half):
        ends = (builder.pts[j], builder.pts[j + half])
        merged, ren1, ren2 = disjoint_union_with_maps(xis[j], xis[j + half])
        src = Point(ren1[ends[0].orbit], ends[0].offset)
        dst = Point(ren2[ends[1].orbit], ends[1].offset + 1)
        welded = require_valid(_extended(merged, (), (Arrow(src, dst),)))
        bp1 = _renamed_basepoint(cores[j], ren1)
        bp2 = _renamed_basepoint(cores[j + half], ren2)
        welded_cores.append((welded, (bp1, bp2)))
    total = builder.current_word()
    gamma = britton_reduce(group, total * word(("t", 1), ("b", -1)) * total.inverse())
    witness = WeldingWitness("htt-inf", group, gamma, tuple(welded_cores), radius)
    report = verify_witness(witness, list(cores), radius)
    return WeldingWitness(witness.kind, group, gamma, witness.cores, radius, (), report)


def _htt_finish_finite(cores, radius, builder, xis, half, q):
    group = builder.group
    sequences = []
    for xi, pt in zip(xis, builder.pts):
        seq = uturn_sequence(group, xi.label(pt.orbit))
        if seq[-1] != q:
            raise InternalConsistencyError(
                f"u-turn from label {xi.label(pt.orbit)} stabilized at {seq[-1]}, expected {q}"
            )
        sequences.append(seq)
    rank = max(len(seq) - 1 for seq in sequences)

    extended = []
    turn_tails = []  # per core: the point the u-turn descends to
    for xi, pt, seq in zip(xis, builder.pts, sequences):
        labels = [seq[j] if j < len(seq) else q for j in range(rank + 1)]
        uturn_ids = _fresh_ids(xi.orbit_ids(), "u", rank)
        new_orbits = [(uturn_ids[j - 1], labels[j]) for j in range(1, rank + 1)]
        new_arrows = []
        prev_target = xi.normalize(Point(pt.orbit, pt.offset + 1))
        for j in range(1, rank + 1):
            new_arrows.append(Arrow(Point(uturn_ids[j - 1], 0), prev_target))
            prev_target = Point(uturn_ids[j - 1], 0)
        extended.append(require_valid(_extended(xi, new_orbits, new_arrows)))
        turn_tails.append(prev_target)

    welded_cores = []
    for j in range(half):
        merged, ren1, ren2 = disjoint_union_with_maps(extended[j], extended[j + half])
        lcm_len = abs(group.n) * q // math.gcd(abs(group.n), q)
        wid = _fresh_ids(merged.orbit_ids(), "w", 1)[0]
        tail1 = Point(ren1[turn_tails[j].orbit], turn_tails[j].offset)
        tail2 = Point(ren2[turn_tails[j + half].orbit], turn_tails[j + half].offset)
        new_arrows = (Arrow(Point(wid, 0), tail1), Arrow(Point(wid, 1), tail2))
        welded = require_valid(_extended(merged, ((wid, lcm_len),), new_arrows))
        bp1 = _renamed_basepoint(cores[j], ren1)
        bp2 = _renamed_basepoint(cores[j + half], ren2)
        welded_cores.append((welded, (bp1, bp2)))

    total = builder.current_word() * word(("b", 1), ("t", -(rank + 1)))
    gamma = britton_reduce(group, total * word(("b", 1)) * total.inverse())
    witness = WeldingWitness("htt-finite", group, gamma, tuple(welded_cores), radius)
    report = verify_witness(witness, list(cores), radius)
    return WeldingWitness(witness.kind, group, gamma, witness.cores, radius, (), report)


# ---------------------------------------------------------------------------
# verification


def verify_witness(witness: WeldingWitness, inputs, radius: int | None = None) -> VerificationReport:
    """Re-check every claim of a witness from scratch: validity of the welded
    cores, radius-ball preservation against fresh maximal saturations of the
    inputs, and the transport conditions, all by honest evaluation."""
    radius = witness.radius if radius is None else radius
    checks: list[VerificationCheck] = []
    if witness.kind.startswith("ht-"):
        core, gs = inputs
        welded, basepoints = witness.cores[0]
        base = basepoints[0]
        diag = validate(welded)
        checks.append(VerificationCheck("welded core validates", diag.ok, "; ".join(diag.violations)))
        if diag.ok:
            ref = LazySaturation(core, MAX)
            wit_engine = LazySaturation(PointedPreAction(welded, base), MAX)
            ball_ref = ref.ball(core.pre.normalize(core.basepoint), radius)
            ball_wit = wit_engine.ball(base, radius)
            checks.append(VerificationCheck("radius ball preserved", ball_ref == ball_wit))
            half = len(gs) // 2
            for i in range(half):
                lhs = lazy_apply(wit_engine, base, gs[i].to_word() * witness.gamma.to_word())
                rhs = lazy_apply(wit_engine, base, gs[i + half].to_word())
                checks.append(
                    VerificationCheck(
                        f"transport g_{i + 1} -> g_{i + 1 + half}", lhs == rhs,
                        f"{lhs} vs {rhs}",
                    )
                )
    else:
        cores = inputs
        half = len(cores) // 2
        for j in range(half):
            welded, (bp1, bp2) = witness.cores[j]
            diag = validate(welded)
            checks.append(VerificationCheck(f"welded core {j + 1} validates", diag.ok, "; ".join(diag.violations)))
            if not diag.ok:
                continue
            wit_engine = LazySaturation(PointedPreAction(welded, bp1), MAX)
            for tag, pointed, bp in (("first", cores[j], bp1), ("second", cores[j + half], bp2)):
                ref = LazySaturation(pointed, MAX)
                ball_ref = ref.ball(pointed.pre.normalize(pointed.basepoint), radius)
                ball_wit = wit_engine.ball(bp, radius)
                checks.append(
                    VerificationCheck(f"core {j + 1}: {tag} ball preserved", ball_ref == ball_wit)
                )
            moved = lazy_apply(wit_engine, bp1, witness.gamma.to_word())
            checks.append(
                VerificationCheck(
                    f"core {j + 1}: gamma moves basepoint onto partner", moved == bp2,
                    f"{moved} vs {bp2}",
                )
            )
    return VerificationReport(tuple(checks))


# ---------------------------------------------------------------------------
# JSON


def witness_to_json_dict(witness: WeldingWitness) -> dict:
    from .preaction import to_json_dict
    from .words import format_word

    return {
        "kind": witness.kind,
        "m": witness.params.m,
        "n": witness.params.n,
        "gamma": format_word(witness.gamma.to_word()),
        "R": witness.radius,
        "g": [format_word(g.to_word()) for g in witness.g_words],
        "cores": [
            to_json_dict(pre, basepoints=points) for pre, points in witness.cores
        ],
        "report": witness.report.to_json_dict() if witness.report else None,
    }
