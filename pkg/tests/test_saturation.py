import random

import pytest

from bsact.bass_serre import bass_serre_graph, is_saturated, pre_action_is_saturated
from bsact.phenotype import INF, MAX, MIN, NEGATIVE, POSITIVE
from bsact.preaction import (
    Arrow,
    Point,
    PointedPreAction,
    apply_t,
    pointed_isomorphic,
    preaction,
    validate,
)
from bsact.saturation import (
    AlreadySaturated,
    FuelExhausted,
    LazySaturation,
    added_generator,
    lazy_apply,
    one_orbit_extension,
    pi1_generators,
    saturate_to_depth,
    stabilizer_contains,
)
from bsact.words import britton_reduce, params, parse_word, word

from test_preaction import _random_valid, five_orbit

BS23 = params(2, 3)


def dot_core():
    return preaction(BS23, {"c": 1})


def pointed_dot():
    return PointedPreAction(dot_core(), Point("c", 0))


def test_one_orbit_extension_examples():
    pre = dot_core()
    bigger, rec = one_orbit_extension(pre, Point("c", 0), POSITIVE, MAX)
    assert rec.label == 2
    assert bigger.arrows[-1] == Arrow(Point("c", 0), Point(rec.orbit_id, 0))
    assert validate(bigger).ok

    bigger, rec = one_orbit_extension(pre, Point("c", 0), NEGATIVE, MAX)
    assert rec.label == 3
    assert bigger.arrows[-1] == Arrow(Point(rec.orbit_id, 0), Point("c", 0))

    bigger, rec = one_orbit_extension(pre, Point("c", 0), POSITIVE, MIN)
    assert rec.label == 1

    with pytest.raises(AlreadySaturated):
        one_orbit_extension(five_orbit(), Point("O", 2), POSITIVE, MAX)


def test_one_orbit_extension_adds_leaf():
    pre = dot_core()
    bigger, rec = one_orbit_extension(pre, Point("c", 0), POSITIVE, MAX)
    graph = bass_serre_graph(bigger)
    assert graph.degrees(rec.orbit_id) == (0, 1)


def test_saturate_depth_zero_noop():
    sat = five_orbit()
    out, log = saturate_to_depth(PointedPreAction(sat, Point("O", 0)), MAX, 0)
    assert out == sat and log == []
    out, log = saturate_to_depth(pointed_dot(), MAX, 0)
    assert out == dot_core() and log == []


def test_saturate_depth_one_example():
    out, log = saturate_to_depth(pointed_dot(), MAX, 1)
    assert sorted(rec.label for rec in log) == [2, 3]
    report = is_saturated(bass_serre_graph(out))
    assert not report.saturated  # the two children have deficits
    deficient = {v for v, _, _ in report.deficits}
    assert deficient == {rec.orbit_id for rec in log}


def test_saturation_realizes_depth_levels():
    prev_sizes = []
    for depth in range(5):
        out, _ = saturate_to_depth(pointed_dot(), MAX, depth)
        prev_sizes.append(len(out.orbits))
    assert prev_sizes == sorted(prev_sizes)
    assert all(a < b for a, b in zip(prev_sizes, prev_sizes[1:]))


def _random_nonsaturated_core(rng, group, max_orbits=3, max_label=12):
    while True:
        pre = _random_valid(rng, group)
        from bsact.preaction import is_connected

        if not is_connected(pre):
            continue
        if pre_action_is_saturated(pre):
            continue
        return PointedPreAction(pre, Point(pre.orbit_ids()[0], 0))


@pytest.mark.parametrize("m,n", [(2, 3), (2, 2), (2, -2)])
def test_ruled_saturation_seed_independent(m, n):
    group = params(m, n)
    rng = random.Random(100 * m + n)
    for _ in range(8):
        core = _random_nonsaturated_core(rng, group)
        for rule in (MAX, MIN):
            a, _ = saturate_to_depth(core, rule, 3, order_seed=1)
            b, _ = saturate_to_depth(core, rule, 3, order_seed=2)
            ok, _mapping = pointed_isomorphic(
                PointedPreAction(a, core.basepoint), PointedPreAction(b, core.basepoint)
            )
            assert ok


def test_forest_property():
    # non-core orbits form a forest, each component hanging on one arrow
    core = pointed_dot()
    out, log = saturate_to_depth(core, MAX, 3)
    core_ids = {"c"}
    added = [oid for oid, _ in out.orbits if oid not in core_ids]
    parent_arrows = {}
    for arrow in out.arrows:
        src_new = arrow.source.orbit not in core_ids
        dst_new = arrow.target.orbit not in core_ids
        assert src_new or dst_new
        child = arrow.target.orbit if dst_new else arrow.source.orbit
        # every added orbit is the far end of exactly one arrow nearer the core
        if dst_new and arrow.source.orbit in core_ids or src_new and arrow.target.orbit in core_ids:
            parent_arrows.setdefault(child, 0)
    for rec in log:
        assert rec.witness.orbit in core_ids or rec.witness.orbit in added


def test_max_rule_child_degrees():
    # positive child reaches in-degree |m| after local saturation, negative
    # child reaches out-degree |n|
    out, log = saturate_to_depth(pointed_dot(), MAX, 2)
    graph = bass_serre_graph(out)
    level1 = [rec for rec in log if rec.witness.orbit == "c"]
    for rec in level1:
        out_deg, in_deg = graph.degrees(rec.orbit_id)
        if rec.sign == POSITIVE:
            assert in_deg == BS23.abs_m
        else:
            assert out_deg == BS23.abs_n


def test_lazy_apply_agrees_with_core_and_grows():
    sat = LazySaturation(PointedPreAction(five_orbit(), Point("O", 0)), MAX)
    x = Point("O", 0)
    from bsact.preaction import evaluate

    w = parse_word("t*b^2*T")
    assert lazy_apply(sat, x, w) == evaluate(five_orbit(), x, w)
    assert sat.log == []  # everything inside the core

    sat2 = LazySaturation(pointed_dot(), MAX)
    end1 = lazy_apply(sat2, Point("c", 0), parse_word("t*b^2*T"))
    end2 = lazy_apply(sat2, Point("c", 0), parse_word("b^3"))
    assert end1 == end2
    assert len(sat2.log) >= 1


def test_lazy_apply_roundtrip_inverse():
    rng = random.Random(41)
    sat = LazySaturation(pointed_dot(), MAX)
    for _ in range(50):
        sylls = [(rng.choice("bt"), rng.choice([-2, -1, 1, 2])) for _ in range(rng.randint(1, 6))]
        w = word(*sylls)
        start = Point("c", 0)
        there = lazy_apply(sat, start, w)
        back = lazy_apply(sat, there, w.inverse())
        assert back == start


def test_relation_holds_in_saturation():
    for m, n in [(2, 3), (2, 4), (3, 3), (2, -2)]:
        group = params(m, n)
        sat = LazySaturation(PointedPreAction(preaction(group, {"c": 1}), Point("c", 0)), MAX)
        x = Point("c", 0)
        rel = word(("t", 1), ("b", m), ("t", -1), ("b", -n))
        assert lazy_apply(sat, x, rel) == x


def test_stabilizer_contains_examples():
    sat = LazySaturation(PointedPreAction(five_orbit(), Point("O", 0)), MAX)
    assert stabilizer_contains(sat, parse_word("b^5"))
    assert stabilizer_contains(sat, parse_word("t*b^2*T*b^-3"))
    sat2 = LazySaturation(pointed_dot(), MAX)
    assert not stabilizer_contains(sat2, parse_word("t"))
    assert stabilizer_contains(sat2, parse_word("b"))


def test_fuel_exhaustion():
    sat = LazySaturation(pointed_dot(), MAX, fuel=3)
    with pytest.raises(FuelExhausted):
        lazy_apply(sat, Point("c", 0), parse_word("t^50"))


def test_pi1_generators_five_orbit():
    gens = pi1_generators(PointedPreAction(five_orbit(), Point("O", 0)))
    assert len(gens) == 6  # 10 edges - 4 tree edges
    from bsact.preaction import evaluate

    for nf in gens:
        assert evaluate(five_orbit(), Point("O", 0), nf.to_word()) == Point("O", 0)


def test_pi1_generators_single_point():
    gens = pi1_generators(pointed_dot())
    assert [str(g) for g in gens] == ["b"]


def test_pi1_generators_ignore_other_components():
    from bsact.preaction import disjoint_union

    joined = disjoint_union(five_orbit(), five_orbit())
    gens = pi1_generators(PointedPreAction(joined, Point("u0:O", 0)))
    assert len(gens) == 6


def test_pi1_rejects_infinite():
    inf = preaction(BS23, {"Z": INF})
    with pytest.raises(ValueError):
        pi1_generators(PointedPreAction(inf, Point("Z", 0)))


def test_added_generator_examples():
    _, rec = one_orbit_extension(dot_core(), Point("c", 0), POSITIVE, MAX)
    nf = added_generator(BS23, rec, word())
    assert nf == britton_reduce(BS23, parse_word("b^3"))

    five = preaction(BS23, {"O": 5})
    _, rec5 = one_orbit_extension(five, Point("O", 0), POSITIVE, MAX)
    assert rec5.label == 10
    nf5 = added_generator(BS23, rec5, word())
    assert nf5 == britton_reduce(BS23, parse_word("b^15"))


def test_added_generator_min_rule_grows_stabilizer():
    pre = dot_core()
    _, rec = one_orbit_extension(pre, Point("c", 0), NEGATIVE, MIN)
    assert rec.label == 1  # strictly below the max-rule value 3
    nf = added_generator(BS23, rec, word())
    sat = LazySaturation(pointed_dot(), MAX)
    assert not stabilizer_contains(sat, nf.to_word())


def test_added_generator_rejects_infinite():
    inf = preaction(BS23, {"Z": INF})
    _, rec = one_orbit_extension(inf, Point("Z", 0), POSITIVE, MAX)
    assert rec.label is INF
    with pytest.raises(ValueError):
        added_generator(BS23, rec, word())


def test_max_added_generators_already_stabilize():
    # under the max rule the new generator is a power of b^{L_x}, hence
    # already in the stabilizer of the unextended core
    for lab in (1, 2, 5, 6):
        core = preaction(BS23, {"c": lab})
        _, rec = one_orbit_extension(core, Point("c", 0), POSITIVE, MAX)
        nf = added_generator(BS23, rec, word())
        sat = LazySaturation(PointedPreAction(core, Point("c", 0)), MAX)
        assert stabilizer_contains(sat, nf.to_word())


def test_prop_word_identity():
    import math

    for m, n in [(2, 3), (2, 4), (2, 2), (3, 3), (6, 4), (2, -2)]:
        group = params(m, n)
        for lab in range(1, 120):
            e = abs(m) * lab // math.gcd(lab, n)
            got = britton_reduce(group, word(("t", 1), ("b", e), ("t", -1)))
            want = britton_reduce(group, word(("b", n * (lab // math.gcd(lab, n)))))
            assert got == want, (m, n, lab)


def test_stabilizer_verdict_stable_under_pregrowth():
    rng = random.Random(59)
    core = pointed_dot()
    for _ in range(40):
        sylls = [(rng.choice("bt"), rng.choice([-2, -1, 1, 2])) for _ in range(rng.randint(1, 6))]
        w = word(*sylls)
        fresh = LazySaturation(core, MAX)
        verdict = stabilizer_contains(fresh, w)
        warmed = LazySaturation(core, MAX)
        for _ in range(5):  # grow some unrelated region first
            warm = [(rng.choice("bt"), rng.choice([-1, 1])) for _ in range(4)]
            lazy_apply(warmed, Point("c", 0), word(*warm))
        assert stabilizer_contains(warmed, w) == verdict
