"""Bass-Serre graphs: the labeled oriented quotient of a pre-action.

Vertices are b-orbits carrying their cardinality as label; each arrow of the
pre-action becomes one positive edge whose label is the size of the source
coset (equal to the target-side count by validity).  Negative edges are the
formal opposites of positive ones and stay implicit: degree counting reads
them off the stored endpoints, a loop counting once as outgoing and once as
ingoing.
"""

from __future__ import annotations

from dataclasses import dataclass

from .phenotype import INF, Label, Phenotype, coset_count, coset_size, phenotype_of_label, transfer_ok
from .preaction import InvalidPreAction, PreAction, is_connected, require_valid


class PhenotypeInconsistency(AssertionError):
    """Vertices of one connected graph disagree on phenotype: internal bug."""

    def __init__(self, pairs):
        super().__init__(f"phenotype mismatch on vertex pairs {pairs}")
        self.pairs = pairs


@dataclass(frozen=True)
class BassSerreEdge:
    source: str
    target: str
    label: Label


@dataclass(frozen=True)
class BassSerreGraph:
    params: object
    vertices: tuple[tuple[str, Label], ...]
    edges: tuple[BassSerreEdge, ...]

    def label(self, vertex: str) -> Label:
        for vid, lab in self.vertices:
            if vid == vertex:
                return lab
        raise KeyError(vertex)

    def degrees(self, vertex: str) -> tuple[int, int]:
        out_deg = sum(1 for e in self.edges if e.source == vertex)
        in_deg = sum(1 for e in self.edges if e.target == vertex)
        return out_deg, in_deg


def bass_serre_graph(pre: PreAction) -> BassSerreGraph:
    require_valid(pre)
    edges = []
    for arrow in pre.arrows:
        src_label = pre.label(arrow.source.orbit)
        edges.append(
            BassSerreEdge(arrow.source.orbit, arrow.target.orbit, coset_size(src_label, pre.params.n))
        )
    return BassSerreGraph(pre.params, tuple(pre.orbits), tuple(edges))


@dataclass
class SaturationReport:
    saturated: bool
    deficits: list[tuple[str, int, int]]  # (vertex, missing out, missing in)


def is_saturated(graph: BassSerreGraph) -> SaturationReport:
    """Degree equalities deg_out = gcd(L, n), deg_in = gcd(L, m) vertex-wise."""
    deficits = []
    for vid, label in graph.vertices:
        out_deg, in_deg = graph.degrees(vid)
        want_out = coset_count(label, graph.params.n)
        want_in = coset_count(label, graph.params.m)
        if out_deg > want_out or in_deg > want_in:
            raise InvalidPreAction(f"degree bound violated at vertex {vid!r}")
        if out_deg != want_out or in_deg != want_in:
            deficits.append((vid, want_out - out_deg, want_in - in_deg))
    return SaturationReport(not deficits, deficits)


def pre_action_is_saturated(pre: PreAction) -> bool:
    return is_saturated(bass_serre_graph(pre)).saturated


def connected_phenotype(graph: BassSerreGraph) -> Phenotype:
    """Common phenotype of all vertex labels of a connected graph.

    Edge validity forces equality, so a mismatch is reported as an internal
    inconsistency rather than a domain error.
    """
    adjacency = {vid: set() for vid, _ in graph.vertices}
    for e in graph.edges:
        adjacency[e.source].add(e.target)
        adjacency[e.target].add(e.source)
    ids = list(adjacency)
    if not ids:
        raise ValueError("empty graph has no phenotype")
    seen = {ids[0]}
    stack = [ids[0]]
    while stack:
        for nxt in adjacency[stack.pop()]:
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    if len(seen) != len(ids):
        raise ValueError("connected_phenotype needs a connected graph")
    values = {vid: phenotype_of_label(graph.params, label) for vid, label in graph.vertices}
    distinct = set(values.values())
    if len(distinct) > 1:
        pairs = [
            (a, b)
            for a in ids
            for b in ids
            if a < b and values[a] != values[b]
        ]
        raise PhenotypeInconsistency(pairs[:10])
    return next(iter(distinct))


def pre_action_phenotype(pre: PreAction) -> Phenotype:
    if not is_connected(pre):
        raise ValueError("phenotype of a pre-action needs a connected one")
    return connected_phenotype(bass_serre_graph(pre))


def export_dot(graph: BassSerreGraph) -> str:
    """DOT digraph with vertex labels L(v) and positive-edge labels L(e),
    in sorted-id order for stable output."""

    def fmt(label: Label) -> str:
        return "inf" if label is INF else str(label)

    lines = ["digraph bass_serre {"]
    for vid, label in sorted(graph.vertices):
        lines.append(f'  "{vid}" [label="{vid}:{fmt(label)}"];')
    for e in sorted(graph.edges, key=lambda e: (e.source, e.target, repr(e.label))):
        lines.append(f'  "{e.source}" -> "{e.target}" [label="{fmt(e.label)}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def check_graph_invariants(pre: PreAction) -> None:
    """Exact invariants of any validated pre-action's graph: degree bounds and
    per-edge transfer; raises on violation."""
    graph = bass_serre_graph(pre)
    is_saturated(graph)  # raises if a degree bound is exceeded
    for e in graph.edges:
        ok, value = transfer_ok(graph.params, graph.label(e.source), graph.label(e.target))
        if not ok or value != e.label:
            raise InvalidPreAction(f"edge {e} fails the transfer equation")
