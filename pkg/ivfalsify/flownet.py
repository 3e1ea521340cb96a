"""
Circulation / max-flow / min-cut view of the binary-instrument problem

Supplies sit at the z0 treatment nodes, demands at the z1 treatment nodes, and
every allowed instrument-response type (a, b) is an edge x_a@0 -> x_b@1. The
observed law is consistent with the restriction iff the max flow equals 1.
"""

import logging
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Dict, FrozenSet, List, Optional, Tuple

from ivfalsify.obs_model import ObservedDistribution
from ivfalsify.psi import PsiTable
from ivfalsify.typespace import RestrictionSpec, TypeDistribution, TypeSpace, enumerate_types
from ivfalsify.utils.errors import ValidationError
from ivfalsify.utils.rational import format_fraction

logger = logging.getLogger(__name__)

SOURCE = 'SRC'
SINK = 'SNK'


def node_name(l: int, side: int) -> str:
    return f"x{l}@{side}"


@dataclass(frozen=True)
class FlowEdge:
    tail: str
    head: str
    capacity: Fraction
    kind: str
    type_vector: Optional[Tuple[int, int]] = None


@dataclass
class FlowNetwork:
    L: int
    treatments: Tuple[str, ...]
    instruments: Tuple[str, ...]
    nodes: List[str]
    edges: List[FlowEdge]
    demands: Dict[str, Fraction]
    exclusion_caps: bool = False

    def cross_edges(self) -> List[FlowEdge]:
        return [e for e in self.edges if e.type_vector is not None]

    def type_space(self) -> TypeSpace:
        return enumerate_types(self.L, 2, treatments=self.treatments, instruments=self.instruments)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'nodes': list(self.nodes),
            'edges': [{'from': e.tail, 'to': e.head, 'capacity': e.capacity, 'kind': e.kind} for e in self.edges],
            'demands': dict(self.demands),
            'exclusion_caps': self.exclusion_caps,
        }


@dataclass(frozen=True)
class FlowResult:
    value: Fraction
    flow: Tuple[Fraction, ...]

    def on(self, net: FlowNetwork, tail: str, head: str) -> Fraction:
        return sum((f for e, f in zip(net.edges, self.flow) if e.tail == tail and e.head == head), Fraction(0))


@dataclass(frozen=True)
class Cut:
    source_side: FrozenSet[str]
    sink_side: FrozenSet[str]
    cut_set: Tuple[Tuple[str, str], ...]
    capacity: Fraction
    labels: Dict[str, str] = field(default_factory=dict, compare=False)

    def to_dict(self) -> Dict[str, Any]:
        name = lambda node: self.labels.get(node, node)
        return {
            'source_side': sorted(name(n) for n in self.source_side),
            'sink_side': sorted(name(n) for n in self.sink_side),
            'cut_set': [[name(a), name(b)] for a, b in self.cut_set],
            'capacity': self.capacity,
        }


def build_network(d: ObservedDistribution, spec: RestrictionSpec, psi: Optional[PsiTable] = None,
                  use_exclusion_caps: bool = False) -> FlowNetwork:
    """
    Build the supply/demand network for a binary instrument

    Args:
        d: Observed distribution with K = 2
        spec: Restriction; only ruled-out types are representable
        psi: Overlap table, required when exclusion caps are on
        use_exclusion_caps: Cap diagonal edges (always-takers) by Psi

    Returns:
        FlowNetwork with source edges carrying P[X|z0] and sink edges P[X|z1]
    """
    s = d.support
    if s.K != 2:
        raise ValidationError("Flow networks need a binary instrument")
    if spec.extra_rows:
        raise ValidationError(
            "Frequency rows cannot be written as edge capacities; use the feasibility check instead")
    if use_exclusion_caps and psi is None:
        raise ValidationError("Exclusion caps need a Psi table")

    L = s.L
    nodes = [SOURCE] + [node_name(l, 0) for l in range(L)] + [node_name(l, 1) for l in range(L)] + [SINK]
    edges = [FlowEdge(SOURCE, node_name(l, 0), d.cond_treatment[0][l], 'source') for l in range(L)]
    for a in range(L):
        for b in range(L):
            if (a, b) in spec.ruled_out:
                continue
            if a == b:
                capacity = psi.mass(s.treatments[a], s.instruments) if use_exclusion_caps else Fraction(1)
                kind = 'diagonal'
            else:
                capacity, kind = Fraction(1), 'cross'
            edges.append(FlowEdge(node_name(a, 0), node_name(b, 1), capacity, kind, (a, b)))
    edges += [FlowEdge(node_name(l, 1), SINK, d.cond_treatment[1][l], 'sink') for l in range(L)]

    demands = {node_name(l, 0): -d.cond_treatment[0][l] for l in range(L)}
    demands.update({node_name(l, 1): d.cond_treatment[1][l] for l in range(L)})

    logger.debug(f"Built network with {len(edges)} edges (exclusion caps {'on' if use_exclusion_caps else 'off'})")
    return FlowNetwork(L=L, treatments=s.treatments, instruments=s.instruments, nodes=nodes,
                       edges=edges, demands=demands, exclusion_caps=use_exclusion_caps)


def _residual_arcs(net: FlowNetwork) -> Dict[str, List[Tuple[int, int]]]:
    """node -> [(edge index, +1 forward / -1 backward)] in edge order"""
    arcs = {node: [] for node in net.nodes}
    for i, e in enumerate(net.edges):
        arcs[e.tail].append((i, 1))
        arcs[e.head].append((i, -1))
    return arcs


def _residual(net: FlowNetwork, flow: List[Fraction], i: int, direction: int) -> Fraction:
    return net.edges[i].capacity - flow[i] if direction > 0 else flow[i]


def _reachable(net: FlowNetwork, flow: List[Fraction], arcs) -> Dict[str, Optional[Tuple[int, int]]]:
    parent = {SOURCE: None}
    queue = deque([SOURCE])
    while queue:
        u = queue.popleft()
        for i, direction in arcs[u]:
            v = net.edges[i].head if direction > 0 else net.edges[i].tail
            if v not in parent and _residual(net, flow, i, direction) > 0:
                parent[v] = (i, direction)
                queue.append(v)
    return parent


def max_flow(net: FlowNetwork) -> FlowResult:
    """
    Edmonds-Karp: augment along shortest residual paths until none remain

    Returns:
        FlowResult with the flow value and per-edge flows in edge order
    """
    arcs = _residual_arcs(net)
    flow = [Fraction(0)] * len(net.edges)
    value = Fraction(0)

    while True:
        parent = _reachable(net, flow, arcs)
        if SINK not in parent:
            break
        path = []
        node = SINK
        while parent[node] is not None:
            i, direction = parent[node]
            path.append((i, direction))
            node = net.edges[i].tail if direction > 0 else net.edges[i].head
        bottleneck = min(_residual(net, flow, i, direction) for i, direction in path)
        for i, direction in path:
            flow[i] += bottleneck * direction
        value += bottleneck

    logger.debug(f"Max flow value {format_fraction(value)}")
    return FlowResult(value=value, flow=tuple(flow))


def min_cut(net: FlowNetwork, result: Optional[FlowResult] = None) -> Cut:
    """Minimum source-sink cut from residual reachability after a max flow"""
    result = result or max_flow(net)
    parent = _reachable(net, list(result.flow), _residual_arcs(net))
    source_side = frozenset(parent)
    sink_side = frozenset(n for n in net.nodes if n not in source_side)

    cut_edges = [e for e in net.edges if e.tail in source_side and e.head in sink_side]
    labels = {node_name(l, side): f"{net.treatments[l]}@{net.instruments[side]}"
              for l in range(net.L) for side in (0, 1)}
    return Cut(
        source_side=source_side,
        sink_side=sink_side,
        cut_set=tuple((e.tail, e.head) for e in cut_edges),
        capacity=sum((e.capacity for e in cut_edges), Fraction(0)),
        labels=labels,
    )


def flow_to_distribution(net: FlowNetwork, result: FlowResult) -> TypeDistribution:
    """Read p(a, b) off the cross edge x_a@0 -> x_b@1; needs a unit flow"""
    if result.value != 1:
        raise ValidationError(f"Flow value {format_fraction(result.value)} is below 1; no type distribution")
    ts = net.type_space()
    weights = {}
    for e, f in zip(net.edges, result.flow):
        if e.type_vector is not None and f:
            weights[e.type_vector] = f
    return TypeDistribution.from_weights(ts, weights)


def dump_network(net: FlowNetwork) -> str:
    """One edge per line: "from to capacity" with p/q capacities"""
    return "".join(f"{e.tail} {e.head} {format_fraction(e.capacity)}\n" for e in net.edges)
