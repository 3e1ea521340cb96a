"""
Tests for the supply/demand network, Edmonds-Karp and the min cut
"""

from fractions import Fraction as F

import pytest

from ivfalsify.feasibility import build_system
from ivfalsify.flownet import SINK, SOURCE, build_network, dump_network, flow_to_distribution, max_flow, min_cut
from ivfalsify.psi import psi_table
from ivfalsify.simulate import random_observed_distribution
from ivfalsify.typespace import expand_restriction, space_for
from ivfalsify.utils.errors import ValidationError


def _binarized_network(law, caps=True):
    ts = space_for(law.support)
    spec = expand_restriction({'preset': 'no-defiers'}, ts)
    return build_network(law, spec, psi_table(law), use_exclusion_caps=caps)


def test_network_layout(appendix_law, ordered_monotone, appendix_psi):
    net = build_network(appendix_law, ordered_monotone, appendix_psi, use_exclusion_caps=True)
    assert len(net.edges) == 12
    assert len(net.cross_edges()) == 6
    assert net.demands['x0@0'] == F(-1, 2)
    assert net.demands['x2@1'] == F(1, 2)
    diagonal = {e.type_vector: e.capacity for e in net.edges if e.kind == 'diagonal'}
    assert diagonal == {(0, 0): F(0), (1, 1): F(1, 4), (2, 2): F(1, 4)}
    assert dump_network(net).splitlines()[0] == "SRC x0@0 1/2"


def test_worked_example_flow(appendix_law, appendix_space, ordered_monotone, appendix_psi):
    net = build_network(appendix_law, ordered_monotone, appendix_psi, use_exclusion_caps=True)
    result = max_flow(net)
    assert result.value == 1
    assert min_cut(net, result).capacity == 1
    p = flow_to_distribution(net, result)
    system = build_system(appendix_law, appendix_space, ordered_monotone, appendix_psi, 'always-taker')
    assert system.violations(p.probs) == []


def test_binarized_flow_falls_short(binarized_law):
    net = _binarized_network(binarized_law)
    result = max_flow(net)
    assert result.value == F(3, 4)
    cut = min_cut(net, result)
    assert cut.capacity == F(3, 4)
    assert SOURCE in cut.source_side and SINK in cut.sink_side
    with pytest.raises(ValidationError, match="below 1"):
        flow_to_distribution(net, result)


def test_binarized_flow_without_caps(binarized_law):
    result = max_flow(_binarized_network(binarized_law, caps=False))
    assert result.value == 1


def test_flow_conservation(broken_law, ordered_monotone):
    net = build_network(broken_law, ordered_monotone, psi_table(broken_law), use_exclusion_caps=True)
    result = max_flow(net)
    for node in net.nodes:
        if node in (SOURCE, SINK):
            continue
        inflow = sum((f for e, f in zip(net.edges, result.flow) if e.head == node), F(0))
        outflow = sum((f for e, f in zip(net.edges, result.flow) if e.tail == node), F(0))
        assert inflow == outflow
    assert all(0 <= f <= e.capacity for e, f in zip(net.edges, result.flow))
    assert result.value == F(3, 4)


def test_cut_report_uses_labels(binarized_law):
    net = _binarized_network(binarized_law)
    report = min_cut(net).to_dict()
    assert report['capacity'] == F(3, 4)
    assert all('@' in node for pair in report['cut_set'] for node in pair if node not in (SOURCE, SINK))


def test_network_preconditions(appendix_law, ordered_monotone):
    d = random_observed_distribution(1, L=2, K=3, bins=2)
    spec = expand_restriction(None, space_for(d.support))
    with pytest.raises(ValidationError, match="binary instrument"):
        build_network(d, spec)
    with pytest.raises(ValidationError, match="Psi"):
        build_network(appendix_law, ordered_monotone, use_exclusion_caps=True)

    ts = space_for(appendix_law.support)
    rows = expand_restriction({'rows': [{'coefficients': {"x0,x1": 1}, 'rhs': 0}]}, ts)
    with pytest.raises(ValidationError, match="Frequency rows"):
        build_network(appendix_law, rows)
