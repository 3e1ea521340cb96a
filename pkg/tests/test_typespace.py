"""
Tests for type enumeration, restriction presets and row blocks
"""

from fractions import Fraction as F

import pytest

from ivfalsify.typespace import (
    PRESETS, TypeDistribution, build_always_taker_rows, build_consistency_system, build_restriction_rows,
    build_sufficient_taker_rows, enumerate_types, expand_restriction,
)
from ivfalsify.utils.errors import CapExceededError, ValidationError


def test_lexicographic_index():
    ts = enumerate_types(3, 2)
    assert ts.size == 9
    assert ts.index_of((1, 2)) == 5
    assert ts.vector_of(5) == (1, 2)
    assert ts.name(5) == "(x1,x2)"
    assert list(ts.vectors())[:4] == [(0, 0), (0, 1), (0, 2), (1, 0)]
    assert all(ts.index_of(ts.vector_of(j)) == j for j in range(ts.size))


def test_index_out_of_range():
    ts = enumerate_types(2, 3)
    with pytest.raises(ValidationError):
        ts.vector_of(8)
    with pytest.raises(ValidationError):
        ts.index_of((0, 2, 0))


def test_type_cap():
    with pytest.raises(CapExceededError):
        enumerate_types(4, 7)
    assert enumerate_types(4, 7, cap=4 ** 7).size == 16384


def test_parse_vector():
    ts = enumerate_types(3, 2)
    assert ts.parse_vector("x2,x0") == (2, 0)
    assert ts.parse_vector("(x1, x1)") == (1, 1)
    assert ts.parse_vector(['x0', 'x2']) == (0, 2)
    with pytest.raises(ValidationError):
        ts.parse_vector("x0,x9")
    with pytest.raises(ValidationError):
        ts.parse_vector("x0")


def test_ordered_monotone(appendix_space, ordered_monotone):
    assert ordered_monotone.ruled_out == {(1, 0), (2, 0), (2, 1)}
    assert ordered_monotone.forbidden_pairs(appendix_space) == {('x1', 'x0'), ('x2', 'x0'), ('x2', 'x1')}
    assert ordered_monotone.allows((0, 2))


def test_ordered_monotone_many_instruments():
    ts = enumerate_types(2, 3)
    spec = expand_restriction({'preset': 'ordered-monotone'}, ts, ordered=True)
    allowed = [v for v in ts.vectors() if spec.allows(v)]
    assert allowed == [(0, 0, 0), (0, 0, 1), (0, 1, 1), (1, 1, 1)]


def test_preset_preconditions():
    ts = enumerate_types(3, 2)
    with pytest.raises(ValidationError, match="binary treatment"):
        expand_restriction({'preset': 'no-defiers'}, ts)
    with pytest.raises(ValidationError, match="order"):
        expand_restriction({'preset': 'ordered-monotone'}, ts, ordered=False)
    with pytest.raises(ValidationError, match="promoted"):
        expand_restriction({'preset': 'unordered-monotone'}, ts)
    with pytest.raises(ValidationError, match="Unknown restriction preset"):
        expand_restriction({'preset': 'sideways'}, ts)


def test_unordered_monotone():
    ts = enumerate_types(3, 2)
    spec = expand_restriction({'preset': 'unordered-monotone', 'promoted': ['x1']}, ts)
    assert spec.ruled_out == {(0, 2), (2, 0), (1, 0), (1, 2)}


def test_experimentation_cycle():
    ts = enumerate_types(3, 2)
    spec = expand_restriction({'preset': 'experimentation-cycle'}, ts)
    assert spec.ruled_out == {(0, 1), (1, 2), (2, 0)}


def test_no_always_takers_and_explicit_types():
    ts = enumerate_types(3, 2)
    spec = expand_restriction({'preset': 'custom', 'ruled_out': ["x2,x0"], 'no_always_takers': ['x1']}, ts)
    assert spec.ruled_out == {(2, 0), (1, 1)}


def test_compliers_exceed_defiers_row():
    ts = enumerate_types(2, 2)
    spec = expand_restriction({'preset': 'compliers-exceed-defiers'}, ts)
    (coeffs, rhs), = spec.extra_rows
    assert coeffs == (F(0), F(-1), F(1), F(0))
    assert rhs == 0
    assert spec.row_names == ("frequency[defiers<=compliers]",)


def test_custom_rows():
    ts = enumerate_types(2, 2)
    section = {'rows': [{'coefficients': {"x1,x1": 1}, 'rhs': "1/3", 'name': 'few-always-takers'}]}
    spec = expand_restriction(section, ts)
    assert spec.extra_rows == (((F(0), F(0), F(0), F(1)), F(1, 3)),)
    block = build_restriction_rows(spec, ts)
    assert block.names == ('few-always-takers',)
    with pytest.raises(ValidationError, match="coefficients"):
        expand_restriction({'rows': [{'coefficients': [1, 2]}]}, ts)


def test_consistency_rows(appendix_law, appendix_space):
    block = build_consistency_system(appendix_law, appendix_space)
    assert len(block) == 7
    assert block.names[0] == "consistency[z0,x0]"
    assert block.names[-1] == "adding-up"
    assert block.matrix[0] == (1, 1, 1, 0, 0, 0, 0, 0, 0)
    assert block.rhs[:3] == (F(1, 2), F(1, 4), F(1, 4))


def test_restriction_rows(appendix_space, ordered_monotone):
    block = build_restriction_rows(ordered_monotone, appendix_space)
    assert len(block) == 6
    assert block.names[:2] == ("ruled-out[(x1,x0)]", "ruled-out[-(x1,x0)]")
    assert all(rhs == 0 for rhs in block.rhs)


def test_taker_rows_agree_for_binary_instrument(appendix_space, appendix_psi):
    always = build_always_taker_rows(appendix_space, appendix_psi)
    sufficient = build_sufficient_taker_rows(appendix_space, appendix_psi)
    assert always.matrix == sufficient.matrix
    assert always.rhs == sufficient.rhs == (F(0), F(1, 4), F(1, 4))
    assert sufficient.names[1] == "sufficient-taker[x1|z0,z1]"


def test_type_distribution(appendix_space):
    p = TypeDistribution.from_weights(appendix_space, {(0, 1): F(1, 2), (2, 2): F(1, 2)})
    assert p.mass((0, 1)) == F(1, 2)
    assert p.support_vectors() == [(0, 1), (2, 2)]
    assert p.to_dict() == {"(x0,x1)": F(1, 2), "(x2,x2)": F(1, 2)}


def test_preset_catalogue():
    assert {'none', 'no-defiers', 'ordered-monotone', 'custom'} <= set(PRESETS)


@pytest.mark.parametrize('L, K, section', [
    (3, 2, {'preset': 'ordered-monotone'}),
    (3, 3, {'preset': 'ordered-monotone'}),
    (3, 2, {'preset': 'unordered-monotone', 'promoted': ['x1']}),
    (3, 2, {'preset': 'experimentation-cycle'}),
    (3, 2, {'preset': 'custom', 'ruled_out': ["x2,x0"], 'no_always_takers': ['x1']}),
    (2, 2, {'preset': 'compliers-exceed-defiers'}),
])
def test_expansion_is_idempotent(L, K, section):
    ts = enumerate_types(L, K)
    once = expand_restriction(section, ts, ordered=True)
    twice = expand_restriction(once.to_dict(ts), ts, ordered=True)
    assert twice.ruled_out == once.ruled_out
    assert twice.to_dict(ts)['ruled_out'] == once.to_dict(ts)['ruled_out']
