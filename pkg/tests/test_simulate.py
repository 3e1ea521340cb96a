"""
Tests for the forward simulator, exact records and DGP documents
"""

from fractions import Fraction as F

import pytest

from conftest import CONFIG_DIR
from ivfalsify.feasibility import build_system, solve_feasibility
from ivfalsify.obs_model import OutcomeBin, Support, from_joint_table, ingest_records
from ivfalsify.psi import psi_table
from ivfalsify.simulate import (
    DGPSpec, DGPType, appendix_b_dgp, appendix_b_exclusion_break, appendix_b_support, dgp_from_document,
    dgp_to_document, generate_observed, random_observed_distribution, random_valid_dgp, realize_records,
)
from ivfalsify.typespace import expand_restriction, space_for
from ivfalsify.utils.config import read_document
from ivfalsify.utils.errors import ValidationError


def test_true_weights():
    assert appendix_b_dgp().true_weights() == {(0, 1): F(1, 2), (1, 2): F(1, 4), (2, 2): F(1, 4)}


def test_exclusion_break_moves_one_cell(appendix_law, broken_law):
    assert broken_law.phi('z1', 'x2') == (F(1, 2), F(0))
    assert broken_law.subdensity[0] == appendix_law.subdensity[0]
    assert broken_law.cond_treatment == appendix_law.cond_treatment


def test_per_instrument_types():
    base = appendix_b_dgp()
    shifted = (DGPType(('x0', 'x1'), ('0', '0', '0'), F(1)),)
    dgp = DGPSpec(support=base.support, type_table=base.type_table, per_instrument_types={'z1': shifted})
    d = generate_observed(dgp)
    assert d.phi('z1', 'x1') == (F(1), F(0))
    assert d.phi('z0', 'x0') == (F(1, 2), F(0))


def test_dgp_validation():
    s = appendix_b_support()
    with pytest.raises(ValidationError, match="sum to 1"):
        DGPSpec(support=s, type_table=(DGPType(('x0', 'x1'), ('0', '1', '1'), F(1, 2)),))
    with pytest.raises(ValidationError):
        DGPSpec(support=s, type_table=(DGPType(('x0', 'x9'), ('0', '1', '1'), F(1)),))
    with pytest.raises(ValidationError):
        appendix_b_exclusion_break(label='7')


def test_realized_records_reproduce_the_law(appendix_law):
    records = realize_records(appendix_law)
    assert len(records) == 8
    assert records.count(('0', 'x0', 'z0')) == 2
    assert ingest_records(records, appendix_law.support) == appendix_law


def test_random_valid_dgp_is_seeded_and_valid():
    first = random_valid_dgp(42, 3, 2, 3, {'preset': 'ordered-monotone'})
    assert first == random_valid_dgp(42, 3, 2, 3, {'preset': 'ordered-monotone'})
    assert all(a <= b for a, b in first.true_weights())

    d = generate_observed(first)
    ts = space_for(d.support)
    spec = expand_restriction({'preset': 'ordered-monotone'}, ts, ordered=True)
    assert solve_feasibility(build_system(d, ts, spec, psi_table(d), 'always-taker')).feasible


def test_random_valid_dgp_many_instruments():
    d = generate_observed(random_valid_dgp(7, 2, 3, 2))
    ts = space_for(d.support)
    spec = expand_restriction(None, ts)
    assert solve_feasibility(build_system(d, ts, spec, psi_table(d), 'sufficient-taker')).feasible


def test_random_observed_distribution_is_seeded():
    assert random_observed_distribution(9, 3, 2, 2) == random_observed_distribution(9, 3, 2, 2)


def test_dgp_documents(appendix_law):
    document = read_document(CONFIG_DIR / 'dgp_appendix_b.yaml')
    assert generate_observed(dgp_from_document(document['dgp'])) == appendix_law
    assert dgp_from_document({'preset': 'appendix-b'}) == appendix_b_dgp()

    broken = appendix_b_exclusion_break()
    assert dgp_from_document(dgp_to_document(broken)).exclusion_break == {('x2', 'z1'): '0'}
    with pytest.raises(ValidationError, match="Unknown DGP preset"):
        dgp_from_document({'preset': 'nope'})


def test_realized_records_survive_numeric_labels():
    s = Support(
        outcome_bins=(OutcomeBin('1', F(0), F(1)), OutcomeBin('2', F(1), F(2))),
        treatments=('x0', 'x1'),
        instruments=('z0', 'z1'),
    )
    d = from_joint_table([('z0', 'x0', '1', F(1, 2)), ('z0', 'x1', '2', F(1, 2)),
                          ('z1', 'x1', '1', F(1))], support=s, instrument_mass=(F(1, 2), F(1, 2)))
    records = realize_records(d)
    assert {y for y, _, _ in records} == {'0/1', '2'}
    assert ingest_records(records, s) == d
