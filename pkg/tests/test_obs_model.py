"""
Tests for supports, binned laws, record ingestion and binarization
"""

from fractions import Fraction as F

import pytest

from conftest import DATA_DIR
from ivfalsify.obs_model import (
    BIN0, BIN1, OutcomeBin, Support, binarize, from_document, from_joint_table, ingest_records,
    load_records_csv,
)
from ivfalsify.simulate import appendix_b_support
from ivfalsify.utils.errors import ValidationError


def test_support_rejects_single_instrument():
    with pytest.raises(ValidationError):
        Support(outcome_bins=(OutcomeBin('0'),), treatments=('x0', 'x1'), instruments=('z0',))


def test_support_rejects_duplicate_labels():
    with pytest.raises(ValidationError, match="Duplicate treatment"):
        Support(outcome_bins=(OutcomeBin('0'),), treatments=('x0', 'x0'), instruments=('z0', 'z1'))


def test_support_rejects_overlapping_bins():
    bins = (OutcomeBin('a', F(0), F(2, 3)), OutcomeBin('b', F(1, 2), F(1)))
    with pytest.raises(ValidationError, match="overlap"):
        Support(outcome_bins=bins, treatments=('x0',), instruments=('z0', 'z1'))


def test_single_treatment_support_is_allowed():
    d = from_joint_table([('z0', 'x0', 'b', 1), ('z1', 'x0', 'b', 1)])
    assert d.L == 1
    assert d.cond_treatment == ((F(1),), (F(1),))


def test_bin_for_value_places_numbers_by_interval():
    s = appendix_b_support()
    assert s.bin_for_value('0') == 0
    assert s.bin_for_value('0.2') == 0
    assert s.bin_for_value('1/2') == 1
    assert s.bin_for_value(1) == 1
    with pytest.raises(ValidationError):
        s.bin_for_value('3/2')


def test_numeric_outcome_ignores_clashing_labels():
    s = Support(
        outcome_bins=(OutcomeBin('1', F(0), F(1)), OutcomeBin('2', F(1), F(2)), OutcomeBin('3', F(2), F(3))),
        treatments=('x0',),
        instruments=('z0', 'z1'),
    )
    assert s.bin_for_value('1') == 1
    assert s.bin_for_value('3') == 2
    assert s.bin_for_value('0.5') == 0

    d = ingest_records([('1', 'x0', 'z0'), ('0', 'x0', 'z1')], s)
    assert d.subdensity[0][0] == (F(0), F(1), F(0))
    assert d.subdensity[1][0] == (F(1), F(0), F(0))


def test_bounded_bins_still_accept_word_labels():
    s = Support(
        outcome_bins=(OutcomeBin('low', F(0), F(1)), OutcomeBin('high', F(1), F(2))),
        treatments=('x0',),
        instruments=('z0', 'z1'),
    )
    assert s.bin_for_value('high') == 1
    assert s.bin_for_value('1') == 1
    with pytest.raises(ValidationError):
        s.bin_for_value('medium')


def test_appendix_law_tables(appendix_law):
    assert appendix_law.cond_treatment == ((F(1, 2), F(1, 4), F(1, 4)), (F(0), F(1, 2), F(1, 2)))
    assert appendix_law.phi('z0', 'x0') == (F(1, 2), F(0))
    assert appendix_law.phi('z1', 'x2') == (F(0), F(1, 2))
    assert appendix_law.prob('z1', 'x0') == 0
    assert appendix_law.prob_in(0, [1, 2]) == F(1, 2)
    assert appendix_law.instrument_mass == (F(1, 2), F(1, 2))


def test_joint_table_rejects_bad_mass():
    s = appendix_b_support()
    with pytest.raises(ValidationError, match="sum to"):
        from_joint_table([('z0', 'x0', '0', '1/2'), ('z1', 'x1', '1', 1)], support=s)


def test_joint_table_rejects_duplicate_cells():
    s = appendix_b_support()
    cells = [('z0', 'x0', '0', '1/2'), ('z0', 'x0', '0', '1/2'), ('z1', 'x1', '1', 1)]
    with pytest.raises(ValidationError, match="Duplicate cell"):
        from_joint_table(cells, support=s)


def test_joint_table_rejects_unknown_label():
    s = appendix_b_support()
    with pytest.raises(ValidationError, match="Unknown treatment"):
        from_joint_table([('z0', 'x9', '0', 1), ('z1', 'x1', '1', 1)], support=s)


def test_decimal_strings_are_exact():
    d = from_joint_table([('z0', 'x0', 'b', '0.1'), ('z0', 'x1', 'b', '0.9'), ('z1', 'x1', 'b', 1.0)])
    assert d.cond_treatment[0] == (F(1, 10), F(9, 10))


def test_records_match_table(appendix_law):
    d = load_records_csv(DATA_DIR / 'appendix_b_records.csv', appendix_b_support())
    assert d.subdensity == appendix_law.subdensity
    assert d.instrument_mass == (F(1, 2), F(1, 2))


def test_records_missing_column(tmp_path):
    path = tmp_path / 'records.csv'
    path.write_text("y,x\n0,x0\n", encoding='utf-8')
    with pytest.raises(ValidationError, match="lacks columns"):
        load_records_csv(path, appendix_b_support())


def test_records_with_empty_stratum():
    with pytest.raises(ValidationError, match="zero records"):
        ingest_records([('0', 'x0', 'z0')], appendix_b_support())


def test_document_round_trip(appendix_law):
    assert from_document(appendix_law.to_document()) == appendix_law


def test_binarize_worked_example(binarized_law):
    s = binarized_law.support
    assert s.treatments == (BIN0, BIN1)
    assert binarized_law.phi('z0', BIN0) == (F(1, 2), F(1, 4))
    assert binarized_law.phi('z1', BIN0) == (F(0), F(1, 2))
    assert binarized_law.phi('z0', BIN1) == (F(0), F(1, 4))
    assert binarized_law.phi('z1', BIN1) == (F(0), F(1, 2))


def test_binarize_binary_law_at_top_is_identity(binarized_law):
    assert binarize(binarized_law, BIN1) is binarized_law


def test_binarize_needs_order():
    d = from_joint_table([('z0', 'a', 'b', 1), ('z1', 'c', 'b', 1)])
    with pytest.raises(ValidationError, match="order"):
        binarize(d, 'c')


def test_binarize_at_lowest_treatment_puts_everyone_in_bin1(appendix_law):
    d = binarize(appendix_law, 'x0')
    assert d.cond_treatment == ((F(0), F(1)), (F(0), F(1)))
    assert d.phi('z0', BIN1) == (F(1, 2), F(1, 2))
    assert d.phi('z1', BIN1) == (F(0), F(1))
    assert d.phi('z0', BIN0) == (F(0), F(0))


@pytest.mark.parametrize('threshold', ['x0', 'x1', 'x2'])
def test_binarize_preserves_outcome_mass(appendix_law, threshold):
    d = binarize(appendix_law, threshold)
    s = appendix_law.support
    for k in range(s.K):
        for b in range(s.B):
            before = sum(appendix_law.subdensity[k][l][b] for l in range(s.L))
            assert d.subdensity[k][0][b] + d.subdensity[k][1][b] == before
    assert d.instrument_mass == appendix_law.instrument_mass
