"""
Tests for the exact phase-one solver, certificates and the brute-force oracle
"""

from fractions import Fraction as F

import pytest

from ivfalsify.feasibility import (
    FEASIBLE, INFEASIBLE, UNKNOWN, LinearSystem, brute_force_oracle, build_system, solve_feasibility,
    verify_certificate,
)
from ivfalsify.psi import psi_table
from ivfalsify.simulate import appendix_b_dgp
from ivfalsify.typespace import TypeDistribution, expand_restriction, space_for
from ivfalsify.utils.errors import ValidationError


def _true_point(ts):
    return TypeDistribution.from_weights(ts, appendix_b_dgp().true_weights()).probs


def test_worked_example_is_feasible(appendix_law, appendix_space, ordered_monotone, appendix_psi):
    system = build_system(appendix_law, appendix_space, ordered_monotone, appendix_psi, 'always-taker')
    result = solve_feasibility(system)
    assert result.feasible
    assert system.violations(result.solution) == []
    assert all(ordered_monotone.allows(v) for v in result.witness.support_vectors())
    assert system.violations(_true_point(appendix_space)) == []


def test_binarized_no_defiers_is_infeasible(binarized_law):
    ts = space_for(binarized_law.support)
    spec = expand_restriction({'preset': 'no-defiers'}, ts)
    system = build_system(binarized_law, ts, spec, psi_table(binarized_law), 'always-taker')
    result = solve_feasibility(system)
    assert result.status == INFEASIBLE
    assert verify_certificate(system, result)
    assert 'always-taker[Bin0]' in result.violated_labels
    weights = result.certificate_weights(system)
    assert weights['always-taker[Bin0]'] > 0
    report = result.to_report(system)
    assert 'witness' not in report
    assert report['violated_labels'] == list(result.violated_labels)


def test_binarized_without_exclusion_rows_is_feasible(binarized_law):
    ts = space_for(binarized_law.support)
    spec = expand_restriction({'preset': 'no-defiers'}, ts)
    result = solve_feasibility(build_system(binarized_law, ts, spec))
    assert result.feasible
    assert result.witness.mass((0, 0)) == F(1, 2)
    assert result.witness.mass((0, 1)) == F(1, 4)
    assert result.witness.mass((1, 1)) == F(1, 4)


def test_exclusion_break_is_infeasible(broken_law, appendix_space, ordered_monotone):
    system = build_system(broken_law, appendix_space, ordered_monotone, psi_table(broken_law), 'always-taker')
    result = solve_feasibility(system)
    assert not result.feasible
    assert 'always-taker[x2]' in result.violated_labels


def test_sufficient_taker_rows_on_binary_instrument_match(appendix_law, appendix_space, ordered_monotone,
                                                         appendix_psi):
    always = build_system(appendix_law, appendix_space, ordered_monotone, appendix_psi, 'always-taker')
    sufficient = build_system(appendix_law, appendix_space, ordered_monotone, appendix_psi, 'sufficient-taker')
    assert always.ineq_rows == sufficient.ineq_rows


def test_unknown_exclusion_family(appendix_law, appendix_space, ordered_monotone, appendix_psi):
    with pytest.raises(ValidationError):
        build_system(appendix_law, appendix_space, ordered_monotone, appendix_psi, 'never-taker')
    with pytest.raises(ValidationError, match="Psi"):
        build_system(appendix_law, appendix_space, ordered_monotone, None, 'always-taker')


def test_small_infeasible_system():
    system = LinearSystem(n_vars=2)
    system.add_eq([1, 1], 1, 'sum')
    system.add_ineq([1, 0], F(1, 4), 'cap-a')
    system.add_ineq([0, 1], F(1, 2), 'cap-b')
    result = solve_feasibility(system)
    assert result.status == INFEASIBLE
    assert verify_certificate(system, result)
    assert set(result.violated_labels) == {'sum', 'cap-a', 'cap-b'}
    y_eq, y_ineq = result.certificate
    assert sum(y * b for y, (_, b) in zip(y_eq + y_ineq, system.eq_rows + system.ineq_rows)) == -1


def test_negative_rhs_rows():
    system = LinearSystem(n_vars=2)
    system.add_eq([1, -1], F(-1, 3), 'difference')
    system.add_ineq([-1, 0], F(-1, 6), 'floor')
    result = solve_feasibility(system)
    assert result.feasible
    assert system.violations(result.solution) == []


def test_empty_system_is_feasible():
    result = solve_feasibility(LinearSystem(n_vars=3))
    assert result.feasible
    assert result.solution == (0, 0, 0)


def test_tampered_certificate_fails_verification(binarized_law):
    ts = space_for(binarized_law.support)
    spec = expand_restriction({'preset': 'no-defiers'}, ts)
    system = build_system(binarized_law, ts, spec, psi_table(binarized_law), 'always-taker')
    result = solve_feasibility(system)
    y_eq, y_ineq = result.certificate
    result.certificate = (y_eq, tuple(-y for y in y_ineq))
    assert not verify_certificate(system, result)
    result.certificate = (y_eq, y_ineq[:-1])
    assert not verify_certificate(system, result)


def test_oracle_agrees_on_fixtures(appendix_law, appendix_space, ordered_monotone, appendix_psi, binarized_law):
    full = build_system(appendix_law, appendix_space, ordered_monotone, appendix_psi, 'always-taker')
    assert brute_force_oracle(full, 4) == FEASIBLE

    ts = space_for(binarized_law.support)
    spec = expand_restriction({'preset': 'no-defiers'}, ts)
    binary = build_system(binarized_law, ts, spec, psi_table(binarized_law), 'always-taker')
    assert brute_force_oracle(binary, 4) == INFEASIBLE


def test_oracle_limits():
    with pytest.raises(ValidationError):
        brute_force_oracle(LinearSystem(n_vars=13), 2)
    with pytest.raises(ValidationError):
        brute_force_oracle(LinearSystem(n_vars=2), 0)


def test_oracle_rejects_inconsistent_equalities():
    system = LinearSystem(n_vars=2)
    system.add_eq([1, 1], 1, 'sum')
    system.add_eq([1, 1], F(1, 2), 'half')
    assert brute_force_oracle(system, 4) == INFEASIBLE


def test_oracle_finds_off_grid_vertex_through_redundant_rows():
    system = LinearSystem(n_vars=2)
    system.add_eq([1, 1], 1, 'sum')
    system.add_eq([2, 2], 2, 'sum-doubled')
    system.add_eq([3, 0], 1, 'third')
    # (1/3, 2/3) is feasible but off the grid at resolution 2
    assert brute_force_oracle(system, 2) == UNKNOWN
    assert brute_force_oracle(system, 3) == FEASIBLE
