"""
Acceptance suites: solver, oracle, flow and inequalities cross-validated on seeded instances
"""

from ivfalsify.crosscheck import (
    SUITES, cut_part1_agreement, detection, fixture_bank, flow_lp_equivalence, monotone_dominance,
    oracle_agreement, run_selfcheck, soundness, submono_small, subset_duality,
)


def _assert_passed(result):
    assert result.passed, result.to_dict()


def test_fixture_bank():
    result = fixture_bank()
    _assert_passed(result)
    assert result.stats['checked'] == 10


def test_lp_flow_cut_and_inequalities_agree():
    result = flow_lp_equivalence(1000, seed=2024)
    _assert_passed(result)
    assert result.stats.get('feasible', 0) > 0
    assert result.stats.get('infeasible', 0) > 0


def test_min_cut_matches_part1_inequalities():
    _assert_passed(cut_part1_agreement(300, seed=5))


def test_valid_dgps_are_never_falsified():
    result = soundness(500, seed=11)
    _assert_passed(result)
    assert result.stats.get('K=3', 0) > 0


def test_solver_agrees_with_oracle():
    result = oracle_agreement(200, seed=3)
    _assert_passed(result)
    assert result.stats.get('feasible', 0) + result.stats.get('infeasible', 0) > 0


def test_bin_union_duality_suite():
    _assert_passed(subset_duality(200, seed=17))


def test_monotone_dominance():
    result = monotone_dominance(200, seed=23)
    _assert_passed(result)
    assert result.stats['checked'] >= 200


def test_detection_of_exclusion_breaks():
    result = detection(100, seed=29)
    _assert_passed(result)
    assert result.stats.get('detected', 0) >= 1


def test_submono_small():
    _assert_passed(submono_small())


def test_selfcheck_zero_trials(caplog):
    summary = run_selfcheck(seed=0, trials=0)
    assert summary['passed']
    assert [s['name'] for s in summary['suites']] == ['fixture_bank', 'submono_harness']
    assert 'zero trials' in caplog.text


def test_selfcheck_is_deterministic():
    first = run_selfcheck(seed=7, trials=5, suites=['flow_lp_equivalence', 'oracle_agreement'])
    second = run_selfcheck(seed=7, trials=5, suites=['flow_lp_equivalence', 'oracle_agreement'])
    assert first == second
    assert first['passed']
    assert set(SUITES) >= {'flow_lp_equivalence', 'soundness', 'detection'}
