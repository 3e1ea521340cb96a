"""
Tests for the falsification runner and the command-line subcommands
"""

import json

import pytest
import yaml

from conftest import CONFIG_DIR
from ivfalsify.cli import NECESSARY_NOTE, SHARP_NOTE, UNSOLVED_NOTE, FalsificationRunner, main, run
from ivfalsify.obs_model import from_document
from ivfalsify.simulate import generate_observed, random_observed_distribution, random_valid_dgp
from ivfalsify.utils.config import load_config, read_document
from ivfalsify.utils.errors import ValidationError
from ivfalsify.utils.report import to_plain


def _structured(capsys, argv):
    status = main(argv + ['--format', 'structured'])
    return status, json.loads(capsys.readouterr().out)


def _run_document(d, **extra):
    document = {'support': d.support.to_dict(), 'input': {'table': {'cells': d.to_document()['cells']}}}
    document.update(extra)
    return to_plain(document)


def test_worked_example_not_falsified(capsys):
    status, report = _structured(capsys, ['test', '--config', str(CONFIG_DIR / 'appendix_b.yaml')])
    assert status == 0
    assert report['status'] == 'not_falsified'
    data = report['data']
    assert data['feasibility']['status'] == 'feasible'
    assert data['flow']['value'] == '1/1'
    assert data['classification']['case'] == 1
    assert not data['corollary1']['violated']
    assert data['submono_harness']['passed']
    assert [row['bound'] for row in data['sufficient_takers']] == ['0/1', '1/4', '1/4']
    assert data['psi']['entries'][1]['psi_mass'] == '1/4'
    assert SHARP_NOTE in report['metadata']['notes']


def test_binarized_records_falsified(capsys):
    status, report = _structured(capsys, ['test', '--config', str(CONFIG_DIR / 'appendix_b_binarized.yaml')])
    assert status == 2
    data = report['data']
    assert data['feasibility']['status'] == 'infeasible'
    assert 'always-taker[Bin0]' in data['feasibility']['violated_labels']
    assert data['classification']['case'] == 2
    assert data['flow']['value'] == '3/4'
    violated = [r for r in data['kitagawa'] if r['violated']]
    assert [(r['treatment'], r['bin'], r['lhs'], r['rhs']) for r in violated] == [('Bin0', '1', '1/2', '1/4')]
    assert report['message'].startswith('Falsified')


def test_exclusion_break_config(capsys):
    status, report = _structured(capsys, ['test', '--config', str(CONFIG_DIR / 'appendix_b_exclusion_break.yaml')])
    assert status == 2
    assert any('x2' in S for S in report['data']['classification']['violated_sets'])


def test_structured_report_is_deterministic(capsys):
    argv = ['test', '--config', str(CONFIG_DIR / 'appendix_b_binarized.yaml'), '--format', 'structured']
    main(argv)
    first = capsys.readouterr().out
    main(argv)
    assert capsys.readouterr().out == first


def test_text_report(tmp_path):
    out = tmp_path / 'report.txt'
    status = main(['test', '--config', str(CONFIG_DIR / 'appendix_b.yaml'), '--out', str(out)])
    assert status == 0
    text = out.read_text(encoding='utf-8')
    assert text.splitlines()[0].endswith('Not falsified')
    assert '[data]' in text


def test_flow_with_three_instruments_is_an_input_error(tmp_path, capsys):
    d = random_observed_distribution(4, L=2, K=3, bins=2)
    document = _run_document(d, checks={'flow': True})
    with pytest.raises(ValidationError, match="binary instrument"):
        FalsificationRunner(load_config(document=document)).run()

    path = tmp_path / 'k3.yaml'
    path.write_text(yaml.safe_dump(document), encoding='utf-8')
    status, report = _structured(capsys, ['test', '--config', str(path)])
    assert status == 1
    assert report['error']['code'] == 'VALIDATION_ERROR'


def test_three_instruments_use_sufficient_takers():
    d = generate_observed(random_valid_dgp(8, 2, 3, 2))
    report = run(load_config(document=_run_document(d)))
    assert report['status'] == 'not_falsified'
    assert 'flow' not in report['data'] and 'classification' not in report['data']
    assert NECESSARY_NOTE in report['metadata']['notes']


def test_fosd_cap_degrades_to_notice():
    d = generate_observed(random_valid_dgp(0, 13, 2, 1))
    report = run(load_config(document=_run_document(d)))
    assert report['status'] == 'not_falsified'
    assert report['data']['fosd']['status'] == 'skipped'
    assert 'classification' not in report['data']


def test_type_cap_override(capsys):
    status, report = _structured(capsys, ['test', '--config', str(CONFIG_DIR / 'appendix_b.yaml'),
                                          '--cap-types', '4'])
    assert status == 0
    assert report['data']['feasibility']['status'] == 'skipped'
    assert report['metadata']['notes'][0] == UNSOLVED_NOTE
    assert SHARP_NOTE not in report['metadata']['notes']


def test_skipped_psi_makes_no_sharpness_claim(capsys):
    status, report = _structured(capsys, ['test', '--config', str(CONFIG_DIR / 'appendix_b.yaml'),
                                          '--cap-subsets', '0'])
    assert status == 0
    assert report['data']['psi']['status'] == 'skipped'
    assert report['data']['feasibility']['status'] == 'feasible'
    notes = report['metadata']['notes']
    assert notes[0] == UNSOLVED_NOTE
    assert SHARP_NOTE not in notes


def test_missing_config_file(capsys, tmp_path):
    status, report = _structured(capsys, ['test', '--config', str(tmp_path / 'absent.yaml')])
    assert status == 1
    assert report['status'] == 'error'


def test_missing_input_section(tmp_path, capsys):
    path = tmp_path / 'empty.yaml'
    path.write_text("restriction: {preset: none}\n", encoding='utf-8')
    status, report = _structured(capsys, ['test', '--config', str(path)])
    assert status == 1
    assert 'No input' in report['message']


def test_simulate_preset_round_trip(tmp_path, capsys):
    out = tmp_path / 'sim'
    assert main(['simulate', '--preset', 'appendix-b-exclusion-break', '--out', str(out)]) == 0
    capsys.readouterr()
    assert {p.name for p in out.iterdir()} == {'table.yaml', 'dgp.yaml', 'records.csv'}
    assert len((out / 'records.csv').read_text(encoding='utf-8').splitlines()) == 9

    status, report = _structured(capsys, ['test', '--config', str(out / 'table.yaml')])
    assert status == 2
    assert report['data']['classification']['case'] == 2


def test_simulate_appendix_preset_matches_fixture(tmp_path, appendix_law):
    out = tmp_path / 'sim'
    main(['simulate', '--preset', 'appendix-b', '--out', str(out)])
    document = read_document(out / 'table.yaml')
    assert from_document(document['input']['table'], appendix_law.support) == appendix_law


def test_simulate_is_seeded(tmp_path):
    first, second = tmp_path / 'a', tmp_path / 'b'
    main(['simulate', '--seed', '13', '--out', str(first)])
    main(['simulate', '--seed', '13', '--out', str(second)])
    for name in ('table.yaml', 'dgp.yaml', 'records.csv'):
        assert (first / name).read_bytes() == (second / name).read_bytes()


def test_simulate_from_dgp_document(tmp_path, appendix_law):
    out = tmp_path / 'sim'
    assert main(['simulate', '--config', str(CONFIG_DIR / 'dgp_appendix_b.yaml'), '--out', str(out)]) == 0
    document = read_document(out / 'table.yaml')
    assert document['restriction'] == {'preset': 'ordered-monotone'}
    assert from_document(document['input']['table'], appendix_law.support) == appendix_law


def test_selfcheck_zero_trials(capsys):
    status, report = _structured(capsys, ['selfcheck', '--trials', '0'])
    assert status == 0
    assert report['data']['passed']


def test_presets(capsys):
    status, report = _structured(capsys, ['presets'])
    assert status == 0
    assert 'ordered-monotone' in report['data']['restriction_presets']
    assert 'appendix-b' in report['data']['dgp_presets']


def test_runner_script_default_works_from_any_directory(tmp_path, monkeypatch, capsys):
    import run_falsification

    monkeypatch.chdir(tmp_path)
    monkeypatch.setattr('sys.argv', ['run_falsification.py'])
    assert run_falsification.main() == 0
    assert 'Not falsified' in capsys.readouterr().out
