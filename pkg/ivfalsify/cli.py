"""
Falsification runner and command-line entry point

Ties ingestion, Psi, the feasibility systems, the flow cross-check and the
FOSD classification together and renders one report per run.
"""

import argparse
import logging
import sys
from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, List, Optional

import pandas as pd
import yaml

from ivfalsify import __version__
from ivfalsify.crosscheck import SUITES, run_selfcheck
from ivfalsify.feasibility import build_system, solve_feasibility
from ivfalsify.flownet import build_network, flow_to_distribution, max_flow, min_cut
from ivfalsify.fosd import (
    COROLLARY1_NOTE, BinaryRelation, classify, corollary1_report, dedupe_records,
    enumerate_part1, enumerate_part2,
)
from ivfalsify.obs_model import ObservedDistribution, Support, binarize, from_document, load_records_csv
from ivfalsify.psi import kitagawa_check, psi_table, summarize
from ivfalsify.simulate import (
    DGP_PRESETS, dgp_from_document, dgp_to_document, generate_observed, random_valid_dgp, realize_records,
)
from ivfalsify.submono import MAX_HARNESS_TREATMENTS, lemma_harness
from ivfalsify.typespace import PRESETS, build_sufficient_taker_rows, expand_restriction, space_for
from ivfalsify.utils.config import check_sections, load_config, read_document, setup_logging
from ivfalsify.utils.errors import CapExceededError, FalsificationError, ValidationError
from ivfalsify.utils.report import (
    ReportBuilder, exit_code, render_text, to_plain, to_structured,
)

logger = logging.getLogger(__name__)

SHARP_NOTE = ("Binary instrument: the consistency, restriction and always-taker rows are sharp; "
              "a feasible system means some valid model generates this law on the declared bins")
NECESSARY_NOTE = ("More than two instrument values: the sufficient-taker rows are necessary conditions "
                  "only; a feasible system does not establish validity")
SUFFICIENT_TAKER_NOTE = ("Sufficient-taker rows bound the mass of types that take x whenever the instrument "
                         "lies in the subset")
UNSOLVED_NOTE = ("Binary instrument, but the always-taker system was not solved in full; "
                 "this report makes no sharpness claim")


class FalsificationRunner:
    """Runs the configured checks on one observed distribution"""

    def __init__(self, config: Dict[str, Any]):
        self.config = check_sections(config)
        self.checks = config.get('checks') or {}
        self.caps = config.get('caps') or {}
        self.notes: List[str] = []

    def _path(self, raw: str) -> Path:
        path = Path(raw)
        if not path.is_absolute() and self.config.get('_base_dir'):
            path = Path(self.config['_base_dir']) / path
        return path

    def load_distribution(self) -> ObservedDistribution:
        """Read the law from an inline table, a table file or a record CSV"""
        source = self.config.get('input') or {}
        support = Support.from_document(self.config['support']) if self.config.get('support') else None

        if source.get('table') is not None:
            d = from_document(source['table'], support)
        elif source.get('table_file'):
            d = from_document(read_document(self._path(source['table_file'])), support)
        elif source.get('records'):
            if support is None:
                raise ValidationError("Record input needs a support section")
            d = load_records_csv(self._path(source['records']), support, sep=source.get('sep', ','))
        else:
            raise ValidationError("No input given: set input.table, input.table_file or input.records")

        if self.config.get('binarize'):
            threshold = str(self.config['binarize'])
            logger.info(f"Binarizing treatment at {threshold}")
            d = binarize(d, threshold)
        return d

    def _flag(self, name: str, K: int) -> bool:
        """None means run when the instrument is binary; True with K != 2 is an input error"""
        value = self.checks.get(name)
        if value is None:
            return K == 2
        if value and K != 2:
            raise ValidationError(f"The {name} check needs a binary instrument, got K={K}",
                                  details={'check': name, 'K': K})
        return bool(value)

    def _skip(self, sections: Dict[str, Any], name: str, exc: Exception):
        logger.warning(f"Skipping {name}: {exc}")
        sections[name] = {'status': 'skipped', 'reason': str(exc)}

    def run(self) -> Dict[str, Any]:
        """
        Run psi, feasibility, flow, fosd and classification in that order

        Returns:
            Report dictionary; status falsified when any completed check fails
        """
        logger.info("=== Starting falsification run ===")
        d = self.load_distribution()
        s = d.support
        run_flow = self._flag('flow', s.K)
        run_fosd = self._flag('fosd', s.K)
        run_corollary = bool(self.checks.get('corollary1')) and self._flag('corollary1', s.K)
        if run_corollary and not s.ordered:
            raise ValidationError("The corollary1 check needs a declared treatment order")

        sections: Dict[str, Any] = {
            'input': {'support': s.to_dict(), 'cells': d.to_document()['cells'],
                      'binarize': self.config.get('binarize')},
        }
        falsified_by: List[str] = []

        psi = witness = None
        sharp_solved = False
        try:
            psi = psi_table(d, self.caps.get('max_subset_size'), self.caps.get('subsets', 4096),
                            bool(self.caps.get('allow_large')))
            sections['psi'] = summarize(psi)
        except CapExceededError as e:
            self._skip(sections, 'psi', e)

        ts = restriction = None
        try:
            ts = space_for(s, self.caps.get('types', 4096))
            restriction = expand_restriction(self.config.get('restriction'), ts, s.ordered)
            sections['restriction'] = restriction.to_dict(ts)
        except CapExceededError as e:
            self._skip(sections, 'restriction', e)

        if self.checks.get('feasibility', True):
            if restriction is None:
                sections['feasibility'] = {'status': 'skipped', 'reason': 'type space exceeds the cap'}
            else:
                exclusion = None
                if psi is not None:
                    exclusion = 'always-taker' if s.K == 2 else 'sufficient-taker'
                else:
                    self.notes.append("Feasibility ran without exclusion rows because Psi was skipped")
                system = build_system(d, ts, restriction, psi, exclusion)
                result = solve_feasibility(system)
                sharp_solved = exclusion == 'always-taker'
                sections['feasibility'] = result.to_report(system)
                witness = result.witness
                if not result.feasible:
                    falsified_by.append('feasibility')

        if self.checks.get('sufficient_takers') and psi is not None and ts is not None:
            sections['sufficient_takers'] = self._sufficient_taker_rows(ts, psi, witness)

        if run_flow:
            if restriction is None or psi is None:
                sections['flow'] = {'status': 'skipped', 'reason': 'type space or Psi exceeds the cap'}
            elif restriction.extra_rows:
                sections['flow'] = {'status': 'skipped',
                                    'reason': 'frequency rows have no edge-capacity form'}
            else:
                sections['flow'] = self._flow(d, restriction, psi)
                if sections['flow']['value'] != 1:
                    falsified_by.append('flow')

        if run_fosd:
            if restriction is None or psi is None:
                sections['fosd'] = {'status': 'skipped', 'reason': 'type space or Psi exceeds the cap'}
            else:
                outcome = self._fosd(d, BinaryRelation.from_restriction(restriction, ts), psi, sections)
                if outcome:
                    falsified_by.append('fosd')
                if restriction.extra_rows:
                    self.notes.append("FOSD inequalities cover ruled-out types only; frequency rows are "
                                      "tested by the feasibility check")

        if run_corollary and psi is not None:
            records = corollary1_report(d, psi)
            sections['corollary1'] = {
                'records': [r.to_dict() for r in records],
                'violated': any(r.violated for r in records),
                'note': COROLLARY1_NOTE,
            }

        if s.L == 2 and s.K == 2:
            sections['kitagawa'] = kitagawa_check(d)

        if self.checks.get('submono_harness'):
            sections['submono_harness'] = self._harness(s, restriction, ts)

        if s.K == 2:
            self.notes.insert(0, SHARP_NOTE if sharp_solved else UNSOLVED_NOTE)
        else:
            self.notes.insert(0, NECESSARY_NOTE)
        if s.K > 2 and psi is not None:
            self.notes.append(SUFFICIENT_TAKER_NOTE)
        metadata = {'tool': 'ivfalsify', 'version': __version__, 'notes': self.notes}

        if falsified_by:
            logger.info(f"=== Falsified by {', '.join(falsified_by)} ===")
            headline = f"Falsified ({', '.join(falsified_by)})"
            case = sections.get('classification', {}).get('case')
            if case:
                headline += f": case {case}"
            return ReportBuilder.falsified(sections, headline, metadata)
        logger.info("=== Falsification run completed: not falsified ===")
        return ReportBuilder.success(sections, "Not falsified", metadata)

    def _flow(self, d, restriction, psi) -> Dict[str, Any]:
        net = build_network(d, restriction, psi, use_exclusion_caps=True)
        result = max_flow(net)
        cut = min_cut(net, result)
        section = {'value': result.value, 'min_cut': cut.to_dict()}
        if result.value == 1:
            section['witness'] = flow_to_distribution(net, result).to_dict()
        return section

    def _fosd(self, d, rel, psi, sections) -> bool:
        try:
            part1 = enumerate_part1(d, rel, self.caps.get('fosd_part1', 12))
        except CapExceededError as e:
            self._skip(sections, 'fosd', e)
            return False
        try:
            part2 = enumerate_part2(d, rel, psi, self.caps.get('fosd_part2', 8))
        except CapExceededError as e:
            logger.warning(f"Part-2 enumeration skipped: {e}")
            self.notes.append(f"Part-2 inequalities skipped: {e}")
            part2 = []

        classification = classify(part1, part2)
        sections['fosd'] = {
            'relation': rel.to_dict(),
            'part1': dedupe_records(part1),
            'part2': dedupe_records(part2),
        }
        sections['classification'] = classification.to_dict()
        return classification.falsified

    def _sufficient_taker_rows(self, ts, psi, witness) -> List[Dict[str, Any]]:
        """Bound per (treatment, instrument subset), with the witness mass when feasible"""
        block = build_sufficient_taker_rows(ts, psi)
        rows = []
        for name, coeffs, bound in zip(block.names, block.matrix, block.rhs):
            row = {'row': name, 'bound': bound}
            if witness is not None:
                row['mass'] = sum((c * p for c, p in zip(coeffs, witness.probs) if c), Fraction(0))
            rows.append(row)
        return rows

    def _harness(self, s: Support, restriction, ts) -> Dict[str, Any]:
        if s.K != 2 or s.L > MAX_HARNESS_TREATMENTS:
            return {'status': 'skipped',
                    'reason': f"harness needs K=2 and L <= {MAX_HARNESS_TREATMENTS}"}
        relations = [BinaryRelation.from_restriction(restriction, ts)] if restriction is not None else None
        return lemma_harness(s.L, relations)


def _render(report: Dict[str, Any], fmt: str, decimal: bool) -> str:
    if fmt == 'structured':
        return to_structured(report, decimal)
    return render_text(report, decimal)


def _emit(text: str, out: Optional[str]):
    if out:
        path = Path(out)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding='utf-8')
        logger.info(f"Report written to {path}")
    else:
        sys.stdout.write(text)


def _apply_flags(config: Dict[str, Any], args: argparse.Namespace) -> Dict[str, Any]:
    if getattr(args, 'cap_types', None) is not None:
        config['caps']['types'] = args.cap_types
    if getattr(args, 'cap_subsets', None) is not None:
        config['caps']['subsets'] = args.cap_subsets
    if args.format:
        config['output']['format'] = args.format
    return config


def run(config: Dict[str, Any]) -> Dict[str, Any]:
    """Run the configured checks on the configured law"""
    return FalsificationRunner(config).run()


def run_cmd(args: argparse.Namespace, config: Dict[str, Any]) -> Dict[str, Any]:
    return run(config)


def _write_yaml(path: Path, document: Dict[str, Any]):
    with open(path, 'w', encoding='utf-8') as f:
        yaml.safe_dump(to_plain(document), f, sort_keys=False, allow_unicode=True)


def simulate_cmd(args: argparse.Namespace, config: Dict[str, Any]) -> Dict[str, Any]:
    """Write the exact law, an exact record multiset and the DGP into --out"""
    if args.preset:
        dgp = dgp_from_document({'preset': args.preset})
        restriction = {'preset': 'ordered-monotone'}
    elif args.config:
        document = read_document(args.config)
        dgp = dgp_from_document(document.get('dgp', document))
        restriction = document.get('restriction') or {'preset': 'none'}
    else:
        restriction = {'preset': args.restriction}
        dgp = random_valid_dgp(args.seed, args.treatments, args.instruments, args.bins, restriction,
                               cap=config['caps']['types'])

    d = generate_observed(dgp)
    out = Path(args.out or 'simulated')
    out.mkdir(parents=True, exist_ok=True)

    table = d.to_document()
    table.pop('support')
    run_document = {
        'support': d.support.to_dict(),
        'input': {'table': table},
        'restriction': restriction,
        'checks': {'corollary1': d.support.ordered and d.support.K == 2},
    }
    _write_yaml(out / 'table.yaml', run_document)
    _write_yaml(out / 'dgp.yaml', dgp_to_document(dgp))
    records = pd.DataFrame(realize_records(d), columns=['y', 'x', 'z'])
    records.to_csv(out / 'records.csv', index=False)

    logger.info(f"Simulated {dgp.name}: {len(records)} records written to {out}")
    return ReportBuilder.success(
        {'dgp': dgp.name, 'out': str(out), 'records': len(records), 'cells': table['cells']},
        f"Simulated {dgp.name}",
    )


def selfcheck_cmd(args: argparse.Namespace, config: Dict[str, Any]) -> Dict[str, Any]:
    summary = run_selfcheck(seed=args.seed, trials=args.trials, suites=args.suite or None)
    if summary['passed']:
        return ReportBuilder.success(summary, "Selfcheck passed")
    return ReportBuilder.error("Selfcheck found disagreements", "SELFCHECK_FAILED", summary)


def presets_cmd(args: argparse.Namespace, config: Dict[str, Any]) -> Dict[str, Any]:
    return ReportBuilder.success({
        'restriction_presets': dict(PRESETS),
        'dgp_presets': sorted(DGP_PRESETS),
        'selfcheck_suites': list(SUITES),
    }, "Available presets")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--verbose', '-v', action='store_true', help='Enable verbose logging')
    common.add_argument('--format', choices=['text', 'structured'], help='Report format')
    common.add_argument('--out', help='Report file (simulate: output directory)')
    common.add_argument('--seed', type=int, default=0, help='Seed for random draws')
    common.add_argument('--cap-types', type=int, help='Maximum number of response types')

    parser = argparse.ArgumentParser(description='Falsification tests for instrument validity')
    sub = parser.add_subparsers(dest='command', required=True)

    test = sub.add_parser('test', parents=[common], help='Run the configured checks on an observed law')
    test.add_argument('--config', '-c', required=True, help='Run document (YAML)')
    test.add_argument('--cap-subsets', type=int, help='Maximum number of instrument subsets')
    test.set_defaults(handler=run_cmd)

    simulate = sub.add_parser('simulate', parents=[common], help='Emit a law and records from a DGP')
    simulate.add_argument('--config', '-c', help='DGP document (YAML)')
    simulate.add_argument('--preset', choices=sorted(DGP_PRESETS), help='Built-in DGP')
    simulate.add_argument('--treatments', type=int, default=3, help='L for a random DGP')
    simulate.add_argument('--instruments', type=int, default=2, help='K for a random DGP')
    simulate.add_argument('--bins', type=int, default=2, help='Outcome bins for a random DGP')
    simulate.add_argument('--restriction', default='ordered-monotone', help='Restriction preset for a random DGP')
    simulate.set_defaults(handler=simulate_cmd)

    selfcheck = sub.add_parser('selfcheck', parents=[common], help='Cross-validate solver, flow and inequalities')
    selfcheck.add_argument('--trials', type=int, default=100, help='Trials per suite')
    selfcheck.add_argument('--suite', action='append', choices=list(SUITES), help='Run only these suites')
    selfcheck.set_defaults(handler=selfcheck_cmd)

    presets = sub.add_parser('presets', parents=[common], help='List restriction and DGP presets')
    presets.set_defaults(handler=presets_cmd)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Parse arguments, run one subcommand and return its exit status"""
    args = build_parser().parse_args(argv)
    config = load_config()
    fmt = args.format or 'text'
    decimal = False

    try:
        if args.command == 'test':
            config = _apply_flags(load_config(args.config), args)
            fmt = config['output'].get('format', 'text')
            decimal = bool(config['output'].get('decimal'))
        else:
            config = _apply_flags(config, args)
        setup_logging(config['logging'], args.verbose)
        report = args.handler(args, config)
    except KeyboardInterrupt:
        print("\n⏹️  Run interrupted by user")
        return 130
    except FalsificationError as e:
        logger.error(f"Run failed: {e}")
        report = ReportBuilder.from_exception(e)
    except (OSError, pd.errors.ParserError, yaml.YAMLError) as e:
        logger.error(f"Input error: {e}")
        report = ReportBuilder.error(str(e), "INPUT_ERROR")

    _emit(_render(report, fmt, decimal), args.out if args.command != 'simulate' else None)
    return exit_code(report)


if __name__ == '__main__':
    sys.exit(main())
