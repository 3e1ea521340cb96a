"""
Cross-validation suites behind the selfcheck command

Every suite is deterministic in its seed and returns a SuiteResult; a suite
passes when no trial disagrees.
"""

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Dict, List, Optional

import numpy as np

from ivfalsify import fosd
from ivfalsify.feasibility import (
    UNKNOWN,
    brute_force_oracle,
    build_system,
    solve_feasibility,
)
from ivfalsify.flownet import build_network, flow_to_distribution, max_flow, min_cut
from ivfalsify.obs_model import ObservedDistribution, binarize
from ivfalsify.psi import kitagawa_check, max_subset_difference, pointwise_min, psi_table
from ivfalsify.simulate import (
    DGPSpec,
    appendix_b_dgp,
    appendix_b_exclusion_break,
    generate_observed,
    random_observed_distribution,
    random_valid_dgp,
)
from ivfalsify.submono import lemma_harness
from ivfalsify.typespace import RestrictionSpec, TypeSpace, expand_restriction, space_for
from ivfalsify.utils.rational import common_denominator

logger = logging.getLogger(__name__)


@dataclass
class SuiteResult:
    name: str
    trials: int = 0
    failures: List[Dict[str, Any]] = field(default_factory=list)
    stats: Dict[str, int] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return not self.failures

    def fail(self, **context):
        logger.error(f"[{self.name}] disagreement: {context}")
        if len(self.failures) < 10:
            self.failures.append(context)

    def count(self, key: str):
        self.stats[key] = self.stats.get(key, 0) + 1

    def to_dict(self) -> Dict[str, Any]:
        return {
            'name': self.name,
            'passed': self.passed,
            'trials': self.trials,
            'stats': dict(sorted(self.stats.items())),
            'failures': self.failures,
        }


def _trial_seeds(seed: int, trials: int) -> List[int]:
    rng = np.random.default_rng(seed)
    return [int(s) for s in rng.integers(0, 2 ** 32, size=trials)]


def random_restriction(rng: np.random.Generator, ts: TypeSpace, density: float = 0.3) -> RestrictionSpec:
    """Forbid each type independently with probability `density`"""
    forbidden = frozenset(v for v in ts.vectors() if rng.random() < density)
    return RestrictionSpec(ruled_out=forbidden, preset='custom')


def _binary_instance(trial_seed: int):
    """A random K=2 law (valid or arbitrary) with a random per-type restriction"""
    rng = np.random.default_rng(trial_seed)
    L = int(rng.integers(1, 5))
    bins = int(rng.integers(1, 6))
    if rng.random() < 0.5:
        d = generate_observed(random_valid_dgp(trial_seed, L, 2, bins))
    else:
        d = random_observed_distribution(trial_seed, L, 2, bins, denominator=int(rng.choice([2, 3, 4, 6])))
    ts = space_for(d.support)
    return d, ts, random_restriction(rng, ts), bool(rng.random() < 0.5)


def flow_lp_equivalence(trials: int, seed: int = 0) -> SuiteResult:
    """LP feasibility, max flow = 1, min cut = 1 and the FOSD inequalities agree"""
    result = SuiteResult('flow_lp_equivalence', trials)
    for trial_seed in _trial_seeds(seed, trials):
        d, ts, spec, caps = _binary_instance(trial_seed)
        psi = psi_table(d)
        system = build_system(d, ts, spec, psi, exclusion='always-taker' if caps else None)
        lp = solve_feasibility(system)

        net = build_network(d, spec, psi, use_exclusion_caps=caps)
        flow = max_flow(net)
        cut = min_cut(net, flow)

        rel = fosd.BinaryRelation.from_restriction(spec, ts)
        records = fosd.enumerate_part1(d, rel)
        if caps:
            records += fosd.enumerate_part2(d, rel, psi)
        fosd_ok = not any(r.violated for r in records)

        verdicts = (lp.feasible, flow.value == 1, cut.capacity == 1, fosd_ok)
        result.count('feasible' if lp.feasible else 'infeasible')
        if len(set(verdicts)) != 1 or flow.value != cut.capacity:
            result.fail(seed=trial_seed, verdicts=verdicts, flow=str(flow.value), cut=str(cut.capacity))
            continue
        if flow.value == 1:
            p = flow_to_distribution(net, flow)
            if system.violations(p.probs):
                result.fail(seed=trial_seed, reason='flow distribution fails the system')
    return result


def cut_part1_agreement(trials: int, seed: int = 0) -> SuiteResult:
    """Without exclusion caps: some part-1 violation iff the min cut is below 1"""
    result = SuiteResult('cut_part1_agreement', trials)
    for trial_seed in _trial_seeds(seed, trials):
        d, ts, spec, _ = _binary_instance(trial_seed)
        cut = min_cut(build_network(d, spec))
        rel = fosd.BinaryRelation.from_restriction(spec, ts)
        violated = any(r.violated for r in fosd.enumerate_part1(d, rel))
        if violated != (cut.capacity < 1):
            result.fail(seed=trial_seed, violated=violated, cut=str(cut.capacity))
    return result


def soundness(trials: int, seed: int = 0) -> SuiteResult:
    """Laws generated by valid DGPs never falsify the model"""
    result = SuiteResult('soundness', trials)
    for trial_seed in _trial_seeds(seed, trials):
        rng = np.random.default_rng(trial_seed)
        L, K, bins = int(rng.integers(1, 4)), int(rng.integers(2, 4)), int(rng.integers(1, 4))
        presets = ['none', 'ordered-monotone'] + (['no-defiers'] if L == 2 else [])
        section = {'preset': str(rng.choice(presets))}
        dgp = random_valid_dgp(trial_seed, L, K, bins, section)
        d = generate_observed(dgp)
        ts = space_for(d.support)
        spec = expand_restriction(section, ts, ordered=True)
        psi = psi_table(d)
        system = build_system(d, ts, spec, psi, exclusion='always-taker' if K == 2 else 'sufficient-taker')

        truth = [Fraction(0)] * ts.size
        for vector, weight in dgp.true_weights().items():
            truth[ts.index_of(vector)] += weight
        failed_rows = system.violations(truth)
        feasible = solve_feasibility(system).feasible
        result.count(f"K={K}")
        if failed_rows or not feasible:
            result.fail(seed=trial_seed, rows=failed_rows, feasible=feasible)
    return result


def oracle_agreement(trials: int, seed: int = 0) -> SuiteResult:
    """The simplex agrees with the grid/vertex oracle whenever the oracle is definite"""
    result = SuiteResult('oracle_agreement', trials)
    for trial_seed in _trial_seeds(seed, trials):
        rng = np.random.default_rng(trial_seed)
        L = int(rng.integers(2, 4))
        d = random_observed_distribution(trial_seed, L, 2, int(rng.integers(1, 4)),
                                         denominator=int(rng.choice([2, 3, 4])))
        ts = space_for(d.support)
        spec = random_restriction(rng, ts)
        psi = psi_table(d)
        system = build_system(d, ts, spec, psi, exclusion='always-taker' if rng.random() < 0.5 else None)

        solved = solve_feasibility(system).status
        rhs = [b for _, b in system.eq_rows + system.ineq_rows]
        oracle = brute_force_oracle(system, common_denominator(rhs) * int(rng.choice([1, 2])))
        result.count(oracle)
        if oracle != UNKNOWN and oracle != solved:
            result.fail(seed=trial_seed, solver=solved, oracle=oracle)
    return result


def subset_duality(trials: int, seed: int = 0) -> SuiteResult:
    """Brute-force sup over bin unions equals P[X=x|z0] - Psi_x"""
    result = SuiteResult('subset_duality', trials)
    for trial_seed in _trial_seeds(seed, trials):
        rng = np.random.default_rng(trial_seed)
        d = random_observed_distribution(trial_seed, int(rng.integers(1, 4)), 2, int(rng.integers(1, 11)),
                                         denominator=int(rng.choice([4, 6, 8, 12])))
        for l, x in enumerate(d.support.treatments):
            value, _ = max_subset_difference(d, x)
            expected = d.cond_treatment[0][l] - sum(pointwise_min(d, x, d.support.instruments), Fraction(0))
            if value != expected:
                result.fail(seed=trial_seed, treatment=x, value=str(value), expected=str(expected))
    return result


def monotone_dominance(trials: int, seed: int = 0) -> SuiteResult:
    """Under ordered monotonicity, treatments nobody leaves have psi equal to their z0 sub-density"""
    result = SuiteResult('monotone_dominance', trials)
    for trial_seed in _trial_seeds(seed, trials):
        rng = np.random.default_rng(trial_seed)
        L, bins = int(rng.integers(2, 5)), int(rng.integers(1, 5))
        dgp = random_valid_dgp(trial_seed, L, 2, bins, {'preset': 'ordered-monotone'})
        d = generate_observed(dgp)
        for x in d.support.treatments:
            leavers = [t for t in dgp.type_table if t.weight and t.response[0] == x and t.response[1] != x]
            if leavers:
                continue
            result.count('checked')
            if pointwise_min(d, x, d.support.instruments) != d.phi('z0', x):
                result.fail(seed=trial_seed, treatment=x)
    return result


def _classify_law(d: ObservedDistribution, spec: RestrictionSpec, ts: TypeSpace):
    psi = psi_table(d)
    rel = fosd.BinaryRelation.from_restriction(spec, ts)
    return fosd.classify(fosd.enumerate_part1(d, rel), fosd.enumerate_part2(d, rel, psi))


def _inject_break(dgp: DGPSpec, rng: np.random.Generator) -> DGPSpec:
    s = dgp.support
    x = str(rng.choice(s.treatments))
    z = str(rng.choice(s.instruments))
    label = str(rng.choice(s.bin_labels))
    return DGPSpec(support=s, type_table=dgp.type_table, exclusion_break={(x, z): label},
                   instrument_law=dgp.instrument_law, name=f"{dgp.name}-break")


def detection(trials: int, seed: int = 0) -> SuiteResult:
    """Exclusion breaks are classified case 2/3 whenever detected, with attribution to the broken treatment"""
    result = SuiteResult('detection', trials)
    cases = [('appendix-b', appendix_b_exclusion_break(), 'ordered-monotone')]
    for trial_seed in _trial_seeds(seed, trials):
        rng = np.random.default_rng(trial_seed)
        preset = str(rng.choice(['none', 'ordered-monotone']))
        base = random_valid_dgp(trial_seed, int(rng.integers(2, 4)), 2, int(rng.integers(2, 4)), {'preset': preset})
        cases.append((f"random-{trial_seed}", _inject_break(base, rng), preset))

    for name, dgp, preset in cases:
        d = generate_observed(dgp)
        ts = space_for(d.support)
        spec = expand_restriction({'preset': preset}, ts, ordered=True)
        verdict = _classify_law(d, spec, ts)
        x = next(iter(dgp.exclusion_break))[0]
        if not verdict.violated:
            result.count('undetected')
            logger.info(f"[detection] {name}: injected break at {x} not detected")
            continue
        result.count('detected')
        if verdict.case == fosd.CASE_NOT_FALSIFIED:
            result.fail(case=name, reason='violations but case 1')
        part2 = [r for r in verdict.violated if r.kind == fosd.PART2]
        if part2 and not any(x in S for S in verdict.attribution):
            result.fail(case=name, reason=f"no violated set contains {x}")
    undetected = result.stats.get('undetected', 0)
    if undetected:
        logger.warning(f"[detection] {undetected} injected exclusion breaks left no observable trace")
    return result


def _check(result: SuiteResult, name: str, ok: bool, **context):
    result.count('checked')
    if not ok:
        result.fail(fixture=name, **context)


def fixture_bank() -> SuiteResult:
    """Curated laws with hand-derived verdicts"""
    result = SuiteResult('fixture_bank', 1)

    d = generate_observed(appendix_b_dgp())
    ts = space_for(d.support)
    monotone = expand_restriction({'preset': 'ordered-monotone'}, ts, ordered=True)
    psi = psi_table(d)
    full = solve_feasibility(build_system(d, ts, monotone, psi, exclusion='always-taker'))
    _check(result, 'appendix-b-full', full.feasible)
    _check(result, 'appendix-b-case', _classify_law(d, monotone, ts).case == fosd.CASE_NOT_FALSIFIED)
    _check(result, 'appendix-b-corollary1', not any(r.violated for r in fosd.corollary1_report(d, psi)))

    b = binarize(d, 'x2')
    bts = space_for(b.support)
    no_defiers = expand_restriction({'preset': 'no-defiers'}, bts, ordered=True)
    bpsi = psi_table(b)
    binarized = solve_feasibility(build_system(b, bts, no_defiers, bpsi, exclusion='always-taker'))
    _check(result, 'binarized-infeasible', not binarized.feasible)
    _check(result, 'binarized-certificate', 'always-taker[Bin0]' in binarized.violated_labels)
    _check(result, 'binarized-case', _classify_law(b, no_defiers, bts).case == fosd.CASE_EXCLUSION_JOINT)
    kitagawa = {(r['treatment'], r['bin']): r for r in kitagawa_check(b)}
    row = kitagawa[('Bin0', '1')]
    _check(result, 'kitagawa-values', (row['lhs'], row['rhs']) == (Fraction(1, 2), Fraction(1, 4)) and row['violated'])

    broken = generate_observed(appendix_b_exclusion_break())
    verdict = _classify_law(broken, monotone, ts)
    _check(result, 'exclusion-break-x2', verdict.case == fosd.CASE_EXCLUSION_JOINT
           and any('x2' in S for S in verdict.attribution))

    hidden = generate_observed(appendix_b_exclusion_break('x1', 'z1', '0'))
    _check(result, 'exclusion-break-x1-undetected',
           solve_feasibility(build_system(hidden, ts, monotone, psi_table(hidden), exclusion='always-taker')).feasible)

    # z0 and z1 swapped: adoption of Bin1 falls as the instrument rises
    flipped = binarize(d, 'x1')
    flipped = ObservedDistribution(support=flipped.support,
                                   cond_treatment=tuple(reversed(flipped.cond_treatment)),
                                   subdensity=tuple(reversed(flipped.subdensity)))
    _check(result, 'no-defiers-part1', _classify_law(flipped, no_defiers, bts).case == fosd.CASE_RESTRICTION_FALSIFIED)
    return result


def submono_small(trials: int = 1, seed: int = 0) -> SuiteResult:
    result = SuiteResult('submono_harness', 1)
    report = lemma_harness(2)
    for part, tally in report['parts'].items():
        if not tally['passed']:
            result.fail(part=part, failures=tally['failures'])
    return result


SUITES: Dict[str, Callable[..., SuiteResult]] = {
    'flow_lp_equivalence': flow_lp_equivalence,
    'cut_part1_agreement': cut_part1_agreement,
    'soundness': soundness,
    'oracle_agreement': oracle_agreement,
    'subset_duality': subset_duality,
    'monotone_dominance': monotone_dominance,
    'detection': detection,
}


def run_selfcheck(seed: int = 0, trials: int = 100, suites: Optional[List[str]] = None) -> Dict[str, Any]:
    """
    Run the cross-validation suites plus the curated fixture bank

    Returns:
        Summary with one entry per suite and an overall `passed` flag
    """
    if trials <= 0:
        logger.warning("selfcheck called with zero trials; only the fixture bank runs")
    names = suites or list(SUITES)
    results = [fixture_bank(), submono_small()]
    if trials > 0:
        for offset, name in enumerate(names):
            logger.info(f"Running suite {name} ({trials} trials)")
            results.append(SUITES[name](trials, seed + offset))
    return {
        'seed': seed,
        'trials': trials,
        'suites': [r.to_dict() for r in results],
        'passed': all(r.passed for r in results),
    }
