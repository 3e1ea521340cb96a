"""
Generalized first-order stochastic dominance inequalities for binary instruments

A relation pair (a, b) means the switch from a at z0 to b at z1 is ruled out.
Part-1 inequalities test the response-type restriction alone; part-2 inequalities
tighten them with the always-taker overlaps Psi and jointly test the exclusion
restriction.
"""

import hashlib
import logging
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations
from typing import Any, Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

from ivfalsify.obs_model import ObservedDistribution
from ivfalsify.psi import PsiTable
from ivfalsify.typespace import RestrictionSpec, TypeSpace
from ivfalsify.utils.errors import CapExceededError, ValidationError

logger = logging.getLogger(__name__)

PART1 = 'part1'
PART2 = 'part2'
COROLLARY1 = 'corollary1'

DEFAULT_PART1_CAP = 12
DEFAULT_PART2_CAP = 8

CASE_NOT_FALSIFIED = 1
CASE_EXCLUSION_JOINT = 2
CASE_RESTRICTION_FALSIFIED = 3

CASE_DESCRIPTIONS = {
    CASE_NOT_FALSIFIED: "No inequality is violated; the model is not falsified",
    CASE_EXCLUSION_JOINT: ("Only Psi-tightened inequalities fail: the response-type restriction holds on its "
                           "own, but not jointly with the exclusion restriction"),
    CASE_RESTRICTION_FALSIFIED: "A part-1 inequality fails: the response-type restriction is falsified on its own",
}

ATTRIBUTION_NOTE = ("Each violation implicates the switches ruled out from its set S; restrictions "
                    "associated to other treatment switches might not be falsified")


@dataclass(frozen=True)
class BinaryRelation:
    treatments: Tuple[str, ...]
    pairs: FrozenSet[Tuple[str, str]]

    def __post_init__(self):
        unknown = [p for p in self.pairs if p[0] not in self.treatments or p[1] not in self.treatments]
        if unknown:
            raise ValidationError(f"Relation pairs use unknown treatments: {sorted(unknown)}")

    def holds(self, a: str, b: str) -> bool:
        return (a, b) in self.pairs

    def irreflexive(self) -> 'BinaryRelation':
        return BinaryRelation(self.treatments, frozenset(p for p in self.pairs if p[0] != p[1]))

    def reflexive(self) -> 'BinaryRelation':
        return BinaryRelation(self.treatments, frozenset(p for p in self.pairs if p[0] == p[1]))

    @classmethod
    def from_restriction(cls, spec: RestrictionSpec, ts: TypeSpace) -> 'BinaryRelation':
        return cls(ts.treatments, spec.forbidden_pairs(ts))

    def to_dict(self) -> Dict[str, Any]:
        order = {x: i for i, x in enumerate(self.treatments)}
        ordered = sorted(self.pairs, key=lambda p: (order[p[0]], order[p[1]]))
        return {'pairs': [list(p) for p in ordered]}


@dataclass(frozen=True)
class InequalityRecord:
    """lhs = P[X in S | z0] <= rhs"""

    kind: str
    S: Tuple[str, ...]
    Lam: Tuple[str, ...]
    Lam_prime: Optional[Tuple[str, ...]]
    lhs: Fraction
    rhs: Fraction
    provenance: str = ''

    @property
    def slack(self) -> Fraction:
        return self.rhs - self.lhs

    @property
    def violated(self) -> bool:
        return self.lhs > self.rhs

    def to_dict(self) -> Dict[str, Any]:
        doc = {'kind': self.kind, 'S': list(self.S), 'Lambda': list(self.Lam)}
        if self.Lam_prime is not None:
            doc['Lambda_prime'] = list(self.Lam_prime)
        doc.update({'lhs': self.lhs, 'rhs': self.rhs, 'slack': self.slack, 'violated': self.violated})
        return doc


@dataclass(frozen=True)
class Classification:
    case: int
    violated: Tuple[InequalityRecord, ...]
    attribution: Tuple[Tuple[str, ...], ...]

    @property
    def falsified(self) -> bool:
        return self.case != CASE_NOT_FALSIFIED

    def to_dict(self) -> Dict[str, Any]:
        return {
            'case': self.case,
            'description': CASE_DESCRIPTIONS[self.case],
            'violated_sets': [list(S) for S in self.attribution],
            'violations': dedupe_records(self.violated),
            'note': ATTRIBUTION_NOTE,
        }


def lower_contour(rel: BinaryRelation, S: Iterable[str]) -> Tuple[str, ...]:
    """Treatments x with s >=R x for every s in S; the empty S gives every treatment"""
    S = list(S)
    return tuple(x for x in rel.treatments if all(rel.holds(s, x) for s in S))


def contour_complement(rel: BinaryRelation, S: Iterable[str]) -> Tuple[str, ...]:
    contour = set(lower_contour(rel, S))
    return tuple(x for x in rel.treatments if x not in contour)


def _nonempty_subsets(items: Sequence[str]) -> Iterable[Tuple[str, ...]]:
    for size in range(1, len(items) + 1):
        for subset in combinations(items, size):
            yield subset


def _check_inputs(d: ObservedDistribution, rel: BinaryRelation):
    if d.K != 2:
        raise ValidationError("FOSD inequalities need a binary instrument")
    if tuple(rel.treatments) != tuple(d.support.treatments):
        raise ValidationError("Relation and distribution use different treatment lists")


def provenance_of(d: ObservedDistribution, rel: BinaryRelation) -> str:
    text = repr((d.to_cells(), sorted(rel.pairs)))
    return hashlib.sha1(text.encode('utf-8')).hexdigest()[:12]


def _mass(d: ObservedDistribution, k: int, labels: Iterable[str]) -> Fraction:
    return d.prob_in(k, (d.support.treatment_index(x) for x in labels))


def enumerate_part1(d: ObservedDistribution, rel: BinaryRelation, cap: int = DEFAULT_PART1_CAP) -> List[InequalityRecord]:
    """
    P[X in S | z0] <= P[X outside the common lower contour of S | z1] for every nonempty S

    Records are ordered by |S|, then lexicographically in treatment order.
    """
    _check_inputs(d, rel)
    if d.L > cap:
        raise CapExceededError(f"Part-1 enumeration over {d.L} treatments exceeds the cap of {cap}")
    provenance = provenance_of(d, rel)

    records = []
    for S in _nonempty_subsets(rel.treatments):
        complement = contour_complement(rel, S)
        records.append(InequalityRecord(
            kind=PART1, S=S, Lam=complement, Lam_prime=None,
            lhs=_mass(d, 0, S), rhs=_mass(d, 1, complement), provenance=provenance,
        ))
    logger.debug(f"Enumerated {len(records)} part-1 inequalities")
    return records


def valid_partitions(rel: BinaryRelation, S: Sequence[str]) -> List[Tuple[Tuple[str, ...], Tuple[str, ...]]]:
    """
    Partitions (Lam, Lam') of the contour complement C of S with
    nonempty Lam' inside S, the other out-neighbours of each x in Lam' inside Lam,
    and the contour complement of S minus Lam' inside Lam
    """
    complement = contour_complement(rel, S)
    candidates = [x for x in complement if x in set(S)]
    partitions = []
    for lam_prime in _nonempty_subsets(candidates):
        lam = tuple(x for x in complement if x not in lam_prime)
        lam_set = set(lam)
        if not all(set(contour_complement(rel, [x])) - {x} <= lam_set for x in lam_prime):
            continue
        rest = [s for s in S if s not in lam_prime]
        if not set(contour_complement(rel, rest)) <= lam_set:
            continue
        partitions.append((lam, lam_prime))
    return partitions


def enumerate_part2(d: ObservedDistribution, rel: BinaryRelation, psi: PsiTable,
                    cap: int = DEFAULT_PART2_CAP) -> List[InequalityRecord]:
    """
    P[X in S | z0] <= P[X in Lam | z1] + sum of Psi_x over x in Lam' for every valid partition

    Ordered by |S|, then S, then Lam' (both lexicographic in treatment order).
    """
    _check_inputs(d, rel)
    if d.L > cap:
        raise CapExceededError(f"Part-2 enumeration over {d.L} treatments exceeds the cap of {cap}")
    provenance = provenance_of(d, rel)
    instruments = d.support.instruments

    records = []
    for S in _nonempty_subsets(rel.treatments):
        lhs = _mass(d, 0, S)
        for lam, lam_prime in valid_partitions(rel, S):
            overlap = sum((psi.mass(x, instruments) for x in lam_prime), Fraction(0))
            records.append(InequalityRecord(
                kind=PART2, S=S, Lam=lam, Lam_prime=lam_prime,
                lhs=lhs, rhs=_mass(d, 1, lam) + overlap, provenance=provenance,
            ))
    logger.debug(f"Enumerated {len(records)} part-2 inequalities")
    return records


def classify(records_part1: Sequence[InequalityRecord], records_part2: Sequence[InequalityRecord]) -> Classification:
    """
    Case 1: nothing violated. Case 2: only part-2 records violated.
    Case 3: some part-1 record violated.
    """
    provenances = {r.provenance for r in list(records_part1) + list(records_part2)}
    if len(provenances) > 1:
        raise ValidationError("Inequality records come from different distributions or relations")
    if any(r.kind != PART1 for r in records_part1) or any(r.kind != PART2 for r in records_part2):
        raise ValidationError("Record lists are mixed up between part 1 and part 2")

    violated1 = [r for r in records_part1 if r.violated]
    violated2 = [r for r in records_part2 if r.violated]
    if violated1:
        case = CASE_RESTRICTION_FALSIFIED
    elif violated2:
        case = CASE_EXCLUSION_JOINT
    else:
        case = CASE_NOT_FALSIFIED

    attribution = []
    for record in violated1 + violated2:
        if record.S not in attribution:
            attribution.append(record.S)
    return Classification(case=case, violated=tuple(violated1 + violated2), attribution=tuple(attribution))


def dedupe_records(records: Iterable[InequalityRecord]) -> List[Dict[str, Any]]:
    """Report view: records with the same kind, S, lhs and rhs are shown once"""
    seen = set()
    unique = []
    for record in records:
        key = (record.kind, record.S, record.lhs, record.rhs)
        if key not in seen:
            seen.add(key)
            unique.append(record.to_dict())
    return unique


def corollary1_report(d: ObservedDistribution, psi: PsiTable) -> List[InequalityRecord]:
    """
    Ordered monotone binary instrument:
    P[X >= x_l | z0] <= Psi_{x_l} + P[X > x_l | z1] for every treatment x_l

    Each record is the part-2 inequality with S the upper set of x_l,
    Lam' = {x_l} and Lam the strict upper set.
    """
    s = d.support
    if not s.ordered:
        raise ValidationError("corollary1_report needs a declared treatment order")
    if s.K != 2:
        raise ValidationError("corollary1_report needs a binary instrument")

    records = []
    for l, x in enumerate(s.treatments):
        upper = s.treatments[l:]
        strict = s.treatments[l + 1:]
        records.append(InequalityRecord(
            kind=COROLLARY1, S=upper, Lam=strict, Lam_prime=(x,),
            lhs=d.prob_in(0, range(l, s.L)),
            rhs=psi.mass(x, s.instruments) + d.prob_in(1, range(l + 1, s.L)),
        ))
    return records


COROLLARY1_NOTE = ("Upper bound uses P[X > x_l | z1], the form implied by the part-2 inequalities; the "
                   "variant with P[X > x_(l+1) | z1] fails on valid laws and is not used")
