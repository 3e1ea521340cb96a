"""
Random-utility grounding of response-type restrictions

A latent preference type carries one strict ranking per instrument value
(binary instrument) and chooses its top-ranked treatment. A relation pair
(a, b) says a is promoted relative to b: a unit preferring a to b at z0
still does so at z1, so the switch a -> b never happens.
"""

import logging
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations, permutations, product
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from ivfalsify.fosd import BinaryRelation
from ivfalsify.typespace import TypeDistribution, enumerate_types
from ivfalsify.utils.errors import ValidationError

logger = logging.getLogger(__name__)

MAX_HARNESS_TREATMENTS = 4
FULL_ENUMERATION_MAX = 3


@dataclass(frozen=True)
class PreferenceProfile:
    """Strict total order, best first"""

    ranking: Tuple[str, ...]

    def __post_init__(self):
        if len(set(self.ranking)) != len(self.ranking) or not self.ranking:
            raise ValidationError(f"Not a strict ranking: {self.ranking}")

    def prefers(self, a: str, b: str) -> bool:
        return a != b and self.ranking.index(a) < self.ranking.index(b)

    @property
    def maximizer(self) -> str:
        return self.ranking[0]


@dataclass(frozen=True)
class LatentPreferenceType:
    at_z0: PreferenceProfile
    at_z1: PreferenceProfile

    def __post_init__(self):
        if set(self.at_z0.ranking) != set(self.at_z1.ranking):
            raise ValidationError("Both profiles must rank the same treatments")

    @property
    def response(self) -> Tuple[str, str]:
        return self.at_z0.maximizer, self.at_z1.maximizer

    def to_dict(self) -> Dict[str, Any]:
        return {'z0': list(self.at_z0.ranking), 'z1': list(self.at_z1.ranking)}


@dataclass(frozen=True)
class LatentDistribution:
    treatments: Tuple[str, ...]
    weights: Dict[LatentPreferenceType, Fraction]

    def __post_init__(self):
        if any(w < 0 for w in self.weights.values()):
            raise ValidationError("Latent type weights must be non-negative")
        if sum(self.weights.values(), Fraction(0)) != 1:
            raise ValidationError("Latent type weights must sum to 1")
        for t in self.weights:
            if set(t.at_z0.ranking) != set(self.treatments):
                raise ValidationError("Latent type ranks a different treatment set")

    def support(self) -> List[LatentPreferenceType]:
        return [t for t, w in self.weights.items() if w > 0]


def ranking_with_top(treatments: Sequence[str], first: str, second: Optional[str] = None) -> PreferenceProfile:
    """first, then second, then the rest in list order"""
    head = [first] if second is None or second == first else [first, second]
    return PreferenceProfile(tuple(head + [x for x in treatments if x not in head]))


def switch_type(treatments: Sequence[str], a: str, b: str) -> LatentPreferenceType:
    """Chooses a at z0 and b at z1; only the pair (a, b) is reversed"""
    return LatentPreferenceType(ranking_with_top(treatments, a, b), ranking_with_top(treatments, b, a))


def all_latent_types(treatments: Sequence[str]) -> List[LatentPreferenceType]:
    profiles = [PreferenceProfile(tuple(r)) for r in permutations(treatments)]
    return [LatentPreferenceType(p0, p1) for p0, p1 in product(profiles, repeat=2)]


def reversal_violates(t: LatentPreferenceType, rel: BinaryRelation) -> bool:
    """True iff some pair a >= b of the relation has a preferred at z0 but b preferred at z1"""
    return any(t.at_z0.prefers(a, b) and t.at_z1.prefers(b, a) for a, b in rel.pairs)


def is_submonotone(h: LatentDistribution, rel: BinaryRelation) -> bool:
    return not any(reversal_violates(t, rel) for t in h.support())


def induced_type_distribution(h: LatentDistribution) -> TypeDistribution:
    """p_h(a, b) = total weight of latent types choosing a at z0 and b at z1"""
    ts = enumerate_types(len(h.treatments), 2, treatments=h.treatments)
    index = {x: i for i, x in enumerate(h.treatments)}
    weights = {}
    for t, w in h.weights.items():
        a, b = t.response
        key = (index[a], index[b])
        weights[key] = weights.get(key, Fraction(0)) + w
    return TypeDistribution.from_weights(ts, weights)


def latent_from_types(p: TypeDistribution) -> LatentDistribution:
    """Put p(a, b) on the switch type choosing a at z0 and b at z1"""
    treatments = p.space.treatments
    weights = {}
    for vector in p.support_vectors():
        a, b = (treatments[i] for i in vector)
        weights[switch_type(treatments, a, b)] = p.mass(vector)
    return LatentDistribution(treatments=tuple(treatments), weights=weights)


def split_relation(rel: BinaryRelation) -> Tuple[BinaryRelation, BinaryRelation]:
    return rel.irreflexive(), rel.reflexive()


def point_mass(treatments: Sequence[str], t: LatentPreferenceType) -> LatentDistribution:
    return LatentDistribution(treatments=tuple(treatments), weights={t: Fraction(1)})


def all_relations(treatments: Sequence[str]) -> Iterable[BinaryRelation]:
    pairs = list(product(treatments, repeat=2))
    for mask in range(2 ** len(pairs)):
        yield BinaryRelation(tuple(treatments), frozenset(p for i, p in enumerate(pairs) if mask >> i & 1))


def random_relations(treatments: Sequence[str], count: int, seed: int = 0) -> List[BinaryRelation]:
    rng = np.random.default_rng(seed)
    pairs = list(product(treatments, repeat=2))
    relations = []
    for _ in range(count):
        mask = rng.integers(0, 2, size=len(pairs))
        relations.append(BinaryRelation(tuple(treatments), frozenset(p for p, bit in zip(pairs, mask) if bit)))
    return relations


def _witness_for_pair(treatments: Sequence[str], a: str, b: str) -> LatentDistribution:
    if a == b:
        profile = ranking_with_top(treatments, a)
        return point_mass(treatments, LatentPreferenceType(profile, profile))
    return point_mass(treatments, switch_type(treatments, a, b))


class _PartTally:
    def __init__(self):
        self.checks = 0
        self.failures: List[Dict[str, Any]] = []

    def record(self, ok: bool, **context):
        self.checks += 1
        if not ok and len(self.failures) < 5:
            self.failures.append(context)
        if not ok:
            logger.warning(f"Submonotonicity check failed: {context}")

    @property
    def passed(self) -> bool:
        return not self.failures

    def to_dict(self) -> Dict[str, Any]:
        return {'passed': self.passed, 'checks': self.checks, 'failures': self.failures}


def _check_relation(rel: BinaryRelation, latent: List[LatentPreferenceType], tallies: Dict[str, _PartTally],
                    minimality: bool):
    treatments = rel.treatments
    irreflexive, reflexive = split_relation(rel)
    forbidden = rel.pairs
    stayers = {a for a, _ in reflexive.pairs}
    name = sorted(forbidden)

    # 1: only the irreflexive part matters
    for t in latent:
        tallies['1'].record(reversal_violates(t, rel) == reversal_violates(t, irreflexive), relation=name)

    # 2: a stronger relation is not implied by the type restriction
    for a, b in product(treatments, repeat=2):
        if a == b or (a, b) in forbidden:
            continue
        h = _witness_for_pair(treatments, a, b)
        p = induced_type_distribution(h)
        stronger = BinaryRelation(treatments, forbidden | {(a, b)})
        ok = (is_submonotone(h, rel)
              and not any(_pair(treatments, v) in forbidden for v in p.support_vectors())
              and not is_submonotone(h, stronger))
        tallies['2'].record(ok, relation=name, pair=(a, b))

    # 3: a weaker relation does not rule out every forbidden type
    # 4: reflexive pairs are never enforced by submonotonicity itself
    for a, b in sorted(forbidden):
        h = _witness_for_pair(treatments, a, b)
        p = induced_type_distribution(h)
        if a == b:
            ok = is_submonotone(h, rel) and p.mass(_vector(treatments, a, b)) == 1
            tallies['4'].record(ok, relation=name, pair=(a, b))
        else:
            weaker = BinaryRelation(treatments, forbidden - {(a, b)})
            ok = is_submonotone(h, weaker) and p.mass(_vector(treatments, a, b)) == 1
            tallies['3'].record(ok, relation=name, pair=(a, b))

    # 5: submonotone latent types without designated stayers only produce allowed types
    for t in latent:
        a, b = t.response
        if reversal_violates(t, rel) or (a == b and a in stayers):
            continue
        tallies['5'].record((a, b) not in forbidden, relation=name, latent=t.to_dict())

    # 6: every p off the forbidden set comes from a submonotone h
    allowed = [(a, b) for a, b in product(treatments, repeat=2) if (a, b) not in forbidden]
    ts = enumerate_types(len(treatments), 2, treatments=treatments)
    candidates = [{_vector(treatments, a, b): Fraction(1)} for a, b in allowed]
    if allowed:
        candidates.append({_vector(treatments, a, b): Fraction(1, len(allowed)) for a, b in allowed})
    for weights in candidates:
        p = TypeDistribution.from_weights(ts, weights)
        h = latent_from_types(p)
        tallies['6'].record(is_submonotone(h, rel) and induced_type_distribution(h) == p, relation=name)

    if minimality:
        pairs = sorted(forbidden)
        for size in range(len(pairs)):
            for kept in combinations(pairs, size):
                smaller = BinaryRelation(treatments, frozenset(kept))
                dropped = [p for p in pairs if p not in kept]
                a, b = dropped[0]
                h = _witness_for_pair(treatments, a, b)
                p = induced_type_distribution(h)
                ok = is_submonotone(h, smaller) and p.mass(_vector(treatments, a, b)) > 0
                tallies['minimality'].record(ok, relation=name, subset=list(kept))


def _vector(treatments: Sequence[str], a: str, b: str) -> Tuple[int, int]:
    return treatments.index(a), treatments.index(b)


def _pair(treatments: Sequence[str], vector: Sequence[int]) -> Tuple[str, str]:
    return treatments[vector[0]], treatments[vector[1]]


def lemma_harness(L: int, relations: Optional[Sequence[BinaryRelation]] = None, sample: int = 50,
                  seed: int = 0) -> Dict[str, Any]:
    """
    Check the submonotonicity lemma by enumeration over latent preference types

    Args:
        L: Number of treatments (at most 4)
        relations: Relations to check; defaults to every relation for L <= 3
                   and `sample` random relations for L = 4
        sample: Random relations drawn when L = 4
        seed: Seed for the random relations

    Returns:
        Report with one pass/fail tally per lemma part and for minimality
    """
    if L < 1 or L > MAX_HARNESS_TREATMENTS:
        raise ValidationError(f"lemma_harness supports 1 <= L <= {MAX_HARNESS_TREATMENTS}, got {L}")
    treatments = tuple(f"x{l}" for l in range(L))
    if relations is None:
        relations = (list(all_relations(treatments)) if L <= FULL_ENUMERATION_MAX
                     else random_relations(treatments, sample, seed))
    else:
        treatments = relations[0].treatments if relations else treatments
        if len(treatments) != L:
            raise ValidationError("Relations do not match L")

    latent = all_latent_types(treatments)
    tallies = {part: _PartTally() for part in ('1', '2', '3', '4', '5', '6', 'minimality')}
    minimality = L <= FULL_ENUMERATION_MAX
    for rel in relations:
        _check_relation(rel, latent, tallies, minimality)

    passed = all(t.passed for t in tallies.values())
    logger.info(f"Submonotonicity harness L={L}: {len(relations)} relations, "
                f"{'passed' if passed else 'FAILED'}")
    return {
        'L': L,
        'relations_checked': len(relations),
        'latent_types': len(latent),
        'parts': {part: tally.to_dict() for part, tally in tallies.items()},
        'minimality_checked': minimality,
        'note': "Ruled-out types are read as the forbidden set (p = 0 on every ruled-out type)",
        'passed': passed,
    }
