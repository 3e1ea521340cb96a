"""
Forward simulation from explicit response-type data generating processes

Each type fixes the treatment taken at every instrument value and one outcome
bin per treatment. Exclusion breaks override the outcome bin for units taking a
treatment at a given instrument value.
"""

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from math import lcm
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from ivfalsify.obs_model import ObservedDistribution, OutcomeBin, Support, from_joint_table
from ivfalsify.typespace import RestrictionSpec, expand_restriction, space_for
from ivfalsify.utils.errors import ValidationError
from ivfalsify.utils.rational import format_fraction, to_fraction

logger = logging.getLogger(__name__)

DEFAULT_WEIGHT_DENOMINATOR = 12
MAX_TYPES_PER_DGP = 6


@dataclass(frozen=True)
class DGPType:
    response: Tuple[str, ...]
    outcomes: Tuple[str, ...]
    weight: Fraction

    def to_dict(self, support: Support) -> Dict[str, Any]:
        return {
            'response': list(self.response),
            'outcomes': dict(zip(support.treatments, self.outcomes)),
            'weight': self.weight,
        }


@dataclass(frozen=True)
class DGPSpec:
    support: Support
    type_table: Tuple[DGPType, ...]
    exclusion_break: Dict[Tuple[str, str], str] = field(default_factory=dict)
    instrument_law: Optional[Tuple[Fraction, ...]] = None
    per_instrument_types: Dict[str, Tuple[DGPType, ...]] = field(default_factory=dict)
    name: str = 'custom'

    def __post_init__(self):
        s = self.support
        self._check_table(self.type_table)
        for z, table in self.per_instrument_types.items():
            s.instrument_index(z)
            self._check_table(table)
        for (x, z), label in self.exclusion_break.items():
            s.treatment_index(x)
            s.instrument_index(z)
            s.bin_index(label)
        if self.instrument_law is not None:
            if len(self.instrument_law) != s.K or any(w < 0 for w in self.instrument_law) \
                    or sum(self.instrument_law) != 1:
                raise ValidationError("instrument_law must give one non-negative weight per instrument, summing to 1")

    def _check_table(self, table: Sequence[DGPType]):
        s = self.support
        if not table:
            raise ValidationError("DGP type table is empty")
        for t in table:
            if len(t.response) != s.K or len(t.outcomes) != s.L:
                raise ValidationError(f"DGP type {t.response} does not match the supports")
            for x in t.response:
                s.treatment_index(x)
            for label in t.outcomes:
                s.bin_index(label)
            if t.weight < 0:
                raise ValidationError("DGP type weights must be non-negative")
        if sum((t.weight for t in table), Fraction(0)) != 1:
            raise ValidationError("DGP type weights must sum to 1")

    def true_weights(self) -> Dict[Tuple[int, ...], Fraction]:
        """Weights aggregated by instrument-response type (as treatment indices)"""
        weights = {}
        for t in self.type_table:
            key = tuple(self.support.treatment_index(x) for x in t.response)
            weights[key] = weights.get(key, Fraction(0)) + t.weight
        return weights


def generate_observed(dgp: DGPSpec) -> ObservedDistribution:
    """Exact forward map from the type table to P[X=x, Y in bin | Z=z]"""
    s = dgp.support
    cells: Dict[Tuple[str, str, str], Fraction] = {}
    for k, z in enumerate(s.instruments):
        for t in dgp.per_instrument_types.get(z, dgp.type_table):
            if not t.weight:
                continue
            x = t.response[k]
            label = dgp.exclusion_break.get((x, z), t.outcomes[s.treatment_index(x)])
            cells[(z, x, label)] = cells.get((z, x, label), Fraction(0)) + t.weight

    return from_joint_table(
        [(z, x, b, p) for (z, x, b), p in cells.items()],
        support=s,
        instrument_mass=dgp.instrument_law,
    )


def appendix_b_support() -> Support:
    return Support(
        outcome_bins=(OutcomeBin('0', Fraction(0), Fraction(1, 2)), OutcomeBin('1', Fraction(1, 2), Fraction(1))),
        treatments=('x0', 'x1', 'x2'),
        instruments=('z0', 'z1'),
        ordered=True,
    )


def appendix_b_dgp() -> DGPSpec:
    """
    Three ordered treatments, binary outcome and instrument:
    half the units are (x0, x1), a quarter (x1, x2) and a quarter (x2, x2);
    Y(x0) = 0, Y(x1) = Y(x2) = 1
    """
    outcomes = ('0', '1', '1')
    return DGPSpec(
        support=appendix_b_support(),
        type_table=(
            DGPType(('x0', 'x1'), outcomes, Fraction(1, 2)),
            DGPType(('x1', 'x2'), outcomes, Fraction(1, 4)),
            DGPType(('x2', 'x2'), outcomes, Fraction(1, 4)),
        ),
        instrument_law=(Fraction(1, 2), Fraction(1, 2)),
        name='appendix-b',
    )


def appendix_b_exclusion_break(treatment: str = 'x2', instrument: str = 'z1', label: str = '0') -> DGPSpec:
    """The same population, but units taking `treatment` at `instrument` land in `label`"""
    base = appendix_b_dgp()
    return DGPSpec(
        support=base.support,
        type_table=base.type_table,
        exclusion_break={(treatment, instrument): label},
        instrument_law=base.instrument_law,
        name='appendix-b-exclusion-break',
    )


DGP_PRESETS = {
    'appendix-b': appendix_b_dgp,
    'appendix-b-exclusion-break': appendix_b_exclusion_break,
}


def synthetic_support(L: int, K: int, bins: int) -> Support:
    return Support(
        outcome_bins=tuple(OutcomeBin(f"b{b}") for b in range(bins)),
        treatments=tuple(f"x{l}" for l in range(L)),
        instruments=tuple(f"z{k}" for k in range(K)),
        ordered=True,
    )


def _random_weights(rng: np.random.Generator, count: int, denominator: int) -> List[Fraction]:
    raw = [int(v) for v in rng.integers(1, denominator + 1, size=count)]
    total = sum(raw)
    return [Fraction(v, total) for v in raw]


def random_valid_dgp(seed: int, L: int, K: int, bins: int,
                     restriction: Union[RestrictionSpec, Dict[str, Any], None] = None,
                     cap: int = 4096, denominator: int = DEFAULT_WEIGHT_DENOMINATOR) -> DGPSpec:
    """
    Draw a DGP that satisfies the restriction and the exclusion restriction

    Args:
        seed: Generator seed; equal seeds give equal specs
        L, K, bins: Support sizes
        restriction: RestrictionSpec or a `restriction` document section
        cap: Type-space cap
        denominator: Bound on the raw integer weights

    Returns:
        DGPSpec supported on allowed types only
    """
    rng = np.random.default_rng(seed)
    support = synthetic_support(L, K, bins)
    ts = space_for(support, cap)
    if restriction is None or isinstance(restriction, dict):
        restriction = expand_restriction(restriction, ts, ordered=True)
    if restriction.extra_rows:
        raise ValidationError("random_valid_dgp supports ruled-out restrictions only")

    allowed = [v for v in ts.vectors() if restriction.allows(v)]
    if not allowed:
        raise ValidationError("Restriction rules out every instrument-response type")

    count = int(rng.integers(1, min(len(allowed), MAX_TYPES_PER_DGP) + 1))
    chosen = sorted(int(i) for i in rng.choice(len(allowed), size=count, replace=False))
    weights = _random_weights(rng, count, denominator)

    table = []
    for i, weight in zip(chosen, weights):
        outcomes = tuple(f"b{int(b)}" for b in rng.integers(0, bins, size=L))
        table.append(DGPType(tuple(ts.treatments[t] for t in allowed[i]), outcomes, weight))

    return DGPSpec(support=support, type_table=tuple(table), name=f"random-{seed}")


def random_observed_distribution(seed: int, L: int, K: int, bins: int, denominator: int = 4) -> ObservedDistribution:
    """An arbitrary law: each instrument stratum spreads `denominator` units uniformly over cells"""
    rng = np.random.default_rng(seed)
    support = synthetic_support(L, K, bins)
    cells = []
    for z in support.instruments:
        counts = rng.multinomial(denominator, [1.0 / (L * bins)] * (L * bins))
        for i, n in enumerate(counts):
            if n:
                l, b = divmod(i, bins)
                cells.append((z, support.treatments[l], support.bin_labels[b], Fraction(int(n), denominator)))
    return from_joint_table(cells, support=support)


def _outcome_value(s: Support, b: int) -> str:
    """The bin label, or the lower bound when the label does not place into its own bin"""
    label = s.bin_labels[b]
    try:
        if s.bin_for_value(label) == b:
            return label
    except ValidationError:
        pass
    return format_fraction(s.outcome_bins[b].lower)


def realize_records(d: ObservedDistribution) -> List[Tuple[str, str, str]]:
    """
    Smallest record multiset whose empirical law is exactly d

    Outcomes are written as bin labels, or as the lower bound of a bounded
    bin whose label reads as a number outside it. Without an instrument law the
    instrument values are taken as equally likely.
    """
    s = d.support
    mass = d.instrument_mass or tuple(Fraction(1, s.K) for _ in range(s.K))
    joint = {(k, l, b): mass[k] * d.subdensity[k][l][b]
             for k in range(s.K) for l in range(s.L) for b in range(s.B)}
    n = lcm(*(v.denominator for v in list(joint.values()) + list(mass)))
    outcomes = [_outcome_value(s, b) for b in range(s.B)]

    records = []
    for (k, l, b), v in joint.items():
        records.extend([(outcomes[b], s.treatments[l], s.instruments[k])] * int(v * n))
    logger.debug(f"Realized {len(records)} records")
    return records


def _types_from_document(entries: Sequence[Dict[str, Any]], support: Support) -> Tuple[DGPType, ...]:
    table = []
    for entry in entries:
        outcomes = entry.get('outcomes')
        if isinstance(outcomes, dict):
            outcomes = [outcomes[x] for x in support.treatments]
        table.append(DGPType(
            response=tuple(str(x) for x in entry['response']),
            outcomes=tuple(str(b) for b in outcomes),
            weight=to_fraction(entry['weight']),
        ))
    return tuple(table)


def dgp_from_document(doc: Dict[str, Any]) -> DGPSpec:
    """Read a DGP from a config document (or a `preset` name)"""
    if not isinstance(doc, dict):
        raise ValidationError("DGP document must be a mapping")
    if doc.get('preset'):
        preset = str(doc['preset'])
        if preset not in DGP_PRESETS:
            raise ValidationError(f"Unknown DGP preset: {preset}", details={'presets': sorted(DGP_PRESETS)})
        return DGP_PRESETS[preset]()

    try:
        support = Support.from_document(doc['support'])
        table = _types_from_document(doc['types'], support)
        breaks = {(str(e['treatment']), str(e['instrument'])): str(e['bin'])
                  for e in doc.get('exclusion_break') or []}
        per_instrument = {str(z): _types_from_document(entries, support)
                          for z, entries in (doc.get('per_instrument_types') or {}).items()}
    except (KeyError, TypeError) as e:
        raise ValidationError(f"Malformed DGP document: missing {e}")

    law = doc.get('instrument_law')
    if isinstance(law, dict):
        law = [law[z] for z in support.instruments]
    return DGPSpec(
        support=support,
        type_table=table,
        exclusion_break=breaks,
        instrument_law=tuple(to_fraction(w) for w in law) if law else None,
        per_instrument_types=per_instrument,
        name=str(doc.get('name', 'custom')),
    )


def dgp_to_document(dgp: DGPSpec) -> Dict[str, Any]:
    s = dgp.support
    doc = {
        'name': dgp.name,
        'support': s.to_dict(),
        'types': [t.to_dict(s) for t in dgp.type_table],
    }
    if dgp.instrument_law is not None:
        doc['instrument_law'] = dict(zip(s.instruments, dgp.instrument_law))
    if dgp.exclusion_break:
        doc['exclusion_break'] = [{'treatment': x, 'instrument': z, 'bin': b}
                                  for (x, z), b in dgp.exclusion_break.items()]
    if dgp.per_instrument_types:
        doc['per_instrument_types'] = {z: [t.to_dict(s) for t in table]
                                       for z, table in dgp.per_instrument_types.items()}
    return doc
