"""
Instrument-response types and the row blocks of the consistency/restriction systems

A type lists the treatment a unit takes at each instrument value. Types are
indexed lexicographically with the first instrument value as the most
significant digit and the treatment index as the digit value.
"""

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from typing import Any, Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

from ivfalsify.obs_model import ObservedDistribution, Support
from ivfalsify.psi import PsiTable
from ivfalsify.utils.errors import CapExceededError, ValidationError
from ivfalsify.utils.rational import to_fraction

logger = logging.getLogger(__name__)

DEFAULT_TYPE_CAP = 4096

TypeVector = Tuple[int, ...]

PRESETS = {
    'none': "No restriction on instrument-response types",
    'no-defiers': "Binary treatment: nobody switches from x1 to x0 as the instrument increases",
    'ordered-monotone': "Declared treatment order: treatment never decreases as the instrument increases",
    'unordered-monotone': "Promoted set S: only moves from outside S into S are allowed",
    'compliers-exceed-defiers': "L=K=2 frequency row: P[defier] <= P[complier]",
    'experimentation-cycle': "L=3, K=2: forbids the cyclic switches x0->x1, x1->x2, x2->x0",
    'custom': "Only the ruled_out types and rows given in the document",
}


@dataclass(frozen=True)
class TypeSpace:
    L: int
    K: int
    treatments: Tuple[str, ...]
    instruments: Tuple[str, ...]

    @property
    def size(self) -> int:
        return self.L ** self.K

    def vector_of(self, index: int) -> TypeVector:
        if not 0 <= index < self.size:
            raise ValidationError(f"Type index {index} out of range [0, {self.size})")
        digits = []
        for _ in range(self.K):
            index, digit = divmod(index, self.L)
            digits.append(digit)
        return tuple(reversed(digits))

    def index_of(self, vector: Sequence[int]) -> int:
        if len(vector) != self.K or any(not 0 <= t < self.L for t in vector):
            raise ValidationError(f"Invalid type vector {tuple(vector)} for L={self.L}, K={self.K}")
        index = 0
        for t in vector:
            index = index * self.L + t
        return index

    def vectors(self) -> Iterable[TypeVector]:
        return product(range(self.L), repeat=self.K)

    def name(self, vector_or_index) -> str:
        vector = self.vector_of(vector_or_index) if isinstance(vector_or_index, int) else vector_or_index
        return "(" + ",".join(self.treatments[t] for t in vector) + ")"

    def parse_vector(self, raw: Any) -> TypeVector:
        """Read a type from a label list or a "x1,x0" / "(x1,x0)" string"""
        if isinstance(raw, str):
            labels = [part.strip() for part in raw.strip().strip('()').split(',')]
        elif isinstance(raw, (list, tuple)):
            labels = [str(part).strip() for part in raw]
        else:
            raise ValidationError(f"Cannot read a type from {raw!r}")
        if len(labels) != self.K:
            raise ValidationError(f"Type {raw!r} needs {self.K} entries")
        try:
            return tuple(self.treatments.index(label) for label in labels)
        except ValueError:
            raise ValidationError(f"Type {raw!r} uses an unknown treatment label")


def enumerate_types(L: int, K: int, cap: int = DEFAULT_TYPE_CAP,
                    treatments: Optional[Sequence[str]] = None,
                    instruments: Optional[Sequence[str]] = None) -> TypeSpace:
    """
    Canonical enumeration of the L^K instrument-response types

    Args:
        L: Number of treatments
        K: Number of instrument values
        cap: Refuse spaces with more types than this

    Returns:
        TypeSpace
    """
    if L < 1 or K < 1:
        raise ValidationError("L and K must be positive")
    if L ** K > cap:
        raise CapExceededError(f"L^K = {L ** K} types exceed the cap of {cap}",
                               details={'types': L ** K, 'cap': cap})
    treatments = tuple(treatments) if treatments else tuple(f"x{l}" for l in range(L))
    instruments = tuple(instruments) if instruments else tuple(f"z{k}" for k in range(K))
    if len(treatments) != L or len(instruments) != K:
        raise ValidationError("Label lists do not match L and K")
    return TypeSpace(L=L, K=K, treatments=treatments, instruments=instruments)


def space_for(support: Support, cap: int = DEFAULT_TYPE_CAP) -> TypeSpace:
    return enumerate_types(support.L, support.K, cap, support.treatments, support.instruments)


@dataclass(frozen=True)
class TypeDistribution:
    space: TypeSpace
    probs: Tuple[Fraction, ...]

    def __post_init__(self):
        if len(self.probs) != self.space.size:
            raise ValidationError("Type distribution length does not match the type space")
        if any(p < 0 for p in self.probs):
            raise ValidationError("Type probabilities must be non-negative")
        if sum(self.probs) != 1:
            raise ValidationError("Type probabilities must sum to 1")

    def mass(self, vector: Sequence[int]) -> Fraction:
        return self.probs[self.space.index_of(vector)]

    def support_vectors(self) -> List[TypeVector]:
        return [self.space.vector_of(j) for j, p in enumerate(self.probs) if p > 0]

    @classmethod
    def from_weights(cls, space: TypeSpace, weights: Dict[TypeVector, Fraction]) -> 'TypeDistribution':
        probs = [Fraction(0)] * space.size
        for vector, weight in weights.items():
            probs[space.index_of(vector)] += to_fraction(weight)
        return cls(space=space, probs=tuple(probs))

    def to_dict(self) -> Dict[str, Fraction]:
        return {self.space.name(j): p for j, p in enumerate(self.probs) if p}


@dataclass(frozen=True)
class RowBlock:
    """Stacked rows A p (=|<=) rhs with one provenance name per row"""

    kind: str
    matrix: Tuple[Tuple[Fraction, ...], ...]
    rhs: Tuple[Fraction, ...]
    names: Tuple[str, ...]

    def __len__(self) -> int:
        return len(self.rhs)


@dataclass(frozen=True)
class RestrictionSpec:
    """
    Forbidden instrument-response types plus optional frequency rows (coeffs . p <= rhs)

    Ruled-out types are stored as the forbidden set; the allowed set is its complement.
    """

    ruled_out: FrozenSet[TypeVector] = frozenset()
    extra_rows: Tuple[Tuple[Tuple[Fraction, ...], Fraction], ...] = ()
    preset: str = 'none'
    promoted: Tuple[str, ...] = ()
    no_always_takers: Tuple[str, ...] = ()
    row_names: Tuple[str, ...] = field(default=())

    def validate(self, ts: TypeSpace):
        for vector in self.ruled_out:
            ts.index_of(vector)
        for coeffs, _ in self.extra_rows:
            if len(coeffs) != ts.size:
                raise ValidationError(
                    f"Restriction row has {len(coeffs)} coefficients, expected {ts.size}")

    def allows(self, vector: Sequence[int]) -> bool:
        return tuple(vector) not in self.ruled_out

    def forbidden_pairs(self, ts: TypeSpace) -> FrozenSet[Tuple[str, str]]:
        """Binary instruments: ruled-out switches (a at z0, b at z1) as label pairs"""
        if ts.K != 2:
            raise ValidationError("Switch pairs are defined for binary instruments only")
        return frozenset((ts.treatments[a], ts.treatments[b]) for a, b in self.ruled_out)

    def to_dict(self, ts: TypeSpace) -> Dict[str, Any]:
        doc = {
            'preset': self.preset,
            'ruled_out': sorted(ts.name(v) for v in self.ruled_out),
        }
        if self.promoted:
            doc['promoted'] = list(self.promoted)
        if self.no_always_takers:
            doc['no_always_takers'] = list(self.no_always_takers)
        if self.extra_rows:
            doc['rows'] = [
                {'coefficients': {ts.name(j): c for j, c in enumerate(coeffs) if c}, 'rhs': rhs}
                for coeffs, rhs in self.extra_rows
            ]
        return doc


def _switch_forbidden(ts: TypeSpace, vector: TypeVector, pairs: FrozenSet[Tuple[int, int]]) -> bool:
    return any((vector[k], vector[k2]) in pairs for k in range(ts.K) for k2 in range(k + 1, ts.K))


def _preset_pairs(preset: str, ts: TypeSpace, ordered: bool, promoted: Sequence[str]) -> FrozenSet[Tuple[int, int]]:
    L = ts.L
    if preset in ('none', 'custom', 'compliers-exceed-defiers'):
        return frozenset()
    if preset == 'no-defiers':
        if L != 2:
            raise ValidationError("The no-defiers preset needs a binary treatment")
        return frozenset({(1, 0)})
    if preset == 'ordered-monotone':
        if not ordered:
            raise ValidationError("The ordered-monotone preset needs a declared treatment order")
        return frozenset((a, b) for a in range(L) for b in range(L) if a > b)
    if preset == 'unordered-monotone':
        if not promoted:
            raise ValidationError("The unordered-monotone preset needs a promoted treatment set")
        inside = {ts.treatments.index(x) for x in promoted if x in ts.treatments}
        if len(inside) != len(set(promoted)):
            raise ValidationError(f"Promoted set {list(promoted)} uses unknown treatment labels")
        return frozenset(
            (a, b) for a in range(L) for b in range(L)
            if a != b and ((a in inside) == (b in inside) or a in inside)
        )
    if preset == 'experimentation-cycle':
        if L != 3 or ts.K != 2:
            raise ValidationError("The experimentation-cycle preset needs L=3 and K=2")
        return frozenset({(0, 1), (1, 2), (2, 0)})
    raise ValidationError(f"Unknown restriction preset: {preset!r}", details={'presets': sorted(PRESETS)})


def expand_restriction(section: Optional[Dict[str, Any]], ts: TypeSpace, ordered: bool = False) -> RestrictionSpec:
    """
    Expand the `restriction` section of a run document into a RestrictionSpec

    Preset switches are forbidden between every earlier and later instrument value;
    `ruled_out`, `rows` and `no_always_takers` add to the preset.

    Args:
        section: Mapping with preset, promoted, ruled_out, rows, no_always_takers
        ts: Type space the restriction applies to
        ordered: Whether the treatment list follows a declared order

    Returns:
        RestrictionSpec
    """
    if section is None:
        section = {}
    if not isinstance(section, dict):
        raise ValidationError(f"restriction must be a mapping such as {{preset: ...}}, got {section!r}")
    preset = str(section.get('preset') or 'none')
    promoted = tuple(str(x) for x in section.get('promoted') or ())
    pairs = _preset_pairs(preset, ts, ordered, promoted)

    ruled_out = {v for v in ts.vectors() if _switch_forbidden(ts, v, pairs)}
    for raw in section.get('ruled_out') or []:
        ruled_out.add(ts.parse_vector(raw))

    no_always_takers = tuple(str(x) for x in section.get('no_always_takers') or ())
    for x in no_always_takers:
        if x not in ts.treatments:
            raise ValidationError(f"Unknown treatment in no_always_takers: {x}")
        ruled_out.add((ts.treatments.index(x),) * ts.K)

    rows, names = [], []
    if preset == 'compliers-exceed-defiers':
        if ts.L != 2 or ts.K != 2:
            raise ValidationError("The compliers-exceed-defiers preset needs L=2 and K=2")
        coeffs = [Fraction(0)] * ts.size
        coeffs[ts.index_of((1, 0))] = Fraction(1)
        coeffs[ts.index_of((0, 1))] = Fraction(-1)
        rows.append((tuple(coeffs), Fraction(0)))
        names.append("frequency[defiers<=compliers]")

    for i, raw in enumerate(section.get('rows') or []):
        if not isinstance(raw, dict) or 'coefficients' not in raw:
            raise ValidationError(f"Restriction row {i} needs a coefficients mapping")
        coeffs = [Fraction(0)] * ts.size
        entries = raw['coefficients']
        if isinstance(entries, dict):
            for key, value in entries.items():
                coeffs[ts.index_of(ts.parse_vector(key))] = to_fraction(value)
        else:
            if len(entries) != ts.size:
                raise ValidationError(f"Restriction row {i} has {len(entries)} coefficients, expected {ts.size}")
            coeffs = [to_fraction(value) for value in entries]
        rows.append((tuple(coeffs), to_fraction(raw.get('rhs', 0))))
        names.append(str(raw.get('name') or f"frequency[{i}]"))

    spec = RestrictionSpec(
        ruled_out=frozenset(ruled_out),
        extra_rows=tuple(rows),
        preset=preset,
        promoted=promoted,
        no_always_takers=no_always_takers,
        row_names=tuple(names),
    )
    spec.validate(ts)
    logger.debug(f"Restriction {preset}: {len(spec.ruled_out)} ruled-out types, {len(rows)} extra rows")
    return spec


def _check_dimensions(d: ObservedDistribution, ts: TypeSpace):
    if d.L != ts.L or d.K != ts.K:
        raise ValidationError(
            f"Type space (L={ts.L}, K={ts.K}) does not match the distribution (L={d.L}, K={d.K})")


def build_consistency_system(d: ObservedDistribution, ts: TypeSpace) -> RowBlock:
    """
    Consistency rows A_X p = r_X and the adding-up row

    Row (k, l) selects the types taking x_l at z_k; its rhs is P[X=x_l | Z=z_k].
    """
    _check_dimensions(d, ts)
    vectors = list(ts.vectors())
    matrix, rhs, names = [], [], []
    for k in range(ts.K):
        for l in range(ts.L):
            matrix.append(tuple(Fraction(1) if v[k] == l else Fraction(0) for v in vectors))
            rhs.append(d.cond_treatment[k][l])
            names.append(f"consistency[{ts.instruments[k]},{ts.treatments[l]}]")
    matrix.append(tuple(Fraction(1) for _ in vectors))
    rhs.append(Fraction(1))
    names.append("adding-up")
    return RowBlock(kind='consistency', matrix=tuple(matrix), rhs=tuple(rhs), names=tuple(names))


def build_restriction_rows(spec: RestrictionSpec, ts: TypeSpace) -> RowBlock:
    """Rows e_j p <= 0 and -e_j p <= 0 per ruled-out type, then the extra frequency rows"""
    spec.validate(ts)
    matrix, rhs, names = [], [], []
    for j in sorted(ts.index_of(v) for v in spec.ruled_out):
        for sign, tag in ((1, ''), (-1, '-')):
            row = [Fraction(0)] * ts.size
            row[j] = Fraction(sign)
            matrix.append(tuple(row))
            rhs.append(Fraction(0))
            names.append(f"ruled-out[{tag}{ts.name(j)}]")
    for i, (coeffs, bound) in enumerate(spec.extra_rows):
        matrix.append(tuple(coeffs))
        rhs.append(bound)
        names.append(spec.row_names[i] if i < len(spec.row_names) else f"frequency[{i}]")
    return RowBlock(kind='restriction', matrix=tuple(matrix), rhs=tuple(rhs), names=tuple(names))


def build_always_taker_rows(ts: TypeSpace, psi: PsiTable) -> RowBlock:
    """Binary instrument: p(x_l, x_l) <= Psi_{x_l} for every treatment"""
    if ts.K != 2:
        raise ValidationError("Always-taker rows need a binary instrument")
    matrix, rhs, names = [], [], []
    for l, x in enumerate(ts.treatments):
        row = [Fraction(0)] * ts.size
        row[ts.index_of((l, l))] = Fraction(1)
        matrix.append(tuple(row))
        rhs.append(psi.mass(x, ts.instruments))
        names.append(f"always-taker[{x}]")
    return RowBlock(kind='always-taker', matrix=tuple(matrix), rhs=tuple(rhs), names=tuple(names))


def build_sufficient_taker_rows(ts: TypeSpace, psi: PsiTable,
                                subsets: Optional[Sequence[Sequence[str]]] = None) -> RowBlock:
    """
    Rows for units that take x_l whenever Z lies in the instrument subset

    Row (x_l, Zsub) selects every type with t(z_k) = x_l for all z_k in Zsub;
    its rhs is Psi_{x_l, Zsub}.
    """
    subsets = [tuple(z) for z in subsets] if subsets is not None else psi.subsets()
    vectors = list(ts.vectors())
    matrix, rhs, names = [], [], []
    for zsub in subsets:
        ks = [ts.instruments.index(z) for z in zsub]
        for l, x in enumerate(ts.treatments):
            bound = psi.mass(x, zsub)
            matrix.append(tuple(Fraction(1) if all(v[k] == l for k in ks) else Fraction(0) for v in vectors))
            rhs.append(bound)
            names.append(f"sufficient-taker[{x}|{','.join(zsub)}]")
    return RowBlock(kind='sufficient-taker', matrix=tuple(matrix), rhs=tuple(rhs), names=tuple(names))
