"""
Overlap of sub-densities across instrument values

psi is the binwise minimum of the sub-densities of one treatment over a set of
instrument values; Psi is its total mass. Psi bounds the share of units that take
the treatment at every instrument value in the set.
"""

import logging
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations
from math import comb
from typing import Any, Dict, Iterable, List, Optional, Tuple

from ivfalsify.obs_model import ObservedDistribution
from ivfalsify.utils.errors import CapExceededError, ValidationError

logger = logging.getLogger(__name__)

MAX_INSTRUMENTS = 12
DEFAULT_SUBSET_CAP = 2 ** 12
MAX_DUALITY_BINS = 12


@dataclass(frozen=True)
class PsiEntry:
    treatment: str
    instruments: Tuple[str, ...]
    psi_vector: Tuple[Fraction, ...]
    psi_mass: Fraction

    def to_dict(self) -> Dict[str, Any]:
        return {
            'treatment': self.treatment,
            'instruments': list(self.instruments),
            'psi_vector': list(self.psi_vector),
            'psi_mass': self.psi_mass,
        }


class PsiTable:
    """Psi entries keyed by (treatment, instrument subset in support order)"""

    def __init__(self, d: ObservedDistribution, entries: Dict[Tuple[str, Tuple[str, ...]], PsiEntry]):
        self.support = d.support
        self.entries = entries

    def _key(self, x: str, zsub: Iterable[str]) -> Tuple[str, Tuple[str, ...]]:
        ordered = tuple(sorted({str(z) for z in zsub}, key=self.support.instrument_index))
        return str(x), ordered

    def get(self, x: str, zsub: Iterable[str]) -> PsiEntry:
        key = self._key(x, zsub)
        if key not in self.entries:
            raise ValidationError(f"No Psi entry for treatment {key[0]} and instruments {list(key[1])}")
        return self.entries[key]

    def mass(self, x: str, zsub: Iterable[str]) -> Fraction:
        return self.get(x, zsub).psi_mass

    def covers(self, x: str, zsub: Iterable[str]) -> bool:
        return self._key(x, zsub) in self.entries

    def subsets(self) -> List[Tuple[str, ...]]:
        """Instrument subsets present, in table order without repeats"""
        seen = []
        for _, zsub in self.entries:
            if zsub not in seen:
                seen.append(zsub)
        return seen

    def pair_masses(self) -> Tuple[Fraction, ...]:
        """Psi over the full instrument support, per treatment (binary-instrument view)"""
        everything = self.support.instruments
        return tuple(self.mass(x, everything) for x in self.support.treatments)

    def __len__(self) -> int:
        return len(self.entries)

    def to_report(self) -> List[Dict[str, Any]]:
        return [entry.to_dict() for entry in self.entries.values()]


def _instrument_indices(d: ObservedDistribution, zsub: Iterable[str]) -> List[int]:
    indices = sorted({d.support.instrument_index(z) for z in zsub})
    if len(indices) < 2:
        raise ValidationError("Instrument subset must contain at least two values")
    return indices


def pointwise_min(d: ObservedDistribution, x: str, zsub: Iterable[str]) -> Tuple[Fraction, ...]:
    """
    Binwise minimum of the sub-densities of treatment x over the instrument subset

    Args:
        d: Observed distribution
        x: Treatment label
        zsub: Instrument labels (at least two)

    Returns:
        psi vector, one exact entry per outcome bin
    """
    l = d.support.treatment_index(x)
    ks = _instrument_indices(d, zsub)
    return tuple(min(d.subdensity[k][l][b] for k in ks) for b in range(d.B))


def psi_mass(d: ObservedDistribution, x: str, zsub: Iterable[str]) -> Fraction:
    """Total mass of the binwise minimum"""
    return sum(pointwise_min(d, x, zsub), Fraction(0))


def count_subsets(K: int, max_subset_size: int) -> int:
    return sum(comb(K, size) for size in range(2, max_subset_size + 1))


def psi_table(d: ObservedDistribution, max_subset_size: Optional[int] = None,
              subset_cap: int = DEFAULT_SUBSET_CAP, allow_large: bool = False) -> PsiTable:
    """
    Compute psi and Psi for every treatment and instrument subset of size 2..max_subset_size

    Args:
        d: Observed distribution
        max_subset_size: Largest subset size (defaults to K)
        subset_cap: Refuse more subsets than this per treatment
        allow_large: Lift the instrument and subset caps

    Returns:
        PsiTable ordered by subset size, then lexicographically in support order
    """
    K = d.K
    size = K if max_subset_size is None else int(max_subset_size)
    if size < 2 or size > K:
        raise ValidationError(f"max_subset_size must lie in [2, {K}], got {size}")

    n_subsets = count_subsets(K, size)
    if not allow_large:
        if K > MAX_INSTRUMENTS:
            raise CapExceededError(f"{K} instrument values exceed the cap of {MAX_INSTRUMENTS}",
                                   details={'instruments': K, 'cap': MAX_INSTRUMENTS})
        if n_subsets > subset_cap:
            raise CapExceededError(f"{n_subsets} instrument subsets exceed the cap of {subset_cap}",
                                   details={'subsets': n_subsets, 'cap': subset_cap})

    entries = {}
    for subset_size in range(2, size + 1):
        for zsub in combinations(d.support.instruments, subset_size):
            for x in d.support.treatments:
                vector = pointwise_min(d, x, zsub)
                entries[(x, zsub)] = PsiEntry(
                    treatment=x,
                    instruments=zsub,
                    psi_vector=vector,
                    psi_mass=sum(vector, Fraction(0)),
                )

    logger.debug(f"Computed {len(entries)} Psi entries ({n_subsets} subsets x {d.L} treatments)")
    return PsiTable(d, entries)


def max_subset_difference(d: ObservedDistribution, x: str, z_from: Optional[str] = None,
                          z_to: Optional[str] = None) -> Tuple[Fraction, Tuple[str, ...]]:
    """
    Largest difference P[Y in B, X=x | z_from] - P[Y in B, X=x | z_to] over bin unions B

    Searches all 2^B unions by brute force; the optimum equals
    P[X=x | z_from] - Psi_x, which audits the binwise minimum.

    Returns:
        (value, bin labels of a maximizing union)
    """
    s = d.support
    if d.B > MAX_DUALITY_BINS:
        raise CapExceededError(f"{d.B} bins exceed the brute-force cap of {MAX_DUALITY_BINS}")
    z_from = z_from if z_from is not None else s.instruments[0]
    z_to = z_to if z_to is not None else s.instruments[1]
    upper, lower = d.phi(z_from, x), d.phi(z_to, x)

    best_value, best_union = Fraction(0), ()
    for size in range(1, d.B + 1):
        for union in combinations(range(d.B), size):
            value = sum((upper[b] - lower[b] for b in union), Fraction(0))
            if value > best_value:
                best_value, best_union = value, union
    return best_value, tuple(s.bin_labels[b] for b in best_union)


def kitagawa_check(d: ObservedDistribution) -> List[Dict[str, Any]]:
    """
    Per-bin inequalities a valid binary instrument with no defiers must satisfy

    For the lower treatment: P[Y in b, X=x0 | z1] <= P[Y in b, X=x0 | z0].
    For the upper treatment: P[Y in b, X=x1 | z0] <= P[Y in b, X=x1 | z1].

    Returns:
        One record per (treatment, bin) with lhs, rhs, slack and a violated flag
    """
    s = d.support
    if s.L != 2 or s.K != 2:
        raise ValidationError("kitagawa_check needs binary treatment and binary instrument")

    records = []
    for l, (small, large) in enumerate(((1, 0), (0, 1))):
        for b, label in enumerate(s.bin_labels):
            lhs = d.subdensity[small][l][b]
            rhs = d.subdensity[large][l][b]
            records.append({
                'treatment': s.treatments[l],
                'bin': label,
                'lhs_instrument': s.instruments[small],
                'rhs_instrument': s.instruments[large],
                'lhs': lhs,
                'rhs': rhs,
                'slack': rhs - lhs,
                'violated': lhs > rhs,
            })
    return records


def summarize(table: PsiTable) -> Dict[str, Any]:
    """Report section: the bin algebra the overlaps are computed on, plus entries"""
    return {
        'bins': list(table.support.bin_labels),
        'entries': table.to_report(),
    }
