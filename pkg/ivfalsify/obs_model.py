"""
Observed joint distribution of (outcome, treatment, instrument) on finite supports
Builds exact-rational laws from explicit tables, record files and config documents
"""

import logging
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import pandas as pd

from ivfalsify.utils.errors import ValidationError
from ivfalsify.utils.rational import format_fraction, to_fraction

logger = logging.getLogger(__name__)

Cell = Tuple[str, str, str, Fraction]

BIN0 = "Bin0"
BIN1 = "Bin1"


@dataclass(frozen=True)
class OutcomeBin:
    """An outcome bin; numeric bins carry [lower, upper) bounds"""

    label: str
    lower: Optional[Fraction] = None
    upper: Optional[Fraction] = None

    @property
    def bounded(self) -> bool:
        return self.lower is not None and self.upper is not None

    def to_dict(self) -> Dict[str, Any]:
        if not self.bounded:
            return {'label': self.label}
        return {'label': self.label, 'lower': self.lower, 'upper': self.upper}


def _check_distinct(labels: Sequence[str], what: str):
    duplicates = [label for label, count in Counter(labels).items() if count > 1]
    if duplicates:
        raise ValidationError(f"Duplicate {what} labels: {duplicates}")


@dataclass(frozen=True)
class Support:
    """
    Finite supports of Y (as bins), X and Z

    `ordered` marks that `treatments` is listed in a declared total order,
    lowest first. Bins are left-closed, right-open except the last, which is closed.
    """

    outcome_bins: Tuple[OutcomeBin, ...]
    treatments: Tuple[str, ...]
    instruments: Tuple[str, ...]
    ordered: bool = False
    _treatment_pos: Dict[str, int] = field(default=None, init=False, repr=False, compare=False)
    _instrument_pos: Dict[str, int] = field(default=None, init=False, repr=False, compare=False)
    _bin_pos: Dict[str, int] = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(self.treatments) < 1:
            raise ValidationError("At least one treatment is required")
        if len(self.instruments) < 2:
            raise ValidationError("At least two instrument values are required")
        if len(self.outcome_bins) < 1:
            raise ValidationError("At least one outcome bin is required")
        _check_distinct(self.treatments, "treatment")
        _check_distinct(self.instruments, "instrument")
        _check_distinct([b.label for b in self.outcome_bins], "outcome bin")

        bounded = [b.bounded for b in self.outcome_bins]
        if any(bounded) and not all(bounded):
            raise ValidationError("Either every outcome bin carries bounds or none does")
        if all(bounded):
            for i, current in enumerate(self.outcome_bins):
                last = i == len(self.outcome_bins) - 1
                if current.lower > current.upper or (current.lower == current.upper and not last):
                    raise ValidationError(f"Empty interval for bin {current.label}")
                if not last and current.upper > self.outcome_bins[i + 1].lower:
                    raise ValidationError(
                        f"Bins {current.label} and {self.outcome_bins[i + 1].label} overlap or are out of order")

        object.__setattr__(self, '_treatment_pos', {x: i for i, x in enumerate(self.treatments)})
        object.__setattr__(self, '_instrument_pos', {z: i for i, z in enumerate(self.instruments)})
        object.__setattr__(self, '_bin_pos', {b.label: i for i, b in enumerate(self.outcome_bins)})

    @property
    def L(self) -> int:
        return len(self.treatments)

    @property
    def K(self) -> int:
        return len(self.instruments)

    @property
    def B(self) -> int:
        return len(self.outcome_bins)

    @property
    def bin_labels(self) -> Tuple[str, ...]:
        return tuple(b.label for b in self.outcome_bins)

    def treatment_index(self, label: str) -> int:
        try:
            return self._treatment_pos[str(label)]
        except KeyError:
            raise ValidationError(f"Unknown treatment label: {label!r}")

    def instrument_index(self, label: str) -> int:
        try:
            return self._instrument_pos[str(label)]
        except KeyError:
            raise ValidationError(f"Unknown instrument label: {label!r}")

    def bin_index(self, label: str) -> int:
        try:
            return self._bin_pos[str(label)]
        except KeyError:
            raise ValidationError(f"Unknown outcome bin label: {label!r}")

    def bin_for_value(self, y: Any) -> int:
        """
        Locate the bin for an outcome value or bin label

        With bounded bins a numeric outcome is placed by its interval, even
        when it spells another bin's label; labels are matched only for
        values that do not parse as numbers.
        """
        if self.outcome_bins[0].bounded:
            try:
                value = to_fraction(y)
            except ValidationError:
                value = None
            if value is not None:
                last = len(self.outcome_bins) - 1
                for i, b in enumerate(self.outcome_bins):
                    if b.lower <= value < b.upper or (i == last and b.lower <= value <= b.upper):
                        return i
                raise ValidationError(f"Outcome {y!r} lies outside all bins")

        if isinstance(y, str) and y.strip() in self._bin_pos:
            return self._bin_pos[y.strip()]
        raise ValidationError(f"Outcome {y!r} matches no bin label")

    def to_dict(self) -> Dict[str, Any]:
        doc = {
            'treatments': list(self.treatments),
            'instruments': list(self.instruments),
            'outcome_bins': [b.to_dict() for b in self.outcome_bins],
        }
        if self.ordered:
            doc['treatment_order'] = list(self.treatments)
        return doc

    @classmethod
    def from_document(cls, doc: Dict[str, Any]) -> 'Support':
        """
        Build a support from the `support` section of a config document

        Args:
            doc: Mapping with treatments, instruments, optional treatment_order and outcome_bins

        Returns:
            Support
        """
        if not isinstance(doc, dict):
            raise ValidationError("Support section must be a mapping")

        order = doc.get('treatment_order')
        treatments = [str(x) for x in doc.get('treatments') or order or []]
        if order is not None:
            order = [str(x) for x in order]
            if sorted(order) != sorted(treatments):
                raise ValidationError("treatment_order must list every treatment exactly once")
            treatments = order

        bins = []
        for entry in doc.get('outcome_bins') or []:
            if isinstance(entry, dict):
                lower = entry.get('lower')
                upper = entry.get('upper')
                bins.append(OutcomeBin(
                    label=str(entry['label']),
                    lower=to_fraction(lower) if lower is not None else None,
                    upper=to_fraction(upper) if upper is not None else None,
                ))
            else:
                bins.append(OutcomeBin(label=str(entry)))

        return cls(
            outcome_bins=tuple(bins),
            treatments=tuple(treatments),
            instruments=tuple(str(z) for z in doc.get('instruments') or []),
            ordered=order is not None,
        )


@dataclass(frozen=True)
class ObservedDistribution:
    """
    Binned joint law of (Y, X, Z)

    cond_treatment[k][l] = P[X=x_l | Z=z_k]
    subdensity[k][l][b] = P[X=x_l, Y in bin b | Z=z_k]
    """

    support: Support
    cond_treatment: Tuple[Tuple[Fraction, ...], ...]
    subdensity: Tuple[Tuple[Tuple[Fraction, ...], ...], ...]
    instrument_mass: Optional[Tuple[Fraction, ...]] = None

    def __post_init__(self):
        s = self.support
        if len(self.cond_treatment) != s.K or len(self.subdensity) != s.K:
            raise ValidationError("Table dimensions do not match the instrument support")

        for k in range(s.K):
            if len(self.cond_treatment[k]) != s.L or len(self.subdensity[k]) != s.L:
                raise ValidationError("Table dimensions do not match the treatment support")
            if sum(self.cond_treatment[k]) != 1:
                raise ValidationError(
                    f"Treatment probabilities given {s.instruments[k]} sum to "
                    f"{format_fraction(sum(self.cond_treatment[k]))}, not 1")
            for l in range(s.L):
                row = self.subdensity[k][l]
                if len(row) != s.B:
                    raise ValidationError("Table dimensions do not match the outcome bins")
                if any(v < 0 for v in row) or self.cond_treatment[k][l] < 0:
                    raise ValidationError("Probabilities must be non-negative")
                if sum(row) != self.cond_treatment[k][l]:
                    raise ValidationError(
                        f"Sub-density of ({s.instruments[k]}, {s.treatments[l]}) does not integrate "
                        f"to its treatment probability")

        if self.instrument_mass is not None:
            if len(self.instrument_mass) != s.K:
                raise ValidationError("instrument_mass must have one entry per instrument value")
            if any(m < 0 for m in self.instrument_mass) or sum(self.instrument_mass) != 1:
                raise ValidationError("instrument_mass must be non-negative and sum to 1")

    @property
    def L(self) -> int:
        return self.support.L

    @property
    def K(self) -> int:
        return self.support.K

    @property
    def B(self) -> int:
        return self.support.B

    def prob(self, z: str, x: str) -> Fraction:
        """P[X=x | Z=z]"""
        return self.cond_treatment[self.support.instrument_index(z)][self.support.treatment_index(x)]

    def prob_in(self, k: int, treatment_indices: Iterable[int]) -> Fraction:
        """P[X in set | Z=z_k] for a set of treatment indices"""
        return sum((self.cond_treatment[k][l] for l in set(treatment_indices)), Fraction(0))

    def phi(self, z: str, x: str) -> Tuple[Fraction, ...]:
        """Sub-density vector over bins for (z, x)"""
        return self.subdensity[self.support.instrument_index(z)][self.support.treatment_index(x)]

    def to_cells(self, include_zero: bool = False) -> List[Cell]:
        """Flatten to (z, x, bin, probability) cells in support order"""
        s = self.support
        cells = []
        for k, z in enumerate(s.instruments):
            for l, x in enumerate(s.treatments):
                for b, label in enumerate(s.bin_labels):
                    value = self.subdensity[k][l][b]
                    if value or include_zero:
                        cells.append((z, x, label, value))
        return cells

    def to_document(self) -> Dict[str, Any]:
        """Table document accepted by from_document"""
        doc = {
            'support': self.support.to_dict(),
            'cells': [{'z': z, 'x': x, 'bin': b, 'p': p} for z, x, b, p in self.to_cells()],
        }
        if self.instrument_mass is not None:
            doc['instrument_mass'] = dict(zip(self.support.instruments, self.instrument_mass))
        return doc


def _freeze_tables(support: Support, phi: List[List[List[Fraction]]]):
    cond = tuple(tuple(sum(phi[k][l], Fraction(0)) for l in range(support.L)) for k in range(support.K))
    frozen = tuple(tuple(tuple(row) for row in phi[k]) for k in range(support.K))
    return cond, frozen


def _infer_support(cells: Sequence[Cell]) -> Support:
    treatments, instruments, bins = [], [], []
    for z, x, b, _ in cells:
        if z not in instruments:
            instruments.append(z)
        if x not in treatments:
            treatments.append(x)
        if b not in bins:
            bins.append(b)
    return Support(
        outcome_bins=tuple(OutcomeBin(label=b) for b in bins),
        treatments=tuple(treatments),
        instruments=tuple(instruments),
    )


def from_joint_table(cells: Iterable[Tuple[Any, Any, Any, Any]], support: Optional[Support] = None,
                     instrument_mass: Optional[Sequence[Any]] = None) -> ObservedDistribution:
    """
    Build a distribution from explicit (z, x, bin, probability) cells

    Args:
        cells: Conditional cell masses P[X=x, Y in bin | Z=z]; absent cells are zero
        support: Declared supports; inferred from the cells in first-seen order when omitted
        instrument_mass: Optional marginal law of Z

    Returns:
        ObservedDistribution whose sub-densities match the cells exactly
    """
    normalized = [(str(z), str(x), str(b), to_fraction(p)) for z, x, b, p in cells]
    if support is None:
        support = _infer_support(normalized)

    seen = set()
    phi = [[[Fraction(0)] * support.B for _ in range(support.L)] for _ in range(support.K)]
    for z, x, b, p in normalized:
        key = (z, x, b)
        if key in seen:
            raise ValidationError(f"Duplicate cell: {key}")
        seen.add(key)
        if p < 0 or p > 1:
            raise ValidationError(f"Cell probability outside [0, 1]: {key} -> {p}")
        k, l, i = support.instrument_index(z), support.treatment_index(x), support.bin_index(b)
        phi[k][l][i] = p

    for k, z in enumerate(support.instruments):
        total = sum((sum(row) for row in phi[k]), Fraction(0))
        if total != 1:
            raise ValidationError(
                f"Cells for instrument {z} sum to {format_fraction(total)}, not 1",
                details={'instrument': z, 'mass': format_fraction(total)})

    cond, frozen = _freeze_tables(support, phi)
    mass = tuple(to_fraction(m) for m in instrument_mass) if instrument_mass is not None else None
    logger.debug(f"Built joint table with {len(seen)} cells over K={support.K}, L={support.L}, B={support.B}")
    return ObservedDistribution(support=support, cond_treatment=cond, subdensity=frozen, instrument_mass=mass)


def ingest_records(records: Iterable[Tuple[Any, Any, Any]], support: Support) -> ObservedDistribution:
    """
    Build the empirical distribution of (y, x, z) records

    Frequencies are exact count/total within each instrument stratum.

    Args:
        records: Iterable of (y, x, z); y is a number (bounded bins) or a bin label
        support: Declared supports and binning

    Returns:
        ObservedDistribution
    """
    counts = [[[0] * support.B for _ in range(support.L)] for _ in range(support.K)]
    stratum = [0] * support.K
    n_records = 0

    for y, x, z in records:
        k = support.instrument_index(str(z).strip())
        l = support.treatment_index(str(x).strip())
        b = support.bin_for_value(y)
        counts[k][l][b] += 1
        stratum[k] += 1
        n_records += 1

    if n_records == 0:
        raise ValidationError("No records to ingest")
    empty = [support.instruments[k] for k in range(support.K) if stratum[k] == 0]
    if empty:
        raise ValidationError(f"Instrument values with zero records: {empty}")

    phi = [[[Fraction(counts[k][l][b], stratum[k]) for b in range(support.B)]
            for l in range(support.L)] for k in range(support.K)]
    cond, frozen = _freeze_tables(support, phi)
    mass = tuple(Fraction(n, n_records) for n in stratum)
    logger.info(f"Ingested {n_records} records across {support.K} instrument strata")
    return ObservedDistribution(support=support, cond_treatment=cond, subdensity=frozen, instrument_mass=mass)


def load_records_csv(file_path, support: Support, sep: str = ',') -> ObservedDistribution:
    """
    Ingest a delimiter-separated record file with header columns y, x, z

    Args:
        file_path: Path to the UTF-8 record file
        support: Declared supports and binning
        sep: Column delimiter

    Returns:
        ObservedDistribution
    """
    file_path = Path(file_path)
    try:
        df = pd.read_csv(file_path, sep=sep, dtype=str, encoding='utf-8', keep_default_na=False)
    except FileNotFoundError:
        raise ValidationError(f"Record file not found: {file_path}")
    except (pd.errors.EmptyDataError, pd.errors.ParserError, UnicodeDecodeError) as e:
        raise ValidationError(f"Could not parse record file {file_path}: {e}")

    df.columns = [str(c).strip() for c in df.columns]
    missing = [c for c in ('y', 'x', 'z') if c not in df.columns]
    if missing:
        raise ValidationError(f"Record file {file_path.name} lacks columns: {missing}")

    logger.info(f"Processing record file: {file_path.name} ({len(df)} records)")
    return ingest_records(zip(df['y'], df['x'], df['z']), support)


def from_document(doc: Dict[str, Any], support: Optional[Support] = None) -> ObservedDistribution:
    """
    Build a distribution from a table document

    Expected keys: `support` (unless given), `cells` as a list of
    {z, x, bin, p} mappings, optional `instrument_mass` keyed by instrument.
    """
    if not isinstance(doc, dict):
        raise ValidationError("Table document must be a mapping")
    if support is None:
        if 'support' not in doc:
            raise ValidationError("Table document lacks a support section")
        support = Support.from_document(doc['support'])

    cells = []
    for entry in doc.get('cells') or []:
        try:
            label = entry['bin'] if 'bin' in entry else entry['y']
            cells.append((entry['z'], entry['x'], label, entry['p']))
        except (KeyError, TypeError):
            raise ValidationError(f"Malformed cell entry: {entry!r}")

    mass = None
    if doc.get('instrument_mass'):
        raw = doc['instrument_mass']
        mass = [raw[z] for z in support.instruments] if isinstance(raw, dict) else list(raw)
    return from_joint_table(cells, support=support, instrument_mass=mass)


def binarize(d: ObservedDistribution, threshold: str) -> ObservedDistribution:
    """
    Collapse an ordered treatment into X^Bin = 1{X >= threshold}

    Args:
        d: Distribution whose support declares a treatment order
        threshold: Treatment label where the indicator switches on

    Returns:
        Two-treatment distribution (Bin0, Bin1); an already-binary law split
        at its top treatment is returned unchanged
    """
    s = d.support
    if not s.ordered:
        raise ValidationError("binarize requires a declared treatment order")
    t = s.treatment_index(threshold)
    if s.L == 2 and t == 1:
        return d

    phi = []
    for k in range(s.K):
        low = [sum((d.subdensity[k][l][b] for l in range(t)), Fraction(0)) for b in range(s.B)]
        high = [sum((d.subdensity[k][l][b] for l in range(t, s.L)), Fraction(0)) for b in range(s.B)]
        phi.append([low, high])

    support = Support(outcome_bins=s.outcome_bins, treatments=(BIN0, BIN1),
                      instruments=s.instruments, ordered=True)
    cond, frozen = _freeze_tables(support, phi)
    logger.info(f"Binarized treatment at threshold {threshold}")
    return ObservedDistribution(support=support, cond_treatment=cond, subdensity=frozen,
                                instrument_mass=d.instrument_mass)
