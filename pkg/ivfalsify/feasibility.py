"""
Exact feasibility of the stacked type-distribution system

solve_feasibility runs a phase-one simplex over Fractions with Bland's rule.
Feasible systems return a witness; infeasible ones return a Farkas certificate
y with y_ineq >= 0, y^T A >= 0 columnwise and y^T b < 0. Both are re-verified
before they leave this module.
"""

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from typing import Any, Dict, List, Optional, Sequence, Tuple

import sympy

from ivfalsify.obs_model import ObservedDistribution
from ivfalsify.psi import PsiTable
from ivfalsify.typespace import (
    RestrictionSpec,
    RowBlock,
    TypeDistribution,
    TypeSpace,
    build_always_taker_rows,
    build_consistency_system,
    build_restriction_rows,
    build_sufficient_taker_rows,
)
from ivfalsify.utils.errors import SolverError, ValidationError

logger = logging.getLogger(__name__)

FEASIBLE = 'feasible'
INFEASIBLE = 'infeasible'
UNKNOWN = 'unknown'

ORACLE_MAX_VARIABLES = 12

Row = Tuple[Tuple[Fraction, ...], Fraction]


@dataclass
class LinearSystem:
    """Rows A_eq p = b_eq and A_ineq p <= b_ineq over p >= 0"""

    n_vars: int
    eq_rows: List[Row] = field(default_factory=list)
    ineq_rows: List[Row] = field(default_factory=list)
    eq_labels: List[str] = field(default_factory=list)
    ineq_labels: List[str] = field(default_factory=list)
    space: Optional[TypeSpace] = None
    nonneg: bool = True

    def _check(self, coeffs: Sequence[Fraction]):
        if len(coeffs) != self.n_vars:
            raise ValidationError(f"Row has {len(coeffs)} coefficients, expected {self.n_vars}")

    def add_eq(self, coeffs: Sequence[Any], rhs: Any, label: str):
        self._check(coeffs)
        self.eq_rows.append((tuple(Fraction(c) for c in coeffs), Fraction(rhs)))
        self.eq_labels.append(label)

    def add_ineq(self, coeffs: Sequence[Any], rhs: Any, label: str):
        self._check(coeffs)
        self.ineq_rows.append((tuple(Fraction(c) for c in coeffs), Fraction(rhs)))
        self.ineq_labels.append(label)

    def add_block(self, block: RowBlock, equality: bool = False):
        for coeffs, rhs, name in zip(block.matrix, block.rhs, block.names):
            if equality:
                self.add_eq(coeffs, rhs, name)
            else:
                self.add_ineq(coeffs, rhs, name)

    def violations(self, point: Sequence[Fraction]) -> List[str]:
        """Labels of rows the point fails, exactly"""
        failed = [f"nonneg[{j}]" for j, v in enumerate(point) if v < 0]
        for (coeffs, rhs), label in zip(self.eq_rows, self.eq_labels):
            if _dot(coeffs, point) != rhs:
                failed.append(label)
        for (coeffs, rhs), label in zip(self.ineq_rows, self.ineq_labels):
            if _dot(coeffs, point) > rhs:
                failed.append(label)
        return failed

    def summary(self) -> Dict[str, Any]:
        return {
            'variables': self.n_vars,
            'equality_rows': len(self.eq_rows),
            'inequality_rows': len(self.ineq_rows),
        }


@dataclass
class FeasibilityResult:
    status: str
    solution: Optional[Tuple[Fraction, ...]] = None
    certificate: Optional[Tuple[Tuple[Fraction, ...], Tuple[Fraction, ...]]] = None
    violated_labels: Tuple[str, ...] = ()
    space: Optional[TypeSpace] = None
    pivots: int = 0

    @property
    def feasible(self) -> bool:
        return self.status == FEASIBLE

    @property
    def witness(self) -> Optional[TypeDistribution]:
        if self.solution is None or self.space is None:
            return None
        return TypeDistribution(space=self.space, probs=self.solution)

    def certificate_weights(self, system: LinearSystem) -> Dict[str, Fraction]:
        """Nonzero multipliers keyed by row label"""
        if self.certificate is None:
            return {}
        y_eq, y_ineq = self.certificate
        weights = {}
        for label, y in list(zip(system.eq_labels, y_eq)) + list(zip(system.ineq_labels, y_ineq)):
            if y:
                weights[label] = weights.get(label, Fraction(0)) + y
        return weights

    def to_report(self, system: LinearSystem) -> Dict[str, Any]:
        report = {'status': self.status, 'system': system.summary()}
        if self.solution is not None:
            if self.space is not None:
                report['witness'] = self.witness.to_dict()
            else:
                report['witness'] = list(self.solution)
        if self.certificate is not None:
            report['certificate'] = self.certificate_weights(system)
            report['violated_labels'] = list(self.violated_labels)
        return report


def _dot(a: Sequence[Fraction], b: Sequence[Fraction]) -> Fraction:
    return sum((x * y for x, y in zip(a, b) if x and y), Fraction(0))


def build_system(d: ObservedDistribution, ts: TypeSpace, restriction: RestrictionSpec,
                 psi: Optional[PsiTable] = None, exclusion: Optional[str] = None,
                 subsets: Optional[Sequence[Sequence[str]]] = None) -> LinearSystem:
    """
    Stack consistency, restriction and exclusion rows into one system

    Args:
        d: Observed distribution
        ts: Type space matching d
        restriction: Ruled-out types and frequency rows
        psi: Overlap table (needed when exclusion rows are requested)
        exclusion: None, 'always-taker' (binary instrument) or 'sufficient-taker'
        subsets: Instrument subsets for sufficient-taker rows (defaults to every subset in psi)

    Returns:
        LinearSystem whose variables are the type probabilities
    """
    system = LinearSystem(n_vars=ts.size, space=ts)
    system.add_block(build_consistency_system(d, ts), equality=True)
    system.add_block(build_restriction_rows(restriction, ts))

    if exclusion is not None:
        if psi is None:
            raise ValidationError("Exclusion rows need a Psi table")
        if exclusion == 'always-taker':
            system.add_block(build_always_taker_rows(ts, psi))
        elif exclusion == 'sufficient-taker':
            system.add_block(build_sufficient_taker_rows(ts, psi, subsets))
        else:
            raise ValidationError(f"Unknown exclusion row family: {exclusion!r}")

    logger.debug(f"Built system: {system.summary()}")
    return system


class _PhaseOneTableau:
    """Dense tableau for min sum(artificials) over [D A | D S | I] x = D b, x >= 0"""

    def __init__(self, system: LinearSystem):
        n, m_eq, m_in = system.n_vars, len(system.eq_rows), len(system.ineq_rows)
        self.m = m_eq + m_in
        self.n_real = n + m_in
        self.n_cols = self.n_real + self.m
        self.signs = []
        self.rows = []
        self.rhs = []

        rows = list(system.eq_rows) + list(system.ineq_rows)
        for i, (coeffs, b) in enumerate(rows):
            sign = -1 if b < 0 else 1
            row = [sign * c for c in coeffs] + [Fraction(0)] * (m_in + self.m)
            if i >= m_eq:
                row[n + i - m_eq] = Fraction(sign)
            row[self.n_real + i] = Fraction(1)
            self.signs.append(sign)
            self.rows.append(row)
            self.rhs.append(sign * b)

        self.basis = [self.n_real + i for i in range(self.m)]
        self.reduced = [Fraction(0)] * self.n_cols
        for j in range(self.n_real):
            self.reduced[j] = -sum((row[j] for row in self.rows if row[j]), Fraction(0))
        self.value = sum(self.rhs, Fraction(0))
        self.pivots = 0

    def entering(self) -> Optional[int]:
        for j, r in enumerate(self.reduced):
            if r < 0:
                return j
        return None

    def leaving(self, col: int) -> Optional[int]:
        best, best_ratio = None, None
        for i, row in enumerate(self.rows):
            if row[col] > 0:
                ratio = self.rhs[i] / row[col]
                if best is None or ratio < best_ratio or (ratio == best_ratio and self.basis[i] < self.basis[best]):
                    best, best_ratio = i, ratio
        return best

    def pivot(self, r: int, c: int):
        pivot_row = self.rows[r]
        scale = pivot_row[c]
        if scale != 1:
            pivot_row[:] = [v / scale for v in pivot_row]
            self.rhs[r] /= scale
        nonzero = [j for j, v in enumerate(pivot_row) if v]

        for i, row in enumerate(self.rows):
            factor = row[c]
            if i == r or not factor:
                continue
            for j in nonzero:
                row[j] -= factor * pivot_row[j]
            self.rhs[i] -= factor * self.rhs[r]

        factor = self.reduced[c]
        if factor:
            for j in nonzero:
                self.reduced[j] -= factor * pivot_row[j]
            self.value += factor * self.rhs[r]
        self.basis[r] = c
        self.pivots += 1

    def run(self):
        while self.value > 0:
            col = self.entering()
            if col is None:
                return
            row = self.leaving(col)
            if row is None:
                # Phase one is bounded below by zero
                raise SolverError("Unbounded phase-one direction")
            self.pivot(row, col)

    def primal(self, n_vars: int) -> Tuple[Fraction, ...]:
        x = [Fraction(0)] * self.n_cols
        for i, j in enumerate(self.basis):
            x[j] = self.rhs[i]
        return tuple(x[:n_vars])

    def farkas(self) -> List[Fraction]:
        """y = -D y', with y'_i = 1 - reduced cost of artificial i"""
        return [-self.signs[i] * (1 - self.reduced[self.n_real + i]) for i in range(self.m)]


def solve_feasibility(system: LinearSystem) -> FeasibilityResult:
    """
    Decide feasibility of the system exactly

    Returns:
        FeasibilityResult with a witness (feasible) or a verified Farkas
        certificate and the labels of the rows it weights (infeasible)
    """
    if not system.nonneg:
        raise ValidationError("Only systems over p >= 0 are supported")
    m_eq = len(system.eq_rows)

    if not system.eq_rows and not system.ineq_rows:
        solution = tuple(Fraction(0) for _ in range(system.n_vars))
        return FeasibilityResult(status=FEASIBLE, solution=solution, space=None)

    tableau = _PhaseOneTableau(system)
    tableau.run()

    if tableau.value == 0:
        solution = tableau.primal(system.n_vars)
        failed = system.violations(solution)
        if failed:
            raise SolverError("Witness failed exact re-verification", details={'rows': failed})
        space = system.space if system.space is not None and sum(solution) == 1 else None
        logger.debug(f"Feasible after {tableau.pivots} pivots")
        return FeasibilityResult(status=FEASIBLE, solution=solution, space=space, pivots=tableau.pivots)

    y = tableau.farkas()
    scale = -sum((yi * b for yi, (_, b) in zip(y, list(system.eq_rows) + list(system.ineq_rows))), Fraction(0))
    if scale <= 0:
        raise SolverError("Phase-one dual does not separate the right-hand side")
    y = [yi / scale for yi in y]
    certificate = (tuple(y[:m_eq]), tuple(y[m_eq:]))

    labels = [label for label, yi in zip(system.eq_labels, certificate[0]) if yi]
    labels += [label for label, yi in zip(system.ineq_labels, certificate[1]) if yi > 0]
    result = FeasibilityResult(status=INFEASIBLE, certificate=certificate,
                               violated_labels=tuple(labels), space=system.space, pivots=tableau.pivots)
    if not verify_certificate(system, result):
        raise SolverError("Certificate failed exact re-verification")
    logger.debug(f"Infeasible after {tableau.pivots} pivots; certificate rows: {labels}")
    return result


def verify_certificate(system: LinearSystem, result: FeasibilityResult) -> bool:
    """Re-check the Farkas alternative: y_ineq >= 0, y^T A >= 0 per column, y^T b < 0"""
    if result.certificate is None:
        return False
    y_eq, y_ineq = result.certificate
    if len(y_eq) != len(system.eq_rows) or len(y_ineq) != len(system.ineq_rows):
        return False
    if any(y < 0 for y in y_ineq):
        return False

    weighted = list(zip(y_eq, system.eq_rows)) + list(zip(y_ineq, system.ineq_rows))
    for j in range(system.n_vars):
        if sum((y * coeffs[j] for y, (coeffs, _) in weighted if y), Fraction(0)) < 0:
            return False
    return sum((y * b for y, (_, b) in weighted if y), Fraction(0)) < 0


def _grid_search(system: LinearSystem, resolution: int) -> Optional[Tuple[Fraction, ...]]:
    n = system.n_vars
    rows = [(coeffs, rhs, True) for coeffs, rhs in system.eq_rows]
    rows += [(coeffs, rhs, False) for coeffs, rhs in system.ineq_rows]

    # A row is decided once its last nonzero variable is fixed
    last = [max((j for j, c in enumerate(coeffs) if c), default=-1) for coeffs, _, _ in rows]
    monotone_from = []
    for coeffs, _, _ in rows:
        start = n
        while start > 0 and coeffs[start - 1] >= 0:
            start -= 1
        monotone_from.append(start)
    closing = [[i for i in range(len(rows)) if last[i] == j] for j in range(n)]
    if any(last[i] == -1 and not _row_holds(rows[i], Fraction(0)) for i in range(len(rows))):
        return None

    step = Fraction(1, resolution)
    partial = [Fraction(0)] * len(rows)
    point = [Fraction(0)] * n

    def assign(j: int, remaining: int) -> bool:
        if j == n - 1:
            options = [remaining]
        else:
            options = range(remaining + 1)
        for units in options:
            value = units * step
            point[j] = value
            touched = []
            ok = True
            for i, (coeffs, rhs, _) in enumerate(rows):
                if coeffs[j] and value:
                    partial[i] += coeffs[j] * value
                    touched.append(i)
            for i in closing[j]:
                if not _row_holds(rows[i], partial[i]):
                    ok = False
                    break
            if ok:
                for i in touched:
                    if monotone_from[i] <= j + 1 and partial[i] > rows[i][1]:
                        ok = False
                        break
            if ok and (j == n - 1 or assign(j + 1, remaining - units)):
                return True
            for i in touched:
                partial[i] -= rows[i][0][j] * value
        point[j] = Fraction(0)
        return False

    if n == 0:
        return None
    return tuple(point) if assign(0, resolution) else None


def _row_holds(row, value: Fraction) -> bool:
    _, rhs, equality = row
    return value == rhs if equality else value <= rhs


def _rational(value) -> sympy.Rational:
    value = Fraction(value)
    return sympy.Rational(value.numerator, value.denominator)


def _to_matrix(rows: Sequence[Sequence[Fraction]]) -> sympy.Matrix:
    return sympy.Matrix([[_rational(v) for v in row] for row in rows])


def _to_fraction(value: sympy.Rational) -> Fraction:
    return Fraction(int(value.p), int(value.q))


def _solve_square(matrix: List[List[Fraction]], rhs: List[Fraction]) -> Optional[List[Fraction]]:
    """Exact solve of a square system; None when singular"""
    n = len(matrix)
    if n == 0:
        return []
    a = _to_matrix(matrix)
    if a.rank() < n:
        return None
    solution = a.LUsolve(_to_matrix([[b] for b in rhs]))
    return [_to_fraction(v) for v in solution]


def _independent_rows(rows: List[Row]) -> Optional[List[Row]]:
    """A maximal independent subset of equality rows; None if they are inconsistent"""
    if not rows:
        return []
    a = _to_matrix([coeffs for coeffs, _ in rows])
    augmented = a.row_join(_to_matrix([[rhs] for _, rhs in rows]))
    if augmented.rank() != a.rank():
        return None
    _, pivots = a.T.rref()
    return [rows[i] for i in pivots]


def _normalized(coeffs: Sequence[Fraction], rhs: Fraction) -> Tuple[Tuple[Fraction, ...], Fraction]:
    lead = next(c for c in coeffs if c)
    return tuple(c / lead for c in coeffs), rhs / lead


def _has_feasible_vertex(system: LinearSystem) -> bool:
    n = system.n_vars
    eq_basis = _independent_rows(list(system.eq_rows))
    if eq_basis is None:
        return False

    hyperplanes = {}
    for j in range(n):
        unit = tuple(Fraction(1) if i == j else Fraction(0) for i in range(n))
        hyperplanes.setdefault(_normalized(unit, Fraction(0)), (unit, Fraction(0)))
    for coeffs, rhs in system.ineq_rows:
        if any(coeffs):
            hyperplanes.setdefault(_normalized(coeffs, rhs), (coeffs, rhs))
    candidates = list(hyperplanes.values())

    needed = n - len(eq_basis)
    if needed < 0:
        return False
    for chosen in combinations(candidates, needed):
        rows = eq_basis + list(chosen)
        solution = _solve_square([list(c) for c, _ in rows], [b for _, b in rows])
        if solution is not None and not system.violations(solution):
            return True
    return False


def brute_force_oracle(system: LinearSystem, resolution: int) -> str:
    """
    Independent feasibility oracle for small systems on the probability simplex

    Grid points p = a / resolution with sum(a) = resolution are searched first;
    a hit means feasible. Otherwise every basic solution of the system is
    enumerated: no feasible vertex means infeasible, anything else is unknown.

    Returns:
        'feasible', 'infeasible' or 'unknown'
    """
    if system.n_vars > ORACLE_MAX_VARIABLES:
        raise ValidationError(
            f"Oracle handles at most {ORACLE_MAX_VARIABLES} variables, got {system.n_vars}")
    if resolution < 1:
        raise ValidationError("Resolution must be a positive integer")

    if _grid_search(system, resolution) is not None:
        return FEASIBLE
    if not _has_feasible_vertex(system):
        return INFEASIBLE
    return UNKNOWN
