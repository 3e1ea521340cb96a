"""
Exact rational parsing and rendering
"""

from fractions import Fraction
from functools import reduce
from math import gcd
from typing import Any, Iterable

from ivfalsify.utils.errors import ValidationError


def to_fraction(value: Any) -> Fraction:
    """
    Convert a config or CSV value to an exact Fraction

    Accepts Fractions, ints, fraction strings ("1/4"), decimal strings ("0.25")
    and floats (through their shortest decimal repr, so 0.1 stays 1/10).
    """
    if isinstance(value, bool):
        raise ValidationError(f"Boolean is not a probability: {value!r}")
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(repr(value))
    if isinstance(value, str):
        text = value.strip()
        try:
            return Fraction(text)
        except (ValueError, ZeroDivisionError):
            raise ValidationError(f"Not an exact number: {value!r}")
    raise ValidationError(f"Unsupported numeric value: {value!r}")


def format_fraction(value: Fraction, decimal: bool = False) -> str:
    """Render as "p/q" (always with a denominator) or as a decimal string"""
    value = Fraction(value)
    if decimal:
        return f"{float(value):.10g}"
    return f"{value.numerator}/{value.denominator}"


def common_denominator(values: Iterable[Fraction]) -> int:
    """Least common multiple of the denominators"""
    return reduce(lambda a, b: a * b // gcd(a, b), (Fraction(v).denominator for v in values), 1)
