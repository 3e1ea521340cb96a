"""
Report envelope utilities for consistent structured and text output
"""

import json
from fractions import Fraction
from typing import Any, Dict, Optional

from ivfalsify.utils.rational import format_fraction

STATUS_NOT_FALSIFIED = 'not_falsified'
STATUS_FALSIFIED = 'falsified'
STATUS_ERROR = 'error'

EXIT_CODES = {
    STATUS_NOT_FALSIFIED: 0,
    STATUS_ERROR: 1,
    STATUS_FALSIFIED: 2,
}


def to_plain(value: Any, decimal: bool = False) -> Any:
    """
    Convert report values to JSON-friendly types

    Fractions become "p/q" strings, sets become sorted lists and objects with
    a to_dict() method are expanded.
    """
    if isinstance(value, bool) or value is None:
        return value
    if isinstance(value, Fraction):
        return format_fraction(value, decimal)
    if isinstance(value, (int, str)):
        return value
    if isinstance(value, float):
        return value
    if hasattr(value, 'to_dict'):
        return to_plain(value.to_dict(), decimal)
    if isinstance(value, dict):
        return {str(k): to_plain(v, decimal) for k, v in value.items()}
    if isinstance(value, (set, frozenset)):
        return sorted(to_plain(v, decimal) for v in value)
    if isinstance(value, (list, tuple)):
        return [to_plain(v, decimal) for v in value]
    return str(value)


class ReportBuilder:
    """Standardized report formatter"""

    @staticmethod
    def success(data: Any = None, message: str = "Not falsified", metadata: Optional[Dict] = None) -> Dict:
        """
        Create a report for a run where no check falsified the model

        Args:
            data: Report sections
            message: Headline message
            metadata: Additional metadata (input echo, notes)

        Returns:
            Report dictionary
        """
        report = {
            'success': True,
            'status': STATUS_NOT_FALSIFIED,
            'message': message,
            'data': data,
        }
        if metadata:
            report['metadata'] = metadata
        return report

    @staticmethod
    def falsified(data: Any = None, message: str = "Falsified", metadata: Optional[Dict] = None) -> Dict:
        """
        Create a report for a run where at least one check falsified the model

        Args:
            data: Report sections
            message: Headline message
            metadata: Additional metadata (input echo, notes)

        Returns:
            Report dictionary
        """
        report = {
            'success': True,
            'status': STATUS_FALSIFIED,
            'message': message,
            'data': data,
        }
        if metadata:
            report['metadata'] = metadata
        return report

    @staticmethod
    def error(message: str = "An error occurred", error_code: Optional[str] = None,
              details: Optional[Dict] = None) -> Dict:
        """
        Create an error report

        Args:
            message: Error message
            error_code: Application-specific error code
            details: Additional error details

        Returns:
            Report dictionary
        """
        report = {
            'success': False,
            'status': STATUS_ERROR,
            'message': message,
            'error': {
                'code': error_code or "INPUT_ERROR",
                'message': message,
            },
        }
        if details:
            report['error']['details'] = details
        return report

    @staticmethod
    def from_exception(exc: Exception) -> Dict:
        """Create an error report from a FalsificationError or any other exception"""
        code = getattr(exc, 'error_code', None)
        details = getattr(exc, 'details', None)
        return ReportBuilder.error(str(exc), error_code=code, details=details)


def exit_code(report: Dict) -> int:
    """Exit status for a report: 0 not falsified, 2 falsified, 1 input error"""
    return EXIT_CODES.get(report.get('status'), 1)


def to_structured(report: Dict, decimal: bool = False) -> str:
    """Serialize a report as a JSON document with fixed key order"""
    return json.dumps(to_plain(report, decimal), indent=2, ensure_ascii=False) + "\n"


def _render_lines(value: Any, indent: int, lines: list):
    pad = "  " * indent
    if isinstance(value, dict):
        for key, item in value.items():
            if isinstance(item, (dict, list)) and item:
                lines.append(f"{pad}{key}:")
                _render_lines(item, indent + 1, lines)
            else:
                lines.append(f"{pad}{key}: {item if item != [] else '-'}")
    elif isinstance(value, list):
        for item in value:
            if isinstance(item, dict):
                lines.append(f"{pad}-")
                _render_lines(item, indent + 1, lines)
            else:
                lines.append(f"{pad}- {item}")
    else:
        lines.append(f"{pad}{value}")


def render_text(report: Dict, decimal: bool = False) -> str:
    """Render a report as an indented human-readable summary"""
    plain = to_plain(report, decimal)
    marker = {
        STATUS_NOT_FALSIFIED: '✅',
        STATUS_FALSIFIED: '❌',
        STATUS_ERROR: '⚠️ ',
    }.get(plain.get('status'), '•')

    lines = [f"{marker} {plain.get('message', '')}", "=" * 60]
    for section in ('error', 'metadata', 'data'):
        if plain.get(section):
            lines.append(f"[{section}]")
            _render_lines(plain[section], 1, lines)
    return "\n".join(lines) + "\n"
