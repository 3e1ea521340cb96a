"""
Error types for the falsification toolkit
"""

from typing import Any, Dict, Optional


class FalsificationError(Exception):
    """Base error; carries an application error code like the old API envelope"""

    error_code = "FALSIFICATION_ERROR"

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.details = details or {}

    def to_dict(self) -> Dict[str, Any]:
        payload = {'code': self.error_code, 'message': self.message}
        if self.details:
            payload['details'] = self.details
        return payload


class ValidationError(FalsificationError):
    """Malformed input, unknown labels or a violated precondition"""

    error_code = "VALIDATION_ERROR"


class CapExceededError(FalsificationError):
    """An enumeration would exceed its configured cap"""

    error_code = "CAP_EXCEEDED"


class SolverError(FalsificationError):
    """A witness or certificate failed exact re-verification"""

    error_code = "SOLVER_ERROR"
