"""Validation utilities for configuration values and scenario files."""

import math
from collections.abc import Sequence
from typing import Any, NamedTuple


class ValidationResult(NamedTuple):
    """Result of a validation operation."""

    valid: bool
    error_message: str | None = None


def _is_number(value: Any) -> bool:
    return isinstance(value, int | float) and not isinstance(value, bool)


def validate_finite(value: Any, name: str) -> ValidationResult:
    """Validate that a value is a finite real number.

    Args:
        value: The value to validate
        name: Name used in the error message

    Returns:
        ValidationResult indicating if the value is usable
    """
    if not _is_number(value):
        return ValidationResult(valid=False, error_message=f"{name} must be a number, got {value!r}")
    if not math.isfinite(value):
        return ValidationResult(valid=False, error_message=f"{name} must be finite")
    return ValidationResult(valid=True)


def validate_positive(value: Any, name: str) -> ValidationResult:
    """Validate a strictly positive finite number."""
    result = validate_finite(value, name)
    if not result.valid:
        return result
    if value <= 0:
        return ValidationResult(valid=False, error_message=f"{name} must be positive, got {value}")
    return ValidationResult(valid=True)


def validate_non_negative(value: Any, name: str) -> ValidationResult:
    """Validate a finite number >= 0."""
    result = validate_finite(value, name)
    if not result.valid:
        return result
    if value < 0:
        return ValidationResult(valid=False, error_message=f"{name} must be non-negative, got {value}")
    return ValidationResult(valid=True)


def validate_positive_int(value: Any, name: str) -> ValidationResult:
    """Validate an integer >= 1.

    Args:
        value: The value to validate
        name: Name used in the error message

    Returns:
        ValidationResult indicating if the value is a positive integer
    """
    if isinstance(value, bool) or not isinstance(value, int):
        return ValidationResult(valid=False, error_message=f"{name} must be an integer, got {value!r}")
    if value < 1:
        return ValidationResult(valid=False, error_message=f"{name} must be at least 1, got {value}")
    return ValidationResult(valid=True)


def validate_probability(value: Any, name: str) -> ValidationResult:
    """Validate a number in [0, 1]."""
    result = validate_finite(value, name)
    if not result.valid:
        return result
    if not 0.0 <= value <= 1.0:
        return ValidationResult(valid=False, error_message=f"{name} must be between 0 and 1, got {value}")
    return ValidationResult(valid=True)


def validate_vector(value: Any, length: int) -> ValidationResult:
    """Validate a list of ``length`` finite numbers, e.g. a position ``[x, y, z]``."""
    if isinstance(value, str) or not isinstance(value, Sequence):
        return ValidationResult(valid=False, error_message=f"expected a list of {length} numbers")
    if len(value) != length:
        return ValidationResult(
            valid=False,
            error_message=f"expected {length} numbers, got {len(value)}"
        )
    for item in value:
        if not _is_number(item) or not math.isfinite(item):
            return ValidationResult(valid=False, error_message=f"non-numeric entry {item!r}")
    return ValidationResult(valid=True)


def validate_sequence_name(name: str) -> ValidationResult:
    """Validate a sequence name used as a file stem.

    Args:
        name: The sequence name, e.g. ``0001``

    Returns:
        ValidationResult indicating if the name is usable
    """
    if not name or not name.strip():
        return ValidationResult(valid=False, error_message="Sequence name cannot be empty")

    name = name.strip()

    if len(name) > 64:
        return ValidationResult(valid=False, error_message="Sequence name too long (max 64 characters)")

    # Path separators and control characters would escape the output directory
    if any(ord(c) < 32 for c in name) or "/" in name or "\\" in name or name in (".", ".."):
        return ValidationResult(
            valid=False,
            error_message="Sequence name contains path separators or control characters"
        )

    return ValidationResult(valid=True)


def validate_override(text: str) -> ValidationResult:
    """Validate the ``KEY=VALUE`` shape of a command-line override."""
    key, sep, _ = text.partition("=")
    if not sep or not key.strip():
        return ValidationResult(valid=False, error_message=f"override '{text}' must look like KEY=VALUE")
    return ValidationResult(valid=True)
