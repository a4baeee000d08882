"""Small argument checks shared by the functional API and the estimators."""

from __future__ import annotations

import math
import numbers


def check_scalar(value, name, *, kind=numbers.Real, min_val=None, max_val=None,
                 min_inclusive=True, max_inclusive=True):
    """Validate a scalar hyperparameter and return it unchanged.

    Raises ``TypeError`` for the wrong type and ``ValueError`` when out of range.
    Booleans are rejected for numeric kinds.
    """
    if isinstance(value, bool) or not isinstance(value, kind):
        raise TypeError(f"{name} must be {kind.__name__}, got {type(value).__name__}")
    if isinstance(value, float) and not math.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value}")
    if min_val is not None:
        if value < min_val or (not min_inclusive and value == min_val):
            op = ">=" if min_inclusive else ">"
            raise ValueError(f"{name} must be {op} {min_val}, got {value}")
    if max_val is not None:
        if value > max_val or (not max_inclusive and value == max_val):
            op = "<=" if max_inclusive else "<"
            raise ValueError(f"{name} must be {op} {max_val}, got {value}")
    return value


def check_choice(value, name, choices):
    if value not in choices:
        raise ValueError(f"{name} must be one of {tuple(choices)}, got {value!r}")
    return value


def check_top_k(top_k):
    return check_scalar(top_k, "top_k", kind=numbers.Integral, min_val=1)
