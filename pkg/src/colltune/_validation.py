"""Small argument checks shared across modules."""

from __future__ import annotations

import math
import numbers

from .types import InvalidArgument


def check_count(value, name: str, minimum: int = 1) -> int:
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        else:
            raise InvalidArgument(f"{name} must be an integer, got {value!r}")
    value = int(value)
    if value < minimum:
        raise InvalidArgument(f"{name} must be >= {minimum}, got {value}")
    return value


def check_size(value, name: str, *, strict: bool = False) -> float:
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise InvalidArgument(f"{name} must be a number, got {value!r}") from None
    if not math.isfinite(value) or value < 0 or (strict and value == 0):
        bound = "> 0" if strict else ">= 0"
        raise InvalidArgument(f"{name} must be finite and {bound}, got {value}")
    return value


def floor_log2(n: int) -> int:
    return int(n).bit_length() - 1


def ceil_log2(n: int) -> int:
    return (int(n) - 1).bit_length()
