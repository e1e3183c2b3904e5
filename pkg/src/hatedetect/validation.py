"""Input validation helpers shared across the toolkit."""

from __future__ import annotations

from typing import Iterable, Sequence


class ValidationError(ValueError):
    """Raised when user-supplied inputs violate a documented contract."""


def check_text_list(X, name: str = "X") -> list[str]:
    """Coerce an iterable of strings into a list, rejecting anything else."""
    if isinstance(X, str):
        raise ValidationError(f"{name} must be an iterable of strings, got a single string")
    try:
        items = list(X)
    except TypeError:
        raise ValidationError(f"{name} must be an iterable of strings, got {type(X).__name__}")
    for i, item in enumerate(items):
        if not isinstance(item, str):
            raise ValidationError(f"{name}[{i}] is {type(item).__name__}, expected str")
    return items


def check_ratios(ratios: Sequence[float], tol: float = 1e-9) -> tuple[float, float, float]:
    """Validate a train/val/test ratio triple: each in (0,1), summing to 1."""
    if len(ratios) != 3:
        raise ValidationError(f"expected 3 split ratios, got {len(ratios)}")
    r = tuple(float(x) for x in ratios)
    for x in r:
        if not 0.0 < x < 1.0:
            raise ValidationError(f"split ratio {x} not in (0, 1)")
    if abs(sum(r) - 1.0) > tol:
        raise ValidationError(f"split ratios {r} sum to {sum(r)!r}, expected 1.0")
    return r


def check_in(value, allowed: Iterable, name: str):
    allowed = tuple(allowed)
    if value not in allowed:
        raise ValidationError(f"{name} must be one of {allowed}, got {value!r}")
    return value


def check_positive_int(value, name: str) -> int:
    if not isinstance(value, int) or isinstance(value, bool) or value < 1:
        raise ValidationError(f"{name} must be a positive integer, got {value!r}")
    return value


def check_fitted(estimator, attribute: str) -> None:
    if not hasattr(estimator, attribute):
        raise ValidationError(
            f"{type(estimator).__name__} is not fitted yet; call fit() before using this method"
        )
