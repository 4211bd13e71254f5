"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes, so raising the right class
matters: ValidationError family -> 1, NumericError -> 2, ResourceError -> 3.
"""
from __future__ import annotations


class UsdlabError(Exception):
    pass


class DimensionError(UsdlabError, ValueError):
    pass


class ValidationError(UsdlabError, ValueError):
    pass


class RankError(ValidationError):
    pass


class UnsupportedCodeError(ValidationError):
    pass


class NumericError(UsdlabError, ArithmeticError):
    """Divergence, NaN, or a degenerate estimate."""


class ResourceError(UsdlabError, MemoryError):
    pass


__all__ = [
    "UsdlabError",
    "DimensionError",
    "ValidationError",
    "RankError",
    "UnsupportedCodeError",
    "NumericError",
    "ResourceError",
]
