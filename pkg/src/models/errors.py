"""Errors shared by the domain value types."""
from __future__ import annotations


class DomainError(ValueError):
    """Non-finite input, dimension mismatch or simplex violation."""
