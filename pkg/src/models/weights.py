"""
Simplex-constrained aggregation weights.

Reference: expert-aggregation-layer.md §Core types
"""
from __future__ import annotations

from collections.abc import Iterable
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from src.models.errors import DomainError

SIMPLEX_TOLERANCE = 1e-12


@dataclass(frozen=True)
class WeightVector:
    """
    Non-negative weights summing to one.

    Construct through :meth:`from_values` or :meth:`uniform`; the stored array
    is read-only.
    """

    values: NDArray[np.float64]

    @classmethod
    def from_values(cls, values: Iterable[float] | NDArray[np.float64]) -> WeightVector:
        """
        Validate *values* against the simplex.

        A sum off by at most ``SIMPLEX_TOLERANCE`` is renormalized; anything
        further off, a negative or a non-finite entry raises :class:`DomainError`.
        """
        arr = np.array(values, dtype=np.float64).reshape(-1)
        if arr.size == 0:
            raise DomainError("weight vector must not be empty")
        if not np.all(np.isfinite(arr)):
            raise DomainError("weight vector has non-finite entries")
        if np.any(arr < 0):
            raise DomainError("weight vector has negative entries")
        total = float(arr.sum())
        if abs(total - 1.0) > SIMPLEX_TOLERANCE:
            raise DomainError(f"weights sum to {total!r}, not 1")
        if total != 1.0:
            arr = arr / total
        arr.setflags(write=False)
        return cls(arr)

    @classmethod
    def uniform(cls, n: int) -> WeightVector:
        if n < 1:
            raise DomainError("need at least one expert")
        return cls.from_values(np.full(n, 1.0 / n))

    @property
    def size(self) -> int:
        return int(self.values.size)

    def to_list(self) -> list[float]:
        return [float(v) for v in self.values]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, WeightVector):
            return NotImplemented
        return bool(np.array_equal(self.values, other.values))

    def __hash__(self) -> int:
        return hash(self.values.tobytes())
