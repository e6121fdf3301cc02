"""
Compound-expert regret audit of a sleeping-expert run.

The comparator is a sequence of experts ``i_t``, each awake at its round.
Its cumulative regret is split by (predicted class, true class) cell, which
bounds it by ``sum over cells of n_cell * max instant regret in the cell``.
When the classifier was perfect the bound collapses to one term per class.

Reference: expert-aggregation-layer.md §Regret audits
"""
from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass
from typing import Any

import numpy as np
from numpy.typing import NDArray

from src.expert_aggregation.sleeping import SefRound, sef_regret_vs_expert, sef_rounds_from_ledger
from src.models.awake import CLASSES
from src.models.ledger import RunLedger

_K = len(CLASSES)
_BOUND_SLACK = 1e-9


class AuditError(ValueError):
    """The compound expert is asleep at some round."""


@dataclass(frozen=True)
class SefTrace:
    """Sleeping-expert rounds with the true class and classifier activity of each."""

    rounds: Sequence[SefRound]
    true_classes: Sequence[int]
    active: Sequence[bool]

    @classmethod
    def from_ledger(cls, ledger: RunLedger) -> SefTrace:
        return cls(
            rounds=sef_rounds_from_ledger(ledger),
            true_classes=[r.true_class for r in ledger.rows],
            active=[r.classifier_active for r in ledger.rows],
        )


@dataclass(frozen=True)
class RegretAudit:
    per_expert_sef_regret: NDArray[np.float64]
    cell_counts: NDArray[np.int64]
    """Rows: predicted class, columns: true class."""

    cell_max_instant_regret: NDArray[np.float64]
    """NaN for empty cells."""

    compound_regret: float
    bound_rhs: float
    perfect_bound_rhs: float | None
    bound_holds: bool
    perfect_bound_holds: bool | None

    def to_dict(self) -> dict[str, Any]:
        cell_max = [[None if np.isnan(v) else float(v) for v in row] for row in self.cell_max_instant_regret]
        return {
            "per_expert_sef_regret": self.per_expert_sef_regret.tolist(),
            "cell_counts": self.cell_counts.tolist(),
            "cell_max_instant_regret": cell_max,
            "compound_regret": self.compound_regret,
            "bound_rhs": self.bound_rhs,
            "perfect_bound_rhs": self.perfect_bound_rhs,
            "bound_holds": self.bound_holds,
            "perfect_bound_holds": self.perfect_bound_holds,
        }


def best_awake_compound(rounds: Sequence[SefRound]) -> list[int]:
    """Per round, the awake expert with the smallest loss (lowest index on ties)."""
    compound = []
    for rnd in rounds:
        best, best_loss = -1, np.inf
        for i in rnd.awake_set.indices():
            if rnd.per_expert_sef_loss[i] < best_loss:
                best, best_loss = i, rnd.per_expert_sef_loss[i]
        compound.append(best)
    return compound


def audit_compound_bound(
    source: RunLedger | SefTrace, compound: Sequence[int] | None = None
) -> RegretAudit:
    trace = SefTrace.from_ledger(source) if isinstance(source, RunLedger) else source
    rounds = trace.rounds
    if compound is None:
        compound = best_awake_compound(rounds)
    if len(compound) != len(rounds):
        raise AuditError(f"compound has {len(compound)} entries for {len(rounds)} rounds")

    for t, (rnd, i) in enumerate(zip(rounds, compound, strict=True), start=1):
        if i not in rnd.awake_set:
            raise AuditError(f"compound expert {i} is asleep at round {t}")

    counts = np.zeros((_K, _K), dtype=np.int64)
    cell_max = np.full((_K, _K), np.nan)
    lhs = 0.0
    for rnd, i, true_class, active in zip(
        rounds, compound, trace.true_classes, trace.active, strict=True
    ):
        if not active:
            continue
        instant = rnd.aggregation_loss - rnd.per_expert_sef_loss[i]
        lhs += instant
        cell = (rnd.awake_set.predicted_class - 1, true_class - 1)
        counts[cell] += 1
        if np.isnan(cell_max[cell]) or instant > cell_max[cell]:
            cell_max[cell] = instant

    filled = counts > 0
    rhs = float(np.sum(counts[filled] * cell_max[filled]))

    perfect_rhs: float | None = None
    perfect_holds: bool | None = None
    if not np.any(counts[~np.eye(_K, dtype=bool)]):
        perfect_rhs = float(
            sum(counts[k, k] * cell_max[k, k] for k in range(_K) if counts[k, k] > 0)
        )
        perfect_holds = lhs <= perfect_rhs + _BOUND_SLACK * max(1.0, abs(perfect_rhs))

    n = len(rounds[0].per_expert_sef_loss) if rounds else 0
    per_expert = np.array([sef_regret_vs_expert(rounds, i) for i in range(n)])
    return RegretAudit(
        per_expert_sef_regret=per_expert,
        cell_counts=counts,
        cell_max_instant_regret=cell_max,
        compound_regret=lhs,
        bound_rhs=rhs,
        perfect_bound_rhs=perfect_rhs,
        bound_holds=lhs <= rhs + _BOUND_SLACK * max(1.0, abs(rhs)),
        perfect_bound_holds=perfect_holds,
    )
