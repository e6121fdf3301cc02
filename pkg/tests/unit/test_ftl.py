"""
Unit tests for the follow-the-leader selector between BOA and its sleeping-expert version.

Reference: expert-aggregation-layer.md §Aggregation
"""
import numpy as np
import pytest

from src.expert_aggregation.ftl import FtlChoice, FtlState, ftl_select, ftl_update
from src.models.errors import DomainError


class TestFtlSelect:

    def test_smaller_loss_wins(self):
        assert ftl_select(FtlState(cumulative_loss_a=3.0, cumulative_loss_b=2.5)) is FtlChoice.B
        assert ftl_select(FtlState(cumulative_loss_a=2.5, cumulative_loss_b=3.0)) is FtlChoice.A

    def test_tie_goes_to_sleeping_candidate(self):
        assert ftl_select(FtlState(cumulative_loss_a=4.0, cumulative_loss_b=4.0)) is FtlChoice.B

    def test_first_round_picks_sleeping_candidate(self):
        assert ftl_select(FtlState()) is FtlChoice.B

    def test_regularizer_penalises_sleeping_candidate(self):
        state = FtlState(
            cumulative_loss_a=10.2, cumulative_loss_b=10.0, regularizer_coefficient=0.0025, round=100
        )
        # 10.0 + 0.0025 * 100 > 10.2
        assert ftl_select(state) is FtlChoice.A

    def test_round_must_be_positive(self):
        with pytest.raises(DomainError):
            ftl_select(FtlState(round=0))


class TestFtlUpdate:

    def test_accumulates_and_advances(self):
        state = ftl_update(FtlState(), 1.5, 2.0)
        assert state.cumulative_loss_a == 1.5
        assert state.cumulative_loss_b == 2.0
        assert state.round == 2
        assert state.last_choice is FtlChoice.B
        assert state.switches == 0

    def test_counts_switches(self):
        state = FtlState()
        for loss_a, loss_b in [(0.0, 1.0), (0.0, 1.0), (5.0, 0.0), (0.0, 0.0)]:
            state = ftl_update(state, loss_a, loss_b)
        # choices B, A, A, B
        assert state.switches == 2

    def test_negative_loss_rejected(self):
        with pytest.raises(DomainError):
            ftl_update(FtlState(), -1.0, 0.0)

    @pytest.mark.parametrize("coefficient", [0.0, 0.0025])
    def test_matches_brute_force_argmin(self, coefficient):
        rng = np.random.default_rng(int(coefficient * 1e4))
        for _ in range(10_000):
            length = int(rng.integers(1, 15))
            if rng.random() < 0.5:
                losses = rng.integers(0, 3, size=(length, 2)).astype(float)
            else:
                losses = rng.exponential(1.0, size=(length, 2))
            state = FtlState(regularizer_coefficient=coefficient)
            total_a = total_b = 0.0
            expected_switches = 0
            previous = None
            for t, (loss_a, loss_b) in enumerate(losses, start=1):
                expected = FtlChoice.B if total_b + coefficient * t <= total_a else FtlChoice.A
                assert ftl_select(state) is expected
                if previous is not None and expected is not previous:
                    expected_switches += 1
                previous = expected
                state = ftl_update(state, float(loss_a), float(loss_b))
                total_a += float(loss_a)
                total_b += float(loss_b)
            assert state.switches == expected_switches
