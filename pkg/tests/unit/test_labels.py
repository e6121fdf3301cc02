"""
Unit tests for error classes, oversampling and the wake-up rule.

Reference: expert-aggregation-layer.md §Wake-up rule
"""
import numpy as np
import pytest

from src.expert_aggregation.labels import (
    is_active_round,
    make_label,
    replication_for,
    wake_from_class,
)
from src.models.awake import AwakeSet, AwakeSource
from src.models.errors import DomainError
from src.models.forecast import ExpertRoster

LOW = {"Q10", "Q30"}
HIGH = {"Q70", "Q90"}


class TestMakeLabel:

    @pytest.mark.parametrize(
        "prediction, observation, expected",
        [
            (0.0, 2.5, 1),
            (0.0, 10.0, 1),
            (2.5, 0.0, 3),
            (-1.0, -8.0, 3),
            (1.0, 0.0, 2),
            (0.0, 2.4999, 2),
            (-2.4999, 0.0, 2),
        ],
    )
    def test_thresholds_inclusive(self, prediction, observation, expected):
        assert make_label(prediction, observation) == expected

    def test_custom_threshold(self):
        assert make_label(1.0, 0.0, threshold=1.0) == 3
        assert make_label(1.0, 0.0, threshold=1.5) == 2


class TestReplication:

    def test_both_extremes_oversampled(self):
        assert replication_for(0.0, 3.0) == 5
        assert replication_for(3.0, 0.0) == 5
        assert replication_for(0.0, 1.0) == 1

    def test_custom_factor(self):
        assert replication_for(0.0, 2.5, factor=3) == 3


class TestWakeFromClass:

    def test_exhaustive_rule(self, full_roster):
        unbiased = {e.name for e in full_roster if not e.biased}
        for cls in (1, 2, 3):
            for t in range(1, 301):
                awake = wake_from_class(cls, t, full_roster)
                names = {full_roster.names[i] for i in awake.indices()}
                assert unbiased <= names
                woken = names - unbiased
                if t <= 100 or cls == 2:
                    assert woken == set()
                elif cls == 1:
                    assert woken == HIGH
                else:
                    assert woken == LOW
                assert awake.predicted_class == cls
                assert awake.source is AwakeSource.CLASSIFIER

    def test_activation_round_is_configurable(self, full_roster):
        assert len(wake_from_class(3, 11, full_roster, activation_round=10).indices()) == 9
        assert len(wake_from_class(3, 10, full_roster, activation_round=10).indices()) == 7

    def test_active_round_needs_completed_rounds(self):
        assert not is_active_round(100, 100)
        assert is_active_round(101, 100)
        assert is_active_round(2, 1)

    def test_biased_without_group_never_woken(self):
        roster = ExpertRoster.from_names(["a", "b", "odd"], biased=["odd"])
        for cls in (1, 2, 3):
            assert wake_from_class(cls, 500, roster).mask == (True, True, False)

    def test_unknown_class(self, full_roster):
        with pytest.raises(DomainError):
            wake_from_class(4, 150, full_roster)


class TestAwakeSet:

    def test_empty_set_rejected(self):
        with pytest.raises(DomainError):
            AwakeSet((False, False))

    def test_build_requires_unbiased_experts(self, small_roster):
        mask = small_roster.always_awake_mask.copy()
        mask[0] = False
        with pytest.raises(DomainError):
            AwakeSet.build(small_roster, mask)

    def test_build_checks_length(self, small_roster):
        with pytest.raises(DomainError):
            AwakeSet.build(small_roster, [True, True])

    def test_accessors(self):
        awake = AwakeSet((True, False, True), 3)
        assert awake.indices() == [0, 2]
        assert awake.bitmask() == "101"
        assert 2 in awake and 1 not in awake and 7 not in awake
        assert not awake.covers_all
        assert AwakeSet.everyone(2).source is AwakeSource.ALL_AWAKE
        assert np.array_equal(awake.array, [True, False, True])
