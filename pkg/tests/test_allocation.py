import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from wiser.allocation import (FeedbackStatus, action_space_size, centralized_combinations,
                              enumerate_actions, feedback_after_correction, format_rows,
                              group_sizes, parse_rows, self_correct, validate)
from wiser.channel import generate_channels
from wiser.config import WlanConfig
from wiser.phy import evaluate_slot

from oracles import column_sums_loop


@pytest.mark.parametrize("R", range(0, 10))
def test_action_space_matches_enumeration(R):
    rows = {tuple(r) for r in enumerate_actions(R)}
    assert action_space_size(R) == len(rows) == 2 ** R


def test_action_space_examples():
    assert action_space_size(9) == 512
    assert action_space_size(0) == 1
    assert action_space_size(3) == 8
    assert all(r.sum() == 2 for r in enumerate_actions(5, k=2))
    with pytest.raises(ValueError):
        action_space_size(-1)


def test_centralized_combinations():
    assert centralized_combinations(10, 4) == 385
    assert centralized_combinations(1, 1) == 1
    assert centralized_combinations(5, 5) == 31
    with pytest.raises(ValueError):
        centralized_combinations(3, 4)


def test_validate_examples():
    cfg = WlanConfig(5, 2, n_rus=4)
    assert validate(np.zeros((5, 4)), cfg) == []
    a = np.zeros((5, 4), dtype=int)
    a[[0, 1, 4], 2] = 1
    assert validate(a, cfg) == [2]


def test_validate_matches_loop(rng):
    for _ in range(200):
        N, R, M = int(rng.integers(1, 12)), int(rng.integers(1, 10)), int(rng.integers(1, 6))
        a = rng.integers(0, 2, size=(N, R))
        cfg = WlanConfig(N, M, n_rus=R)
        sums = column_sums_loop(a)
        assert validate(a, cfg) == [l for l in range(R) if sums[l] > M]
        assert list(group_sizes(a)) == sums


def test_group_size_examples():
    assert list(group_sizes(np.eye(3, dtype=int))) == [1, 1, 1]
    assert list(group_sizes(np.ones((6, 4), dtype=int))) == [6, 6, 6, 6]


def test_self_correct_full_column_revocation():
    cfg = WlanConfig(5, 2, n_rus=4)
    a = np.zeros((5, 4), dtype=int)
    a[[0, 1, 4], 2] = 1       # RU 3 holds agents 1, 2, 5
    a[0, 0] = a[3, 1] = 1
    out, bad = self_correct(a, cfg)
    assert bad == [2]
    assert np.all(out[:, 2] == 0)
    mask = np.ones(4, dtype=bool)
    mask[2] = False
    np.testing.assert_array_equal(out[:, mask], a[:, mask])


def test_self_correct_identity_on_feasible():
    cfg = WlanConfig(4, 4, n_rus=9)
    a = np.ones((4, 9), dtype=int)
    out, bad = self_correct(a, cfg)
    assert bad == []
    np.testing.assert_array_equal(out, a)


def test_self_correct_leaves_station_idle_downstream(table):
    cfg = WlanConfig(10, 4, n_rus=9, n_slots=1, rng_seed=3)
    chan = generate_channels(cfg)
    a = np.zeros((10, 9), dtype=int)
    a[:, 0] = 1           # 10 > M on RU 1: all revoked
    a[0, 1:] = 1          # station 1 keeps the rest
    out, bad = self_correct(a, cfg)
    rates = evaluate_slot(chan, 0, out, cfg, table).rate_per_sta
    assert bad == [0]
    assert np.all(rates[1:] == 0) and rates[0] > 0


binary = st.integers(1, 20).flatmap(
    lambda n: arrays(np.int8, (n, 9), elements=st.integers(0, 1)))


@settings(max_examples=300, deadline=None)
@given(binary, st.sampled_from([1, 2, 4, 8]))
def test_self_correct_properties(a, M):
    cfg = WlanConfig(a.shape[0], M, n_rus=9)
    out, bad = self_correct(a, cfg)
    assert validate(out, cfg) == []
    assert np.all(out <= a)
    again, bad2 = self_correct(out, cfg)
    np.testing.assert_array_equal(again, out)
    assert bad2 == []
    sums = column_sums_loop(a)
    assert bad == [l for l in range(9) if sums[l] > M]
    for l in range(9):
        if l in bad:
            assert not out[:, l].any()
        else:
            np.testing.assert_array_equal(out[:, l], a[:, l])


def test_rows_round_trip(rng):
    a = rng.integers(0, 2, size=(6, 9)).astype(np.int8)
    rows = format_rows(a)
    assert all(len(r) == 9 for r in rows)
    np.testing.assert_array_equal(parse_rows(rows), a)


def test_feedback_strings_and_dicts():
    assert str(FeedbackStatus.initial()) == "Initial"
    assert str(FeedbackStatus.success()) == "ParseSuccess"
    assert str(FeedbackStatus.error("bad json")) == "ParseError(bad json)"
    assert str(FeedbackStatus.corrected([1, 2])) == "SelfCorrected(1,2)"
    for s in (FeedbackStatus.initial(), FeedbackStatus.error("x"),
              FeedbackStatus.corrected([3])):
        assert FeedbackStatus.from_dict(s.to_dict()) == s


def test_feedback_after_correction():
    raw = np.array([[1, 1], [1, 0], [0, 1]])
    corrected = np.array([[0, 1], [0, 0], [0, 1]])
    statuses = [FeedbackStatus.success(), FeedbackStatus.error("x"), FeedbackStatus.success()]
    plain = feedback_after_correction(statuses, raw, corrected)
    assert plain == statuses
    told = feedback_after_correction(statuses, raw, corrected, report_corrections=True)
    assert told[0] == FeedbackStatus.corrected([1])
    assert told[1].is_error            # parse errors take precedence
    assert told[2] == FeedbackStatus.success()
