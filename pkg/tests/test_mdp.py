import math

import numpy as np
import pytest

from callroute import (
    InvalidStateError,
    SimConfig,
    TheoreticalState,
    build_model,
    event_rates,
    mixed_abandon_rate,
    reward_theoretical,
)
from callroute.mdp import shared_penalty

from conftest import make_cfg


def test_shared_penalty_is_rounded_staff_average(cfg):
    # (155 + 160) / 2 = 157.5, rounded half-up
    assert shared_penalty(cfg) == 158.0
    custom = make_cfg(service_mean=((90.0, 110.0), (100.0, 105.0)))
    # staff means 100 and 102.5; average 101.25 -> 101
    assert shared_penalty(custom) == 101.0


def test_reward_full_queue(cfg):
    assert reward_theoretical(TheoreticalState((14, 3), 0), 0, cfg) == -158.0


def test_reward_busy_while_other_idle(cfg):
    assert reward_theoretical(TheoreticalState((2, 0), 1), 0, cfg) == -158.0


def test_reward_idle_target_is_free(cfg):
    assert reward_theoretical(TheoreticalState((0, 0), 0), 0, cfg) == 0.0


def test_reward_expected_wait(cfg):
    # two ahead of the newcomer at staff 0: 2 * 155
    assert reward_theoretical(TheoreticalState((2, 3), 0), 0, cfg) == -310.0
    assert reward_theoretical(TheoreticalState((2, 3), 0), 1, cfg) == -3 * 160.0


def test_full_queue_outranks_idle_check(cfg):
    # precedence: the full-queue case fires even when another staff is idle
    assert reward_theoretical(TheoreticalState((14, 0), 0), 0, cfg) == -158.0


def test_reward_requires_decision_phase(cfg):
    with pytest.raises(InvalidStateError):
        reward_theoretical(TheoreticalState((1, 1), 2), 0, cfg)


def test_reward_symmetric_under_staff_relabelling(cfg):
    swapped = make_cfg(
        inter_arrival_mean=cfg.inter_arrival_mean,
        abandonment_mean=cfg.abandonment_mean,
        service_mean=(cfg.service_mean[1], cfg.service_mean[0]),
    )
    rng = np.random.default_rng(0)
    for _ in range(200):
        n0, n1 = rng.integers(0, 15, size=2)
        tau = int(rng.integers(0, 2))
        a = int(rng.integers(0, 2))
        original = reward_theoretical(TheoreticalState((n0, n1), tau), a, cfg)
        mirrored = reward_theoretical(TheoreticalState((n1, n0), tau), 1 - a, swapped)
        assert original == pytest.approx(mirrored, abs=1e-12)


def test_mixed_abandon_rate(cfg):
    lam0, lam1 = 1 / 100, 1 / 120
    w0 = lam0 / (lam0 + lam1)
    expected = w0 / 300 + (1 - w0) / 400
    theta = mixed_abandon_rate(cfg)
    assert theta == pytest.approx(expected, abs=1e-12)
    assert theta == pytest.approx(0.0029545, abs=1e-7)


def test_event_rates_empty_system(cfg):
    rates = event_rates((0, 0), cfg)
    assert rates.arrival == (1 / 100, 1 / 120)
    assert rates.service == (0.0, 0.0)
    assert rates.abandon == (0.0, 0.0)
    assert rates.total == pytest.approx(1 / 100 + 1 / 120)


def test_event_rates_single_busy_staff(cfg):
    rates = event_rates((1, 0), cfg)
    assert rates.service == (pytest.approx(1 / 155), 0.0)
    assert rates.abandon == (0.0, 0.0)  # the one client is in service


def test_event_rates_abandonment_scales_with_waiters(cfg):
    theta = mixed_abandon_rate(cfg)
    rates = event_rates((3, 2), cfg)
    assert rates.abandon == (pytest.approx(2 * theta), pytest.approx(theta))


def test_embedded_example_transition(cfg):
    model = build_model(cfg, "embedded")
    i = model.state_index(TheoreticalState((0, 0), 0))
    lam0, lam1, mu0 = 1 / 100, 1 / 120, 1 / 155
    z = lam0 + lam1 + mu0
    expected = {
        model.state_index(TheoreticalState((1, 0), 0)): lam0 / z,
        model.state_index(TheoreticalState((1, 0), 1)): lam1 / z,
        model.state_index(TheoreticalState((0, 0), 2)): mu0 / z,
    }
    got = dict(model.transitions(i, 0))
    assert set(got) == set(expected)
    for j, p in expected.items():
        assert got[j] == pytest.approx(p, abs=1e-12)


def test_embedded_state_count_and_normalization(cfg):
    model = build_model(cfg, "embedded")
    assert model.n_states == 15 * 15 * 3 == 675
    for a in range(model.n_actions):
        sums = np.bincount(model.trans_rows[a], weights=model.trans_probs[a],
                           minlength=model.n_states)
        valid = model.action_valid[:, a]
        assert np.abs(sums[valid] - 1.0).max() < 1e-12
        assert (model.trans_probs[a] >= 0.0).all()
        assert model.trans_cols[a].min() >= 0
        assert model.trans_cols[a].max() < model.n_states


def test_embedded_internal_states_have_single_free_action(cfg):
    model = build_model(cfg, "embedded")
    for i, state in enumerate(model.states):
        if state.phase == 2:
            assert model.obs_index[i] == -1
            assert model.action_valid[i].tolist() == [True, False]
            assert model.rewards[i, 0] == 0.0
        else:
            assert model.obs_index[i] >= 0
            assert model.action_valid[i].all()


def test_literal_mode_single_successor(cfg):
    model = build_model(cfg, "literal")
    assert model.n_states == 450
    i = model.state_index(TheoreticalState((3, 2), 1))
    assert model.transitions(i, 1) == [
        (model.state_index(TheoreticalState((3, 3), 1)), 1.0)
    ]
    # full queue: routing leaves the state unchanged
    j = model.state_index(TheoreticalState((14, 2), 0))
    assert model.transitions(j, 0) == [(j, 1.0)]


def test_literal_mode_normalization(cfg):
    model = build_model(cfg, "literal")
    for a in range(model.n_actions):
        assert len(model.trans_rows[a]) == model.n_states
        assert (model.trans_probs[a] == 1.0).all()


def test_queue_bounds_preserved_by_transitions(cfg):
    model = build_model(cfg, "embedded")
    for a in range(model.n_actions):
        for j in model.trans_cols[a]:
            state = model.states[j]
            assert all(0 <= n <= cfg.max_queue_len for n in state.queues)


def test_model_dump_round_trips(tmp_path, cfg):
    import json

    model = build_model(make_cfg(max_queue_len=2), "embedded")
    path = tmp_path / "model.jsonl"
    model.dump(path)
    lines = [json.loads(line) for line in path.read_text().splitlines()]
    n_decision = sum(1 for s in model.states if s.phase < 2)
    n_internal = model.n_states - n_decision
    assert len(lines) == n_decision * 2 + n_internal
    for line in lines:
        assert sum(p for _, p in line["next"]) == pytest.approx(1.0, abs=1e-12)
