import json

import numpy as np
import pytest

from wiser.allocation import FeedbackStatus, validate
from wiser.channel import compute_gains, generate_channels
from wiser.config import WlanConfig
from wiser.gateway import GatewayConfig
from wiser.policies import PolicySpec, bcq_assign, oracle_assign
from wiser.runner import (EpisodeRecord, episode_seeds, read_records, run_batch, run_episode,
                          write_records, write_results_csv)

from conftest import ollama_reply


def test_bcq_episode_structure(table):
    cfg = WlanConfig(6, 4, n_rus=9, n_slots=8, rng_seed=3)
    chan = generate_channels(cfg)
    rec = run_episode(chan, "bcq:3", cfg, table)
    for t, (raw, corrected) in enumerate(zip(rec.assignments("raw"), rec.assignments("corrected"))):
        expected = bcq_assign(compute_gains(chan, t), 3, 4)
        np.testing.assert_array_equal(raw, expected)
        np.testing.assert_array_equal(corrected, expected)
        assert sum(r.all() for r in raw) == 3
    assert all(s.parse_errors == 0 for s in rec.slots)
    assert rec.template is None and rec.gateway is None


def test_oracle_single_slot_passthrough(table):
    cfg = WlanConfig(1, 1, n_rus=1, n_slots=1, rng_seed=5)
    chan = generate_channels(cfg)
    rec = run_episode(chan, "oracle", cfg, table)
    _, rate = oracle_assign(chan, 0, cfg, table)
    assert rec.slots[0].rate_sum == rate


def test_mock_llm_matches_direct_bcq(table):
    cfg = WlanConfig(10, 4, n_rus=9, n_slots=10, rng_seed=8)
    chan = generate_channels(cfg)
    direct = run_episode(chan, "bcq:4", cfg, table)
    gw = GatewayConfig(backend="mock", mock_policy=PolicySpec("bcq", k=4))
    llm = run_episode(chan, "llm", cfg, table, gw)
    assert list(llm.rate_sums) == list(direct.rate_sums)
    assert [s.raw for s in llm.slots] == [s.raw for s in direct.slots]
    assert llm.gateway == {"backend": "mock", "policy": "bcq:4"}
    assert len(llm.slots[0].prompts) == 10


def test_corrected_always_feasible(table):
    cfg = WlanConfig(12, 2, n_rus=9, n_slots=10, rng_seed=2)
    chan = generate_channels(cfg)
    rec = run_episode(chan, "random:1", cfg, table, report_corrections=True)
    for a in rec.assignments("corrected"):
        assert validate(a, cfg) == []


def test_feedback_causality(chat_stub, table):
    # agent 2 answers garbage unless told its last answer failed: alternates
    def reply(agent, prompt, payload):
        if agent == 2 and "could not be parsed" not in prompt:
            return ollama_reply("no json here")
        return ollama_reply(f'{{"agent_id": {agent}, "assigned_rus": [1], "reasoning": ""}}')

    stub = chat_stub(reply)
    cfg = WlanConfig(3, 4, n_rus=3, n_slots=6, rng_seed=1)
    gw = GatewayConfig(endpoint=stub.endpoint, model="m", retries=0)
    rec = run_episode(generate_channels(cfg), "llm", cfg, table, gw)
    assert all(f == FeedbackStatus.initial().to_dict() for f in rec.slots[0].feedback_in)
    for prev, cur in zip(rec.slots, rec.slots[1:]):
        assert cur.feedback_in == prev.feedback_out
    kinds = [s.feedback_out[1]["kind"] for s in rec.slots]
    assert kinds == ["parse_error", "parse_success"] * 3
    assert all(s.feedback_out[0]["kind"] == "parse_success" for s in rec.slots)
    assert rec.slots[0].raw[1] == "000"


def test_report_corrections_feedback(chat_stub, table):
    # every agent piles onto RU 1 and also takes its own RU; M=2 < N=3
    def reply(agent, prompt, payload):
        return ollama_reply(f'{{"agent_id": {agent}, "assigned_rus": [1, {agent + 1}], '
                            '"reasoning": ""}')

    stub = chat_stub(reply)
    cfg = WlanConfig(3, 2, n_rus=4, n_slots=2, rng_seed=1)
    gw = GatewayConfig(endpoint=stub.endpoint, model="m", retries=0)
    chan = generate_channels(cfg)
    told = run_episode(chan, "llm", cfg, table, gw, report_corrections=True)
    s0 = told.slots[0]
    assert s0.revoked_rus == [1]
    assert s0.corrected == ["0100", "0010", "0001"]
    assert all(f == FeedbackStatus.corrected([1]).to_dict() for f in s0.feedback_out)
    assert "revoked" in told.slots[1].prompts[0]
    quiet = run_episode(chan, "llm", cfg, table, gw)
    assert all(f["kind"] == "parse_success" for f in quiet.slots[0].feedback_out)
    assert quiet.slots[0].rate_per_sta == s0.rate_per_sta


def test_gateway_required_iff_llm(table):
    cfg = WlanConfig(2, 1, n_rus=2, n_slots=1)
    chan = generate_channels(cfg)
    with pytest.raises(ValueError):
        run_episode(chan, "llm", cfg, table)
    with pytest.raises(ValueError):
        run_episode(chan, "bcq:1", cfg, table,
                    GatewayConfig(backend="mock", mock_policy=PolicySpec("greedy")))
    with pytest.raises(ValueError):
        run_episode(chan, "bcq:2", cfg, table)


def test_episode_seeds():
    seeds = episode_seeds(7, 1000)
    assert len(set(seeds)) == 1000
    assert seeds == episode_seeds(7, 1000)
    assert seeds[:5] == episode_seeds(7, 5)
    assert episode_seeds(7, 0) == []
    assert all(0 <= s < 2 ** 63 for s in seeds)


def test_run_batch_reproducible(table):
    cfg = WlanConfig(5, 2, n_rus=4, n_slots=5)
    a = run_batch(cfg, 3, "greedy", master_seed=11, table=table)
    b = run_batch(cfg, 3, "greedy", master_seed=11, table=table)
    assert [r.dumps() for r in a] == [r.dumps() for r in b]
    assert len({r.seed for r in a}) == 3
    assert run_batch(cfg, 0, "greedy", table=table) == []


def test_run_batch_skips_failed_episodes(table, caplog):
    cfg = WlanConfig(5, 2, n_rus=5, n_slots=2)
    # oracle over 25 bits exceeds the budget in every episode
    assert run_batch(cfg, 2, "oracle", table=table) == []
    assert "failed" in caplog.text


def test_records_round_trip(tmp_path, table):
    cfg = WlanConfig(4, 2, n_rus=3, n_slots=4)
    recs = run_batch(cfg, 2, "bcq:2", master_seed=1, table=table, log_observations=True)
    write_records(recs, tmp_path)
    back = read_records(tmp_path)
    assert [r.dumps() for r in back] == [r.dumps() for r in recs]
    assert back[0].wall_time_s == recs[0].wall_time_s
    d = json.loads((tmp_path / "episode_0000.json").read_text())
    assert "wall_time_s" not in d
    assert d["slots"][0]["observation"]["zeta"]
    assert EpisodeRecord.from_dict(d).rates.shape == (4, 4)


def test_results_csv(tmp_path, table):
    cfg = WlanConfig(4, 2, n_rus=3, n_slots=4)
    recs = run_batch(cfg, 2, "random:2", master_seed=1, table=table)
    path = write_results_csv(recs, tmp_path / "r.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == "episode,seed,slot,rate_sum,scheduled_pairs,revoked_rus,parse_errors"
    assert len(lines) == 1 + 8
    assert float(lines[1].split(",")[3]) == recs[0].slots[0].rate_sum
