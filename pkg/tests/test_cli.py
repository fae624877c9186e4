import json

import pytest
from click.testing import CliRunner

from wiser.cli import main

from conftest import closed_port_endpoint, ollama_reply

SCEN = ["--stas", "6", "--antennas", "2", "--rus", "4", "--slots", "5"]


@pytest.fixture
def cli():
    runner = CliRunner()

    def invoke(*args, **kw):
        return runner.invoke(main, [str(a) for a in args], catch_exceptions=False, **kw)

    return invoke


@pytest.fixture
def traces(cli, tmp_path):
    out = tmp_path / "tr"
    r = cli("gen-channels", *SCEN, "--episodes", 2, "--seed", 42, "--out", out)
    assert r.exit_code == 0, r.output
    return out


def test_gen_channels_count_and_determinism(cli, tmp_path):
    out = tmp_path / "tr"
    args = ["gen-channels", "--stas", 10, "--antennas", 4, "--slots", 50, "--episodes", 10,
            "--seed", 42, "--out", out]
    assert cli(*args).exit_code == 0
    files = sorted(out.glob("trace_*.wisr"))
    assert len(files) == 10
    first = [f.read_bytes() for f in files]
    assert cli(*args).exit_code == 3           # refuses to overwrite silently
    assert cli(*args, "--overwrite").exit_code == 0
    assert [f.read_bytes() for f in sorted(out.glob("trace_*.wisr"))] == first


def test_gen_channels_usage_errors(cli, tmp_path):
    assert cli("gen-channels", "--stas", 0, "--antennas", 4, "--out", tmp_path).exit_code == 2
    assert cli("gen-channels", "--antennas", 4, "--out", tmp_path).exit_code == 2


def test_gen_channels_jsonl(cli, tmp_path):
    r = cli("gen-channels", *SCEN, "--format", "both", "--out", tmp_path / "t")
    assert r.exit_code == 0
    assert (tmp_path / "t" / "trace_0000.jsonl").exists()
    assert (tmp_path / "t" / "trace_0000.wisr").exists()


def test_run_bcq_on_traces(cli, traces, tmp_path):
    before = {p: p.read_bytes() for p in traces.iterdir()}
    out = tmp_path / "bcq"
    r = cli("run", "--policy", "bcq:2", "--trace", traces, "--out", out)
    assert r.exit_code == 0, r.output
    assert len(list(out.glob("episode_????.json"))) == 2
    lines = (out / "results.csv").read_text().splitlines()
    assert len(lines) == 1 + 2 * 5
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["policy"] == "bcq:2" and manifest["episodes"] == 2
    assert {p: p.read_bytes() for p in traces.iterdir()} == before


def test_run_idempotent(cli, traces, tmp_path):
    out = tmp_path / "g"
    cli("run", "--policy", "greedy", "--trace", traces, "--out", out)
    first = (out / "results.csv").read_bytes()
    assert cli("run", "--policy", "greedy", "--trace", traces, "--out", out).exit_code == 3
    assert cli("run", "--policy", "greedy", "--trace", traces, "--out", out,
               "--overwrite").exit_code == 0
    assert (out / "results.csv").read_bytes() == first


def test_run_llm_needs_endpoint(cli, tmp_path, monkeypatch):
    monkeypatch.delenv("WISER_ENDPOINT", raising=False)
    r = cli("run", *SCEN, "--policy", "llm", "--out", tmp_path / "x")
    assert r.exit_code == 2
    r = cli("run", *SCEN, "--policy", "llm", "--endpoint", "http://h", "--out", tmp_path / "x")
    assert r.exit_code == 2


def test_run_bad_inputs(cli, tmp_path):
    assert cli("run", *SCEN, "--policy", "nonsense", "--out", tmp_path / "x").exit_code == 2
    assert cli("run", "--policy", "greedy", "--trace", tmp_path / "missing",
               "--out", tmp_path / "x").exit_code == 3
    (tmp_path / "bad").mkdir()
    (tmp_path / "bad" / "trace_0000.wisr").write_bytes(b"garbage")
    assert cli("run", "--policy", "greedy", "--trace", tmp_path / "bad",
               "--out", tmp_path / "x").exit_code == 3
    assert cli("run", *SCEN, "--policy", "bcq:3", "--out", tmp_path / "y").exit_code == 5
    assert cli("run", *SCEN, "--policy", "oracle", "--out", tmp_path / "z").exit_code == 5


def test_mock_llm_zero_error_and_reports(cli, traces, tmp_path):
    base, llm = tmp_path / "base", tmp_path / "llm"
    assert cli("run", "--policy", "bcq:2", "--trace", traces, "--out", base).exit_code == 0
    r = cli("run", "--policy", "llm", "--backend", "mock:bcq:2", "--template", "pt2",
            "--trace", traces, "--out", llm)
    assert r.exit_code == 0, r.output
    assert len((llm / "responses.jsonl").read_text().splitlines()) == 2 * 5 * 6

    r = cli("report", "error", "--inferred-run", llm, "--actual-run", base)
    assert "error_rate=0.0" in r.output
    assert (llm / "error.csv").read_text().splitlines()[1].endswith(",0.0")

    r = cli("report", "gain", "--policy-run", llm, "--baseline-run", base)
    assert r.exit_code == 0 and float(r.output) == 0.0

    r = cli("report", "cdf", "--run", base, "--out", tmp_path / "cdf.csv")
    assert r.exit_code == 0
    assert len((tmp_path / "cdf.csv").read_text().splitlines()) == 1 + 10

    r = cli("report", "groupsize", "--run", base)
    assert r.exit_code == 0 and (base / "groupsize.csv").exists()


def test_report_gain_greedy_vs_bcq(cli, traces, tmp_path):
    cli("run", "--policy", "bcq:1", "--trace", traces, "--out", tmp_path / "b")
    cli("run", "--policy", "greedy", "--trace", traces, "--out", tmp_path / "g")
    r = cli("report", "gain", "--policy-run", tmp_path / "g", "--baseline-run", tmp_path / "b",
            "--out", tmp_path / "gain.csv")
    assert r.exit_code == 0
    assert (tmp_path / "gain.csv").exists()
    float(r.output)


def test_report_cdf_fifty_rows(cli, tmp_path):
    out = tmp_path / "r"
    cli("run", "--stas", 4, "--antennas", 2, "--slots", 50, "--policy", "greedy", "--out", out)
    cli("report", "cdf", "--run", out)
    assert len((out / "cdf.csv").read_text().splitlines()) == 1 + 50


def test_report_missing_run(cli, tmp_path):
    assert cli("report", "cdf", "--run", tmp_path / "nope").exit_code == 3
    assert cli("report", "gain", "--policy-run", tmp_path,
               "--baseline-run", tmp_path).exit_code == 3


def test_run_llm_http_stub(cli, chat_stub, tmp_path):
    stub = chat_stub(lambda a, p, j: ollama_reply(
        f'Sure. {{"agent_id": {a}, "assigned_rus": [1], "reasoning": "ok"}}'))
    out = tmp_path / "live"
    r = cli("run", "--stas", 4, "--antennas", 2, "--rus", 3, "--slots", 2, "--policy", "llm",
            "--endpoint", stub.endpoint, "--model", "mistral-nemo", "--out", out)
    assert r.exit_code == 0, r.output
    log = [json.loads(l) for l in (out / "responses.jsonl").read_text().splitlines()]
    assert len(log) == 8
    assert all(l["status"] == "ParseSuccess" for l in log)
    assert stub.requests[0]["model"] == "mistral-nemo"


def test_run_llm_unreachable_exit_4(cli, tmp_path):
    r = cli("run", "--stas", 2, "--antennas", 1, "--rus", 2, "--slots", 1, "--policy", "llm",
            "--endpoint", closed_port_endpoint(), "--model", "m", "--retries", 0,
            "--out", tmp_path / "o")
    assert r.exit_code == 4
    assert (tmp_path / "o" / "results.csv").exists()
