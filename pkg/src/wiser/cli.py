"""Command-line entry point: ``wiser gen-channels | run | report``.

Exit codes: 0 success, 2 usage, 3 IO, 4 gateway unreachable,
5 constraint/validation failure.
"""

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click

from . import metrics
from .channel import (TraceFormatError, generate_channels, read_trace, read_trace_jsonl,
                      write_trace, write_trace_jsonl)
from .config import ConfigError, WlanConfig
from .gateway import GatewayConfig, ResponseLog
from .phy import load_mcs_table
from .policies import OracleBudgetError, parse_policy
from .runner import episode_seeds, read_records, run_episode, write_records, write_results_csv

EXIT_USAGE, EXIT_IO, EXIT_GATEWAY, EXIT_VALIDATION = 2, 3, 4, 5


def _fail(message: str, code: int):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _build_config(config_path, **overrides) -> WlanConfig:
    base = {}
    if config_path:
        try:
            base = json.loads(Path(config_path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            _fail(f"cannot read config {config_path}: {exc}", EXIT_IO)
    base.update({k: v for k, v in overrides.items() if v is not None})
    for required in ("n_stations", "n_antennas"):
        if required not in base:
            raise click.UsageError(f"--{'stas' if required == 'n_stations' else 'antennas'} "
                                   "is required (flag or --config)")
    try:
        return WlanConfig.from_dict(base)
    except ConfigError as exc:
        raise click.UsageError(str(exc))


def _guard_output(paths, overwrite: bool):
    existing = [p for p in paths if Path(p).exists()]
    if existing and not overwrite:
        _fail(f"{existing[0]} exists; pass --overwrite to replace it", EXIT_IO)


def _scenario_options(f):
    options = [
        click.option("--config", "config_path", type=click.Path(dir_okay=False),
                     help="JSON file with WlanConfig fields; flags override it."),
        click.option("--stas", type=click.IntRange(min=1), help="Number of stations N."),
        click.option("--antennas", type=click.IntRange(min=1), help="AP antennas M."),
        click.option("--rus", type=click.IntRange(1, 9), help="Number of 26-tone RUs R."),
        click.option("--slots", type=click.IntRange(min=1), help="UL-SAs per episode T."),
        click.option("--radius", type=click.FloatRange(min=0, min_open=True),
                     help="Cell radius in metres."),
        click.option("--noise-power", type=click.FloatRange(min=0, min_open=True)),
        click.option("--total-power", type=click.FloatRange(min=0, min_open=True)),
        click.option("--episodes", type=click.IntRange(min=0), default=1, show_default=True),
        click.option("--seed", type=click.IntRange(min=0), default=0, show_default=True,
                     help="Master seed; episode seeds are derived from it."),
    ]
    for opt in reversed(options):
        f = opt(f)
    return f


def _scenario(config_path, stas, antennas, rus, slots, radius, noise_power, total_power):
    return _build_config(config_path, n_stations=stas, n_antennas=antennas, n_rus=rus,
                         n_slots=slots, cell_radius_m=radius, noise_power=noise_power,
                         total_power=total_power)


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def main(verbose):
    """Multi-agent uplink scheduling simulator for MU-MIMO-OFDMA WLANs."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")


@main.command("gen-channels")
@_scenario_options
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
@click.option("--format", "fmt", type=click.Choice(["bin", "jsonl", "both"]), default="bin",
              show_default=True)
@click.option("--overwrite", is_flag=True)
def gen_channels(config_path, stas, antennas, rus, slots, radius, noise_power, total_power,
                 episodes, seed, out_dir, fmt, overwrite):
    """Generate one channel trace file per episode."""
    base = _scenario(config_path, stas, antennas, rus, slots, radius, noise_power, total_power)
    out = Path(out_dir)
    suffixes = {"bin": [".wisr"], "jsonl": [".jsonl"], "both": [".wisr", ".jsonl"]}[fmt]
    seeds = episode_seeds(seed, episodes)
    targets = [out / f"trace_{e:04d}{sfx}" for e in range(episodes) for sfx in suffixes]
    _guard_output(targets, overwrite)
    try:
        out.mkdir(parents=True, exist_ok=True)
        for e, s in enumerate(seeds):
            chan = generate_channels(base.replace(rng_seed=s))
            for sfx in suffixes:
                path = out / f"trace_{e:04d}{sfx}"
                (write_trace if sfx == ".wisr" else write_trace_jsonl)(chan, path)
            click.echo(f"trace_{e:04d}: N={base.n_stations} M={base.n_antennas} "
                       f"R={base.n_rus} T={base.n_slots} seed={s}")
    except OSError as exc:
        _fail(str(exc), EXIT_IO)


def _load_traces(trace_dir, base_config):
    trace_dir = Path(trace_dir)
    if not trace_dir.is_dir():
        _fail(f"trace directory {trace_dir} not found", EXIT_IO)
    paths = sorted(trace_dir.glob("trace_*.wisr"))
    loader = read_trace
    if not paths:
        paths, loader = sorted(trace_dir.glob("trace_*.jsonl")), read_trace_jsonl
    if not paths:
        _fail(f"no trace files in {trace_dir}", EXIT_IO)
    try:
        if loader is read_trace:
            return [read_trace(p, base_config) for p in paths]
        return [read_trace_jsonl(p) for p in paths]
    except (OSError, TraceFormatError) as exc:
        _fail(f"unreadable trace: {exc}", EXIT_IO)


def _gateway(backend, endpoint, model, timeout, retries, max_in_flight):
    if backend.startswith("mock"):
        _, _, spec = backend.partition(":")
        if not spec:
            raise click.UsageError("mock backend needs a policy, e.g. --backend mock:bcq:4")
        try:
            return GatewayConfig(backend="mock", mock_policy=parse_policy(spec))
        except ValueError as exc:
            raise click.UsageError(str(exc))
    if backend != "http":
        raise click.UsageError(f"unknown backend {backend!r}")
    if not endpoint or not model:
        raise click.UsageError("--policy llm needs --endpoint and --model (or a mock backend)")
    return GatewayConfig(backend="http", endpoint=endpoint, model=model, timeout=timeout,
                         retries=retries, max_in_flight=max_in_flight)


@main.command()
@_scenario_options
@click.option("--policy", "policy_text", required=True,
              help="bcq:<k>, random[:seed], greedy, oracle or llm.")
@click.option("--trace", "trace_dir", type=click.Path(),
              help="Directory of trace files; otherwise channels are generated.")
@click.option("--template", type=click.Choice(["pt1", "pt2"]), default="pt1", show_default=True)
@click.option("--strategy", default="maxrate", show_default=True, help="maxrate or bcq:<k>.")
@click.option("--backend", default="http", show_default=True,
              help="http, or mock:<policy> for an offline stand-in model.")
@click.option("--endpoint", envvar="WISER_ENDPOINT", help="Chat endpoint base URL.")
@click.option("--model", help="Model name sent to the endpoint.")
@click.option("--timeout", type=click.FloatRange(min=0, min_open=True), default=120.0,
              show_default=True)
@click.option("--retries", type=click.IntRange(min=0), default=2, show_default=True)
@click.option("--max-in-flight", type=click.IntRange(min=1), default=4, show_default=True)
@click.option("--include-eta", is_flag=True, help="Add impact factors to pt2 prompts.")
@click.option("--report-corrections", is_flag=True,
              help="Tell agents which RUs the self-correction step revoked.")
@click.option("--template-dir", type=click.Path(file_okay=False, exists=True))
@click.option("--mcs-table", type=click.Path(dir_okay=False, exists=True))
@click.option("--log-observations", is_flag=True)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
@click.option("--overwrite", is_flag=True)
def run(config_path, stas, antennas, rus, slots, radius, noise_power, total_power, episodes,
        seed, policy_text, trace_dir, template, strategy, backend, endpoint, model, timeout,
        retries, max_in_flight, include_eta, report_corrections, template_dir, mcs_table,
        log_observations, out_dir, overwrite):
    """Run episodes under one policy and write records plus results.csv."""
    try:
        policy = parse_policy(policy_text)
    except ValueError as exc:
        raise click.UsageError(str(exc))
    gateway = None
    if policy.kind == "llm":
        gateway = _gateway(backend, endpoint, model, timeout, retries, max_in_flight)

    if trace_dir:
        base = None
        if config_path or (stas and antennas):
            base = _scenario(config_path, stas, antennas, rus, slots, radius, noise_power,
                             total_power)
        channels = _load_traces(trace_dir, base)
    else:
        base = _scenario(config_path, stas, antennas, rus, slots, radius, noise_power,
                         total_power)
        channels = None

    out = Path(out_dir)
    _guard_output([out / "results.csv", out / "responses.jsonl"], overwrite)
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "responses.jsonl").unlink(missing_ok=True)
        for stale in out.glob("episode_*.json"):
            stale.unlink()
        table = load_mcs_table(mcs_table)
    except (OSError, ValueError, KeyError) as exc:
        _fail(str(exc), EXIT_IO)
    response_log = ResponseLog(out / "responses.jsonl") if gateway else None

    kwargs = dict(template=template, strategy=strategy, report_corrections=report_corrections,
                  response_log=response_log, template_dir=template_dir,
                  include_eta=include_eta, log_observations=log_observations)
    records = []
    try:
        if channels is None:
            for e, s in enumerate(episode_seeds(seed, episodes)):
                cfg = base.replace(rng_seed=s)
                records.append(run_episode(generate_channels(cfg), policy, cfg, table, gateway,
                                           episode=e, **kwargs))
        else:
            for e, chan in enumerate(channels):
                records.append(run_episode(chan, policy, chan.config, table, gateway,
                                           episode=e, **kwargs))
    except (OracleBudgetError, ValueError) as exc:
        _fail(str(exc), EXIT_VALIDATION)

    write_records(records, out)
    write_results_csv(records, out / "results.csv")
    manifest = {
        "config_path": config_path, "trace_dir": trace_dir, "policy": str(policy),
        "template": template if gateway else None, "strategy": strategy if gateway else None,
        "gateway": gateway.describe() if gateway else None, "output_dir": str(out),
        "master_seed": seed if not trace_dir else None, "episodes": len(records),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")

    total = sum(len(r.slots) for r in records)
    mean = sum(r.rate_sums.sum() for r in records) / total if total else 0.0
    errors = sum(s.parse_errors for r in records for s in r.slots)
    click.echo(f"{len(records)} episodes, {total} slots, policy {policy}: "
               f"mean rate-sum {mean / 1e6:.3f} Mbit/s, parse errors {errors}")

    if gateway and gateway.backend == "http" and total and _all_transport_failures(out):
        _fail("gateway unreachable: no request reached the endpoint", EXIT_GATEWAY)


def _all_transport_failures(out: Path) -> bool:
    path = out / "responses.jsonl"
    if not path.exists():
        return False
    lines = [json.loads(l) for l in path.read_text().splitlines() if l]
    return bool(lines) and all(l["status"].startswith("ParseError(gateway:") for l in lines)


@main.group()
def report():
    """Metrics over recorded runs."""


def _records(run_dir):
    try:
        return read_records(run_dir)
    except (OSError, ValueError, KeyError) as exc:
        _fail(f"cannot load run {run_dir}: {exc}", EXIT_IO)


@report.command("error")
@click.option("--inferred-run", type=click.Path(file_okay=False), required=True)
@click.option("--actual-run", type=click.Path(file_okay=False), required=True)
@click.option("--stage", type=click.Choice(["raw", "corrected"]), default="raw",
              show_default=True, help="Which inferred assignments to score.")
@click.option("--out", type=click.Path(dir_okay=False))
def report_error(inferred_run, actual_run, stage, out):
    """Assignment error of one run against another (e.g. llm vs BCQ)."""
    try:
        rep = metrics.records_error(_records(inferred_run), _records(actual_run), stage)
    except ValueError as exc:
        _fail(str(exc), EXIT_VALIDATION)
    metrics.write_error_csv(rep, out or Path(inferred_run) / "error.csv")
    click.echo(f"FP={rep.fp} FN={rep.fn} total={rep.total} error_rate={rep.error_rate}")


@report.command("gain")
@click.option("--policy-run", type=click.Path(file_okay=False), required=True)
@click.option("--baseline-run", type=click.Path(file_okay=False), required=True)
@click.option("--out", type=click.Path(dir_okay=False))
def report_gain(policy_run, baseline_run, out):
    """Rate-sum gain (%) of a policy run over a paired baseline run."""
    try:
        rep = metrics.performance_gain(_records(policy_run), _records(baseline_run))
    except ValueError as exc:
        _fail(str(exc), EXIT_VALIDATION)
    metrics.write_gain_csv(rep, out or Path(policy_run) / "gain.csv")
    click.echo(f"{rep.gain_percent:.4f}")


@report.command("cdf")
@click.option("--run", "run_dir", type=click.Path(file_okay=False), required=True)
@click.option("--out", type=click.Path(dir_okay=False))
@click.option("--plot", type=click.Path(dir_okay=False), help="Also save a step plot image.")
def report_cdf(run_dir, out, plot):
    """Empirical CDF of per-slot rate-sums."""
    records = _records(run_dir)
    cdf = metrics.rate_cdf(records)
    path = metrics.write_cdf_csv(cdf, out or Path(run_dir) / "cdf.csv")
    if plot:
        metrics.plot_cdf({records[0].policy: cdf}, plot)
    click.echo(f"{len(cdf)} CDF points -> {path}")


@report.command("groupsize")
@click.option("--run", "run_dir", type=click.Path(file_okay=False), required=True)
@click.option("--out", type=click.Path(dir_okay=False))
def report_groupsize(run_dir, out):
    """Per-RU MU-MIMO group size histograms before and after self-correction."""
    rep = metrics.group_size_distribution(_records(run_dir))
    path = metrics.write_groupsize_csv(rep, out or Path(run_dir) / "groupsize.csv")
    click.echo(f"{'RU':>3} {'mean g (post)':>14} {'violating slots':>16}")
    sizes = range(rep.post.shape[1])
    for l in range(rep.post.shape[0]):
        mean = sum(g * c for g, c in zip(sizes, rep.post[l])) / max(rep.post[l].sum(), 1)
        click.echo(f"{l + 1:>3} {mean:>14.2f} {int(rep.violations[l]):>16}")
    click.echo(f"-> {path}")


if __name__ == "__main__":
    main()
