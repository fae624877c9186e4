"""Episode execution.

Each slot runs three nodes over a shared :class:`EpisodeState`:
``get_agent_observations`` -> ``call_scheduler`` -> ``schedule_transmission``.
The only state carried from one slot to the next is the per-agent feedback.
"""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .allocation import FeedbackStatus, feedback_after_correction, format_rows, parse_rows, \
    self_correct
from .channel import ChannelRealization, compute_gains, generate_channels
from .config import WlanConfig
from .context import PromptBundle, Strategy, build_prompts, parse_strategy
from .gateway import GatewayConfig, IntentResponse, ResponseLog, dispatch
from .observation import AgentObservation, impact_factors, make_observations
from .phy import LinkMetrics, McsTable, evaluate_slot, load_mcs_table
from .policies import PolicySpec, assign, parse_policy

log = logging.getLogger(__name__)

RESULTS_COLUMNS = ("episode", "seed", "slot", "rate_sum", "scheduled_pairs", "revoked_rus",
                   "parse_errors")


@dataclass
class EpisodeState:
    slot: int
    feedback_in: list[FeedbackStatus]
    gains: np.ndarray | None = None
    eta: np.ndarray | None = None
    observations: list[AgentObservation] = field(default_factory=list)
    prompts: PromptBundle | None = None
    responses: list[IntentResponse] | None = None
    statuses: list[FeedbackStatus] = field(default_factory=list)
    raw: np.ndarray | None = None          # A_t
    corrected: np.ndarray | None = None    # A'_t
    revoked: list[int] = field(default_factory=list)
    metrics: LinkMetrics | None = None
    feedback_out: list[FeedbackStatus] = field(default_factory=list)


@dataclass
class SlotRecord:
    slot: int
    raw: list[str]
    corrected: list[str]
    revoked_rus: list[int]
    rate_per_sta: list[float]
    sinr: list[list[float | None]]
    feedback_in: list[dict]
    feedback_out: list[dict]
    prompts: list[str] | None = None
    raw_responses: list[str] | None = None
    observation: dict | None = None

    @property
    def rate_sum(self) -> float:
        return float(sum(self.rate_per_sta))

    @property
    def parse_errors(self) -> int:
        return sum(1 for f in self.feedback_out if f["kind"] == "parse_error")

    def to_dict(self) -> dict:
        d = {k: v for k, v in self.__dict__.items() if v is not None}
        d["rate_sum"] = self.rate_sum
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SlotRecord":
        d = dict(d)
        d.pop("rate_sum", None)
        return cls(**d)


@dataclass
class EpisodeRecord:
    episode: int
    seed: int
    config: dict
    policy: str
    slots: list[SlotRecord]
    template: str | None = None
    strategy: str | None = None
    gateway: dict | None = None
    wall_time_s: list[float] = field(default_factory=list)

    @property
    def rate_sums(self) -> np.ndarray:
        return np.array([s.rate_sum for s in self.slots])

    @property
    def rates(self) -> np.ndarray:
        """(T, N) per-station rates."""
        return np.array([s.rate_per_sta for s in self.slots])

    def assignments(self, stage: str = "raw") -> list[np.ndarray]:
        if stage not in ("raw", "corrected"):
            raise ValueError("stage must be 'raw' or 'corrected'")
        return [parse_rows(getattr(s, stage)) for s in self.slots]

    @property
    def n_antennas(self) -> int:
        return self.config["n_antennas"]

    def to_dict(self, timing: bool = False) -> dict:
        d = {
            "episode": self.episode, "seed": self.seed, "config": self.config,
            "policy": self.policy, "template": self.template, "strategy": self.strategy,
            "gateway": self.gateway, "slots": [s.to_dict() for s in self.slots],
        }
        if timing:
            d["wall_time_s"] = self.wall_time_s
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EpisodeRecord":
        return cls(episode=d["episode"], seed=d["seed"], config=d["config"], policy=d["policy"],
                   slots=[SlotRecord.from_dict(s) for s in d["slots"]],
                   template=d.get("template"), strategy=d.get("strategy"),
                   gateway=d.get("gateway"), wall_time_s=d.get("wall_time_s", []))

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True) + "\n"


# -- pipeline nodes ------------------------------------------------------------

def get_agent_observations(state: EpisodeState, chan: ChannelRealization) -> None:
    state.gains = compute_gains(chan, state.slot)
    state.eta = impact_factors(state.gains)
    state.observations = make_observations(state.gains, state.eta, state.feedback_in)


def call_scheduler(state: EpisodeState, ctx: "_RunContext") -> None:
    cfg = ctx.config
    N, R = cfg.n_stations, cfg.n_rus
    if ctx.policy.kind != "llm":
        state.raw = np.asarray(assign(ctx.policy, gains=state.gains, eta=state.eta,
                                      chan=ctx.chan, slot=state.slot, config=cfg,
                                      table=ctx.table, episode_seed=ctx.seed), dtype=np.int8)
        state.statuses = [FeedbackStatus.success()] * N
        return

    state.prompts = build_prompts(state.observations, ctx.template, ctx.strategy,
                                  cfg.n_antennas, slot=state.slot,
                                  template_dir=ctx.template_dir, include_eta=ctx.include_eta)
    try:
        state.responses = dispatch(state.prompts, ctx.gateway, ctx.response_log,
                                   episode=ctx.episode)
    except Exception as exc:  # keep the episode alive; the whole slot sits out
        log.exception("dispatch failed in slot %d", state.slot)
        state.responses = [IntentResponse(i, "", None,
                                          FeedbackStatus.error(f"gateway: {exc}"), 0.0, True)
                           for i in range(N)]
    state.raw = np.array([r.assignment_row(R) for r in state.responses], dtype=np.int8)
    state.statuses = [r.status for r in state.responses]


def schedule_transmission(state: EpisodeState, ctx: "_RunContext") -> None:
    state.corrected, state.revoked = self_correct(state.raw, ctx.config)
    state.metrics = evaluate_slot(ctx.chan, state.slot, state.corrected, ctx.config, ctx.table)
    state.feedback_out = feedback_after_correction(state.statuses, state.raw, state.corrected,
                                                   report_corrections=ctx.report_corrections)


@dataclass
class _RunContext:
    chan: ChannelRealization
    config: WlanConfig
    table: McsTable
    policy: PolicySpec
    seed: int
    episode: int
    gateway: GatewayConfig | None
    template: str
    strategy: Strategy
    template_dir: object
    include_eta: bool
    report_corrections: bool
    response_log: ResponseLog | None
    log_observations: bool


def _slot_record(state: EpisodeState, ctx: _RunContext) -> SlotRecord:
    sinr = [[None if np.isnan(v) else float(v) for v in row] for row in state.metrics.sinr]
    rec = SlotRecord(
        slot=state.slot,
        raw=format_rows(state.raw),
        corrected=format_rows(state.corrected),
        revoked_rus=[l + 1 for l in state.revoked],
        rate_per_sta=[float(v) for v in state.metrics.rate_per_sta],
        sinr=sinr,
        feedback_in=[f.to_dict() for f in state.feedback_in],
        feedback_out=[f.to_dict() for f in state.feedback_out],
    )
    if state.prompts is not None:
        rec.prompts = list(state.prompts.prompts)
        rec.raw_responses = [r.raw for r in state.responses]
    if ctx.log_observations:
        rec.observation = {"zeta": state.gains.tolist(), "eta": state.eta.tolist()}
    return rec


def run_episode(chan: ChannelRealization, policy, config: WlanConfig | None = None,
                table: McsTable | None = None, gateway: GatewayConfig | None = None, *,
                template: str = "pt1", strategy="maxrate", episode: int = 0,
                report_corrections: bool = False, response_log: ResponseLog | None = None,
                template_dir=None, include_eta: bool = False,
                log_observations: bool = False) -> EpisodeRecord:
    config = config or chan.config
    table = table or load_mcs_table()
    policy = parse_policy(policy) if isinstance(policy, str) else policy
    strategy = parse_strategy(strategy) if isinstance(strategy, str) else strategy
    if (policy.kind == "llm") != (gateway is not None):
        raise ValueError("a gateway is required exactly when the policy is llm")
    if chan.h.shape[:3] != (config.n_slots, config.n_stations, config.n_rus):
        raise ValueError("channel realization does not cover the configured dimensions")
    policy.check(config)

    ctx = _RunContext(chan, config, table, policy, config.rng_seed, episode, gateway,
                      template, strategy, template_dir, include_eta, report_corrections,
                      response_log, log_observations)
    feedback = [FeedbackStatus.initial()] * config.n_stations
    slots, wall = [], []
    for t in range(config.n_slots):
        start = time.perf_counter()
        state = EpisodeState(slot=t, feedback_in=feedback)
        get_agent_observations(state, chan)
        call_scheduler(state, ctx)
        schedule_transmission(state, ctx)
        slots.append(_slot_record(state, ctx))
        feedback = state.feedback_out
        wall.append(time.perf_counter() - start)

    return EpisodeRecord(
        episode=episode, seed=config.rng_seed, config=config.to_dict(), policy=str(policy),
        slots=slots,
        template=template if policy.kind == "llm" else None,
        strategy=str(strategy) if policy.kind == "llm" else None,
        gateway=gateway.describe() if gateway else None,
        wall_time_s=wall,
    )


def episode_seeds(master_seed: int, episodes: int) -> list[int]:
    """Per-episode channel seeds: the master seed mixed with the episode counter."""
    return [int(np.random.SeedSequence([master_seed, e]).generate_state(1, np.uint64)[0]
                & 0x7FFF_FFFF_FFFF_FFFF)
            for e in range(episodes)]


def run_batch(config: WlanConfig, episodes: int, policy, master_seed: int = 0,
              table: McsTable | None = None, gateway: GatewayConfig | None = None,
              **episode_kwargs) -> list[EpisodeRecord]:
    """Independent episodes on channels seeded from ``master_seed``.

    A failing episode is logged and skipped; the batch carries on.
    """
    table = table or load_mcs_table()
    records = []
    for e, seed in enumerate(episode_seeds(master_seed, episodes)):
        cfg = config.replace(rng_seed=seed)
        try:
            records.append(run_episode(generate_channels(cfg), policy, cfg, table, gateway,
                                       episode=e, **episode_kwargs))
        except Exception:
            log.exception("episode %d (seed %d) failed", e, seed)
    return records


# -- files ---------------------------------------------------------------------

def episode_filename(episode: int) -> str:
    return f"episode_{episode:04d}.json"


def write_records(records: list[EpisodeRecord], out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for rec in records:
        path = out_dir / episode_filename(rec.episode)
        path.write_text(rec.dumps())
        timing = out_dir / f"episode_{rec.episode:04d}.timing.json"
        timing.write_text(json.dumps({"wall_time_s": rec.wall_time_s}) + "\n")
        paths.append(path)
    return paths


def read_records(run_dir) -> list[EpisodeRecord]:
    run_dir = Path(run_dir)
    paths = sorted(p for p in run_dir.glob("episode_*.json") if not p.name.endswith(".timing.json"))
    if not paths:
        raise FileNotFoundError(f"no episode records in {run_dir}")
    records = []
    for path in paths:
        rec = EpisodeRecord.from_dict(json.loads(path.read_text()))
        timing = path.with_name(path.stem + ".timing.json")
        if timing.exists():
            rec.wall_time_s = json.loads(timing.read_text())["wall_time_s"]
        records.append(rec)
    return records


def write_results_csv(records: list[EpisodeRecord], path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RESULTS_COLUMNS)
        for rec in records:
            for s in rec.slots:
                scheduled = sum(row.count("1") for row in s.corrected)
                writer.writerow([rec.episode, rec.seed, s.slot, repr(s.rate_sum), scheduled,
                                 len(s.revoked_rus), s.parse_errors])
    return path
