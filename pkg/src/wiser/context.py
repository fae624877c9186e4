"""Adaptive context management: per-agent prompts rebuilt every slot.

Two templates are shipped.  ``pt1`` describes each agent with three
semantic statements (strength, compatibility, comparison); ``pt2`` lists
the raw per-RU gain arrays.  Wording lives in ``templates/*.txt`` as
:class:`string.Template` text, so a different template directory can be
passed without code changes.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from string import Template

import numpy as np

from .allocation import INITIAL, PARSE_ERROR, PARSE_SUCCESS, SELF_CORRECTED, FeedbackStatus
from .observation import AgentObservation, semantic_analysis

TEMPLATE_IDS = ("pt1", "pt2")


@dataclass(frozen=True)
class Strategy:
    kind: str            # "bcq" or "maxrate"
    k: int | None = None

    def __str__(self):
        return f"bcq:{self.k}" if self.kind == "bcq" else "maxrate"


def parse_strategy(text: str) -> Strategy:
    text = text.strip().lower()
    m = re.fullmatch(r"bcq[:\-]?(\d+)", text)
    if m:
        return Strategy("bcq", int(m.group(1)))
    if text == "maxrate":
        return Strategy("maxrate")
    raise ValueError(f"unknown strategy {text!r}; use maxrate or bcq:<k>")


@dataclass(frozen=True, eq=False)
class PromptBundle:
    prompts: list[str]
    template_id: str
    strategy: Strategy
    slot: int
    n_antennas: int
    observations: list[AgentObservation] = field(default_factory=list, repr=False)

    def __len__(self):
        return len(self.prompts)


def _read_template(name: str, template_dir=None) -> Template:
    if template_dir is not None:
        return Template(Path(template_dir, name).read_text())
    return Template(resources.files("wiser").joinpath("templates", name).read_text())


def render_feedback(status: FeedbackStatus) -> str:
    if status.kind == INITIAL:
        return "This is the first scheduling round; there is no earlier response to report on."
    if status.kind == PARSE_SUCCESS:
        return "Your previous response was parsed successfully."
    if status.kind == PARSE_ERROR:
        return (f"Your previous response could not be parsed ({status.detail}). "
                "Answer with exactly one JSON object in the required format.")
    if status.kind == SELF_CORRECTED:
        rus = ", ".join(str(r) for r in status.rus)
        return (f"In the previous round the assignments on RU {rus} were revoked because "
                "too many agents were placed there.")
    raise ValueError(f"unknown feedback status {status.kind!r}")


def _gain_arrays(zeta: np.ndarray) -> str:
    peak = zeta.max()
    scaled = zeta / peak if peak > 0 else zeta
    return "\n".join(
        f"RU_{l + 1}: [" + ", ".join(f"{v:.3f}" for v in scaled[:, l]) + "]"
        for l in range(zeta.shape[1]))


def _impact_arrays(eta: np.ndarray) -> str:
    lines = ["IMPACT FACTORS: per RU, in the same agent order (higher means the other "
             "agents are relatively stronger on that RU)."]
    lines += [f"RU_{l + 1}: [" + ", ".join(f"{v:.3f}" for v in eta[:, l]) + "]"
              for l in range(eta.shape[1])]
    return "\n".join(lines) + "\n"


def build_prompts(observations: list[AgentObservation], template_id: str, strategy,
                  n_antennas: int, slot: int = 0, template_dir=None,
                  include_eta: bool = False) -> PromptBundle:
    if template_id not in TEMPLATE_IDS:
        raise ValueError(f"unknown template {template_id!r}; choose from {TEMPLATE_IDS}")
    if isinstance(strategy, str):
        strategy = parse_strategy(strategy)
    if not observations:
        return PromptBundle([], template_id, strategy, slot, n_antennas, [])

    zeta = observations[0].zeta
    n_stations, n_rus = zeta.shape
    body = _read_template(f"{template_id}.txt", template_dir)
    strategy_text = _read_template(f"strategy_{strategy.kind}.txt", template_dir)
    strong_count = strategy.k if strategy.kind == "bcq" else n_antennas

    common = dict(n_antennas=n_antennas, n_rus=n_rus, n_stations=n_stations,
                  k=strategy.k or n_antennas, strong_count=strong_count)
    if template_id == "pt1":
        strong = semantic_analysis(zeta, strong_count).agent_strength
        analysis = semantic_analysis(zeta, n_antennas)
    else:
        common["gain_arrays"] = _gain_arrays(zeta)
        common["impact_arrays"] = _impact_arrays(observations[0].eta) if include_eta else ""

    prompts = []
    for obs in observations:
        values = dict(common, agent=obs.agent + 1, feedback=render_feedback(obs.feedback))
        values["strategy"] = strategy_text.substitute(values).strip()
        if template_id == "pt1":
            values.update(strength=strong[obs.agent],
                          compatibility=analysis.agent_compatibility[obs.agent],
                          comparison=analysis.agent_comparison[obs.agent])
        prompts.append(body.substitute(values))
    return PromptBundle(prompts, template_id, strategy, slot, n_antennas, list(observations))
