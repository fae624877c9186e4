"""Prompt fan-out to a language-model backend and intent parsing.

Backends:

* ``http`` POSTs ``{model, messages, stream: false, format: "json"}`` to a
  chat endpoint (Ollama style) and reads ``message.content``; an
  OpenAI-style ``choices[0].message.content`` body is accepted as well.
* ``mock`` skips the model and answers every prompt with a schema-true
  object computed by a local policy from the bundle's observations.

Every agent gets exactly one response.  Transport failures are retried,
then reported as a ParseError for that agent; they never raise.
"""

from __future__ import annotations

import hashlib
import json
import logging
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import requests

from .allocation import FeedbackStatus
from .config import WlanConfig
from .context import PromptBundle
from .policies import PolicySpec, bcq_assign, greedy_assign, random_assign, slot_seed

log = logging.getLogger(__name__)

REQUIRED_FIELDS = ("agent_id", "assigned_rus", "reasoning")
_decoder = json.JSONDecoder()


class IntentError(ValueError):
    pass


# -- parsing -------------------------------------------------------------------

def extract_first_object(text: str) -> dict:
    """First balanced JSON object in ``text``, ignoring surrounding prose."""
    pos = text.find("{")
    while pos != -1:
        try:
            obj, _ = _decoder.raw_decode(text, pos)
        except json.JSONDecodeError:
            obj = None
        if isinstance(obj, dict):
            return obj
        pos = text.find("{", pos + 1)
    raise IntentError("no JSON object found")


def _is_int(value) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def intent_to_row(obj: dict, n_rus: int, expected_agent: int | None = None) -> np.ndarray:
    for name in REQUIRED_FIELDS:
        if name not in obj:
            raise IntentError(f"missing field '{name}'")
    if not _is_int(obj["agent_id"]):
        raise IntentError("agent_id must be an integer")
    if expected_agent is not None and obj["agent_id"] != expected_agent:
        raise IntentError(f"agent_id mismatch: expected {expected_agent}, got {obj['agent_id']}")
    rus = obj["assigned_rus"]
    if not isinstance(rus, list):
        raise IntentError("assigned_rus must be a list")
    if not isinstance(obj["reasoning"], str):
        raise IntentError("reasoning must be a string")
    row = np.zeros(n_rus, dtype=np.int8)
    for ru in rus:
        if not _is_int(ru):
            raise IntentError(f"non-integer RU entry {ru!r}")
        if not 1 <= ru <= n_rus:
            raise IntentError(f"RU out of range: {ru}")
        row[ru - 1] = 1
    return row


def parse_intent(raw: str, n_rus: int, expected_agent: int | None = None):
    """Binary RU row and feedback status for one model response.

    On any failure the row is all zeros, so the agent sits the slot out.
    """
    try:
        row = intent_to_row(extract_first_object(raw or ""), n_rus, expected_agent)
    except IntentError as exc:
        return np.zeros(n_rus, dtype=np.int8), FeedbackStatus.error(str(exc))
    return row, FeedbackStatus.success()


def serialize_intent(agent_id: int, row, reasoning: str = "") -> str:
    rus = [int(l) + 1 for l in np.flatnonzero(np.asarray(row))]
    return json.dumps({"agent_id": agent_id, "assigned_rus": rus, "reasoning": reasoning})


# -- gateway -------------------------------------------------------------------

@dataclass(frozen=True)
class GatewayConfig:
    backend: str = "http"                 # "http" or "mock"
    endpoint: str | None = None
    model: str | None = None
    path: str = "/api/chat"
    timeout: float = 120.0
    retries: int = 2
    backoff: float = 0.5
    max_in_flight: int = 4
    response_format: str | None = "json"
    mock_policy: PolicySpec | None = None

    def __post_init__(self):
        if self.backend not in ("http", "mock"):
            raise ValueError(f"unknown backend {self.backend!r}")
        if not self.timeout > 0:
            raise ValueError("timeout must be positive")
        if self.retries < 0:
            raise ValueError("retries must be >= 0")
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")
        if self.backend == "http" and not (self.endpoint and self.model):
            raise ValueError("http backend needs an endpoint and a model name")
        if self.backend == "mock":
            if self.mock_policy is None or self.mock_policy.kind not in ("bcq", "greedy", "random"):
                raise ValueError("mock backend needs a bcq, greedy or random policy")

    @property
    def url(self) -> str:
        base = self.endpoint.rstrip("/")
        return base if base.endswith(self.path) else base + self.path

    def describe(self) -> dict:
        if self.backend == "mock":
            return {"backend": "mock", "policy": str(self.mock_policy)}
        return {"backend": "http", "url": self.url, "model": self.model,
                "timeout": self.timeout, "retries": self.retries}


@dataclass
class IntentResponse:
    agent: int                    # 0-based
    raw: str
    row: np.ndarray | None        # present iff the parse succeeded
    status: FeedbackStatus
    latency_ms: float
    transport_error: bool = False

    def assignment_row(self, n_rus: int) -> np.ndarray:
        return self.row if self.row is not None else np.zeros(n_rus, dtype=np.int8)


class ResponseLog:
    """Append-only JSON-lines log of every request/response pair."""

    def __init__(self, path):
        self.path = Path(path)
        self._lock = threading.Lock()

    def append(self, slot: int, prompt: str, resp: IntentResponse, episode=None) -> None:
        record = {
            "episode": episode,
            "slot": slot,
            "agent": resp.agent + 1,
            "prompt_sha256": hashlib.sha256(prompt.encode()).hexdigest(),
            "raw": resp.raw,
            "status": str(resp.status),
            "latency_ms": round(resp.latency_ms, 3),
        }
        with self._lock, open(self.path, "a") as fh:
            fh.write(json.dumps(record) + "\n")


def _mock_matrix(bundle: PromptBundle, gw: GatewayConfig) -> np.ndarray:
    obs = bundle.observations[0]
    zeta, eta = obs.zeta, obs.eta
    spec = gw.mock_policy
    M = bundle.n_antennas
    if spec.kind == "bcq":
        return bcq_assign(zeta, spec.k, M, per_ru=spec.per_ru)
    if spec.kind == "greedy":
        return greedy_assign(zeta, eta, M)
    N, R = zeta.shape
    cfg = WlanConfig(N, M, n_rus=R)
    return random_assign(slot_seed(spec.seed, 0, bundle.slot), cfg, p=spec.p)


def _chat_content(data) -> str:
    if isinstance(data, dict):
        msg = data.get("message")
        if isinstance(msg, dict) and isinstance(msg.get("content"), str):
            return msg["content"]
        choices = data.get("choices")
        if choices and isinstance(choices[0], dict):
            content = (choices[0].get("message") or {}).get("content")
            if isinstance(content, str):
                return content
    raise ValueError("response body has no message content")


def _post_chat(prompt: str, gw: GatewayConfig) -> str:
    payload = {"model": gw.model, "messages": [{"role": "user", "content": prompt}],
               "stream": False}
    if gw.response_format:
        payload["format"] = gw.response_format
    r = requests.post(gw.url, json=payload, timeout=gw.timeout)
    r.raise_for_status()
    return _chat_content(r.json())


def _http_one(agent: int, prompt: str, gw: GatewayConfig, n_rus: int) -> IntentResponse:
    start = time.perf_counter()
    last_error = None
    for attempt in range(gw.retries + 1):
        try:
            raw = _post_chat(prompt, gw)
        except (requests.RequestException, ValueError) as exc:
            last_error = exc
            log.warning("agent %d attempt %d failed: %s", agent + 1, attempt + 1, exc)
            if attempt < gw.retries and gw.backoff > 0:
                time.sleep(gw.backoff * 2 ** attempt)
            continue
        row, status = parse_intent(raw, n_rus, expected_agent=agent + 1)
        return IntentResponse(agent, raw, row if not status.is_error else None, status,
                              (time.perf_counter() - start) * 1e3)
    status = FeedbackStatus.error(f"gateway: {type(last_error).__name__}: {last_error}")
    return IntentResponse(agent, "", None, status, (time.perf_counter() - start) * 1e3,
                          transport_error=True)


def dispatch(bundle: PromptBundle, gw: GatewayConfig, response_log: ResponseLog | None = None,
             episode=None) -> list[IntentResponse]:
    """One response per prompt, in agent order."""
    n = len(bundle.prompts)
    if n == 0:
        return []
    n_rus = bundle.observations[0].zeta.shape[1]

    if gw.backend == "mock":
        start = time.perf_counter()
        matrix = _mock_matrix(bundle, gw)
        responses = []
        for i in range(n):
            raw = serialize_intent(i + 1, matrix[i], f"mock policy {gw.mock_policy}")
            row, status = parse_intent(raw, n_rus, expected_agent=i + 1)
            responses.append(IntentResponse(i, raw, row if not status.is_error else None,
                                            status, (time.perf_counter() - start) * 1e3))
    else:
        with ThreadPoolExecutor(max_workers=min(gw.max_in_flight, n)) as pool:
            futures = [pool.submit(_http_one, i, p, gw, n_rus)
                       for i, p in enumerate(bundle.prompts)]
            responses = [f.result() for f in futures]

    if response_log is not None:
        for prompt, resp in zip(bundle.prompts, responses):
            response_log.append(bundle.slot, prompt, resp, episode=episode)
    return responses
