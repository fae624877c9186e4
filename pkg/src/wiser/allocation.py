"""RU assignment matrices, the spatial constraint and the self-correction step.

An assignment is a binary (N, R) integer array: ``nu[i, l] == 1`` when RU l
is assigned to station i.  Rows are an agent's action.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from math import comb

import numpy as np

from .config import WlanConfig


def action_space_size(n_rus: int) -> int:
    if n_rus < 0:
        raise ValueError("number of RUs must be non-negative")
    return sum(comb(n_rus, k) for k in range(n_rus + 1))


def enumerate_actions(n_rus: int, k: int | None = None):
    """All binary rows of length ``n_rus`` (only those with ``k`` ones if given)."""
    sizes = range(n_rus + 1) if k is None else [k]
    for size in sizes:
        for chosen in itertools.combinations(range(n_rus), size):
            row = np.zeros(n_rus, dtype=np.int8)
            row[list(chosen)] = 1
            yield row


def centralized_combinations(n_stations: int, n_antennas: int) -> int:
    """Number of MU-MIMO groups a single centralized scheduler chooses from."""
    if not 1 <= n_antennas <= n_stations:
        raise ValueError(f"need 1 <= M <= N, got M={n_antennas}, N={n_stations}")
    return sum(comb(n_stations, m) for m in range(1, n_antennas + 1))


def group_sizes(assignment) -> np.ndarray:
    return np.asarray(assignment, dtype=np.int64).sum(axis=0)


def validate(assignment, config: WlanConfig) -> list[int]:
    """Indices of RUs whose group size exceeds the antenna count."""
    a = np.asarray(assignment)
    if a.shape != (config.n_stations, config.n_rus):
        raise ValueError(f"assignment shape {a.shape} does not match config")
    return [int(l) for l in np.flatnonzero(group_sizes(a) > config.n_antennas)]


def self_correct(assignment, config: WlanConfig) -> tuple[np.ndarray, list[int]]:
    """Revoke every assignment on any RU that holds more than M stations."""
    a = np.array(assignment, dtype=np.int8)
    violated = validate(a, config)
    a[:, violated] = 0
    return a, violated


def format_rows(assignment) -> list[str]:
    return ["".join(str(int(v)) for v in row) for row in np.asarray(assignment)]


def parse_rows(rows: list[str]) -> np.ndarray:
    if not rows:
        return np.zeros((0, 0), dtype=np.int8)
    return np.array([[int(c) for c in row] for row in rows], dtype=np.int8)


# -- feedback ----------------------------------------------------------------

INITIAL = "initial"
PARSE_SUCCESS = "parse_success"
PARSE_ERROR = "parse_error"
SELF_CORRECTED = "self_corrected"


@dataclass(frozen=True)
class FeedbackStatus:
    """Per-agent notification carried into the next slot's observation."""

    kind: str
    detail: str = ""
    rus: tuple[int, ...] = field(default=())

    def __str__(self):
        if self.kind == PARSE_ERROR:
            return f"ParseError({self.detail})"
        if self.kind == SELF_CORRECTED:
            return f"SelfCorrected({','.join(map(str, self.rus))})"
        return {INITIAL: "Initial", PARSE_SUCCESS: "ParseSuccess"}[self.kind]

    @property
    def is_error(self) -> bool:
        return self.kind == PARSE_ERROR

    @classmethod
    def initial(cls):
        return cls(INITIAL)

    @classmethod
    def success(cls):
        return cls(PARSE_SUCCESS)

    @classmethod
    def error(cls, detail: str):
        return cls(PARSE_ERROR, detail=detail)

    @classmethod
    def corrected(cls, rus):
        return cls(SELF_CORRECTED, rus=tuple(int(r) for r in rus))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "detail": self.detail, "rus": list(self.rus)}

    @classmethod
    def from_dict(cls, d: dict) -> "FeedbackStatus":
        return cls(d["kind"], d.get("detail", ""), tuple(d.get("rus", ())))


def feedback_after_correction(statuses, raw, corrected, report_corrections: bool = False):
    """Final per-agent feedback for a slot.

    Parse errors always win.  With ``report_corrections`` an agent that lost
    RUs to the self-correction step gets a SelfCorrected status listing the
    revoked RUs (1-based) instead of ParseSuccess.
    """
    out = []
    raw = np.asarray(raw)
    corrected = np.asarray(corrected)
    for i, status in enumerate(statuses):
        if report_corrections and not status.is_error:
            lost = np.flatnonzero((raw[i] == 1) & (corrected[i] == 0))
            if lost.size:
                out.append(FeedbackStatus.corrected(lost + 1))
                continue
        out.append(status)
    return out
