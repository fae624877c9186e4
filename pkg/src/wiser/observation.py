"""Agent state: channel gains, impact factors and last feedback.

Impact factor of agent i on RU l: the other agents' gains relative to
agent i's own gain on that RU, summed over the others and scaled so the
row sums to R.  A large value means the others are strong, relative to
agent i, on that RU.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .allocation import FeedbackStatus

GAIN_FLOOR = 1e-12


def relative_interference(zeta) -> np.ndarray:
    """(N, R) matrix: sum over k != i of zeta[k, l] / zeta[i, l]."""
    z = np.maximum(np.asarray(zeta, dtype=float), GAIN_FLOOR)
    ratio = z[None, :, :] / z[:, None, :]   # ratio[i, k, l]
    idx = np.arange(z.shape[0])
    ratio[idx, idx, :] = 0.0
    return ratio.sum(axis=1)


def impact_factors(zeta) -> np.ndarray:
    zeta = np.asarray(zeta, dtype=float)
    N, R = zeta.shape
    if N == 1:
        return np.ones((1, R))
    num = relative_interference(zeta)
    den = num.sum(axis=1, keepdims=True)
    return np.divide(R * num, den, out=np.ones_like(num), where=den > 0)


def compatibility_load(zeta) -> np.ndarray:
    """Per-agent total relative interference; lower means more compatible."""
    zeta = np.asarray(zeta, dtype=float)
    if zeta.shape[0] == 1:
        return np.zeros(1)
    return relative_interference(zeta).sum(axis=1)


@dataclass(frozen=True, eq=False)
class AgentObservation:
    agent: int                # 0-based station index
    zeta: np.ndarray          # (N, R), shared by all agents
    eta: np.ndarray           # (N, R), shared by all agents
    feedback: FeedbackStatus  # status produced in the previous slot

    def to_dict(self) -> dict:
        return {"agent": self.agent, "zeta": self.zeta.tolist(), "eta": self.eta.tolist(),
                "feedback": self.feedback.to_dict()}


def make_observations(gains, eta, prev_feedback=None) -> list[AgentObservation]:
    gains = np.asarray(gains, dtype=float)
    eta = np.asarray(eta, dtype=float)
    if gains.shape != eta.shape:
        raise ValueError("gain and impact matrices differ in shape")
    n = gains.shape[0]
    if prev_feedback is None:
        prev_feedback = [FeedbackStatus.initial()] * n
    if len(prev_feedback) != n:
        raise ValueError(f"expected {n} feedback entries, got {len(prev_feedback)}")
    return [AgentObservation(i, gains, eta, prev_feedback[i]) for i in range(n)]


@dataclass(frozen=True)
class SemanticAnalysis:
    agent_strength: list[str]       # "is" / "is not" one of the M strongest
    agent_compatibility: list[str]  # "is" / "is not" one of the M most compatible
    agent_comparison: list[int]     # agents both stronger and more compatible


def _top(keys: np.ndarray, count: int) -> np.ndarray:
    # lexsort: last key is primary; index breaks ties so the lower index wins
    order = np.lexsort((np.arange(keys.size), keys))
    member = np.zeros(keys.size, dtype=bool)
    member[order[:count]] = True
    return member


def semantic_analysis(obs, n_antennas: int) -> SemanticAnalysis:
    """Flags for every agent, computed from the shared gain matrix.

    ``obs`` is one AgentObservation (all agents share zeta) or a gain matrix.
    """
    zeta = obs.zeta if isinstance(obs, AgentObservation) else np.asarray(obs, dtype=float)
    strength = zeta.sum(axis=1)
    load = compatibility_load(zeta)
    strongest = _top(-strength, n_antennas)
    compatible = _top(load, n_antennas)
    stronger = strength[None, :] > strength[:, None]      # [i, j]: j stronger than i
    more_compatible = load[None, :] < load[:, None]
    comparison = (stronger & more_compatible).sum(axis=1)
    return SemanticAnalysis(
        agent_strength=["is" if s else "is not" for s in strongest],
        agent_compatibility=["is" if c else "is not" for c in compatible],
        agent_comparison=[int(x) for x in comparison],
    )
