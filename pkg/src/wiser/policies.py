"""Reference scheduling policies: BCQ-k, random, greedy and the exhaustive oracle."""

from __future__ import annotations

import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .allocation import self_correct
from .channel import ChannelRealization
from .config import WlanConfig
from .phy import McsTable, evaluate_slot

DEFAULT_ORACLE_BUDGET_BITS = 20
POLICY_KINDS = ("bcq", "random", "greedy", "oracle", "llm")


class OracleBudgetError(RuntimeError):
    pass


@dataclass(frozen=True)
class PolicySpec:
    kind: str
    k: int | None = None          # bcq group size
    seed: int = 0                 # random policy
    p: float = 0.5                # random policy assignment probability
    per_ru: bool = False          # bcq ranks per RU instead of by total gain
    budget_bits: int = DEFAULT_ORACLE_BUDGET_BITS

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"unknown policy kind {self.kind!r}")
        if self.kind == "bcq" and (self.k is None or self.k < 1):
            raise ValueError("bcq policy needs k >= 1")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("random policy probability must be in [0, 1]")

    def __str__(self):
        if self.kind == "bcq":
            return f"bcq:{self.k}" + (":ru" if self.per_ru else "")
        if self.kind == "random":
            return f"random:{self.seed}"
        return self.kind

    def check(self, config: WlanConfig) -> None:
        """Raise if the policy cannot run on this scenario."""
        if self.kind == "bcq" and not 1 <= self.k <= min(config.n_stations, config.n_antennas):
            raise ValueError(f"bcq k={self.k} must be in 1..min(N, M)="
                             f"{min(config.n_stations, config.n_antennas)}")
        if self.kind == "oracle" and config.n_stations * config.n_rus > self.budget_bits:
            raise OracleBudgetError(
                f"oracle needs 2^{config.n_stations * config.n_rus} candidates, "
                f"budget is 2^{self.budget_bits}")


def parse_policy(text: str) -> PolicySpec:
    """Parse ``bcq:4``, ``bcq:2:ru``, ``random``, ``random:7``, ``greedy``, ``oracle``, ``llm``."""
    text = text.strip().lower()
    m = re.fullmatch(r"bcq[:\-]?(\d+)(:ru)?", text)
    if m:
        return PolicySpec("bcq", k=int(m.group(1)), per_ru=bool(m.group(2)))
    m = re.fullmatch(r"random(?::(\d+))?", text)
    if m:
        return PolicySpec("random", seed=int(m.group(1) or 0))
    if text in ("greedy", "oracle", "llm"):
        return PolicySpec(text)
    raise ValueError(f"cannot parse policy {text!r}")


def _top_indices(keys, count):
    """Indices of the ``count`` largest keys; lower index wins ties."""
    keys = np.asarray(keys, dtype=float)
    order = np.lexsort((np.arange(keys.size), -keys))
    return order[:count]


def bcq_assign(gains, k: int, n_antennas: int, per_ru: bool = False) -> np.ndarray:
    """All RUs to the ``k`` stations with the best channel gains."""
    gains = np.asarray(gains, dtype=float)
    N, R = gains.shape
    if not 1 <= k <= min(N, n_antennas):
        raise ValueError(f"k={k} must be in 1..min(N, M)={min(N, n_antennas)}")
    a = np.zeros((N, R), dtype=np.int8)
    if per_ru:
        for l in range(R):
            a[_top_indices(gains[:, l], k), l] = 1
    else:
        a[_top_indices(gains.sum(axis=1), k), :] = 1
    return a


def greedy_assign(gains, eta, n_antennas: int, eta_weight: float = 0.5) -> np.ndarray:
    """Per RU, admit the M agents with the best gain discounted by impact factor.

    Score is ``zeta / eta**eta_weight``: an agent is preferred on RUs where it
    is strong and where the others are relatively weak.
    """
    gains = np.asarray(gains, dtype=float)
    eta = np.maximum(np.asarray(eta, dtype=float), 1e-12)
    N, R = gains.shape
    score = gains / eta ** eta_weight
    cap = min(n_antennas, N)
    a = np.zeros((N, R), dtype=np.int8)
    for l in range(R):
        a[_top_indices(score[:, l], cap), l] = 1
    return a


def random_assign(seed, config: WlanConfig, p: float = 0.5) -> np.ndarray:
    """Bernoulli(p) assignment, self-corrected so it is always feasible."""
    rng = np.random.default_rng(seed)
    raw = (rng.random((config.n_stations, config.n_rus)) < p).astype(np.int8)
    corrected, _ = self_correct(raw, config)
    return corrected


def _candidate_block(start: int, stop: int, n_bits: int) -> np.ndarray:
    """Binary matrices for integers start..stop-1, most significant bit first."""
    ints = np.arange(start, stop, dtype=np.uint64)
    shifts = np.arange(n_bits - 1, -1, -1, dtype=np.uint64)
    return ((ints[:, None] >> shifts[None, :]) & np.uint64(1)).astype(np.int8)


def _search_block(chan, slot, config, table, start, stop):
    N, R = config.n_stations, config.n_rus
    bits = _candidate_block(start, stop, N * R).reshape(-1, N, R)
    feasible = np.all(bits.sum(axis=1) <= config.n_antennas, axis=1)
    best_rate, best_idx = -np.inf, -1
    for offset in np.flatnonzero(feasible):
        rate = evaluate_slot(chan, slot, bits[offset], config, table).rate_sum
        if rate > best_rate:
            best_rate, best_idx = rate, start + int(offset)
    return best_rate, best_idx


def oracle_assign(chan: ChannelRealization, slot: int, config: WlanConfig, table: McsTable,
                  budget_bits: int = DEFAULT_ORACLE_BUDGET_BITS, n_jobs: int = 1,
                  block_size: int = 4096) -> tuple[np.ndarray, float]:
    """Exhaustive maximiser of the slot rate-sum over all feasible assignments.

    Candidates are visited in lexicographic order of the flattened matrix;
    among equal rate-sums the lexicographically smallest wins, whatever the
    block partitioning.
    """
    n_bits = config.n_stations * config.n_rus
    if n_bits > budget_bits:
        raise OracleBudgetError(f"oracle needs 2^{n_bits} candidates, budget is 2^{budget_bits}")
    total = 1 << n_bits
    bounds = [(s, min(s + block_size, total)) for s in range(0, total, block_size)]
    if n_jobs > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(lambda b: _search_block(chan, slot, config, table, *b),
                                    bounds))
    else:
        results = [_search_block(chan, slot, config, table, *b) for b in bounds]
    # blocks are in index order, so strict > keeps the smallest index on ties
    best_rate, best_idx = -np.inf, -1
    for rate, idx in results:
        if rate > best_rate:
            best_rate, best_idx = rate, idx
    best = _candidate_block(best_idx, best_idx + 1, n_bits).reshape(
        config.n_stations, config.n_rus)
    return best, float(best_rate)


def slot_seed(policy_seed: int, episode_seed: int, slot: int) -> int:
    return int(np.random.SeedSequence([policy_seed, episode_seed, slot]).generate_state(1)[0])


def assign(spec: PolicySpec, *, gains, eta, chan, slot, config, table, episode_seed=0):
    """Raw (pre-correction) assignment of a non-LLM policy for one slot."""
    if spec.kind == "bcq":
        return bcq_assign(gains, spec.k, config.n_antennas, per_ru=spec.per_ru)
    if spec.kind == "greedy":
        return greedy_assign(gains, eta, config.n_antennas)
    if spec.kind == "random":
        return random_assign(slot_seed(spec.seed, episode_seed, slot), config, p=spec.p)
    if spec.kind == "oracle":
        return oracle_assign(chan, slot, config, table, budget_bits=spec.budget_bits)[0]
    raise ValueError(f"policy {spec.kind!r} is not a local policy")
