"""Uplink link abstraction: power split, MMSE receive filter, SINR and MCS rates."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .channel import ChannelRealization
from .config import WlanConfig


@dataclass(frozen=True, eq=False)
class McsTable:
    """Piecewise-linear SINR -> spectral efficiency map.

    ``m`` and ``b`` are slopes and intercepts of the operating lines; the
    achievable rate is ``max(0, min(min_k(m_k * gamma + b_k), max_rate))``.
    SINR is linear, rates are bits/s/Hz.
    """

    m: np.ndarray
    b: np.ndarray
    gamma_cap: float
    max_rate: float

    def __post_init__(self):
        m = np.asarray(self.m, dtype=float)
        b = np.asarray(self.b, dtype=float)
        if m.ndim != 1 or m.size == 0 or m.shape != b.shape:
            raise ValueError("MCS table needs matching, non-empty m and b lists")
        if np.any(m < 0) or not np.all(np.isfinite(m)) or not np.all(np.isfinite(b)):
            raise ValueError("MCS slopes must be finite and non-negative")
        if not self.gamma_cap > 0 or not self.max_rate > 0:
            raise ValueError("gamma_cap and max_rate must be positive")
        envelope_at_cap = float(np.min(m * self.gamma_cap + b))
        if envelope_at_cap > self.max_rate * (1 + 1e-9):
            raise ValueError(f"envelope at gamma_cap ({envelope_at_cap}) exceeds max_rate")
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "b", b)

    def __len__(self):
        return self.m.size

    def to_dict(self) -> dict:
        return {"m": self.m.tolist(), "b": self.b.tolist(),
                "gamma_cap": self.gamma_cap, "max_rate": self.max_rate}

    @classmethod
    def from_dict(cls, data: dict) -> "McsTable":
        return cls(m=data["m"], b=data["b"], gamma_cap=float(data["gamma_cap"]),
                   max_rate=float(data["max_rate"]))


def load_mcs_table(path=None) -> McsTable:
    """Load an MCS table file; the packaged 26-tone table by default."""
    if path is None:
        text = resources.files("wiser").joinpath("data/mcs_26tone.json").read_text()
    else:
        text = Path(path).read_text()
    return McsTable.from_dict(json.loads(text))


@dataclass(frozen=True, eq=False)
class LinkMetrics:
    sinr: np.ndarray          # (N, R), NaN where the station is not scheduled
    rate_per_ru: np.ndarray   # (N, R) bits/s
    rate_per_sta: np.ndarray  # (N,) bits/s
    power: np.ndarray         # (N, R)

    @property
    def rate_sum(self) -> float:
        return float(self.rate_per_sta.sum())


def as_assignment(assignment, n_stations: int, n_rus: int) -> np.ndarray:
    a = np.asarray(assignment)
    if a.shape != (n_stations, n_rus):
        raise ValueError(f"assignment shape {a.shape} != ({n_stations}, {n_rus})")
    if not np.all((a == 0) | (a == 1)):
        raise ValueError("assignment entries must be 0 or 1")
    return a.astype(np.int8, copy=False)


def allocate_power(assignment, config: WlanConfig) -> np.ndarray:
    """Equal split of each station's budget over its assigned RUs.

    The last assigned RU takes the remainder so the correctly rounded row sum
    is exactly ``total_power``.
    """
    a = as_assignment(assignment, config.n_stations, config.n_rus)
    total = config.total_power
    p = np.zeros(a.shape)
    for i in np.flatnonzero(a.any(axis=1)):
        cols = np.flatnonzero(a[i])
        share = total / cols.size
        p[i, cols] = share
        p[i, cols[-1]] = math.fsum([total] + [-share] * (cols.size - 1))
    return p


def _check_channels(effective_channels, noise_power):
    H = np.asarray(effective_channels, dtype=np.complex128)
    if H.ndim != 2:
        raise ValueError(f"effective channels must be an M x G matrix, got shape {H.shape}")
    if not np.all(np.isfinite(H)):
        raise ValueError("effective channels contain non-finite values")
    if not (np.isfinite(noise_power) and noise_power > 0):
        raise ValueError(f"noise power must be finite and positive, got {noise_power}")
    return H


def mmse_weights(effective_channels, noise_power: float) -> np.ndarray:
    """Columns ``w_g = (H H^H + noise I)^-1 h_g`` via a Cholesky solve."""
    H = _check_channels(effective_channels, noise_power)
    A = H @ H.conj().T + noise_power * np.eye(H.shape[0])
    return cho_solve(cho_factor(A, lower=True), H)


def compute_sinr(effective_channels, noise_power: float) -> np.ndarray:
    """Post-MMSE SINR of every column of the scheduled group on one RU.

    Signal power is ``|w_g^H h_g|^2``; the interference-plus-noise term is
    ``w_g^H (H_g H_g^H + noise I) w_g`` with column g removed from H_g.
    """
    H = _check_channels(effective_channels, noise_power)
    if H.shape[1] == 0:
        return np.zeros(0)
    W = mmse_weights(H, noise_power)
    C = H.conj().T @ W  # C[k, g] = h_k^H w_g
    signal = np.abs(np.diag(C)) ** 2
    cross = np.abs(C) ** 2
    np.fill_diagonal(cross, 0.0)
    denom = cross.sum(axis=0) + noise_power * np.sum(np.abs(W) ** 2, axis=0)
    return np.divide(signal, denom, out=np.zeros_like(signal), where=denom > 0)


def mcs_rate(gamma, table: McsTable):
    """Spectral efficiency (bits/s/Hz) for linear SINR ``gamma``."""
    if len(table) == 0:
        raise ValueError("empty MCS table")
    g = np.asarray(gamma, dtype=float)
    if np.any(g < 0):
        raise ValueError("SINR must be non-negative")
    envelope = np.min(np.multiply.outer(g, table.m) + table.b, axis=-1)
    out = np.clip(envelope, 0.0, table.max_rate)
    return float(out) if out.ndim == 0 else out


def evaluate_slot(chan: ChannelRealization, slot: int, assignment, config: WlanConfig,
                  table: McsTable) -> LinkMetrics:
    """SINR and rates of one uplink scheduled access under ``assignment``."""
    h = chan.slot(slot)
    N, R, _ = h.shape
    if (N, R) != (config.n_stations, config.n_rus):
        raise ValueError("channel and config dimensions disagree")
    a = as_assignment(assignment, N, R)
    power = allocate_power(a, config)

    sinr = np.full((N, R), np.nan)
    rate = np.zeros((N, R))
    for l in range(R):
        group = np.flatnonzero(a[:, l])
        if group.size == 0:
            continue
        H_eff = h[group, l, :].T * np.sqrt(power[group, l])
        gamma = compute_sinr(H_eff, config.noise_power)
        sinr[group, l] = gamma
        rate[group, l] = config.ru_bandwidth_hz * mcs_rate(gamma, table)
    return LinkMetrics(sinr=sinr, rate_per_ru=rate, rate_per_sta=rate.sum(axis=1), power=power)
