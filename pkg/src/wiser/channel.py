"""Seeded frequency-selective uplink channels and the trace file format.

The channel is a substitute for the TGax indoor model: log-distance path
loss times Rayleigh small-scale fading drawn from an exponential
power-delay profile.  The per-RU response is the tap sum evaluated at the
RU centre frequency, so neighbouring RUs are correlated but not identical.

Arrays are laid out ``h[t, i, l, m]`` (slot, station, RU, antenna).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import WlanConfig, mean_path_gain

TRACE_MAGIC = b"WISR"
TRACE_VERSION = 1
# magic, version, N, M, R, T, seed, noise power, total power, RU bandwidth
_HEADER = struct.Struct("<4sHIIIIQddd")


class TraceFormatError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ChannelRealization:
    h: np.ndarray          # (T, N, R, M) complex128
    positions: np.ndarray  # (T, N, 2) metres, AP at the origin
    config: WlanConfig

    @property
    def n_slots(self) -> int:
        return self.h.shape[0]

    def slot(self, t: int) -> np.ndarray:
        """Channel vectors of one slot, shape (N, R, M)."""
        _check_slot(self, t)
        return self.h[t]


def _check_slot(chan: ChannelRealization, slot: int) -> None:
    if not 0 <= slot < chan.h.shape[0]:
        raise IndexError(f"slot {slot} out of range 0..{chan.h.shape[0] - 1}")


def power_delay_profile(config: WlanConfig) -> tuple[np.ndarray, np.ndarray]:
    """Tap delays (s) and unit-sum tap powers of the exponential profile."""
    delays = np.arange(config.n_taps) * config.tap_spacing_s
    powers = np.exp(-delays / config.rms_delay_spread_s)
    return delays, powers / powers.sum()


def ru_center_frequencies(config: WlanConfig) -> np.ndarray:
    """RU centre offsets from the carrier (Hz), RUs packed contiguously."""
    return (np.arange(config.n_rus) - (config.n_rus - 1) / 2.0) * config.ru_bandwidth_hz


def generate_channels(config: WlanConfig) -> ChannelRealization:
    config.validate()
    T, N, M = config.n_slots, config.n_stations, config.n_antennas
    rng = np.random.default_rng(config.rng_seed)

    # stations re-drawn uniformly in the disk every slot
    radius = config.cell_radius_m * np.sqrt(rng.random((T, N)))
    theta = 2.0 * np.pi * rng.random((T, N))
    positions = np.stack([radius * np.cos(theta), radius * np.sin(theta)], axis=-1)

    delays, tap_power = power_delay_profile(config)
    L = delays.size
    taps = (rng.standard_normal((T, N, M, L)) + 1j * rng.standard_normal((T, N, M, L)))
    taps *= np.sqrt(tap_power / 2.0)

    steering = np.exp(-2j * np.pi * np.outer(ru_center_frequencies(config), delays))  # (R, L)
    small_scale = np.einsum("tnml,rl->tnrm", taps, steering)

    gain = mean_path_gain(radius, config.pathloss_exponent)
    h = small_scale * np.sqrt(gain)[:, :, None, None]
    return ChannelRealization(h=np.ascontiguousarray(h, dtype=np.complex128),
                              positions=positions, config=config)


def compute_gains(chan: ChannelRealization, slot: int) -> np.ndarray:
    """Channel gain matrix zeta (N, R): Frobenius norm of each channel vector."""
    _check_slot(chan, slot)
    return np.linalg.norm(chan.h[slot], axis=-1)


# -- trace files -------------------------------------------------------------

def write_trace(chan: ChannelRealization, path) -> Path:
    cfg = chan.config
    T, N, R, M = chan.h.shape
    header = _HEADER.pack(TRACE_MAGIC, TRACE_VERSION, N, M, R, T, cfg.rng_seed,
                          cfg.noise_power, cfg.total_power, cfg.ru_bandwidth_hz)
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(chan.h.astype("<c16", copy=False).tobytes(order="C"))
        fh.write(chan.positions.astype("<f8", copy=False).tobytes(order="C"))
    return path


def read_trace(path, base_config: WlanConfig | None = None) -> ChannelRealization:
    """Load a binary trace.

    Fields absent from the header (radius, channel-model parameters) are
    taken from ``base_config`` when given, else left at their defaults.
    """
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise TraceFormatError(f"{path}: truncated header")
    magic, version, N, M, R, T, seed, noise, ptot, bw = _HEADER.unpack_from(data)
    if magic != TRACE_MAGIC:
        raise TraceFormatError(f"{path}: bad magic {magic!r}")
    if version != TRACE_VERSION:
        raise TraceFormatError(f"{path}: unsupported version {version}")
    n_h = T * N * R * M
    expected = _HEADER.size + 16 * n_h + 16 * T * N
    if len(data) != expected:
        raise TraceFormatError(f"{path}: expected {expected} bytes, found {len(data)}")
    offset = _HEADER.size
    h = np.frombuffer(data, dtype="<c16", count=n_h, offset=offset).reshape(T, N, R, M)
    positions = np.frombuffer(data, dtype="<f8", count=2 * T * N,
                              offset=offset + 16 * n_h).reshape(T, N, 2)
    fields = dict(n_stations=N, n_antennas=M, n_rus=R, n_slots=T, rng_seed=int(seed),
                  noise_power=noise, total_power=ptot, ru_bandwidth_hz=bw)
    config = base_config.replace(**fields) if base_config else WlanConfig(**fields)
    return ChannelRealization(h=h.astype(np.complex128), positions=positions.astype(float),
                              config=config)


def write_trace_jsonl(chan: ChannelRealization, path) -> Path:
    """Text export: a config line, then one record per slot.

    Floats go through ``repr`` so the export is lossless.
    """
    path = Path(path)
    with open(path, "w") as fh:
        fh.write(json.dumps({"config": chan.config.to_dict()}) + "\n")
        for t in range(chan.n_slots):
            h = chan.h[t]
            record = {
                "slot": t,
                "h_re": h.real.tolist(),
                "h_im": h.imag.tolist(),
                "positions": chan.positions[t].tolist(),
            }
            fh.write(json.dumps(record) + "\n")
    return path


def read_trace_jsonl(path) -> ChannelRealization:
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise TraceFormatError(f"{path}: empty file")
    config = WlanConfig.from_dict(json.loads(lines[0])["config"])
    slots = [json.loads(line) for line in lines[1:]]
    if len(slots) != config.n_slots:
        raise TraceFormatError(f"{path}: expected {config.n_slots} slots, found {len(slots)}")
    re = np.array([s["h_re"] for s in slots], dtype=float)
    h = np.empty(re.shape, dtype=np.complex128)
    h.real = re
    h.imag = np.array([s["h_im"] for s in slots], dtype=float)
    positions = np.array([s["positions"] for s in slots], dtype=float)
    return ChannelRealization(h=h, positions=positions, config=config)
