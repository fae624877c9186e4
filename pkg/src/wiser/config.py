"""WLAN scenario configuration."""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

# 26 tones x 78.125 kHz
RU_BANDWIDTH_HZ = 26 * 78.125e3

PATHLOSS_REF_DB = 40.0
PATHLOSS_REF_DISTANCE_M = 1.0
PATHLOSS_EXPONENT = 3.5
DEFAULT_TOTAL_POWER = 0.1  # W (20 dBm)


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending entry."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


def mean_path_gain(distance_m, exponent=PATHLOSS_EXPONENT,
                   ref_db=PATHLOSS_REF_DB, ref_distance_m=PATHLOSS_REF_DISTANCE_M):
    """Log-distance mean power gain; distances below the reference are clamped."""
    d = np.maximum(np.asarray(distance_m, dtype=float), ref_distance_m)
    return 10.0 ** (-ref_db / 10.0) * (d / ref_distance_m) ** (-exponent)


def noise_power_for_median_snr(snr_db: float = 20.0, distance_m: float = 7.5,
                               total_power: float = DEFAULT_TOTAL_POWER,
                               exponent: float = PATHLOSS_EXPONENT) -> float:
    """Noise power giving the requested median single-antenna SNR at ``distance_m``.

    Per-RU Rayleigh power gain is Exp(1), whose median is ln 2.
    """
    gain = float(mean_path_gain(distance_m, exponent))
    return total_power * gain * math.log(2.0) / 10.0 ** (snr_db / 10.0)


DEFAULT_NOISE_POWER = noise_power_for_median_snr()


@dataclass(frozen=True)
class WlanConfig:
    n_stations: int
    n_antennas: int
    n_rus: int = 9
    n_slots: int = 50
    cell_radius_m: float = 15.0
    noise_power: float = DEFAULT_NOISE_POWER
    total_power: float = DEFAULT_TOTAL_POWER
    ru_bandwidth_hz: float = RU_BANDWIDTH_HZ
    rng_seed: int = 0
    # channel substitute parameters
    pathloss_exponent: float = PATHLOSS_EXPONENT
    n_taps: int = 8
    tap_spacing_s: float = 10e-9
    rms_delay_spread_s: float = 50e-9

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for name in ("n_stations", "n_antennas", "n_rus", "n_slots", "n_taps"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(name, f"must be an integer, got {value!r}")
        if self.n_stations < 1:
            raise ConfigError("n_stations", "must be >= 1")
        if self.n_antennas < 1:
            raise ConfigError("n_antennas", "must be >= 1")
        if not 1 <= self.n_rus <= 9:
            raise ConfigError("n_rus", "must be in 1..9")
        if self.n_slots < 1:
            raise ConfigError("n_slots", "must be >= 1")
        if self.n_taps < 1:
            raise ConfigError("n_taps", "must be >= 1")
        for name in ("noise_power", "total_power", "ru_bandwidth_hz", "cell_radius_m",
                     "tap_spacing_s", "rms_delay_spread_s", "pathloss_exponent"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise ConfigError(name, f"must be a finite positive number, got {value!r}")
        if not isinstance(self.rng_seed, int) or self.rng_seed < 0:
            raise ConfigError("rng_seed", "must be a non-negative integer")

    def replace(self, **changes) -> "WlanConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "WlanConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown configuration field")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "WlanConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))
