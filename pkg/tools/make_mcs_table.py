"""Regenerate src/wiser/data/mcs_26tone.json.

Operating points are the 802.11ax MCS0-MCS11 rates of a single-stream
26-tone RU (24 data tones, 12.8 us symbol + 0.8 us GI), expressed in
bits/s/Hz of the 2.03125 MHz RU bandwidth.  Each MCS threshold sits on a
gap-adjusted capacity curve log2(1 + snr / gap), with the gap set so MCS0
needs 2 dB.  The points are then strictly concave in linear SNR, so the
chords through (0, 0), MCS0, ..., MCS11 plus a flat cap form the upper
piecewise-linear envelope of the rate staircase: 12 + 1 = 13 lines.
"""

import json
import sys
from pathlib import Path

import numpy as np

# (bits per subcarrier) x (code rate) for MCS0..MCS11
BITS_PER_TONE = [
    1 * 1 / 2, 2 * 1 / 2, 2 * 3 / 4, 4 * 1 / 2, 4 * 3 / 4, 6 * 2 / 3,
    6 * 3 / 4, 6 * 5 / 6, 8 * 3 / 4, 8 * 5 / 6, 10 * 3 / 4, 10 * 5 / 6,
]
TONE_EFFICIENCY = (24 / 26) * (12.8 / 13.6)
MCS0_SNR_DB = 2.0


def build():
    bits = np.asarray(BITS_PER_TONE)
    gap = 10 ** (MCS0_SNR_DB / 10) / (2 ** bits[0] - 1)
    snr = np.concatenate([[0.0], gap * (2 ** bits - 1)])
    se = np.concatenate([[0.0], bits * TONE_EFFICIENCY])

    m = np.diff(se) / np.diff(snr)
    b = se[:-1] - m * snr[:-1]
    # flat cap above the top MCS threshold
    m = np.append(m, 0.0)
    b = np.append(b, se[-1])
    return {
        "description": "802.11ax 26-tone RU, 1 SS, 0.8us GI; gamma linear, rates in bits/s/Hz",
        "m": [float(v) for v in m],
        "b": [float(v) for v in b],
        "gamma_cap": float(snr[-1]),
        "max_rate": float(se[-1]),
        "thresholds": [float(v) for v in snr[1:]],
    }


if __name__ == "__main__":
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else (
        Path(__file__).resolve().parents[1] / "src" / "wiser" / "data" / "mcs_26tone.json")
    out.write_text(json.dumps(build(), indent=2) + "\n")
    print(f"wrote {out}")
