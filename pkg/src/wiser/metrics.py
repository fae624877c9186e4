"""Evaluation metrics over episode records and their CSV exports."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .allocation import group_sizes


@dataclass(frozen=True)
class ErrorReport:
    # reference labels: fp counts missed assignments
    # (actual 1, inferred 0), fn counts spurious ones (actual 0, inferred 1)
    fp: int
    fn: int
    total: int  # R * N * T

    @property
    def error_rate(self) -> float:
        return (self.fp + self.fn) / self.total if self.total else 0.0


@dataclass(frozen=True)
class GainReport:
    policy_sum: float
    baseline_sum: float

    @property
    def gain_percent(self) -> float:
        return 100.0 * (self.policy_sum - self.baseline_sum) / self.baseline_sum


@dataclass(frozen=True)
class GroupSizeReport:
    pre: np.ndarray         # (R, N + 1) slot counts of each group size before correction
    post: np.ndarray        # (R, N + 1) after correction
    violations: np.ndarray  # (R,) slots where the pre-correction group exceeded M
    n_antennas: int


def assignment_error(inferred, actual) -> ErrorReport:
    inferred = [np.asarray(a) for a in inferred]
    actual = [np.asarray(a) for a in actual]
    if len(inferred) != len(actual):
        raise ValueError(f"{len(inferred)} inferred vs {len(actual)} actual slots")
    fp = fn = total = 0
    for inf, act in zip(inferred, actual):
        if inf.shape != act.shape:
            raise ValueError(f"shape mismatch {inf.shape} vs {act.shape}")
        fp += int(np.sum((act == 1) & (inf == 0)))
        fn += int(np.sum((act == 0) & (inf == 1)))
        total += act.size
    return ErrorReport(fp, fn, total)


def records_error(inferred_records, actual_records, stage: str = "raw") -> ErrorReport:
    """Assignment error of paired runs, slot by slot across all episodes."""
    _check_paired(inferred_records, actual_records)
    inferred = [a for r in inferred_records for a in r.assignments(stage)]
    actual = [a for r in actual_records for a in r.assignments("corrected")]
    return assignment_error(inferred, actual)


def _check_paired(a, b):
    if len(a) != len(b):
        raise ValueError(f"unpaired runs: {len(a)} vs {len(b)} episodes")
    for ra, rb in zip(a, b):
        if ra.seed != rb.seed or len(ra.slots) != len(rb.slots):
            raise ValueError(f"episode {ra.episode} is not on the same channel realization")


def _total_rate(runs) -> float:
    if len(runs) and hasattr(runs[0], "rates"):
        return float(sum(r.rates.sum() for r in runs))
    return float(np.sum(np.asarray(runs, dtype=float)))


def performance_gain(policy, baseline) -> GainReport:
    """Rate-sum gain of ``policy`` over ``baseline`` (records or rate arrays)."""
    if len(policy) and hasattr(policy[0], "rates"):
        _check_paired(policy, baseline)
    elif np.shape(policy) != np.shape(baseline):
        raise ValueError("policy and baseline rates differ in shape")
    report = GainReport(_total_rate(policy), _total_rate(baseline))
    if report.baseline_sum <= 0:
        raise ValueError("baseline rate-sum is zero; gain undefined")
    return report


def rate_cdf(records) -> list[tuple[float, float]]:
    """Empirical CDF of per-slot rate-sums as (value, fraction <= value) steps."""
    if len(records) and hasattr(records[0], "rate_sums"):
        values = np.concatenate([r.rate_sums for r in records])
    else:
        values = np.asarray(records, dtype=float).ravel()
    if values.size == 0:
        raise ValueError("no rate-sums to build a CDF from")
    uniq, counts = np.unique(values, return_counts=True)
    fractions = np.cumsum(counts) / values.size
    fractions[-1] = 1.0
    return list(zip(uniq.tolist(), fractions.tolist()))


def group_size_distribution(records) -> GroupSizeReport:
    N = records[0].config["n_stations"]
    R = records[0].config["n_rus"]
    M = records[0].n_antennas
    pre = np.zeros((R, N + 1), dtype=np.int64)
    post = np.zeros((R, N + 1), dtype=np.int64)
    violations = np.zeros(R, dtype=np.int64)
    ru = np.arange(R)
    for rec in records:
        for raw, corrected in zip(rec.assignments("raw"), rec.assignments("corrected")):
            g_pre, g_post = group_sizes(raw), group_sizes(corrected)
            np.add.at(pre, (ru, g_pre), 1)
            np.add.at(post, (ru, g_post), 1)
            violations += g_pre > M
    return GroupSizeReport(pre, post, violations, M)


# -- CSV -----------------------------------------------------------------------

def _writer(path):
    fh = open(path, "w", newline="")
    return fh, csv.writer(fh, lineterminator="\n")


def write_error_csv(report: ErrorReport, path) -> Path:
    fh, w = _writer(path)
    with fh:
        w.writerow(["fp", "fn", "total", "error_rate"])
        w.writerow([report.fp, report.fn, report.total, repr(report.error_rate)])
    return Path(path)


def write_gain_csv(report: GainReport, path) -> Path:
    fh, w = _writer(path)
    with fh:
        w.writerow(["policy_sum", "baseline_sum", "gain_percent"])
        w.writerow([repr(report.policy_sum), repr(report.baseline_sum),
                    repr(report.gain_percent)])
    return Path(path)


def write_cdf_csv(cdf, path) -> Path:
    fh, w = _writer(path)
    with fh:
        w.writerow(["rate_sum", "cdf"])
        for value, frac in cdf:
            w.writerow([repr(value), repr(frac)])
    return Path(path)


def write_groupsize_csv(report: GroupSizeReport, path) -> Path:
    fh, w = _writer(path)
    with fh:
        w.writerow(["ru", "group_size", "count_pre", "count_post", "violation"])
        R, sizes = report.pre.shape
        for l in range(R):
            for g in range(sizes):
                if report.pre[l, g] or report.post[l, g]:
                    w.writerow([l + 1, g, int(report.pre[l, g]), int(report.post[l, g]),
                                int(g > report.n_antennas)])
    return Path(path)


def plot_cdf(curves: dict, path) -> Path:
    """Step plot of one or more rate-sum CDFs (needs matplotlib)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 3.5))
    for label, cdf in curves.items():
        x, y = zip(*cdf)
        ax.step(np.asarray(x) / 1e6, y, where="post", label=label)
    ax.set_xlabel("UL-SA rate-sum (Mbit/s)")
    ax.set_ylabel("CDF")
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return Path(path)
