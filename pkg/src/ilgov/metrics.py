"""Scoring: per-knob level accuracy, convergence detection, energy totals.

Accuracy between two configurations is measured per knob on level indices:
100 * (1 - |i_policy - i_ref| / (L - 1)) for a knob with L levels, so one
frequency step off on an 8-level knob costs about 14 points. A run converges
once every rolling window of per-epoch accuracies stays at or above the
threshold for every knob, and the convergence epoch is the first epoch from
which that holds to the end of the stream.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .space import KNOBS, ConfigSpace, Configuration

DEFAULT_WINDOW = 20
DEFAULT_THRESHOLD = 99.0


@dataclass(frozen=True)
class DecisionRecord:
    epoch_id: int
    config: Configuration


def knob_accuracy(level_count: int, policy_index: int, ref_index: int) -> float:
    if level_count < 2:
        raise ValueError("accuracy needs at least 2 levels")
    if not (0 <= policy_index < level_count and 0 <= ref_index < level_count):
        raise ValueError("level index out of range")
    return 100.0 * (1.0 - abs(policy_index - ref_index) / (level_count - 1))


@dataclass
class AccuracyReport:
    per_knob_mean: dict[str, float]
    per_epoch: np.ndarray  # (n_epochs, 4) accuracy in KNOBS order
    epoch_ids: np.ndarray
    convergence_epoch: int | None
    per_knob_convergence: dict[str, int | None]
    window: int
    threshold: float

    def rolling(self) -> np.ndarray:
        """(n - window + 1, 4) rolling window means of per-epoch accuracy."""
        return _rolling_means(self.per_epoch, self.window)

    def rolling_at(self, position: int) -> np.ndarray:
        """Rolling means of the window ending at stream position (0-based)."""
        lo = max(0, position - self.window + 1)
        return self.per_epoch[lo:position + 1].mean(axis=0)


def _rolling_means(acc: np.ndarray, window: int) -> np.ndarray:
    n = acc.shape[0]
    if n < window:
        return acc.mean(axis=0, keepdims=True)
    c = np.cumsum(np.vstack([np.zeros((1, acc.shape[1])), acc]), axis=0)
    return (c[window:] - c[:-window]) / window


def _convergence(acc_col: np.ndarray, window: int, threshold: float) -> int | None:
    """First epoch from which every rolling window through the end passes."""
    n = acc_col.shape[0]
    if n < window:
        return 0 if acc_col.mean() >= threshold else None
    roll = _rolling_means(acc_col[:, None], window)[:, 0]
    failing = np.nonzero(roll < threshold)[0]
    if failing.size == 0:
        return 0
    start = int(failing[-1]) + 1  # first window start after the last failure
    return start if start + window <= n else None


def run_accuracy(log: list[DecisionRecord], labels, space: ConfigSpace, *,
                 window: int = DEFAULT_WINDOW,
                 threshold: float = DEFAULT_THRESHOLD) -> AccuracyReport:
    """Per-knob accuracy of a decision log against reference labels.

    labels may be OracleLabel-like (with .epoch_id / .config) or
    DecisionRecord; logs and labels must align one-to-one by epoch_id.
    """
    if not log:
        raise ValueError("empty decision log")
    if len(log) != len(labels):
        raise ValueError("decision log and labels differ in length")
    acc = np.empty((len(log), len(KNOBS)))
    ids = np.empty(len(log), dtype=int)
    for row, (rec, lab) in enumerate(zip(log, labels)):
        if rec.epoch_id != lab.epoch_id:
            raise ValueError(f"epoch mismatch at row {row}: "
                             f"{rec.epoch_id} vs {lab.epoch_id}")
        ids[row] = rec.epoch_id
        for col, knob in enumerate(KNOBS):
            acc[row, col] = knob_accuracy(
                space.level_count(knob),
                space.knob_level_index(rec.config, knob),
                space.knob_level_index(lab.config, knob))
    per_knob_conv = {
        knob: _convergence(acc[:, col], window, threshold)
        for col, knob in enumerate(KNOBS)
    }
    overall = None
    if all(v is not None for v in per_knob_conv.values()):
        overall = max(per_knob_conv.values())
    return AccuracyReport(
        per_knob_mean={k: float(acc[:, i].mean()) for i, k in enumerate(KNOBS)},
        per_epoch=acc, epoch_ids=ids, convergence_epoch=overall,
        per_knob_convergence=per_knob_conv, window=window, threshold=threshold)


def energy_time_totals(log: list[DecisionRecord], stream) -> tuple[float, float]:
    """Total energy (J) and time (s) of a decision log replayed on the stream.

    stream is a list of (workload, epoch) pairs as produced by as_stream /
    build_stream; replay goes through each pair's own plant and seed so the
    totals match what a live controller would have measured.
    """
    by_id = {e.id: (w, e) for w, e in stream}
    energy = 0.0
    time = 0.0
    for rec in log:
        w, e = by_id[rec.epoch_id]
        pw, t = w.plant.power_time(e, rec.config, w.seed)
        energy += pw * t
        time += t
    return energy, time


def energy_report(logs: dict[str, list[DecisionRecord]], stream, *,
                  golden: list | None = None) -> dict[str, dict[str, float]]:
    """Energy/time totals per controller with ratios vs powersave and oracle.

    Reference rows are computed here: powersave replays the minimum
    configuration everywhere; oracle replays the golden labels when given.
    All logs must cover exactly the stream's epoch ids.
    """
    want = [e.id for _, e in stream]
    for name, log in logs.items():
        if [r.epoch_id for r in log] != want:
            raise ValueError(f"controller {name!r} log does not cover the "
                             "stream's epoch ids")
    space = stream[0][0].plant.space
    table: dict[str, dict[str, float]] = {}
    ps_log = [DecisionRecord(e.id, space.min_config) for _, e in stream]
    rows = dict(logs)
    rows["powersave"] = logs.get("powersave", ps_log)
    if golden is not None:
        rows["oracle"] = [DecisionRecord(g.epoch_id, g.config) for g in golden]
    totals = {name: energy_time_totals(log, stream)
              for name, log in rows.items()}
    ps_e, ps_t = totals["powersave"]
    for name, (en, t) in totals.items():
        row = {"energy_j": en, "time_s": t,
               "vs_powersave_energy": en / ps_e, "vs_powersave_time": t / ps_t}
        if golden is not None:
            oe, ot = totals["oracle"]
            row["vs_oracle_energy"] = en / oe
            row["vs_oracle_time"] = t / ot
        table[name] = row
    return table


def write_accuracy_series(report: AccuracyReport, path) -> None:
    """Per-epoch accuracy CSV, one row per epoch, one column per knob."""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["epoch_id", *KNOBS])
        for i, eid in enumerate(report.epoch_ids):
            wr.writerow([int(eid), *[repr(float(v)) for v in report.per_epoch[i]]])


def write_decision_log(log: list[DecisionRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["epoch_id", "n_big", "n_little", "f_big", "f_little"])
        for rec in log:
            c = rec.config
            wr.writerow([rec.epoch_id, c.n_big, c.n_little, c.f_big, c.f_little])
