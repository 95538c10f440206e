"""Scoring: accuracy, positive-class F1, macro averages, and reliability stats.

Conventions are fixed here and mirrored by the oracle tests: an INVALID
prediction counts as a wrong call of the non-gold class (so it lands in FN
for positive items and FP for negative ones and is never correct), and F1
with a zero denominator is 0.
"""

from __future__ import annotations

import csv
import enum
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    DegenerateInput,
    EmptyList,
    LengthMismatch,
    OutOfRangeScore,
)
from .spectrum import Task
from .trajectory import Prediction


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class TaskReport:
    task: Task
    acc: float
    f1: float
    n_invalid: int
    counts: ConfusionCounts


class Judgment(str, enum.Enum):
    WIN = "WIN"
    TIE = "TIE"
    LOSS = "LOSS"


def confusion(predictions: Sequence[Prediction], golds: Sequence[bool]) -> tuple[ConfusionCounts, int]:
    if len(predictions) != len(golds):
        raise LengthMismatch(f"{len(predictions)} predictions vs {len(golds)} golds")
    tp = fp = tn = fn = 0
    n_invalid = 0
    for pred, gold in zip(predictions, golds):
        if pred is Prediction.INVALID:
            n_invalid += 1
            if gold:
                fn += 1
            else:
                fp += 1
        elif pred is Prediction.YES:
            if gold:
                tp += 1
            else:
                fp += 1
        else:
            if gold:
                fn += 1
            else:
                tn += 1
    return ConfusionCounts(tp=tp, fp=fp, tn=tn, fn=fn), n_invalid


def score_task(task: Task, predictions: Sequence[Prediction], golds: Sequence[bool]) -> TaskReport:
    """Accuracy and positive-class F1 for one verification task."""
    counts, n_invalid = confusion(predictions, golds)
    total = counts.total
    acc = (counts.tp + counts.tn) / total if total else 0.0
    denom = 2 * counts.tp + counts.fp + counts.fn
    f1 = 2 * counts.tp / denom if denom else 0.0
    return TaskReport(task=task, acc=acc, f1=f1, n_invalid=n_invalid, counts=counts)


def macro_average(reports: Sequence[TaskReport]) -> tuple[float, float]:
    """Unweighted mean of per-task (acc, f1)."""
    if not reports:
        raise EmptyList("macro average needs at least one task report")
    accs = [r.acc for r in reports]
    f1s = [r.f1 for r in reports]
    return sum(accs) / len(accs), sum(f1s) / len(f1s)


def _average_ranks(values: Sequence[float]) -> np.ndarray:
    """1-based ranks; ties share the average of their positions."""
    arr = np.asarray(values, dtype=float)
    order = np.argsort(arr, kind="stable")
    ranks = np.empty(len(arr), dtype=float)
    i = 0
    while i < len(arr):
        j = i
        while j + 1 < len(arr) and arr[order[j + 1]] == arr[order[i]]:
            j += 1
        avg = (i + j) / 2 + 1
        for k in range(i, j + 1):
            ranks[order[k]] = avg
        i = j + 1
    return ranks


def spearman(x: Sequence[float], y: Sequence[float]) -> float:
    """Rank correlation: Pearson over average ranks, ties handled."""
    if len(x) != len(y):
        raise LengthMismatch(f"{len(x)} vs {len(y)} values")
    if len(x) < 2:
        raise DegenerateInput("need at least 2 points")
    rx = _average_ranks(x)
    ry = _average_ranks(y)
    sx = rx - rx.mean()
    sy = ry - ry.mean()
    denom = float(np.sqrt((sx**2).sum() * (sy**2).sum()))
    if denom == 0.0:
        raise DegenerateInput("constant input has no rank correlation")
    return float((sx * sy).sum() / denom)


def aggregate_preferences(judgments: Sequence[Judgment]) -> tuple[float, float, float]:
    """(win_rate, tie_rate, loss_rate), summing to 1."""
    if not judgments:
        raise EmptyList("no judgments to aggregate")
    n = len(judgments)
    wins = sum(1 for j in judgments if j is Judgment.WIN)
    ties = sum(1 for j in judgments if j is Judgment.TIE)
    losses = n - wins - ties
    return wins / n, ties / n, losses / n


def score_histogram(scores: Sequence[int]) -> tuple[list[int], list[float]]:
    """Counts and CDF over the 0-5 score scale."""
    if not scores:
        raise EmptyList("no scores to histogram")
    counts = [0] * 6
    for s in scores:
        if not isinstance(s, (int, np.integer)) or not 0 <= int(s) <= 5:
            raise OutOfRangeScore(f"score {s!r} outside 0-5")
        counts[int(s)] += 1
    total = len(scores)
    cdf = list(np.cumsum(counts) / total)
    return counts, [float(c) for c in cdf]


# --- report output --------------------------------------------------------------


def report_to_dict(reports: Sequence[TaskReport]) -> dict:
    acc, f1 = macro_average(reports)
    return {
        "tasks": {
            r.task.value: {
                "acc": r.acc,
                "f1": r.f1,
                "n_invalid": r.n_invalid,
                "tp": r.counts.tp,
                "fp": r.counts.fp,
                "tn": r.counts.tn,
                "fn": r.counts.fn,
            }
            for r in reports
        },
        "macro": {"acc": acc, "f1": f1},
    }


def write_report_json(reports: Sequence[TaskReport], path: str | Path) -> None:
    Path(path).write_text(json.dumps(report_to_dict(reports), indent=2) + "\n", encoding="utf-8")


def write_report_csv(reports: Sequence[TaskReport], path: str | Path) -> None:
    """One row per metric, one column per task plus the macro average."""
    acc, f1 = macro_average(reports)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["metric"] + [r.task.value for r in reports] + ["Average"])
        w.writerow(["Acc"] + [f"{r.acc:.4f}" for r in reports] + [f"{acc:.4f}"])
        w.writerow(["F1"] + [f"{r.f1:.4f}" for r in reports] + [f"{f1:.4f}"])
