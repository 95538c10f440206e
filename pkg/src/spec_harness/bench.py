"""Benchmark construction: screening classifier, hard negatives, and splits.

The pipeline mirrors real catalog work at desk scale: train a weak screening
classifier per task, stream a survey pool through it keeping only
non-catalog spectra that score above the acceptance threshold (those are
the hard negatives), then assemble a balanced train split and an imbalanced
test split with cold-start spectra excluded from test.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import CountUnavailable, InsufficientData, TrainingDiverged
from .prompts import build_prompt
from .spectrum import (
    Spectrum,
    Task,
    TaskLabel,
    bin_features,
    estimate_snr,
    load_spectrum,
    save_spectrum,
)

DEFAULT_N_BINS = 256
DEFAULT_FEATURE_LO = 3900.0
DEFAULT_FEATURE_HI = 9000.0
SNR_THRESHOLD = 10.0
SIGMOID_CLIP = 30.0


class Split(str, enum.Enum):
    TRAIN = "TRAIN"
    TEST = "TEST"


@dataclass(frozen=True)
class BenchItem:
    id: str
    spectrum_ref: str
    task: Task
    gold: bool
    prompt: str
    split: Split
    provenance: dict = field(default_factory=dict)

    def gold_label(self) -> TaskLabel:
        return TaskLabel(task=self.task, is_positive=self.gold)


@dataclass(frozen=True)
class SamplingReport:
    candidates_seen: int
    accepted: int
    acceptance_rate: float
    threshold: float


@dataclass(frozen=True)
class WeakClassifier:
    """Logistic regression over median-normalized spectral bins (bias last)."""

    weights: np.ndarray
    n_bins: int
    lo: float
    hi: float
    task: Task

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if not np.all(np.isfinite(w)):
            raise ValueError("classifier weights must be finite")
        if len(w) != self.n_bins + 1:
            raise ValueError(f"expected {self.n_bins + 1} weights, got {len(w)}")
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)

    def features(self, spec: Spectrum) -> np.ndarray:
        return bin_features(spec, self.n_bins, self.lo, self.hi)

    def score(self, spec: Spectrum) -> float:
        """Positive-class probability, strictly inside (0, 1)."""
        z = float(self.features(spec) @ self.weights[:-1] + self.weights[-1])
        z = min(max(z, -SIGMOID_CLIP), SIGMOID_CLIP)
        return 1.0 / (1.0 + float(np.exp(-z)))


def snr_filter(specs: Iterable[Spectrum], min_snr: float = SNR_THRESHOLD) -> list[Spectrum]:
    """Keep spectra with (stored or estimated) SNR above the threshold."""
    kept = []
    for spec in specs:
        snr = spec.snr if spec.snr is not None else estimate_snr(spec)
        if snr > min_snr:
            kept.append(spec)
    return kept


def train_weak_classifier(
    positives: Sequence[Spectrum],
    negatives: Sequence[Spectrum],
    task: Task,
    n_bins: int = DEFAULT_N_BINS,
    lo: float = DEFAULT_FEATURE_LO,
    hi: float = DEFAULT_FEATURE_HI,
    epochs: int = 200,
    lr: float = 0.5,
    seed: int = 0,
    min_snr: float = SNR_THRESHOLD,
) -> WeakClassifier:
    """Full-batch gradient descent on the logistic loss, fixed seed.

    Inputs must already pass the SNR filter; the training loss is checked to
    be non-increasing every epoch (TrainingDiverged otherwise, which in
    practice means the learning rate is too high).
    """
    if len(positives) < 10 or len(negatives) < 10:
        raise InsufficientData(
            f"need >= 10 spectra per class, got {len(positives)} positive / {len(negatives)} negative"
        )
    for spec in list(positives) + list(negatives):
        snr = spec.snr if spec.snr is not None else estimate_snr(spec)
        if snr <= min_snr:
            raise InsufficientData(f"spectrum {spec.id!r} fails the SNR > {min_snr:g} filter")

    X = np.stack(
        [bin_features(s, n_bins, lo, hi) for s in list(positives) + list(negatives)]
    )
    X = np.hstack([X, np.ones((len(X), 1))])
    y = np.concatenate([np.ones(len(positives)), np.zeros(len(negatives))])

    rng = np.random.default_rng(seed)
    w = rng.normal(0.0, 0.01, size=X.shape[1])
    prev_loss = np.inf
    n = len(y)
    for epoch in range(epochs):
        z = np.clip(X @ w, -SIGMOID_CLIP, SIGMOID_CLIP)
        p = 1.0 / (1.0 + np.exp(-z))
        loss = float(-np.mean(y * np.log(p) + (1 - y) * np.log(1 - p)))
        if loss > prev_loss + 1e-12:
            raise TrainingDiverged(f"loss rose at epoch {epoch}: {prev_loss:.6g} -> {loss:.6g}")
        prev_loss = loss
        grad = X.T @ (p - y) / n
        w = w - lr * grad
    return WeakClassifier(weights=w, n_bins=n_bins, lo=lo, hi=hi, task=task)


def rejection_sample(
    clf: WeakClassifier,
    pool: Iterable[Spectrum],
    catalog_ids: set[str],
    threshold: float = 0.8,
    quota: int = 10**9,
) -> tuple[list[Spectrum], SamplingReport]:
    """Stream the pool keeping non-catalog spectra scoring above threshold.

    Stops when the quota fills or the pool runs dry; under-quota is reported
    in the SamplingReport, never an error.
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must be in (0, 1), got {threshold}")
    if quota < 1:
        raise ValueError(f"quota must be >= 1, got {quota}")
    accepted: list[Spectrum] = []
    seen = 0
    for spec in pool:
        seen += 1
        if spec.id in catalog_ids:
            continue
        if clf.score(spec) > threshold:
            accepted.append(spec)
            if len(accepted) >= quota:
                break
    rate = len(accepted) / seen if seen else 0.0
    return accepted, SamplingReport(
        candidates_seen=seen, accepted=len(accepted), acceptance_rate=rate, threshold=threshold
    )


def assemble_splits(
    positives: Sequence[Spectrum],
    negatives: Sequence[Spectrum],
    task: Task,
    train_pos: int,
    train_neg: int,
    test_pos: int,
    test_neg: int,
    exclude_ids: Optional[set[str]] = None,
    seed: int = 0,
    registry_dir: Optional[Path] = None,
    provenance: Optional[dict] = None,
) -> tuple[list[BenchItem], list[BenchItem]]:
    """Deterministic, disjoint train/test item lists with exact counts.

    exclude_ids (cold-start spectra) never enter either split; an id that
    appears in both input pools, or counts that cannot be met, raise
    CountUnavailable.
    """
    exclude_ids = exclude_ids or set()
    provenance = provenance or {}
    pos_ids = {s.id for s in positives}
    for s in negatives:
        if s.id in pos_ids:
            raise CountUnavailable(f"id {s.id!r} appears in both the positive and negative pools")

    rng = np.random.default_rng(seed)
    pos = [s for s in positives if s.id not in exclude_ids]
    neg = [s for s in negatives if s.id not in exclude_ids]
    if len(pos) < train_pos + test_pos:
        raise CountUnavailable(
            f"need {train_pos + test_pos} positives after exclusions, have {len(pos)}"
        )
    if len(neg) < train_neg + test_neg:
        raise CountUnavailable(
            f"need {train_neg + test_neg} negatives after exclusions, have {len(neg)}"
        )
    pos = [pos[i] for i in rng.permutation(len(pos))]
    neg = [neg[i] for i in rng.permutation(len(neg))]

    prompt = build_prompt(task, registry_dir)

    def items(specs: Sequence[Spectrum], gold: bool, split: Split) -> list[BenchItem]:
        return [
            BenchItem(
                id=s.id,
                spectrum_ref=f"spectra/{s.id}.specvi.json",
                task=task,
                gold=gold,
                prompt=prompt,
                split=split,
                provenance=provenance.get(s.id, {}),
            )
            for s in specs
        ]

    train = items(pos[:train_pos], True, Split.TRAIN) + items(neg[:train_neg], False, Split.TRAIN)
    test = items(pos[train_pos : train_pos + test_pos], True, Split.TEST) + items(
        neg[train_neg : train_neg + test_neg], False, Split.TEST
    )
    return train, test


# --- persistence -----------------------------------------------------------------


def write_bench(
    items: Sequence[BenchItem],
    spectra: dict[str, Spectrum],
    out_dir: str | Path,
    seed: Optional[int] = None,
) -> Path:
    """Write spectra plus manifest.json; returns the manifest path.

    Every item's spectrum must be provided; prompts are stored once per task.
    """
    out_dir = Path(out_dir)
    (out_dir / "spectra").mkdir(parents=True, exist_ok=True)
    prompts: dict[str, str] = {}
    for item in items:
        if item.id not in spectra:
            raise CountUnavailable(f"no spectrum provided for item {item.id!r}")
        save_spectrum(spectra[item.id], out_dir / item.spectrum_ref)
        prompts.setdefault(item.task.value, item.prompt)
    manifest = {
        "version": 1,
        "seed": seed,
        "prompts": prompts,
        "items": [
            {
                "id": it.id,
                "spectrum": it.spectrum_ref,
                "task": it.task.value,
                "gold": it.gold,
                "split": it.split.value,
                "provenance": it.provenance,
            }
            for it in items
        ],
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return path


def load_bench(bench_dir: str | Path, split: Optional[Split] = None) -> list[BenchItem]:
    bench_dir = Path(bench_dir)
    manifest = json.loads((bench_dir / "manifest.json").read_text(encoding="utf-8"))
    prompts = manifest.get("prompts", {})
    items = []
    for rec in manifest["items"]:
        it = BenchItem(
            id=rec["id"],
            spectrum_ref=rec["spectrum"],
            task=Task(rec["task"]),
            gold=bool(rec["gold"]),
            prompt=prompts.get(rec["task"], ""),
            split=Split(rec["split"]),
            provenance=rec.get("provenance", {}),
        )
        if split is None or it.split is split:
            items.append(it)
    return items


def load_bench_spectrum(bench_dir: str | Path, item: BenchItem) -> Spectrum:
    return load_spectrum(Path(bench_dir) / item.spectrum_ref)
