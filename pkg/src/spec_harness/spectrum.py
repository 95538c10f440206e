"""Canonical 1-D spectrum data model and the `.specvi.json` file format.

A spectrum is an immutable pair of equal-length wavelength/flux arrays plus
identity and provenance metadata. Wavelengths are Angstroms, strictly
increasing; flux is in arbitrary linear units. All arrays are marked
read-only after construction so instances can be shared across threads.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import (
    EmptySlice,
    MalformedFile,
    NonFiniteValue,
    NonMonotonicWavelength,
    TooShort,
)

SNR_CAP = 1e6
SNR_WINDOW = 21
MAD_SCALE = 1.4826  # MAD -> sigma for Gaussian noise


class Survey(str, enum.Enum):
    LAMOST = "LAMOST"
    SDSS = "SDSS"
    DESI = "DESI"
    SYNTHETIC = "SYNTHETIC"


class Task(str, enum.Enum):
    CV = "CV"  # cataclysmic variables
    CS = "CS"  # carbon stars
    SS = "SS"  # S-type stars
    MG = "MG"  # M-type giants
    WD = "WD"  # white dwarfs
    O = "O"
    B = "B"
    A = "A"


@dataclass(frozen=True)
class TaskLabel:
    task: Task
    is_positive: bool

    def to_dict(self) -> dict:
        return {"task": self.task.value, "is_positive": self.is_positive}

    @classmethod
    def from_dict(cls, d: dict) -> "TaskLabel":
        return cls(task=Task(d["task"]), is_positive=bool(d["is_positive"]))


@dataclass(frozen=True)
class WavelengthRange:
    """A half-open-free wavelength interval, inclusive on both ends."""

    lambda_min: float
    lambda_max: float

    def __post_init__(self):
        lo, hi = self.lambda_min, self.lambda_max
        if not (math.isfinite(lo) and math.isfinite(hi)):
            raise ValueError(f"wavelength range must be finite, got [{lo}, {hi}]")
        if lo <= 0 or hi <= 0:
            raise ValueError(f"wavelength range must be positive, got [{lo}, {hi}]")
        if not lo < hi:
            raise ValueError(f"lambda_min must be < lambda_max, got [{lo}, {hi}]")

    def intersect(self, other: "WavelengthRange") -> Optional["WavelengthRange"]:
        lo = max(self.lambda_min, other.lambda_min)
        hi = min(self.lambda_max, other.lambda_max)
        if lo >= hi:
            return None
        return WavelengthRange(lo, hi)


@dataclass(frozen=True)
class Spectrum:
    id: str
    survey: Survey
    wavelength: np.ndarray
    flux: np.ndarray
    label: Optional[TaskLabel] = None
    snr: Optional[float] = None
    ra_deg: Optional[float] = None
    dec_deg: Optional[float] = None

    def __post_init__(self):
        wl = np.asarray(self.wavelength, dtype=float)
        fl = np.asarray(self.flux, dtype=float)
        _validate_arrays(wl, fl)
        if self.snr is not None and (not math.isfinite(self.snr) or self.snr < 0):
            raise MalformedFile(f"field 'snr' must be a non-negative finite number, got {self.snr}")
        if self.ra_deg is not None and not (0 <= self.ra_deg < 360):
            raise MalformedFile(f"field 'ra_deg' out of [0, 360): {self.ra_deg}")
        if self.dec_deg is not None and not (-90 <= self.dec_deg <= 90):
            raise MalformedFile(f"field 'dec_deg' out of [-90, 90]: {self.dec_deg}")
        wl.flags.writeable = False
        fl.flags.writeable = False
        object.__setattr__(self, "wavelength", wl)
        object.__setattr__(self, "flux", fl)

    def __len__(self) -> int:
        return len(self.wavelength)

    @property
    def full_range(self) -> WavelengthRange:
        return WavelengthRange(float(self.wavelength[0]), float(self.wavelength[-1]))


def _validate_arrays(wl: np.ndarray, fl: np.ndarray) -> None:
    if wl.ndim != 1 or fl.ndim != 1:
        raise MalformedFile("fields 'wavelength' and 'flux' must be 1-D arrays")
    if len(wl) != len(fl):
        raise MalformedFile(
            f"fields 'wavelength' ({len(wl)}) and 'flux' ({len(fl)}) differ in length"
        )
    if len(wl) < 2:
        raise MalformedFile(f"field 'wavelength' needs at least 2 samples, got {len(wl)}")
    bad = np.flatnonzero(~np.isfinite(wl))
    if bad.size:
        raise NonFiniteValue(f"field 'wavelength' non-finite at index {int(bad[0])}")
    bad = np.flatnonzero(~np.isfinite(fl))
    if bad.size:
        raise NonFiniteValue(f"field 'flux' non-finite at index {int(bad[0])}")
    nonmono = np.flatnonzero(np.diff(wl) <= 0)
    if nonmono.size:
        raise NonMonotonicWavelength(
            f"field 'wavelength' not strictly increasing at index {int(nonmono[0]) + 1}"
        )


def load_spectrum(path: str | Path) -> Spectrum:
    """Load and validate a spectrum from a `.specvi.json` file."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise MalformedFile(f"{path}: not readable as JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise MalformedFile(f"{path}: top-level value must be a JSON object")
    for key, typ in (("id", str), ("survey", str), ("wavelength", list), ("flux", list)):
        if key not in raw:
            raise MalformedFile(f"{path}: missing required field '{key}'")
        if not isinstance(raw[key], typ):
            raise MalformedFile(f"{path}: field '{key}' has wrong type")
    try:
        survey = Survey(raw["survey"])
    except ValueError:
        raise MalformedFile(f"{path}: field 'survey' has unknown value {raw['survey']!r}")
    label = None
    if raw.get("label") is not None:
        ld = raw["label"]
        if not isinstance(ld, dict) or "task" not in ld or "is_positive" not in ld:
            raise MalformedFile(f"{path}: field 'label' must be {{task, is_positive}}")
        try:
            label = TaskLabel.from_dict(ld)
        except ValueError:
            raise MalformedFile(f"{path}: field 'label.task' has unknown value {ld['task']!r}")
    for key in ("snr", "ra_deg", "dec_deg"):
        if raw.get(key) is not None and not isinstance(raw[key], (int, float)):
            raise MalformedFile(f"{path}: field '{key}' must be a number")
    wl = np.asarray(raw["wavelength"], dtype=float)
    fl = np.asarray(raw["flux"], dtype=float)
    return Spectrum(
        id=raw["id"],
        survey=survey,
        wavelength=wl,
        flux=fl,
        label=label,
        snr=raw.get("snr"),
        ra_deg=raw.get("ra_deg"),
        dec_deg=raw.get("dec_deg"),
    )


def save_spectrum(spec: Spectrum, path: str | Path) -> None:
    """Write the canonical newline-free JSON form of a spectrum."""
    doc: dict = {
        "id": spec.id,
        "survey": spec.survey.value,
        "wavelength": [float(v) for v in spec.wavelength],
        "flux": [float(v) for v in spec.flux],
    }
    if spec.label is not None:
        doc["label"] = spec.label.to_dict()
    if spec.snr is not None:
        doc["snr"] = spec.snr
    if spec.ra_deg is not None:
        doc["ra_deg"] = spec.ra_deg
    if spec.dec_deg is not None:
        doc["dec_deg"] = spec.dec_deg
    Path(path).write_text(json.dumps(doc, separators=(",", ":")), encoding="utf-8")


def slice_spectrum(spec: Spectrum, rng: WavelengthRange) -> Spectrum:
    """Sub-spectrum of samples with lambda_min <= w <= lambda_max (inclusive).

    Raises EmptySlice when no samples fall inside the range. Metadata is
    preserved unchanged.
    """
    mask = (spec.wavelength >= rng.lambda_min) & (spec.wavelength <= rng.lambda_max)
    if not mask.any():
        raise EmptySlice(
            f"no samples in [{rng.lambda_min}, {rng.lambda_max}] for spectrum {spec.id!r}"
        )
    return Spectrum(
        id=spec.id,
        survey=spec.survey,
        wavelength=spec.wavelength[mask].copy(),
        flux=spec.flux[mask].copy(),
        label=spec.label,
        snr=spec.snr,
        ra_deg=spec.ra_deg,
        dec_deg=spec.dec_deg,
    )


def moving_median(values: np.ndarray, window: int) -> np.ndarray:
    """Centered moving median; the window truncates at the array edges."""
    half = window // 2
    n = len(values)
    out = np.empty(n, dtype=float)
    for i in range(n):
        out[i] = np.median(values[max(0, i - half) : i + half + 1])
    return out


def estimate_snr(spec: Spectrum) -> float:
    """Robust SNR: median(flux) / (1.4826 * MAD of high-pass residual).

    The residual is flux minus its centered moving median (window 21).
    Degenerate cases: 0/0 -> 0; zero residual with positive median -> the
    1e6 cap. The result is clamped into [0, 1e6].
    """
    if len(spec) < SNR_WINDOW:
        raise TooShort(f"need >= {SNR_WINDOW} samples to estimate SNR, got {len(spec)}")
    flux = spec.flux
    residual = flux - moving_median(flux, SNR_WINDOW)
    mad = float(np.median(np.abs(residual - np.median(residual))))
    signal = float(np.median(flux))
    noise = MAD_SCALE * mad
    if noise == 0.0:
        return 0.0 if signal <= 0.0 else SNR_CAP
    return float(min(max(signal / noise, 0.0), SNR_CAP))


def bin_features(spec: Spectrum, n_bins: int, lo: float, hi: float) -> np.ndarray:
    """Median-normalized mean flux over n_bins equal-width bins on [lo, hi].

    Bins with no samples are filled with 0 before normalization. If the
    vector's median is 0 the vector is passed through unnormalized.
    """
    if n_bins < 1:
        raise ValueError(f"n_bins must be >= 1, got {n_bins}")
    if not lo < hi:
        raise ValueError(f"need lo < hi, got [{lo}, {hi}]")
    edges = np.linspace(lo, hi, n_bins + 1)
    mask = (spec.wavelength >= lo) & (spec.wavelength <= hi)
    wl = spec.wavelength[mask]
    fl = spec.flux[mask]
    # right-most edge belongs to the last bin
    idx = np.clip(np.searchsorted(edges, wl, side="right") - 1, 0, n_bins - 1)
    sums = np.bincount(idx, weights=fl, minlength=n_bins)
    counts = np.bincount(idx, minlength=n_bins)
    feats = np.where(counts > 0, sums / np.maximum(counts, 1), 0.0)
    med = float(np.median(feats))
    if med != 0.0:
        feats = feats / med
    return feats
