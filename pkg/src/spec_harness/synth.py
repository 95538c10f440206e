"""Synthetic spectrum generator.

Produces continuum + Gaussian line spectra with seedable noise so the whole
pipeline (bench construction, rollouts, scoring) runs at desk scale without
any survey archive. Line amplitudes are relative to the continuum level;
negative amplitudes give absorption features.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .spectrum import Spectrum, Survey, TaskLabel

DEFAULT_LO = 3900.0
DEFAULT_HI = 9000.0
DEFAULT_STEP = 4.0


@dataclass(frozen=True)
class GaussianLine:
    center: float       # Angstrom
    amplitude: float    # relative to continuum; < 0 for absorption
    sigma: float        # Angstrom


@dataclass(frozen=True)
class SynthRecipe:
    continuum: float = 1.0
    slope: float = 0.0  # flux units per 1000 Angstrom
    lines: Sequence[GaussianLine] = field(default_factory=tuple)
    noise_sigma: float = 0.02
    lo: float = DEFAULT_LO
    hi: float = DEFAULT_HI
    step: float = DEFAULT_STEP


def synth_spectrum(
    spec_id: str,
    recipe: SynthRecipe,
    seed: int,
    label: Optional[TaskLabel] = None,
    ra_deg: Optional[float] = None,
    dec_deg: Optional[float] = None,
) -> Spectrum:
    rng = np.random.default_rng(seed)
    wl = np.arange(recipe.lo, recipe.hi + recipe.step / 2, recipe.step)
    flux = np.full_like(wl, recipe.continuum)
    flux += recipe.slope * (wl - wl[0]) / 1000.0
    for line in recipe.lines:
        flux += line.amplitude * np.exp(-0.5 * ((wl - line.center) / line.sigma) ** 2)
    if recipe.noise_sigma > 0:
        flux += rng.normal(0.0, recipe.noise_sigma, size=len(wl))
    return Spectrum(
        id=spec_id,
        survey=Survey.SYNTHETIC,
        wavelength=wl,
        flux=flux,
        label=label,
        ra_deg=ra_deg,
        dec_deg=dec_deg,
    )


def flat_recipe(noise_sigma: float = 0.02) -> SynthRecipe:
    """Featureless continuum; the canonical easy negative."""
    return SynthRecipe(noise_sigma=noise_sigma)


def emission_recipe(
    center: float,
    amplitude: float,
    sigma: float = 15.0,
    noise_sigma: float = 0.02,
) -> SynthRecipe:
    """Continuum plus one emission (or absorption, amplitude < 0) line."""
    return SynthRecipe(
        lines=(GaussianLine(center=center, amplitude=amplitude, sigma=sigma),),
        noise_sigma=noise_sigma,
    )


# Primary diagnostic feature per task: (center A, amplitude, sigma A, slope).
# Emission for CV; molecular-band or Balmer absorption stand-ins elsewhere.
_TASK_FEATURES: dict = {
    "CV": (6563.0, 1.2, 18.0, 0.0),
    "CS": (5165.0, -0.5, 45.0, 0.08),
    "SS": (6474.0, -0.45, 25.0, 0.05),
    "MG": (7053.0, -0.5, 55.0, 0.10),
    "WD": (4861.0, -0.6, 60.0, -0.04),
    "O": (4686.0, -0.35, 10.0, -0.03),
    "B": (4471.0, -0.35, 10.0, -0.02),
    "A": (4340.0, -0.6, 20.0, -0.01),
}


def task_positive_recipe(task, strength: float = 1.0, noise_sigma: float = 0.02) -> SynthRecipe:
    """A clean positive for the task's verification question."""
    center, amp, sigma, slope = _TASK_FEATURES[task.value]
    return SynthRecipe(
        slope=slope,
        lines=(GaussianLine(center=center, amplitude=amp * strength, sigma=sigma),),
        noise_sigma=noise_sigma,
    )


def task_negative_recipe(task, confuser: bool = False, noise_sigma: float = 0.02) -> SynthRecipe:
    """A negative: same continuum, feature absent (or halved for confusers)."""
    center, amp, sigma, slope = _TASK_FEATURES[task.value]
    lines = (GaussianLine(center=center, amplitude=amp * 0.5, sigma=sigma),) if confuser else ()
    return SynthRecipe(slope=slope, lines=lines, noise_sigma=noise_sigma)
