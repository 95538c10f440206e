"""Cross-survey matching by sky position.

Great-circle separations via the haversine formula; each source matches at
most its nearest target inside the (inclusive) radius.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

from .errors import MissingCoordinates

ARCSEC_PER_DEG = 3600.0


@dataclass(frozen=True)
class SkyMatch:
    source_id: str
    target_id: str
    separation_arcsec: float


def angular_separation_arcsec(ra1: float, dec1: float, ra2: float, dec2: float) -> float:
    """Haversine great-circle separation between two (ra, dec) pairs, arcsec."""
    p1, p2 = math.radians(dec1), math.radians(dec2)
    dphi = p2 - p1
    dlam = math.radians(ra2 - ra1)
    a = math.sin(dphi / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dlam / 2) ** 2
    a = min(1.0, max(0.0, a))
    return math.degrees(2 * math.asin(math.sqrt(a))) * ARCSEC_PER_DEG


def _coords(rec) -> tuple[str, float, float]:
    rid, ra, dec = rec.id, rec.ra_deg, rec.dec_deg
    if ra is None or dec is None:
        raise MissingCoordinates(f"record {rid!r} has no sky coordinates")
    return rid, ra, dec


def cross_match(sources: Sequence, targets: Sequence, radius_arcsec: float) -> list[SkyMatch]:
    """Nearest-target match per source within radius (inclusive).

    Ties break by smaller separation, then lexicographic target id. Records
    need id / ra_deg / dec_deg attributes (Spectrum qualifies); any record
    without coordinates raises MissingCoordinates.
    """
    if radius_arcsec <= 0:
        raise ValueError(f"radius must be positive, got {radius_arcsec}")
    tgt = [_coords(t) for t in targets]
    matches: list[SkyMatch] = []
    for src in sources:
        sid, sra, sdec = _coords(src)
        best: Optional[tuple[float, str]] = None
        for tid, tra, tdec in tgt:
            sep = angular_separation_arcsec(sra, sdec, tra, tdec)
            if sep > radius_arcsec:
                continue
            if best is None or (sep, tid) < best:
                best = (sep, tid)
        if best is not None:
            matches.append(SkyMatch(source_id=sid, target_id=best[1], separation_arcsec=best[0]))
    return matches
