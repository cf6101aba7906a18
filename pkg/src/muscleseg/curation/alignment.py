"""Geometric and intensity checks for reusing a mask across sequences."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..volume import ScalarVolume

SPACING_RTOL = 1e-3
AFFINE_ATOL = 1e-2
NCC_MIN = 0.30


@dataclass(frozen=True)
class AlignmentResult:
    aligned: bool
    reason: Optional[str] = None
    ncc: Optional[float] = None

    def to_dict(self) -> dict:
        return {"aligned": self.aligned, "reason": self.reason, "ncc": self.ncc}


def _unit_range(v: np.ndarray) -> np.ndarray:
    lo, hi = v.min(), v.max()
    if hi == lo:
        return np.zeros_like(v)
    return (v - lo) / (hi - lo)


def normalized_cross_correlation(a: np.ndarray, b: np.ndarray) -> float:
    """NCC of two equally shaped arrays after min-max scaling each.

    Two constant arrays count as perfectly correlated; a constant array
    against a varying one has correlation 0.
    """
    x = _unit_range(np.asarray(a, dtype=np.float64)).ravel()
    y = _unit_range(np.asarray(b, dtype=np.float64)).ravel()
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(np.dot(dx, dx))
    syy = float(np.dot(dy, dy))
    if sxx == 0.0 and syy == 0.0:
        return 1.0
    if sxx == 0.0 or syy == 0.0:
        return 0.0
    r = float(np.dot(dx, dy)) / np.sqrt(sxx * syy)
    return float(np.clip(r, -1.0, 1.0))


def verify_pair_alignment(reference: ScalarVolume, candidate: ScalarVolume,
                          spacing_rtol: float = SPACING_RTOL,
                          affine_atol: float = AFFINE_ATOL,
                          ncc_min: float = NCC_MIN) -> AlignmentResult:
    """Decide whether ``reference``'s mask may be reused verbatim on ``candidate``."""
    g, h = reference.geometry, candidate.geometry
    if g.dims != h.dims:
        return AlignmentResult(False, "dims")
    if not np.allclose(g.spacing, h.spacing, rtol=spacing_rtol, atol=0.0):
        return AlignmentResult(False, "spacing")
    if not np.allclose(g.affine, h.affine, rtol=0.0, atol=affine_atol):
        return AlignmentResult(False, "affine")
    ncc = normalized_cross_correlation(reference.voxels, candidate.voxels)
    if ncc < ncc_min:
        return AlignmentResult(False, "ncc", ncc)
    return AlignmentResult(True, None, ncc)
