"""Probability-map ensembling, thresholding and muscle-volume biomarkers."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InvalidThreshold, NonPositiveHeight, TooFewMaps
from .volume import BinaryMask, ProbabilityVolume, require_same_grid


def check_threshold(threshold: float) -> float:
    threshold = float(threshold)
    if not 0.0 < threshold < 1.0:
        raise InvalidThreshold(f"threshold must lie in (0, 1), got {threshold}")
    return threshold


def ensemble_mean(maps) -> ProbabilityVolume:
    """Voxelwise arithmetic mean of two or more probability maps."""
    maps = list(maps)
    if len(maps) < 2:
        raise TooFewMaps(f"ensembling needs at least 2 maps, got {len(maps)}")
    geometry = maps[0].geometry
    for m in maps[1:]:
        require_same_grid(geometry, m.geometry)
    stacked = np.stack([m.probabilities for m in maps])
    # sort along the model axis so the float sum does not depend on argument order
    stacked.sort(axis=0)
    mean = stacked.sum(axis=0) / len(maps)
    return ProbabilityVolume(geometry, np.clip(mean, 0.0, 1.0))


def binarize(pmap: ProbabilityVolume, threshold: float = 0.5) -> BinaryMask:
    """Foreground where probability >= threshold (ties go to foreground)."""
    threshold = check_threshold(threshold)
    return BinaryMask(pmap.geometry, (pmap.probabilities >= threshold).astype(np.uint8))


@dataclass(frozen=True)
class BiomarkerResult:
    smv_ml: float
    smi: Optional[float] = None


def compute_smv(mask: BinaryMask) -> float:
    """Skeletal muscle volume in mL: foreground voxels times voxel volume."""
    return mask.foreground * mask.geometry.voxel_volume_mm3 / 1000.0


def compute_smi(smv_ml: float, height_m: float, squared: bool = False) -> float:
    """SMV divided by height (mL/m); ``squared`` divides by height^2 instead."""
    if height_m is None or not height_m > 0:
        raise NonPositiveHeight(f"height must be positive, got {height_m}")
    return smv_ml / (height_m * height_m if squared else height_m)


def quantify(mask: BinaryMask, height_m: Optional[float] = None, squared: bool = False) -> BiomarkerResult:
    smv = compute_smv(mask)
    smi = compute_smi(smv, height_m, squared) if height_m is not None else None
    return BiomarkerResult(smv, smi)
