"""Procedural limb-like phantoms with known muscle masks.

A phantom is a body cylinder running along the third axis: a subcutaneous
fat rim, interstitial tissue, a central bone, a small vessel, and a ring of
ellipsoidal muscle lobes. The ground-truth mask is the union of the lobes,
sampled at voxel centers. Every random choice comes from the counter-based
generator in :mod:`muscleseg.rng`, so a config fully determines the output.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import rng
from .curation.cohort import SeriesMetadata
from .curation.keywords import LOCATIONS
from .errors import InvalidConfig
from .preprocess import minmax_normalize, Slice2D
from .volume import BinaryMask, ProbabilityVolume, ScalarVolume, VolumeGeometry

PROFILES = ("t1-like", "t2fs-like")
INTENSITY_SCALE = 1000.0

# relative tissue levels per contrast profile
TISSUE_LEVELS = {
    "t1-like": {"background": 0.0, "fat": 1.0, "interstitial": 0.7, "muscle": 0.45,
                "bone": 0.1, "vessel": 0.05},
    "t2fs-like": {"background": 0.0, "fat": 0.1, "interstitial": 0.25, "muscle": 0.5,
                  "bone": 0.05, "vessel": 0.9},
}
SERIES_DESCRIPTIONS = {"t1-like": "AX T1", "t2fs-like": "AX T2 FS"}

_STREAM_LAYOUT = 1
_STREAM_NOISE = 2
_STREAM_META = 3
_STREAM_MAP = 4

_RACES = ("white", "black", "asian", "other", "unknown")
_RACE_WEIGHTS = (109, 35, 6, 4, 6)


@dataclass(frozen=True)
class PhantomConfig:
    dims: tuple[int, int, int] = (64, 64, 64)
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    n_muscle_lobes: int = 4
    noise_sigma: float = 0.0
    contrast_profile: str = "t1-like"
    seed: int = 0
    location: Optional[str] = None

    def validate(self) -> None:
        if len(self.dims) != 3 or any(int(d) < 16 for d in self.dims):
            raise InvalidConfig(f"phantom dims must be >= 16 per axis, got {self.dims}")
        if len(self.spacing) != 3 or not all(s > 0 and math.isfinite(s) for s in self.spacing):
            raise InvalidConfig(f"invalid spacing {self.spacing}")
        if not 0.0 <= self.noise_sigma <= 0.5:
            raise InvalidConfig(f"noise_sigma must lie in [0, 0.5], got {self.noise_sigma}")
        if self.n_muscle_lobes < 0:
            raise InvalidConfig("n_muscle_lobes must be >= 0")
        if self.contrast_profile not in PROFILES:
            raise InvalidConfig(f"unknown contrast profile {self.contrast_profile!r}")
        if self.location is not None and self.location not in LOCATIONS:
            raise InvalidConfig(f"unknown location {self.location!r}")
        if not 0 <= int(self.seed) < 2**64:
            raise InvalidConfig("seed must be a 64-bit unsigned value")


@dataclass(frozen=True)
class Ellipsoid:
    """Semi-axes in mm; ``angle`` orients the first axis radially in the xy plane."""

    center: tuple[float, float, float]
    radial: float
    tangential: float
    axial: float
    angle: float

    @property
    def volume_mm3(self) -> float:
        return 4.0 / 3.0 * math.pi * self.radial * self.tangential * self.axial


@dataclass(frozen=True)
class PhantomLayout:
    center: tuple[float, float, float]
    body_radius: float
    fat_inner_radius: float
    bone_radius: float
    vessel_center: tuple[float, float]
    vessel_radius: float
    lobes: tuple[Ellipsoid, ...]


def phantom_layout(config: PhantomConfig) -> PhantomLayout:
    """Analytic description of the phantom (all lengths in mm)."""
    config.validate()
    r = rng.CounterRNG(config.seed, _STREAM_LAYOUT)
    dims, sp = config.dims, config.spacing
    center = tuple((n - 1) / 2.0 * s for n, s in zip(dims, sp))
    half_x, half_y = dims[0] * sp[0] / 2.0, dims[1] * sp[1] / 2.0
    body = 0.9 * min(half_x, half_y)
    fat_inner = 0.88 * body
    bone = 0.15 * body
    ring = (bone + fat_inner) / 2.0
    gap = fat_inner - bone
    z_len = dims[2] * sp[2]

    n = config.n_muscle_lobes
    lobes = []
    for k in range(n):
        scale = r.uniform(10 * k, 0.7, 1.0)
        radial = 0.42 * gap * scale
        if n == 1:
            tangential = radial * r.uniform(10 * k + 1, 1.0, 1.2)
        else:
            tangential = min(radial * r.uniform(10 * k + 1, 0.9, 1.2),
                             0.9 * ring * math.sin(math.pi / n))
        axial = z_len * r.uniform(10 * k + 2, 0.25, 0.4)
        jitter = (math.pi / max(n, 1)) * r.uniform(10 * k + 3, -0.1, 0.1)
        angle = 2.0 * math.pi * k / max(n, 1) + jitter
        cz = center[2] + z_len * r.uniform(10 * k + 4, -0.05, 0.05)
        cx = center[0] + ring * math.cos(angle)
        cy = center[1] + ring * math.sin(angle)
        lobes.append(Ellipsoid((cx, cy, cz), radial, tangential, axial, angle))

    vessel_angle = math.pi / max(n, 1) if n else 0.0
    vessel = (center[0] + ring * math.cos(vessel_angle), center[1] + ring * math.sin(vessel_angle))
    return PhantomLayout(center, body, fat_inner, bone, vessel, 0.05 * body, tuple(lobes))


def _grid(config: PhantomConfig):
    nx, ny, nz = config.dims
    sx, sy, sz = config.spacing
    x = (np.arange(nx) * sx)[:, None, None]
    y = (np.arange(ny) * sy)[None, :, None]
    z = (np.arange(nz) * sz)[None, None, :]
    return x, y, z


def lobe_mask(config: PhantomConfig, lobe: Ellipsoid) -> np.ndarray:
    x, y, z = _grid(config)
    dx, dy, dz = x - lobe.center[0], y - lobe.center[1], z - lobe.center[2]
    c, s = math.cos(lobe.angle), math.sin(lobe.angle)
    u = dx * c + dy * s
    v = -dx * s + dy * c
    return (u / lobe.radial) ** 2 + (v / lobe.tangential) ** 2 + (dz / lobe.axial) ** 2 <= 1.0


def _metadata(config: PhantomConfig, location: str) -> SeriesMetadata:
    r = rng.CounterRNG(config.seed, _STREAM_META)
    tag = f"{config.seed:06d}" if config.seed < 10**6 else f"{config.seed:x}"
    return SeriesMetadata(
        patient_id=f"PT{tag}",
        exam_id=f"EX{tag}",
        series_id=f"PH{tag}",
        series_description=SERIES_DESCRIPTIONS[config.contrast_profile],
        protocol_description=f"MRI {location.replace('-', ' ')} without contrast",
        view="axial",
        age=r.integer(1, 1, 90),
        sex=r.choice(2, ("female", "male")),
        race=r.choice(3, _RACES, _RACE_WEIGHTS),
        height_m=round(r.uniform(4, 1.5, 1.95), 2),
        year=r.integer(5, 2016, 2020),
    )


def generate_phantom(config: PhantomConfig) -> tuple[ScalarVolume, BinaryMask, SeriesMetadata]:
    config.validate()
    layout = phantom_layout(config)
    levels = TISSUE_LEVELS[config.contrast_profile]
    geometry = VolumeGeometry(config.dims, config.spacing)
    x, y, z = _grid(config)
    cx, cy, _ = layout.center
    radius = np.sqrt((x - cx) ** 2 + (y - cy) ** 2) + np.zeros_like(z)

    img = np.full(config.dims, levels["background"])
    img[radius <= layout.body_radius] = levels["fat"]
    img[radius <= layout.fat_inner_radius] = levels["interstitial"]
    img[radius <= layout.bone_radius] = levels["bone"]
    vx, vy = layout.vessel_center
    vessel = (np.sqrt((x - vx) ** 2 + (y - vy) ** 2) + np.zeros_like(z)) <= layout.vessel_radius
    img[vessel] = levels["vessel"]

    mask = np.zeros(config.dims, dtype=bool)
    for lobe in layout.lobes:
        mask |= lobe_mask(config, lobe)
    img[mask] = levels["muscle"]

    img *= INTENSITY_SCALE
    if config.noise_sigma > 0:
        dynamic_range = img.max() - img.min()
        noise = rng.normal(config.seed, _STREAM_NOISE, img.size).reshape(config.dims, order="F")
        img = img + config.noise_sigma * dynamic_range * noise

    location = config.location or rng.CounterRNG(config.seed, _STREAM_META).choice(0, LOCATIONS)
    return (ScalarVolume(geometry, img), BinaryMask(geometry, mask.astype(np.uint8)),
            _metadata(config, location))


def box_blur(data: np.ndarray, iters: int = 1) -> np.ndarray:
    """``iters`` passes of a separable 3x3x3 mean filter with edge replication."""
    out = np.asarray(data, dtype=np.float64)
    for _ in range(iters):
        for axis in range(out.ndim):
            pad = [(0, 0)] * out.ndim
            pad[axis] = (1, 1)
            p = np.pad(out, pad, mode="edge")
            n = out.shape[axis]
            out = (np.take(p, range(0, n), axis=axis) + np.take(p, range(1, n + 1), axis=axis)
                   + np.take(p, range(2, n + 2), axis=axis)) / 3.0
    return out


def simulate_probability_map(gt: BinaryMask, blur_iters: int = 1, noise_sigma: float = 0.0,
                             seed: int = 0) -> ProbabilityVolume:
    """Corrupt a mask into a plausible model output: blur, add noise, clamp."""
    if blur_iters < 0 or noise_sigma < 0:
        raise InvalidConfig("blur_iters and noise_sigma must be non-negative")
    p = box_blur(gt.labels.astype(np.float64), blur_iters)
    if noise_sigma > 0:
        noise = rng.normal(seed, _STREAM_MAP, p.size).reshape(p.shape, order="F")
        p = p + noise_sigma * noise
    return ProbabilityVolume(gt.geometry, np.clip(p, 0.0, 1.0))


def _band(profile: str) -> tuple[float, float]:
    """Muscle band center and half-width on the 0..255 per-slice scale."""
    levels = TISSUE_LEVELS[profile]
    lo, hi = min(levels.values()), max(levels.values())
    muscle = levels["muscle"]
    others = [v for k, v in levels.items() if k != "muscle"]
    half = min(abs(v - muscle) for v in others) / 2.0
    scale = 255.0 / (hi - lo)
    return (muscle - lo) * scale, half * scale


def reference_segment(volume: ScalarVolume, profile: str = "t1-like", axis: int = 2) -> ProbabilityVolume:
    """Classical intensity-band segmenter used when no model output is supplied.

    Each slice is min-max normalized; a voxel's probability is a logistic
    function of its distance from the profile's muscle intensity.
    """
    if profile not in PROFILES:
        raise InvalidConfig(f"unknown contrast profile {profile!r}")
    center, half = _band(profile)
    steepness = half / 4.0
    data = volume.voxels
    out = np.empty_like(data)
    for k in range(data.shape[axis]):
        slc = minmax_normalize(Slice2D(np.take(data, k, axis=axis))).values
        dist = np.abs(slc - center)
        prob = 0.5 * (1.0 + np.tanh((half - dist) / (2.0 * steepness)))
        idx = [slice(None)] * 3
        idx[axis] = k
        out[tuple(idx)] = prob
    return ProbabilityVolume(volume.geometry, np.clip(out, 0.0, 1.0))
