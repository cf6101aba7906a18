"""Voxel-grid geometry and the three volume containers used by the pipeline.

Voxel arrays are stored with shape ``(nx, ny, nz)``; the x index varies
fastest when the grid is serialized (Fortran order), matching NIFTI-1.
Arrays are made read-only on construction so decoded volumes can be shared
freely between threads.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import GeometryMismatch, InvalidGeometry

SPACING_RTOL = 1e-3


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


def diagonal_affine(spacing) -> np.ndarray:
    aff = np.eye(4)
    aff[0, 0], aff[1, 1], aff[2, 2] = spacing
    return aff


@dataclass(frozen=True, eq=False)
class VolumeGeometry:
    dims: tuple[int, int, int]
    spacing: tuple[float, float, float]
    affine: np.ndarray = field(default=None)

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        spacing = tuple(float(s) for s in self.spacing)
        if len(dims) != 3 or any(d < 1 for d in dims):
            raise InvalidGeometry(f"dims must be three positive counts, got {self.dims}")
        if len(spacing) != 3 or not all(np.isfinite(s) and s > 0 for s in spacing):
            raise InvalidGeometry(f"spacing must be three positive finite values, got {self.spacing}")
        affine = diagonal_affine(spacing) if self.affine is None else np.asarray(self.affine, dtype=np.float64)
        if affine.shape != (4, 4) or not np.all(np.isfinite(affine)):
            raise InvalidGeometry("affine must be a finite 4x4 matrix")
        if not np.array_equal(affine[3], [0.0, 0.0, 0.0, 1.0]):
            raise InvalidGeometry(f"last affine row must be (0, 0, 0, 1), got {affine[3].tolist()}")
        norms = np.linalg.norm(affine[:3, :3], axis=0)
        if not np.allclose(norms, spacing, rtol=SPACING_RTOL, atol=0.0):
            raise InvalidGeometry(
                f"affine column norms {norms.tolist()} disagree with spacing {list(spacing)}"
            )
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "affine", _frozen(affine))

    @property
    def n_voxels(self) -> int:
        nx, ny, nz = self.dims
        return nx * ny * nz

    @property
    def voxel_volume_mm3(self) -> float:
        sx, sy, sz = self.spacing
        return sx * sy * sz

    def same_grid(self, other: "VolumeGeometry", rtol: float = SPACING_RTOL) -> bool:
        """Dims identical and spacing equal within ``rtol``."""
        return self.dims == other.dims and np.allclose(
            self.spacing, other.spacing, rtol=rtol, atol=0.0
        )

    def __eq__(self, other):
        if not isinstance(other, VolumeGeometry):
            return NotImplemented
        return (
            self.dims == other.dims
            and self.spacing == other.spacing
            and np.array_equal(self.affine, other.affine)
        )

    def __repr__(self):
        return f"VolumeGeometry(dims={self.dims}, spacing={self.spacing})"


def require_same_grid(a: VolumeGeometry, b: VolumeGeometry) -> None:
    if not a.same_grid(b):
        raise GeometryMismatch(f"{a!r} vs {b!r}")


def _check_shape(geometry: VolumeGeometry, data: np.ndarray, what: str) -> np.ndarray:
    data = np.asarray(data)
    if data.size != geometry.n_voxels:
        raise InvalidGeometry(f"{what}: {data.size} values for dims {geometry.dims}")
    if data.shape != geometry.dims:
        data = data.reshape(geometry.dims, order="F")
    return data


@dataclass(frozen=True, eq=False)
class ScalarVolume:
    geometry: VolumeGeometry
    voxels: np.ndarray

    def __post_init__(self):
        data = _check_shape(self.geometry, self.voxels, "ScalarVolume")
        data = data.astype(np.float64, copy=False)
        if not np.all(np.isfinite(data)):
            raise ValueError("ScalarVolume voxels must be finite")
        object.__setattr__(self, "voxels", _frozen(data))

    @property
    def data(self) -> np.ndarray:
        return self.voxels


@dataclass(frozen=True, eq=False)
class BinaryMask:
    geometry: VolumeGeometry
    labels: np.ndarray

    def __post_init__(self):
        data = _check_shape(self.geometry, self.labels, "BinaryMask")
        if data.dtype != np.uint8:
            if not np.all((data == 0) | (data == 1)):
                raise ValueError("BinaryMask labels must be exactly 0 or 1")
            data = data.astype(np.uint8)
        elif data.size and data.max() > 1:
            raise ValueError("BinaryMask labels must be exactly 0 or 1")
        object.__setattr__(self, "labels", _frozen(data))

    @property
    def data(self) -> np.ndarray:
        return self.labels

    @property
    def foreground(self) -> int:
        return int(np.count_nonzero(self.labels))


@dataclass(frozen=True, eq=False)
class ProbabilityVolume:
    geometry: VolumeGeometry
    probabilities: np.ndarray

    def __post_init__(self):
        data = _check_shape(self.geometry, self.probabilities, "ProbabilityVolume")
        data = data.astype(np.float64, copy=False)
        if not np.all(np.isfinite(data)):
            raise ValueError("probabilities must be finite")
        if data.size and (data.min() < 0.0 or data.max() > 1.0):
            raise ValueError("probabilities must lie in [0, 1]")
        object.__setattr__(self, "probabilities", _frozen(data))

    @property
    def data(self) -> np.ndarray:
        return self.probabilities


def as_mask(volume: ScalarVolume) -> BinaryMask:
    """Reinterpret a decoded volume as a binary mask (values must be 0/1)."""
    return BinaryMask(volume.geometry, volume.voxels)


def as_probability(volume: ScalarVolume) -> ProbabilityVolume:
    return ProbabilityVolume(volume.geometry, volume.voxels)


def mask_to_probability(mask: BinaryMask) -> ProbabilityVolume:
    return ProbabilityVolume(mask.geometry, mask.labels.astype(np.float64))
