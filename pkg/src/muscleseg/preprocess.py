"""Slice extraction, per-slice min-max normalization and 2D resampling.

The model-space contract is: split a volume into 2D slices along one axis,
scale each slice to [0, 255] independently, and resize it to 1024 x 1024.
:func:`from_model_space` undoes the geometric part so that predictions can be
scored on the native grid.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import InvalidSize, SliceCountMismatch
from .volume import ProbabilityVolume, ScalarVolume, VolumeGeometry

MODEL_SIZE = 1024

_AXES = {"first": 0, "second": 1, "third": 2, 0: 0, 1: 1, 2: 2}


def axis_index(axis) -> int:
    """Accept 0/1/2 or first/second/third (third is the slice axis by default)."""
    try:
        return _AXES[axis]
    except (KeyError, TypeError):
        raise ValueError(f"slice axis must be one of first/second/third, got {axis!r}") from None


@dataclass(frozen=True, eq=False)
class Slice2D:
    values: np.ndarray
    volume_id: str = ""
    axis: int = 2
    index: int = 0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or min(values.shape) < 1:
            raise InvalidSize(f"slice must be a non-empty 2D array, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("slice values must be finite")
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def with_values(self, values: np.ndarray) -> "Slice2D":
        return Slice2D(values, self.volume_id, self.axis, self.index)


def extract_slices(volume: ScalarVolume, axis="third", volume_id: str = "") -> list[Slice2D]:
    ax = axis_index(axis)
    data = volume.voxels
    return [
        Slice2D(np.take(data, k, axis=ax), volume_id, ax, k)
        for k in range(data.shape[ax])
    ]


def stack_slices(slices, axis="third") -> np.ndarray:
    """Inverse of :func:`extract_slices` on the raw arrays."""
    arrays = [s.values if isinstance(s, Slice2D) else np.asarray(s) for s in slices]
    return np.stack(arrays, axis=axis_index(axis))


def minmax_normalize(slc: Slice2D) -> Slice2D:
    v = slc.values
    lo, hi = v.min(), v.max()
    if hi == lo:
        return slc.with_values(np.zeros_like(v))
    # Operation order matters: exactness under positive affine maps relies on it.
    out = (v - lo) / (hi - lo) * 255.0
    return slc.with_values(out)


def _source_coords(n_in: int, n_out: int) -> np.ndarray:
    dst = np.arange(n_out, dtype=np.float64)
    src = (dst + 0.5) * (n_in / n_out) - 0.5
    return np.clip(src, 0.0, n_in - 1)


def _resample(values: np.ndarray, out_h: int, out_w: int, mode: str) -> np.ndarray:
    in_h, in_w = values.shape
    ys = _source_coords(in_h, out_h)
    xs = _source_coords(in_w, out_w)
    if mode == "nearest":
        # round half toward the smaller index
        yi = np.ceil(ys - 0.5).astype(np.intp)
        xi = np.ceil(xs - 0.5).astype(np.intp)
        return values[np.ix_(yi, xi)]

    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    y1 = np.minimum(y0 + 1, in_h - 1)
    x1 = np.minimum(x0 + 1, in_w - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    rows0 = values[y0]
    rows1 = values[y1]
    top = rows0[:, x0] + fx * (rows0[:, x1] - rows0[:, x0])
    bottom = rows1[:, x0] + fx * (rows1[:, x1] - rows1[:, x0])
    out = top + fy * (bottom - top)
    # guard against one-ulp excursions from the lerp
    return np.clip(out, values.min(), values.max())


def resize(slc: Slice2D, out_h: int, out_w: int, mode: str = "bilinear") -> Slice2D:
    """Resample with pixel-center alignment.

    Source coordinates are ``(dst + 0.5) * in / out - 0.5`` clamped to the
    input extent, so equal sizes reproduce the input bit for bit.
    """
    if out_h < 1 or out_w < 1:
        raise InvalidSize(f"target size must be positive, got {out_h}x{out_w}")
    if mode not in ("bilinear", "nearest"):
        raise ValueError(f"unknown resize mode {mode!r}")
    if (out_h, out_w) == slc.values.shape:
        return slc.with_values(slc.values)
    return slc.with_values(_resample(slc.values, out_h, out_w, mode))


def _model_slice(slc: Slice2D, size: int) -> Slice2D:
    return resize(minmax_normalize(slc), size, size, "bilinear")


def to_model_space(volume: ScalarVolume, axis="third", volume_id: str = "",
                   size: int = MODEL_SIZE, jobs: int = 1) -> list[Slice2D]:
    slices = extract_slices(volume, axis, volume_id)
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(lambda s: _model_slice(s, size), slices))
    return [_model_slice(s, size) for s in slices]


def in_plane_dims(geometry: VolumeGeometry, axis) -> tuple[int, int]:
    ax = axis_index(axis)
    return tuple(d for i, d in enumerate(geometry.dims) if i != ax)


def from_model_space(pred_slices, target_geometry: VolumeGeometry, axis="third") -> ProbabilityVolume:
    """Resize model-space probability slices back onto ``target_geometry``."""
    ax = axis_index(axis)
    if len(pred_slices) != target_geometry.dims[ax]:
        raise SliceCountMismatch(
            f"{len(pred_slices)} slices for {target_geometry.dims[ax]} positions along axis {ax}"
        )
    h, w = in_plane_dims(target_geometry, ax)
    native = []
    for k, s in enumerate(pred_slices):
        slc = s if isinstance(s, Slice2D) else Slice2D(s, axis=ax, index=k)
        native.append(resize(slc, h, w, "bilinear").values)
    data = np.clip(np.stack(native, axis=ax), 0.0, 1.0)
    return ProbabilityVolume(target_geometry, data)
