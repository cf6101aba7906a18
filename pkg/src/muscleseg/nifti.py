"""Strict single-file NIFTI-1 reader/writer.

Only the subset the pipeline needs is accepted: ``.nii`` payloads (magic
``n+1\\0``), datatypes uint8 / int16 / float32, and 2D or 3D grids. qform
quaternions are ignored; the sform rows are used when ``sform_code > 0``,
otherwise the affine is diagonal in the voxel spacing.
"""
from __future__ import annotations

import struct

import numpy as np

from .errors import (
    BadMagic,
    InvalidDtype,
    InvalidGeometry,
    NonFinite,
    RangeOverflow,
    Truncated,
    UnsupportedDatatype,
    UnsupportedDims,
)
from .volume import BinaryMask, ProbabilityVolume, ScalarVolume, VolumeGeometry, diagonal_affine

HEADER_SIZE = 348
VOX_OFFSET = 352
MAGIC = b"n+1\x00"

DT_UINT8 = 2
DT_INT16 = 4
DT_FLOAT32 = 16

_DTYPES = {
    DT_UINT8: (np.dtype("u1"), 8),
    DT_INT16: (np.dtype("i2"), 16),
    DT_FLOAT32: (np.dtype("f4"), 32),
}

# field name -> (offset, struct code)
_FIELDS = {
    "sizeof_hdr": (0, "i"),
    "dim": (40, "8h"),
    "datatype": (70, "h"),
    "bitpix": (72, "h"),
    "pixdim": (76, "8f"),
    "vox_offset": (108, "f"),
    "scl_slope": (112, "f"),
    "scl_inter": (116, "f"),
    "xyzt_units": (123, "B"),
    "qform_code": (252, "h"),
    "sform_code": (254, "h"),
    "srow_x": (280, "4f"),
    "srow_y": (296, "4f"),
    "srow_z": (312, "4f"),
}


def _unpack(buf: bytes, endian: str, name: str):
    offset, code = _FIELDS[name]
    values = struct.unpack_from(endian + code, buf, offset)
    return values if len(values) > 1 else values[0]


def _endianness(buf: bytes) -> str:
    if struct.unpack_from("<i", buf, 0)[0] == HEADER_SIZE:
        return "<"
    if struct.unpack_from(">i", buf, 0)[0] == HEADER_SIZE:
        return ">"
    raise BadMagic("sizeof_hdr is not 348 in either byte order")


def read_nifti(data: bytes) -> ScalarVolume:
    """Decode a single-file NIFTI-1 payload into a :class:`ScalarVolume`."""
    data = bytes(data)
    if len(data) < HEADER_SIZE:
        raise Truncated(f"{len(data)} bytes is shorter than the 348-byte header")
    endian = _endianness(data)
    if data[344:348] != MAGIC:
        raise BadMagic(f"magic {data[344:348]!r} is not {MAGIC!r}")

    datatype = _unpack(data, endian, "datatype")
    if datatype not in _DTYPES:
        raise UnsupportedDatatype(f"datatype code {datatype}")
    dtype, _ = _DTYPES[datatype]

    dim = _unpack(data, endian, "dim")
    ndim = dim[0]
    if ndim > 3 or ndim < 2:
        raise UnsupportedDims(f"dim[0] = {ndim}")
    nx, ny = dim[1], dim[2]
    nz = dim[3] if ndim == 3 else 1
    if min(nx, ny, nz) < 1:
        raise InvalidGeometry(f"non-positive dims {(nx, ny, nz)}")

    vox_offset = int(_unpack(data, endian, "vox_offset"))
    if vox_offset < VOX_OFFSET:
        raise BadMagic(f"vox_offset {vox_offset} < 352; not a single-file payload")

    pixdim = _unpack(data, endian, "pixdim")
    spacing = [float(pixdim[1]), float(pixdim[2]), float(pixdim[3])]
    if ndim == 2 and not spacing[2] > 0:
        spacing[2] = 1.0

    if _unpack(data, endian, "sform_code") > 0:
        rows = [_unpack(data, endian, r) for r in ("srow_x", "srow_y", "srow_z")]
        affine = np.vstack([np.array(rows, dtype=np.float64), [0.0, 0.0, 0.0, 1.0]])
    else:
        affine = diagonal_affine(spacing)
    geometry = VolumeGeometry((nx, ny, nz), tuple(spacing), affine)

    count = nx * ny * nz
    nbytes = count * dtype.itemsize
    if len(data) < vox_offset + nbytes:
        raise Truncated(f"need {vox_offset + nbytes} bytes, got {len(data)}")
    raw = np.frombuffer(data, dtype=dtype.newbyteorder(endian), count=count, offset=vox_offset)
    values = raw.astype(np.float64)

    slope = float(_unpack(data, endian, "scl_slope"))
    inter = float(_unpack(data, endian, "scl_inter"))
    if not np.isfinite(slope) or not np.isfinite(inter):
        raise NonFinite("scl_slope/scl_inter not finite")
    if slope == 0.0:
        slope = 1.0
    if slope != 1.0 or inter != 0.0:
        values = values * slope + inter
    if not np.all(np.isfinite(values)):
        raise NonFinite("decoded voxel values contain NaN or Inf")
    return ScalarVolume(geometry, values.reshape((nx, ny, nz), order="F"))


def _payload(volume) -> np.ndarray:
    if isinstance(volume, BinaryMask):
        return volume.labels
    if isinstance(volume, ProbabilityVolume):
        return volume.probabilities
    return volume.voxels


def default_dtype(volume) -> int:
    if isinstance(volume, BinaryMask):
        return DT_UINT8
    return DT_FLOAT32


def write_nifti(volume: ScalarVolume | BinaryMask | ProbabilityVolume, dtype: int | None = None) -> bytes:
    """Encode ``volume`` as little-endian NIFTI-1 bytes.

    Integer dtypes round to the nearest integer; values outside the dtype's
    range raise :class:`RangeOverflow` instead of wrapping.
    """
    if dtype is None:
        dtype = default_dtype(volume)
    if dtype not in _DTYPES:
        raise InvalidDtype(f"unsupported output datatype {dtype!r}")
    np_dtype, bitpix = _DTYPES[dtype]
    geometry = volume.geometry
    values = np.asarray(_payload(volume), dtype=np.float64)

    if np_dtype.kind in "iu":
        info = np.iinfo(np_dtype)
        values = np.rint(values)
    else:
        info = np.finfo(np_dtype)
    if values.size and (values.min() < info.min or values.max() > info.max):
        raise RangeOverflow(
            f"values span [{values.min()}, {values.max()}], outside {np_dtype} range"
        )
    body = values.astype(np_dtype.newbyteorder("<")).tobytes(order="F")

    hdr = bytearray(VOX_OFFSET)
    nx, ny, nz = geometry.dims
    struct.pack_into("<i", hdr, 0, HEADER_SIZE)
    struct.pack_into("<8h", hdr, 40, 3, nx, ny, nz, 1, 1, 1, 1)
    struct.pack_into("<hh", hdr, 70, dtype, bitpix)
    struct.pack_into("<8f", hdr, 76, 1.0, *geometry.spacing, 0.0, 0.0, 0.0, 0.0)
    struct.pack_into("<fff", hdr, 108, float(VOX_OFFSET), 1.0, 0.0)
    hdr[123] = 2  # NIFTI_UNITS_MM
    struct.pack_into("<hh", hdr, 252, 0, 1)
    aff = geometry.affine
    for i, off in enumerate((280, 296, 312)):
        struct.pack_into("<4f", hdr, off, *aff[i])
    hdr[344:348] = MAGIC
    return bytes(hdr) + body
