import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from muscleseg.errors import (
    BadMagic,
    InvalidDtype,
    InvalidGeometry,
    NonFinite,
    RangeOverflow,
    Truncated,
    UnsupportedDatatype,
    UnsupportedDims,
)
from muscleseg.nifti import read_nifti, write_nifti
from muscleseg.volume import VolumeGeometry

from conftest import mask, prob, scalar


def hand_header(dims, datatype, bitpix, endian="<", magic=b"n+1\x00", slope=1.0, inter=0.0,
                pixdim=(1.0, 1.0, 1.0), ndim=3, vox_offset=352.0, sform=None):
    """Assemble a header field by field, independent of write_nifti."""
    hdr = bytearray(352)
    struct.pack_into(endian + "i", hdr, 0, 348)
    dim = [ndim, *dims] + [1] * (7 - len(dims))
    struct.pack_into(endian + "8h", hdr, 40, *dim)
    struct.pack_into(endian + "hh", hdr, 70, datatype, bitpix)
    struct.pack_into(endian + "8f", hdr, 76, 1.0, *pixdim, 0, 0, 0, 0)
    struct.pack_into(endian + "fff", hdr, 108, vox_offset, slope, inter)
    if sform is not None:
        struct.pack_into(endian + "h", hdr, 254, 1)
        for i, off in enumerate((280, 296, 312)):
            struct.pack_into(endian + "4f", hdr, off, *sform[i])
    hdr[344:348] = magic
    return bytes(hdr)


def test_slope_intercept_applied():
    hdr = hand_header((2, 2, 1), 2, 8, slope=2.0, inter=1.0)
    vol = read_nifti(hdr + bytes([0, 1, 2, 3]))
    assert vol.geometry.dims == (2, 2, 1)
    assert sorted(vol.voxels.ravel().tolist()) == [1.0, 3.0, 5.0, 7.0]
    # x fastest: byte order 0,1,2,3 -> (0,0),(1,0),(0,1),(1,1)
    assert vol.voxels[1, 0, 0] == 3.0 and vol.voxels[0, 1, 0] == 5.0


def test_zero_slope_means_identity():
    hdr = hand_header((2, 2, 1), 2, 8, slope=0.0, inter=0.0)
    vol = read_nifti(hdr + bytes([0, 1, 2, 3]))
    assert vol.voxels.ravel(order="F").tolist() == [0.0, 1.0, 2.0, 3.0]


def test_bad_magic():
    hdr = hand_header((2, 2, 1), 2, 8, magic=b"x+1\x00")
    with pytest.raises(BadMagic):
        read_nifti(hdr + bytes(4))


def test_bad_sizeof_hdr():
    hdr = bytearray(hand_header((2, 2, 1), 2, 8))
    struct.pack_into("<i", hdr, 0, 540)
    with pytest.raises(BadMagic):
        read_nifti(bytes(hdr) + bytes(4))


def test_pair_file_offset_rejected():
    hdr = hand_header((2, 2, 1), 2, 8, vox_offset=0.0)
    with pytest.raises(BadMagic):
        read_nifti(hdr + bytes(4))


@pytest.mark.parametrize("code", [1, 8, 64, 256, 512])
def test_unsupported_datatype(code):
    with pytest.raises(UnsupportedDatatype):
        read_nifti(hand_header((2, 2, 1), code, 8) + bytes(64))


def test_four_dims_rejected():
    hdr = hand_header((2, 2, 1, 2), 2, 8, ndim=4)
    with pytest.raises(UnsupportedDims):
        read_nifti(hdr + bytes(8))


def test_two_dims_is_single_slice():
    hdr = hand_header((3, 2), 2, 8, ndim=2, pixdim=(0.5, 0.5, 0.0))
    vol = read_nifti(hdr + bytes(range(6)))
    assert vol.geometry.dims == (3, 2, 1)
    assert vol.geometry.spacing == (0.5, 0.5, 1.0)


def test_truncated_payload():
    hdr = hand_header((4, 4, 4), 4, 16)
    with pytest.raises(Truncated):
        read_nifti(hdr + bytes(4 * 4 * 4 * 2 - 1))
    with pytest.raises(Truncated):
        read_nifti(hdr[:200])


def test_nonfinite_voxels():
    hdr = hand_header((2, 1, 1), 16, 32)
    with pytest.raises(NonFinite):
        read_nifti(hdr + struct.pack("<2f", 1.0, float("nan")))


def test_invalid_spacing_rejected():
    hdr = hand_header((2, 1, 1), 2, 8, pixdim=(1.0, -1.0, 1.0))
    with pytest.raises(InvalidGeometry):
        read_nifti(hdr + bytes(2))


def test_sform_used_when_present():
    sform = [[0.0, -2.0, 0.0, 10.0], [1.5, 0.0, 0.0, -4.0], [0.0, 0.0, 3.0, 7.0]]
    hdr = hand_header((2, 2, 2), 2, 8, pixdim=(1.5, 2.0, 3.0), sform=sform)
    vol = read_nifti(hdr + bytes(8))
    np.testing.assert_array_equal(vol.geometry.affine[:3], sform)


def test_sform_disagreeing_with_pixdim_rejected():
    sform = [[5.0, 0, 0, 0], [0, 1.0, 0, 0], [0, 0, 1.0, 0]]
    hdr = hand_header((2, 2, 2), 2, 8, sform=sform)
    with pytest.raises(InvalidGeometry):
        read_nifti(hdr + bytes(8))


def test_all_zero_mask_payload():
    m = mask(np.zeros((3, 4, 5)))
    payload = write_nifti(m, 2)
    assert len(payload) == 352 + 60
    assert payload[352:] == bytes(60)
    assert struct.unpack_from("<i", payload, 0)[0] == 348
    assert payload[344:348] == b"n+1\x00"
    assert struct.unpack_from("<fff", payload, 108) == (352.0, 1.0, 0.0)


def test_range_overflow():
    with pytest.raises(RangeOverflow):
        write_nifti(scalar(np.full((2, 2, 2), 300.0)), 2)
    with pytest.raises(RangeOverflow):
        write_nifti(scalar(np.full((2, 2, 2), -40000.0)), 4)
    with pytest.raises(RangeOverflow):
        write_nifti(scalar(np.full((2, 2, 2), 1e39)), 16)


def test_invalid_dtype():
    with pytest.raises(InvalidDtype):
        write_nifti(scalar(np.zeros((2, 2, 2))), 64)


def test_probability_roundtrip_bit_exact(rng):
    p = prob(rng.random((5, 6, 7)).astype(np.float32))
    back = read_nifti(write_nifti(p, 16))
    assert back.voxels.tobytes() == p.probabilities.tobytes()


def test_geometry_roundtrip():
    v = scalar(np.arange(24.0).reshape(2, 3, 4), spacing=(0.5, 0.75, 3.0))
    back = read_nifti(write_nifti(v, 16))
    assert back.geometry == v.geometry
    np.testing.assert_array_equal(back.voxels, v.voxels)


def _to_big_endian(payload: bytes, dtype: int) -> bytes:
    """Byte-swap every header field we populate plus the voxel data."""
    hdr = bytearray(payload[:352])
    layout = [(0, "i"), (40, "8h"), (70, "hh"), (76, "8f"), (108, "fff"), (252, "hh"),
              (280, "4f"), (296, "4f"), (312, "4f")]
    for off, code in layout:
        vals = struct.unpack_from("<" + code, hdr, off)
        struct.pack_into(">" + code, hdr, off, *vals)
    np_dtype = {2: "u1", 4: "i2", 16: "f4"}[dtype]
    body = np.frombuffer(payload[352:], dtype="<" + np_dtype).astype(">" + np_dtype).tobytes()
    return bytes(hdr) + body


@pytest.mark.parametrize("dtype", [2, 4, 16])
def test_big_endian_matches_little_endian(rng, dtype):
    data = rng.integers(0, 200, size=(4, 3, 5)).astype(np.float64)
    little = write_nifti(scalar(data, (1.0, 2.0, 0.5)), dtype)
    big = _to_big_endian(little, dtype)
    assert big != little
    a, b = read_nifti(little), read_nifti(big)
    assert a.geometry == b.geometry
    np.testing.assert_array_equal(a.voxels, b.voxels)


@settings(max_examples=40, deadline=None)
@given(
    dims=st.tuples(st.integers(1, 6), st.integers(1, 6), st.integers(1, 6)),
    dtype=st.sampled_from([2, 4, 16]),
    seed=st.integers(0, 2**32 - 1),
)
def test_roundtrip_property(dims, dtype, seed):
    r = np.random.default_rng(seed)
    if dtype == 2:
        data = r.integers(0, 256, size=dims).astype(np.float64)
    elif dtype == 4:
        data = r.integers(-32768, 32768, size=dims).astype(np.float64)
    else:
        data = (r.standard_normal(dims) * 1000).astype(np.float32).astype(np.float64)
    v = scalar(data)
    back = read_nifti(write_nifti(v, dtype))
    assert back.geometry == v.geometry
    assert back.voxels.tobytes() == v.voxels.tobytes()


def test_geometry_invariants():
    with pytest.raises(InvalidGeometry):
        VolumeGeometry((0, 2, 2), (1, 1, 1))
    with pytest.raises(InvalidGeometry):
        VolumeGeometry((2, 2, 2), (1, float("inf"), 1))
    bad = np.eye(4)
    bad[3, 0] = 1.0
    with pytest.raises(InvalidGeometry):
        VolumeGeometry((2, 2, 2), (1, 1, 1), bad)


def test_decoded_volume_is_immutable():
    v = read_nifti(write_nifti(scalar(np.zeros((2, 2, 2))), 16))
    with pytest.raises(ValueError):
        v.voxels[0, 0, 0] = 1.0
