import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from scopedepth import DepthMap, PfmError, read_pfm, write_pfm


def test_minimal_file_reads():
    data = b"Pf\n1 1\n-1.0\n" + struct.pack("<f", 2.5)
    dm = read_pfm(data)
    assert dm.shape == (1, 1)
    assert dm.values[0, 0] == np.float32(2.5)


def test_write_header_is_15_bytes_for_1x1():
    out = write_pfm(DepthMap(np.zeros((1, 1), dtype=np.float32)))
    header, payload = out[:-4], out[-4:]
    assert len(header) == 15
    assert payload == b"\x00\x00\x00\x00"


def test_payload_rows_are_bottom_up():
    dm = DepthMap(np.array([[1.0], [2.0]], dtype=np.float32))
    out = write_pfm(dm)
    floats = struct.unpack("<ff", out[-8:])
    assert floats == (2.0, 1.0)


def test_truncated_payload_rejected():
    data = b"Pf\n2 2\n-1.0\n" + struct.pack("<fff", 1.0, 2.0, 3.0)
    with pytest.raises(PfmError, match="truncated"):
        read_pfm(data)


def test_oversized_payload_rejected():
    data = b"Pf\n1 1\n-1.0\n" + struct.pack("<ff", 1.0, 2.0)
    with pytest.raises(PfmError):
        read_pfm(data)


def test_color_pfm_rejected():
    data = b"PF\n1 1\n-1.0\n" + struct.pack("<fff", 1.0, 1.0, 1.0)
    with pytest.raises(PfmError, match="color"):
        read_pfm(data)


@pytest.mark.parametrize(
    "blob",
    [
        b"",
        b"Pq\n1 1\n-1.0\n" + b"\x00" * 4,
        b"Pf\n0 1\n-1.0\n",
        b"Pf\nx y\n-1.0\n" + b"\x00" * 4,
        b"Pf\n1 1\nzz\n" + b"\x00" * 4,
        b"Pf\n1 1\n0\n" + b"\x00" * 4,
    ],
)
def test_malformed_headers_rejected(blob):
    with pytest.raises(PfmError):
        read_pfm(blob)


def test_big_endian_scale_token():
    data = b"Pf\n1 1\n1.0\n" + struct.pack(">f", 3.25)
    assert read_pfm(data).values[0, 0] == np.float32(3.25)


def test_negative_values_rejected_by_depth_invariant():
    data = b"Pf\n1 1\n-1.0\n" + struct.pack("<f", -1.0)
    with pytest.raises(PfmError, match="invalid depth"):
        read_pfm(data)


@settings(max_examples=60, deadline=None)
@given(
    hnp.arrays(
        dtype=np.float32,
        shape=hnp.array_shapes(min_dims=2, max_dims=2, min_side=1, max_side=12),
        elements=st.floats(
            min_value=0.0,
            max_value=float(np.finfo(np.float32).max),
            allow_nan=False,
            allow_infinity=False,
            allow_subnormal=True,
            width=32,
        ),
    )
)
def test_roundtrip_bit_exact(values):
    dm = DepthMap(values)
    back = read_pfm(write_pfm(dm))
    assert back.values.dtype == np.float32
    # bit-level comparison, not just value equality
    assert np.array_equal(
        back.values.view(np.uint32), dm.values.view(np.uint32)
    )


def test_roundtrip_subnormal():
    tiny = np.array([[1e-41, 0.0]], dtype=np.float32)  # subnormal float32
    back = read_pfm(write_pfm(DepthMap(tiny)))
    assert np.array_equal(back.values.view(np.uint32), tiny.view(np.uint32))
