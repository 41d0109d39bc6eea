import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from deltaicm.errors import FormatError
from deltaicm.pgm import encode_pgm, parse_pgm, read_mask, read_pgm, write_pgm


@given(arrays(np.uint8, st.tuples(st.integers(1, 12), st.integers(1, 12))))
def test_bytes_round_trip(raw):
    np.testing.assert_array_equal(parse_pgm(encode_pgm(raw)), raw)


def test_file_round_trip_and_scaling(tmp_path):
    x = np.array([[0.0, 1.0, 0.5], [0.2, 0.8, 1 / 255]])
    p = tmp_path / "a.pgm"
    write_pgm(p, x)
    assert p.read_bytes()[:11] == b"P5\n3 2\n255\n"
    back = read_pgm(p)
    np.testing.assert_array_equal(np.round(back * 255), [[0, 255, 128], [51, 204, 1]])


def test_header_comments_and_whitespace():
    data = b"P5 # comment\n2\t1\r\n# another\n255\n\x07\x80"
    np.testing.assert_array_equal(parse_pgm(data), [[7, 128]])


def test_mask_threshold(tmp_path):
    p = tmp_path / "m.pgm"
    p.write_bytes(b"P5\n4 1\n255\n" + bytes([0, 127, 128, 255]))
    np.testing.assert_array_equal(read_mask(p), [[0, 0, 1, 1]])


@pytest.mark.parametrize("data", [
    b"P2\n1 1\n255\n\x00",
    b"P5\n1 1\n65535\n\x00\x00",
    b"P5\n2 2\n255\n\x00",
    b"P5\n0 1\n255\n",
    b"P5\nx 1\n255\n\x00",
    b"P5\n1",
])
def test_malformed(data):
    with pytest.raises(FormatError):
        parse_pgm(data)
