"""Binary netpbm reader/writer."""

import numpy as np
import pytest

from befd.pnm import ImageU8, PnmParseError, from_array, read_pnm, write_pnm


def test_p5_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    img = from_array(rng.integers(0, 256, (11, 7), dtype=np.uint8))
    path = tmp_path / "gray.pgm"
    write_pnm(img, path)
    back = read_pnm(path)
    assert back.channels == 1
    assert np.array_equal(back.pixels, img.pixels)


def test_p6_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    img = from_array(rng.integers(0, 256, (5, 9, 3), dtype=np.uint8))
    path = tmp_path / "color.ppm"
    write_pnm(img, path)
    back = read_pnm(path)
    assert back.channels == 3
    assert np.array_equal(back.pixels, img.pixels)


def test_comments_and_whitespace_tolerated(tmp_path):
    payload = bytes(range(6))
    raw = b"P5 # format comment\n# full line\n  3\n# mid\n 2 255\n" + payload
    path = tmp_path / "c.pgm"
    path.write_bytes(raw)
    img = read_pnm(path)
    assert img.width == 3 and img.height == 2
    assert np.array_equal(img.pixels, np.arange(6, dtype=np.uint8).reshape(2, 3))


def test_rejects_ascii_and_unknown_magic(tmp_path):
    path = tmp_path / "a.pgm"
    path.write_bytes(b"P2\n2 2\n255\n0 1 2 3\n")
    with pytest.raises(PnmParseError, match="P5"):
        read_pnm(path)
    path.write_bytes(b"XX\n")
    with pytest.raises(PnmParseError):
        read_pnm(path)


def test_rejects_wide_maxval(tmp_path):
    path = tmp_path / "wide.pgm"
    path.write_bytes(b"P5\n2 2\n65535\n" + bytes(8))
    with pytest.raises(PnmParseError, match="255"):
        read_pnm(path)


def test_truncated_payload_reports_offset(tmp_path):
    path = tmp_path / "short.pgm"
    path.write_bytes(b"P5\n4 4\n255\n" + bytes(7))
    with pytest.raises(PnmParseError) as err:
        read_pnm(path)
    assert err.value.offset is not None


def test_from_array_validates():
    with pytest.raises(ValueError):
        from_array(np.zeros((4, 4), dtype=np.float32))
    with pytest.raises(ValueError):
        from_array(np.zeros((4, 4, 2), dtype=np.uint8))


def test_imageu8_shape_fields():
    img = from_array(np.zeros((3, 5), dtype=np.uint8))
    assert (img.height, img.width, img.channels) == (3, 5, 1)
    rgb = from_array(np.zeros((3, 5, 3), dtype=np.uint8))
    assert rgb.channels == 3
