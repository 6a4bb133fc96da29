"""Float raster container and visualization scaling."""

import numpy as np
import pytest

from befd.rasters import read_float_raster, to_u8_visualization, write_float_raster


def test_round_trip_exact(tmp_path):
    rng = np.random.default_rng(0)
    field = rng.standard_normal((13, 7)).astype(np.float32)
    path = tmp_path / "field.bin"
    write_float_raster(field, path)
    back = read_float_raster(path)
    assert back.dtype == np.float32
    assert np.array_equal(back, field)


def test_float64_input_is_stored_as_f32(tmp_path):
    field = np.linspace(0, 1, 12, dtype=np.float64).reshape(3, 4)
    path = tmp_path / "f.bin"
    write_float_raster(field, path)
    assert np.array_equal(read_float_raster(path), field.astype(np.float32))


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "x.bin"
    write_float_raster(np.zeros((2, 2), dtype=np.float32), path)
    blob = bytearray(path.read_bytes())
    blob[0] ^= 0xFF
    path.write_bytes(bytes(blob))
    with pytest.raises(ValueError):
        read_float_raster(path)


def test_truncation_rejected(tmp_path):
    path = tmp_path / "t.bin"
    write_float_raster(np.ones((4, 4), dtype=np.float32), path)
    blob = path.read_bytes()
    path.write_bytes(blob[:-5])
    with pytest.raises(ValueError):
        read_float_raster(path)


def test_visualization_minmax_scaling():
    field = np.array([[0.0, 0.5, 1.0], [0.25, 0.75, 1.0]])
    vis = to_u8_visualization(field)
    assert vis.dtype == np.uint8
    assert vis[0, 0] == 0 and vis[0, 2] == 255
    assert vis[0, 1] == 128  # floor(0.5·255 + 0.5)


def test_visualization_constant_field():
    vis = to_u8_visualization(np.full((3, 3), 7.0))
    assert np.all(vis == 0)
