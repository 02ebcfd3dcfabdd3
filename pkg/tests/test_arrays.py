import numpy as np
import pytest

from gaitdccr.arrays import ArrayFileError, digest_text, dumps_arrays, load_arrays, loads_arrays, save_arrays


def test_round_trip_shapes_and_values(rng):
    arrays = {"a": rng.standard_normal((3, 4)), "b": np.arange(5.0), "c": np.array(2.5)}
    back = loads_arrays(dumps_arrays(arrays))
    assert list(back) == ["a", "b", "c"]
    for k in arrays:
        assert back[k].shape == np.shape(arrays[k])
        assert np.array_equal(back[k], arrays[k])


def test_little_endian_payload():
    data = dumps_arrays({"x": np.array([1.0])})
    assert data.endswith(np.array([1.0], dtype="<f8").tobytes())


def test_save_writes_digest(tmp_path):
    save_arrays(tmp_path / "f.bin", {"x": np.ones((2, 2))})
    assert load_arrays(tmp_path / "f.bin")["x"].sum() == 4
    assert (tmp_path / "f.bin.txt").read_text() == digest_text({"x": np.ones((2, 2))})


@pytest.mark.parametrize("data", [b"", b"NOPE\n", b"GDCRARR1\n1\nx 1 3\n" + b"\0" * 8])
def test_malformed(data):
    with pytest.raises(ArrayFileError):
        loads_arrays(data)
