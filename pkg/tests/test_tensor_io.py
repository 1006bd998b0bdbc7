import numpy as np
import pytest

from disc import tensor_io
from disc.errors import ExecutionError


@pytest.mark.parametrize("shape", [(), (0,), (3,), (2, 0, 5), (4, 3)])
def test_roundtrip(tmp_path, shape):
    arr = np.random.default_rng(0).standard_normal(shape).astype(np.float32)
    path = tmp_path / "t.tensor"
    tensor_io.save(path, arr)
    back = tensor_io.load(path)
    assert back.shape == shape and back.dtype == np.float32
    assert np.array_equal(back, arr)


def test_header_is_text_and_data_little_endian():
    data = tensor_io.dumps(np.array([1.0, 2.0], np.float32))
    head, body = data.split(b"\n", 1)
    assert head == b"shape: 2"
    assert body == np.array([1.0, 2.0], "<f4").tobytes()


@pytest.mark.parametrize("data, match", [
    (b"\x00\x01", "must start"),
    (b"shape: a,b\n", "bad tensor shape"),
    (b"shape: -1\n", "bad tensor shape"),
    (b"shape: 2\n\x00\x00\x00\x00", "needs 8 data bytes"),
])
def test_malformed(data, match):
    with pytest.raises(ExecutionError, match=match):
        tensor_io.loads(data)
