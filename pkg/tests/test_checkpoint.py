import struct

import numpy as np
import pytest

from lsd.checkpoint import MAGIC, from_bytes, load_checkpoint, load_into, save_checkpoint, to_bytes
from lsd.errors import CorruptCheckpointError, ShapeMismatchError
from lsd.model import ModelConfig, Seq2Seq


@pytest.fixture(params=["float32", "float64"])
def model(request):
    return Seq2Seq(ModelConfig(input_dim=3, vocab_size=7, dtype=request.param), seed=2)


class TestRoundTrip:
    def test_save_load_save_identical(self, model, tmp_path):
        save_checkpoint(model, tmp_path / "a.ckpt")
        params = load_checkpoint(tmp_path / "a.ckpt")
        save_checkpoint(params, tmp_path / "b.ckpt")
        assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()

    def test_values_and_dtype_preserved(self, model):
        params = from_bytes(to_bytes(model.params))
        assert list(params.values) == list(model.params.values)
        for k, v in model.params.values.items():
            assert params[k].dtype == v.dtype
            np.testing.assert_array_equal(params[k], v)

    def test_load_into(self, model, tmp_path):
        save_checkpoint(model, tmp_path / "m.ckpt")
        other = Seq2Seq(model.config, seed=99)
        load_into(other, tmp_path / "m.ckpt")
        np.testing.assert_array_equal(other.params.flat(), model.params.flat())

    def test_header_layout(self, model):
        buf = to_bytes(model.params)
        assert buf[:4] == MAGIC
        version, bits, count = struct.unpack_from("<III", buf, 4)
        assert version == 1
        assert bits == model.params.dtype.itemsize * 8
        assert count == len(model.params)


class TestErrors:
    def test_shape_mismatch_names_tensor(self, tmp_path):
        save_checkpoint(Seq2Seq(ModelConfig(input_dim=3, vocab_size=7)), tmp_path / "m.ckpt")
        other = Seq2Seq(ModelConfig(input_dim=3, vocab_size=7, out_hidden=10))
        with pytest.raises(ShapeMismatchError) as info:
            load_into(other, tmp_path / "m.ckpt")
        assert info.value.name == "out.W1"
        assert "out.W1" in str(info.value)

    def test_bad_magic(self, model):
        with pytest.raises(CorruptCheckpointError, match="magic"):
            from_bytes(b"XXXX" + to_bytes(model.params)[4:])

    def test_truncated(self, model):
        buf = to_bytes(model.params)
        with pytest.raises(CorruptCheckpointError):
            from_bytes(buf[:-8])
        with pytest.raises(CorruptCheckpointError, match="truncated"):
            from_bytes(buf[:30])

    def test_trailing_bytes(self, model):
        with pytest.raises(CorruptCheckpointError, match="data section"):
            from_bytes(to_bytes(model.params) + b"\0")

    def test_bad_precision_flag(self, model):
        buf = bytearray(to_bytes(model.params))
        struct.pack_into("<I", buf, 8, 16)
        with pytest.raises(CorruptCheckpointError, match="precision"):
            from_bytes(bytes(buf))

    def test_bad_version(self, model):
        buf = bytearray(to_bytes(model.params))
        struct.pack_into("<I", buf, 4, 9)
        with pytest.raises(CorruptCheckpointError, match="version"):
            from_bytes(bytes(buf))

    def test_missing_file(self, tmp_path):
        with pytest.raises(CorruptCheckpointError, match="cannot read"):
            load_checkpoint(tmp_path / "nope.ckpt")
