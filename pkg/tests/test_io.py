import json
import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lrcal import io
from lrcal.simulators import SampleSet


def _ss(rows=7, cols=3, seed=0):
    data = np.random.default_rng(seed).normal(size=(rows, cols)) * 10.0 ** np.arange(cols)
    return SampleSet(data, (1.0, -1.0), 42, {"note": "x"})


class TestFormatting:
    @settings(max_examples=200, deadline=None)
    @given(st.floats(allow_nan=False, allow_infinity=False))
    def test_float_round_trip(self, v):
        assert float(io.fmt(v)) == v

    def test_scalar_kinds(self):
        assert io.fmt(True) == "true"
        assert io.fmt(np.int64(3)) == "3"
        assert io.fmt(0.1) == "0.10000000000000001"
        assert io.fmt("a") == "a"


class TestCsv:
    def test_round_trip(self, tmp_path):
        rows = np.random.default_rng(1).random((5, 3))
        p = tmp_path / "t.csv"
        io.write_csv(p, ["a", "b", "c"], rows.tolist())
        header, back = io.read_csv(p)
        assert header == ["a", "b", "c"]
        assert np.array_equal(back, rows)

    def test_header_only(self, tmp_path):
        p = tmp_path / "e.csv"
        io.write_csv(p, ["a", "b"], [])
        header, back = io.read_csv(p)
        assert back.shape == (0, 2)

    def test_empty_file_rejected(self, tmp_path):
        p = tmp_path / "z.csv"
        p.write_text("")
        with pytest.raises(ValueError):
            io.read_csv(p)

    def test_samples_csv(self, tmp_path):
        ss = _ss()
        io.write_samples_csv(tmp_path / "s.csv", ss)
        assert (tmp_path / "s.csv").read_text().splitlines()[0] == "x0,x1,x2"
        assert np.array_equal(io.read_samples_csv(tmp_path / "s.csv").data, ss.data)


class TestBinary:
    def test_round_trip(self, tmp_path):
        ss = _ss()
        io.write_samples_bin(tmp_path / "s.bin", ss)
        back = io.read_samples_bin(tmp_path / "s.bin")
        assert np.array_equal(back.data, ss.data)
        assert tuple(back.theta) == ss.theta and back.seed == 42 and back.meta == {"note": "x"}

    def test_deterministic_bytes(self):
        assert io.samples_to_bytes(_ss()) == io.samples_to_bytes(_ss())

    def test_layout(self):
        buf = io.samples_to_bytes(_ss(rows=2, cols=1))
        assert buf[:4] == b"LRCS"
        hlen = int.from_bytes(buf[4:8], "little")
        header = json.loads(buf[8:8 + hlen])
        assert header["shape"] == [2, 1] and header["dtype"] == "<f8"
        assert len(buf) == 8 + hlen + 16

    def test_corrupt_input(self):
        buf = io.samples_to_bytes(_ss())
        with pytest.raises(ValueError, match="magic"):
            io.samples_from_bytes(b"XXXX" + buf[4:])
        with pytest.raises(ValueError, match="truncated"):
            io.samples_from_bytes(buf[:-3])


class TestJson:
    def test_numpy_values_and_sorted_keys(self, tmp_path):
        io.write_json(tmp_path / "a.json", {"b": np.float64(0.5), "a": np.arange(3), "c": (1, 2)})
        text = (tmp_path / "a.json").read_text()
        assert text.index('"a"') < text.index('"b"')
        assert io.read_json(tmp_path / "a.json") == {"a": [0, 1, 2], "b": 0.5, "c": [1, 2]}

    def test_unserializable(self):
        with pytest.raises(TypeError):
            io.dumps({"x": object()})


class TestAtomicWrite:
    def test_failure_leaves_no_partial_file(self, tmp_path):
        target = tmp_path / "out.txt"
        target.write_text("old")
        with pytest.raises(TypeError):
            io.atomic_write(target, 123)  # not a str
        assert target.read_text() == "old"
        assert os.listdir(tmp_path) == ["out.txt"]

    def test_creates_parent_dirs(self, tmp_path):
        io.atomic_write(tmp_path / "a" / "b" / "c.bin", b"\x00\x01", mode="wb")
        assert (tmp_path / "a" / "b" / "c.bin").read_bytes() == b"\x00\x01"
