import json

import numpy as np
import pytest

from thermolab.io import (
    atomic_write,
    csv_text,
    dumps_json,
    first_divergence,
    format_float,
    read_array,
    read_csv,
    sha256_file,
    write_array,
    write_csv,
)


def test_floats_round_trip_at_seventeen_digits():
    rng = np.random.default_rng(0)
    for x in np.concatenate([rng.normal(size=200), 10.0 ** rng.uniform(-300, 300, size=200)]):
        assert float(format_float(x)) == x
    assert format_float(0.1) == "0.10000000000000001"
    assert format_float(float("nan")) == "nan"
    assert format_float(-float("inf")) == "-inf"


def test_dumps_json_is_deterministic_and_parseable():
    obj = {"a": np.float64(1 / 3), "b": [1, 2.5, np.int64(3)], "c": {"z": 1 + 2j, "ok": np.bool_(True)},
           "d": np.arange(3.0), "e": None, "f": float("inf")}
    text = dumps_json(obj)
    assert text == dumps_json(obj)
    back = json.loads(text)
    assert back["a"] == 1 / 3 and back["c"]["z"] == [1.0, 2.0] and back["c"]["ok"] is True
    assert back["d"] == [0.0, 1.0, 2.0] and back["e"] is None and back["f"] == "inf"
    with pytest.raises(TypeError):
        dumps_json({"x": object()})


def test_csv_round_trip(tmp_path):
    path = write_csv(tmp_path / "t.csv", ["x", "y", "ok"], [[0.1, 2, True], [1e-20, None, False]], {"seed": 7})
    meta, header, rows = read_csv(path)
    assert meta == {"seed": "7"}
    assert header == ["x", "y", "ok"]
    assert rows == [["0.10000000000000001", "2", "true"], ["9.9999999999999995e-21", "", "false"]]
    with pytest.raises(ValueError):
        csv_text(["a"], [[1, 2]])


def test_array_round_trip(tmp_path):
    a = np.arange(6).reshape(2, 3) * (1 + 0.5j)
    path, side = write_array(tmp_path / "a.bin", a)
    np.testing.assert_array_equal(read_array(path), a)
    assert json.loads(side.read_text())["shape"] == [2, 3]
    path.write_bytes(b"\0" * len(path.read_bytes()))
    with pytest.raises(ValueError):
        read_array(path)


def test_atomic_write_replaces_and_leaves_no_temporaries(tmp_path):
    p = atomic_write(tmp_path / "sub" / "f.txt", "one")
    atomic_write(p, b"two")
    assert p.read_text() == "two"
    assert [q.name for q in p.parent.iterdir()] == ["f.txt"]
    assert len(sha256_file(p)) == 64


def test_first_divergence():
    assert first_divergence(b"abc\n", b"abc\n") is None
    div = first_divergence(b"a\nbc\nd", b"a\nbx\nd")
    assert div == {"offset": 3, "line": 2, "expected": "bc", "actual": "bx"}
    assert first_divergence(b"ab", b"abc")["offset"] == 2
