"""Artifact writers: 17-digit JSON and CSV, raw complex arrays with sidecars, atomic file replacement."""

from __future__ import annotations

import hashlib
import json
import math
import os
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

FLOAT_FORMAT = ".17g"


def format_float(x: float) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, FLOAT_FORMAT)


def _to_plain(obj):
    """Numpy scalars and arrays to Python containers; complex numbers to ``[re, im]``."""
    if isinstance(obj, dict):
        return {str(k): _to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _to_plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    if obj is None or isinstance(obj, str):
        return obj
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _emit(obj, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(k)}: {_emit(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list)) for v in obj):
            return "[" + ", ".join(_emit(v, indent, level + 1) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + _emit(v, indent, level + 1) for v in obj) + "\n" + end + "]"
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, float):
        # non-finite values are not JSON numbers; they travel as strings
        return format_float(obj) if math.isfinite(obj) else json.dumps(format_float(obj))
    return json.dumps(obj)


def dumps_json(obj, indent: int = 1) -> str:
    """Deterministic JSON text with every float written to 17 significant digits."""
    return _emit(_to_plain(obj), indent, 0) + "\n"


def atomic_write(path: str | Path, data: bytes | str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode("utf-8")
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_json(path: str | Path, obj) -> Path:
    return atomic_write(path, dumps_json(obj))


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return format_float(v)
    if v is None:
        return ""
    return str(v)


def csv_text(columns: Sequence[str], rows: Iterable[Sequence], meta: dict | None = None) -> str:
    """UTF-8 comma-separated text with ``# key: value`` metadata lines before the header."""
    lines = [f"# {k}: {_cell(v)}" for k, v in (meta or {}).items()]
    lines.append(",".join(columns))
    for row in rows:
        if len(row) != len(columns):
            raise ValueError("row length does not match the header")
        lines.append(",".join(_cell(v) for v in row))
    return "\n".join(lines) + "\n"


def write_csv(path: str | Path, columns: Sequence[str], rows: Iterable[Sequence], meta: dict | None = None) -> Path:
    return atomic_write(path, csv_text(columns, rows, meta))


def read_csv(path: str | Path) -> tuple[dict, list[str], list[list[str]]]:
    meta, header, rows = {}, None, []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.startswith("#"):
            key, _, val = line[1:].strip().partition(": ")
            meta[key] = val
        elif header is None:
            header = line.split(",")
        elif line:
            rows.append(line.split(","))
    return meta, header or [], rows


def write_array(path: str | Path, array: np.ndarray) -> tuple[Path, Path]:
    """Raw little-endian complex128 dump plus a JSON sidecar with shape, dtype and digest."""
    data = np.ascontiguousarray(np.asarray(array, dtype="<c16")).tobytes()
    path = atomic_write(path, data)
    side = write_json(str(path) + ".json", {
        "dtype": "complex128", "byteorder": "little", "shape": list(np.shape(array)),
        "sha256": hashlib.sha256(data).hexdigest(),
    })
    return path, side


def read_array(path: str | Path) -> np.ndarray:
    side = json.loads(Path(str(path) + ".json").read_text())
    data = Path(path).read_bytes()
    if hashlib.sha256(data).hexdigest() != side["sha256"]:
        raise ValueError(f"digest mismatch for {path}")
    return np.frombuffer(data, dtype="<c16").reshape(side["shape"])


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def first_divergence(expected: bytes, actual: bytes) -> dict | None:
    """Byte offset, line number and the two differing lines of the first mismatch, or ``None``."""
    if expected == actual:
        return None
    n = min(len(expected), len(actual))
    offset = next((i for i in range(n) if expected[i] != actual[i]), n)
    line_no = expected[:offset].count(b"\n") + 1
    exp_lines = expected.split(b"\n")
    act_lines = actual.split(b"\n")

    def pick(lines):
        return lines[line_no - 1].decode("utf-8", "replace") if line_no - 1 < len(lines) else ""

    return {"offset": offset, "line": line_no, "expected": pick(exp_lines), "actual": pick(act_lines)}
