"""Serialization of sample sets, tables and JSON documents.

Numbers are written with 17 significant digits so every float64 round-trips.
The binary sample container is::

    b"LRCS" | uint32 LE header length | UTF-8 JSON header | float64 LE data (row-major)

with the header holding ``shape``, ``theta``, ``seed`` and ``meta``. It is
written byte-for-byte deterministically (no timestamps), unlike ``.npz``.
"""

import csv
import json
import os
import struct
import tempfile

import numpy as np

from .simulators import SampleSet

MAGIC = b"LRCS"
FLOAT_FORMAT = "%.17g"


def fmt(v):
    """Round-trip text form of a scalar."""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return FLOAT_FORMAT % float(v)
    return str(v)


def atomic_write(path, data, mode="w"):
    """Write ``data`` to ``path`` through a temporary file and ``os.replace``."""
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, mode + ("" if "b" in mode else ""),
                       **({} if "b" in mode else {"newline": "", "encoding": "utf-8"})) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path, header, rows):
    import io as _io

    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) for v in r])
    atomic_write(path, buf.getvalue())


def read_csv(path):
    """Return ``(header, float array)``."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float)
    return rows[0], data.reshape(len(rows) - 1, len(rows[0]))


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, (tuple, set)):
        return list(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def dumps(obj):
    return json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n"


def write_json(path, obj):
    atomic_write(path, dumps(obj))


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


# Sample sets ----------------------------------------------------------------

def write_samples_csv(path, ss):
    header = [f"x{j}" for j in range(ss.n_features)]
    write_csv(path, header, ss.data.tolist())


def read_samples_csv(path, theta=(), seed=None):
    _, data = read_csv(path)
    return SampleSet(data, theta, seed)


def samples_to_bytes(ss):
    header = json.dumps({"shape": list(ss.data.shape), "theta": list(ss.theta), "seed": ss.seed,
                         "meta": ss.meta, "dtype": "<f8"}, sort_keys=True,
                        default=_jsonable).encode("utf-8")
    body = np.ascontiguousarray(ss.data, dtype="<f8").tobytes()
    return MAGIC + struct.pack("<I", len(header)) + header + body


def samples_from_bytes(buf):
    if buf[:4] != MAGIC:
        raise ValueError("not a sample container (bad magic)")
    (hlen,) = struct.unpack("<I", buf[4:8])
    header = json.loads(buf[8:8 + hlen].decode("utf-8"))
    shape = tuple(header["shape"])
    body = buf[8 + hlen:]
    if len(body) != 8 * int(np.prod(shape)):
        raise ValueError("truncated sample container")
    data = np.frombuffer(body, dtype="<f8").reshape(shape).astype(float)
    return SampleSet(data, header["theta"], header["seed"], header.get("meta") or {})


def write_samples_bin(path, ss):
    atomic_write(path, samples_to_bytes(ss), mode="wb")


def read_samples_bin(path):
    with open(path, "rb") as fh:
        return samples_from_bytes(fh.read())
