"""Artifact encodings: canonical JSON, CSV tables and trajectories, and the binary cylinder format.

Binary layout (little endian):

    magic  b"LFCY"
    uint16 version (currently 1)
    uint16 reserved (0)
    uint32 header length H
    H bytes of UTF-8 JSON header (sorted keys): shape, h_s, fields, meta
    float64 s[N_s]
    float64 field[N_s, N_t, m] for every name in header["fields"], in order
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import struct

import numpy as np

from ..errors import ConfigInvalid

MAGIC = b"LFCY"
VERSION = 1


def plain(obj):
    """Recursively convert numpy scalars/arrays and non-finite floats to JSON-safe values."""
    if isinstance(obj, dict):
        return {str(k): plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if np.isfinite(x) else None
    return obj


def canonical_json(obj) -> bytes:
    return (json.dumps(plain(obj), sort_keys=True, indent=2, allow_nan=False) + "\n").encode()


def digest(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def table_csv(rows: list, columns: list) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_cell(row.get(c, "")) for c in columns])
    return buf.getvalue().encode()


def _cell(x):
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return repr(x) if np.isfinite(x) else ""
    if isinstance(x, (list, tuple)):
        return " ".join(str(_cell(v)) for v in x)
    return x


def cylinder_csv(s, coords, extra=None) -> bytes:
    """Rows (s, t, x_1..x_m[, v_1..v_m]) for every grid node."""
    coords = np.asarray(coords)
    ns, n, m = coords.shape
    cols = ["s", "t"] + [f"x{a + 1}" for a in range(m)]
    blocks = [np.repeat(np.asarray(s), n)[:, None], np.tile(np.arange(n) / n, ns)[:, None], coords.reshape(-1, m)]
    if extra is not None:
        cols += [f"v{a + 1}" for a in range(m)]
        blocks.append(np.asarray(extra).reshape(-1, m))
    data = np.hstack(blocks)
    row = ",".join(["%.17g"] * data.shape[1])
    lines = [",".join(cols)] + [row % tuple(r) for r in data.tolist()]
    return ("\n".join(lines) + "\n").encode()


def write_cylinder_binary(s, fields: dict, h_s: float, meta=None) -> bytes:
    names = list(fields)
    shape = list(np.shape(fields[names[0]]))
    for k in names:
        if list(np.shape(fields[k])) != shape:
            raise ValueError("all fields must share one grid")
    header = json.dumps(plain({"shape": shape, "h_s": h_s, "fields": names, "meta": meta or {}}),
                        sort_keys=True).encode()
    parts = [MAGIC, struct.pack("<HHI", VERSION, 0, len(header)), header,
             np.ascontiguousarray(s, dtype="<f8").tobytes()]
    parts += [np.ascontiguousarray(fields[k], dtype="<f8").tobytes() for k in names]
    return b"".join(parts)


def read_cylinder_binary(data: bytes) -> dict:
    if data[:4] != MAGIC:
        raise ConfigInvalid("not a cylinder file")
    version, _, hlen = struct.unpack("<HHI", data[4:12])
    if version != VERSION:
        raise ConfigInvalid(f"unsupported cylinder format version {version}")
    header = json.loads(data[12:12 + hlen].decode())
    shape = tuple(header["shape"])
    off = 12 + hlen
    ns = shape[0]
    s = np.frombuffer(data, dtype="<f8", count=ns, offset=off).copy()
    off += 8 * ns
    size = int(np.prod(shape))
    fields = {}
    for name in header["fields"]:
        fields[name] = np.frombuffer(data, dtype="<f8", count=size, offset=off).reshape(shape).copy()
        off += 8 * size
    if off != len(data):
        raise ConfigInvalid("trailing bytes in cylinder file")
    return {"s": s, "fields": fields, "h_s": header["h_s"], "meta": header["meta"]}
