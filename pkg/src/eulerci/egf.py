"""EGF1 field container: binary samples plus a UTF-8 key-value sidecar.

Layout: 16-byte header (magic ``EGF1`` + 4-byte version + 8 reserved
zeros), then N, rank code and component count as little-endian uint64,
then the float64 samples little-endian, row-major, components outermost.
The sidecar (same path + ``.meta``) records grid size, rank and free-form
provenance labels, one ``key = value`` per line.
"""

from __future__ import annotations

import os
import struct

import numpy as np

from .errors import FieldError
from .grid import RANK_NCOMP, GridField

MAGIC = b"EGF1"
VERSION = 1
RANK_CODES = {"scalar": 0, "vector": 1, "symmatrix": 2}
RANK_NAMES = {v: k for k, v in RANK_CODES.items()}


def write_egf(path, field, meta=None):
    header = MAGIC + struct.pack("<I", VERSION) + b"\x00" * 8
    body = struct.pack("<QQQ", field.n, RANK_CODES[field.rank], field.ncomp)
    data = np.ascontiguousarray(field.components(), dtype="<f8")
    tmp = str(path) + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(header)
        fh.write(body)
        fh.write(data.tobytes())
    os.replace(tmp, path)
    lines = {"grid_n": field.n, "rank": field.rank, "components": field.ncomp}
    if meta:
        lines.update(meta)
    mtmp = str(path) + ".meta.tmp"
    with open(mtmp, "w", encoding="utf-8") as fh:
        for k in sorted(lines):
            fh.write(f"{k} = {lines[k]}\n")
    os.replace(mtmp, str(path) + ".meta")


def read_egf(path):
    with open(path, "rb") as fh:
        header = fh.read(16)
        if header[:4] != MAGIC:
            raise FieldError(f"{path}: not an EGF1 file")
        version = struct.unpack("<I", header[4:8])[0]
        if version != VERSION:
            raise FieldError(f"{path}: unsupported EGF1 version {version}")
        n, rank_code, ncomp = struct.unpack("<QQQ", fh.read(24))
        rank = RANK_NAMES.get(int(rank_code))
        if rank is None or RANK_NCOMP[rank] != ncomp:
            raise FieldError(f"{path}: bad rank/component header ({rank_code}, {ncomp})")
        data = np.frombuffer(fh.read(int(8 * ncomp * n**3)), dtype="<f8")
    vals = data.reshape((int(ncomp), int(n), int(n), int(n))).astype(float)
    if rank == "scalar":
        vals = vals[0]
    return GridField(vals, rank)


def read_meta(path):
    meta = {}
    with open(str(path) + ".meta", encoding="utf-8") as fh:
        for line in fh:
            if "=" in line:
                k, v = line.split("=", 1)
                meta[k.strip()] = v.strip()
    return meta
