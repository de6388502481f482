"""Binary field snapshots, history CSV, and atomic file writes.

Snapshot layout: magic bytes ``JFLW``, version u16, N u32, component count
u16, then little-endian float64 values row-major (x1, y1, x2, y2).  Scalar
fields store one component; Hermitian form fields store four in the order
h11, h22, h12_re, h12_im.
"""

import json
import os
import struct
import tempfile

import numpy as np

from .torus import Grid, HermitianFormField, ScalarField

MAGIC = b"JFLW"
VERSION = 1


def _write_atomic(path, write_fn, mode="wb"):
    """Write via a temp file in the target directory, then rename."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, mode) as fh:
            write_fn(fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_header(fh, n, ncomp):
    fh.write(MAGIC)
    fh.write(struct.pack("<HIH", VERSION, n, ncomp))


def _read_header(fh, path):
    head = fh.read(4 + struct.calcsize("<HIH"))
    if len(head) < 12 or head[:4] != MAGIC:
        raise ValueError(f"{path}: not a JFLW snapshot")
    version, n, ncomp = struct.unpack("<HIH", head[4:])
    if version != VERSION:
        raise ValueError(f"{path}: unsupported snapshot version {version}")
    return n, ncomp


def write_scalar(path, field):
    def body(fh):
        _write_header(fh, field.grid.n, 1)
        fh.write(np.ascontiguousarray(field.values, dtype="<f8").tobytes())

    _write_atomic(path, body)


def write_hermitian(path, form):
    def body(fh):
        _write_header(fh, form.grid.n, 4)
        for comp in (form.h11, form.h22, form.h12_re, form.h12_im):
            fh.write(np.ascontiguousarray(comp, dtype="<f8").tobytes())

    _write_atomic(path, body)


def read_field(path):
    """Read a snapshot; returns a ScalarField or HermitianFormField.

    The format carries no grid offsets, so the result lives on the default
    (offset-zero) grid.
    """
    with open(path, "rb") as fh:
        n, ncomp = _read_header(fh, path)
        grid = Grid(n)
        count = n ** 4
        comps = []
        for _ in range(ncomp):
            buf = fh.read(8 * count)
            if len(buf) != 8 * count:
                raise ValueError(f"{path}: truncated snapshot")
            comps.append(np.frombuffer(buf, dtype="<f8").reshape(grid.shape).copy())
    if ncomp == 1:
        return ScalarField(grid, comps[0])
    if ncomp == 4:
        return HermitianFormField(grid, *comps)
    raise ValueError(f"{path}: unsupported component count {ncomp}")


HISTORY_COLUMNS = ("t", "sup_phi", "sup_phidot", "J", "I", "margin", "residual")


def write_history_csv(path, rows):
    def body(fh):
        fh.write(",".join(HISTORY_COLUMNS) + "\n")
        for row in rows:
            fh.write(",".join(f"{v:.17g}" for v in row.csv_values()) + "\n")

    _write_atomic(path, body, mode="w")


def write_series_csv(path, header, table):
    def body(fh):
        fh.write(",".join(header) + "\n")
        for row in table:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")

    _write_atomic(path, body, mode="w")


def write_json(path, payload):
    def body(fh):
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")

    _write_atomic(path, body, mode="w")


def read_json(path):
    with open(path) as fh:
        return json.load(fh)
