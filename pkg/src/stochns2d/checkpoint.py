"""Field checkpoints: half-lattice records in CSV or little-endian binary.

Only modes with ``kx > 0`` or ``kx == 0, ky > 0`` are written; the other half
follows from hermitian symmetry on load.  The binary form round-trips
bit-exactly; the CSV form uses ``repr`` floats, which also round-trip.
"""

from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np

from .lattice import FieldError, Truncation, VorticityField, lattice_grids

FORMAT_VERSION = 1
MAGIC = b"SNS2DFLD"
_HEADER = np.dtype([("magic", "S8"), ("version", "<u4"), ("k_max", "<u4"), ("count", "<u8")])
_RECORD = np.dtype([("kx", "<i4"), ("ky", "<i4"), ("re", "<f8"), ("im", "<f8")])


def half_lattice_records(field: VorticityField) -> np.ndarray:
    g = field.truncation.grids
    K = field.k_max
    idx = np.argwhere(g.half)
    rec = np.empty(len(idx), dtype=_RECORD)
    rec["kx"] = idx[:, 0] - K
    rec["ky"] = idx[:, 1] - K
    vals = field.amplitudes[g.half]
    rec["re"] = vals.real
    rec["im"] = vals.imag
    return rec


def field_from_records(k_max: int, rec: np.ndarray) -> VorticityField:
    g = lattice_grids(k_max)
    a = np.zeros((2 * k_max + 1,) * 2, dtype=np.complex128)
    ix = rec["kx"].astype(int) + k_max
    iy = rec["ky"].astype(int) + k_max
    if np.any((ix < 0) | (iy < 0) | (ix > 2 * k_max) | (iy > 2 * k_max)) or not np.all(g.half[ix, iy]):
        raise FieldError("checkpoint contains records outside the half lattice")
    vals = rec["re"] + 1j * rec["im"]
    a[ix, iy] = vals
    a[2 * k_max - ix, 2 * k_max - iy] = np.conj(vals)
    return VorticityField(Truncation(k_max), a)


def to_bytes(field: VorticityField) -> bytes:
    rec = half_lattice_records(field)
    head = np.array([(MAGIC, FORMAT_VERSION, field.k_max, len(rec))], dtype=_HEADER)
    return head.tobytes() + rec.tobytes()


def from_bytes(blob: bytes) -> VorticityField:
    if len(blob) < _HEADER.itemsize:
        raise FieldError("truncated checkpoint header")
    head = np.frombuffer(blob, dtype=_HEADER, count=1)[0]
    if head["magic"] != MAGIC:
        raise FieldError("not a field checkpoint")
    if head["version"] != FORMAT_VERSION:
        raise FieldError(f"unsupported checkpoint version {head['version']}")
    count = int(head["count"])
    body = blob[_HEADER.itemsize:]
    if len(body) != count * _RECORD.itemsize:
        raise FieldError("checkpoint body length does not match header")
    rec = np.frombuffer(body, dtype=_RECORD, count=count)
    return field_from_records(int(head["k_max"]), rec)


def to_csv(field: VorticityField) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["format_version", FORMAT_VERSION])
    w.writerow(["k_max", field.k_max])
    w.writerow(["kx", "ky", "re", "im"])
    for r in half_lattice_records(field):
        w.writerow([int(r["kx"]), int(r["ky"]), repr(float(r["re"])), repr(float(r["im"]))])
    return buf.getvalue()


def from_csv(text: str) -> VorticityField:
    rows = list(csv.reader(io.StringIO(text)))
    if len(rows) < 3 or rows[0][0] != "format_version" or rows[1][0] != "k_max":
        raise FieldError("malformed checkpoint CSV header")
    if int(rows[0][1]) != FORMAT_VERSION:
        raise FieldError(f"unsupported checkpoint version {rows[0][1]}")
    k_max = int(rows[1][1])
    body = [r for r in rows[3:] if r]
    rec = np.empty(len(body), dtype=_RECORD)
    for i, (kx, ky, re, im) in enumerate(body):
        rec[i] = (int(kx), int(ky), float(re), float(im))
    return field_from_records(k_max, rec)


def save(field: VorticityField, path: str | Path) -> Path:
    """Write a checkpoint; the suffix picks the format (``.csv`` or binary)."""
    path = Path(path)
    if path.suffix == ".csv":
        path.write_text(to_csv(field))
    else:
        path.write_bytes(to_bytes(field))
    return path


def load(path: str | Path) -> VorticityField:
    path = Path(path)
    if path.suffix == ".csv":
        return from_csv(path.read_text())
    return from_bytes(path.read_bytes())
