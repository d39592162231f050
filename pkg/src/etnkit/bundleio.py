"""Bundle container: logits + features (+labels) in a small binary format.

Layout, all little-endian: magic "ETNB", version u32 (currently 1),
array_count u32, then per array: name_len u16, name UTF-8, dtype u8
(0 = float32, 1 = int64), rank u8, dims as rank u64 values, payload
row-major.  "logits" [N, C] and "features" [N, H] are required float32;
"labels" [N] is optional int64.  The reader is strict: unknown names,
duplicate arrays, wrong dtypes, mismatched leading dimensions, unknown
versions, and trailing bytes are all rejected.

A CSV reader (header f0..f{H-1}, z0..z{C-1}[, label]) exists so test
fixtures can be written by hand.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass

import numpy as np

from .errors import DataError, FormatError

_MAGIC = b"ETNB"
_VERSION = 1
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<i8")}
_EXPECTED = {"logits": (0, 2), "features": (0, 2), "labels": (1, 1)}


@dataclass(frozen=True)
class Bundle:
    """One dataset slice: per-row features and logits, labels when known.

    Raw-data bundles (before any classifier exists) carry the input
    coordinates as "features" and an all-zero logits block as a
    placeholder; exporting through a trained model fills both for real.
    """

    features: np.ndarray
    logits: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        f = self.features
        z = self.logits
        if f.ndim != 2 or z.ndim != 2:
            raise DataError("features and logits must be 2-D")
        if f.shape[0] != z.shape[0]:
            raise DataError(
                f"row mismatch: {f.shape[0]} features vs {z.shape[0]} logits")
        if self.labels is not None:
            y = self.labels
            if y.ndim != 1 or y.shape[0] != f.shape[0]:
                raise DataError("labels must be 1-D with one entry per row")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def num_classes(self) -> int:
        return self.logits.shape[1]

    @property
    def has_labels(self) -> bool:
        return self.labels is not None

    def require_labels(self) -> np.ndarray:
        if self.labels is None:
            raise DataError("bundle has no labels")
        return self.labels


def make_bundle(features, logits, labels=None) -> Bundle:
    y = None if labels is None else np.asarray(labels, dtype=np.int64)
    return Bundle(np.asarray(features, dtype=np.float32),
                  np.asarray(logits, dtype=np.float32), y)


def raw_bundle(points, labels=None, num_classes: int = 0) -> Bundle:
    """Bundle for raw inputs: zero logits placeholder of the given width."""
    points = np.asarray(points, dtype=np.float32)
    return make_bundle(points, np.zeros((points.shape[0], num_classes),
                                        dtype=np.float32), labels)


def write_bundle(path, bundle: Bundle) -> None:
    arrays = [("features", bundle.features.astype("<f4", copy=False)),
              ("logits", bundle.logits.astype("<f4", copy=False))]
    if bundle.labels is not None:
        arrays.append(("labels", bundle.labels.astype("<i8", copy=False)))
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", _VERSION, len(arrays)))
        for name, arr in arrays:
            enc = name.encode("utf-8")
            fh.write(struct.pack("<H", len(enc)))
            fh.write(enc)
            code = 0 if arr.dtype == np.dtype("<f4") else 1
            fh.write(struct.pack("<BB", code, arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            fh.write(np.ascontiguousarray(arr).tobytes())


def _need(buf: bytes, offset: int, count: int, what: str) -> None:
    if offset + count > len(buf):
        raise FormatError("truncated", f"bundle ends inside {what}")


def read_bundle(path) -> Bundle:
    with open(path, "rb") as fh:
        buf = fh.read()
    _need(buf, 0, 12, "header")
    if buf[:4] != _MAGIC:
        raise FormatError("magic", "not an ETNB bundle")
    version, count = struct.unpack_from("<II", buf, 4)
    if version != _VERSION:
        raise FormatError("version", f"unsupported bundle version {version}")
    offset = 12
    arrays: dict[str, np.ndarray] = {}
    for _ in range(count):
        _need(buf, offset, 2, "array name length")
        (name_len,) = struct.unpack_from("<H", buf, offset)
        offset += 2
        _need(buf, offset, name_len, "array name")
        name = buf[offset:offset + name_len].decode("utf-8")
        offset += name_len
        _need(buf, offset, 2, "array descriptor")
        code, rank = buf[offset], buf[offset + 1]
        offset += 2
        if name not in _EXPECTED:
            raise FormatError("schema", f"unknown array name {name!r}")
        if name in arrays:
            raise FormatError("schema", f"duplicate array {name!r}")
        want_code, want_rank = _EXPECTED[name]
        if code not in _DTYPES:
            raise FormatError("dtype", f"unknown dtype code {code}")
        if code != want_code:
            raise FormatError("dtype", f"array {name!r} has dtype code {code}")
        if rank != want_rank:
            raise FormatError("schema", f"array {name!r} has rank {rank}")
        _need(buf, offset, 8 * rank, "array dims")
        dims = struct.unpack_from(f"<{rank}Q", buf, offset)
        offset += 8 * rank
        dtype = _DTYPES[code]
        size = int(np.prod(dims, dtype=np.int64)) if rank else 1
        nbytes = size * dtype.itemsize
        _need(buf, offset, nbytes, f"payload of {name!r}")
        arr = np.frombuffer(buf[offset:offset + nbytes], dtype=dtype)
        arrays[name] = arr.reshape(dims).copy()
        offset += nbytes
    if offset != len(buf):
        raise FormatError("trailing", f"{len(buf) - offset} trailing bytes")
    for required in ("features", "logits"):
        if required not in arrays:
            raise FormatError("schema", f"missing required array {required!r}")
    return Bundle(arrays["features"], arrays["logits"], arrays.get("labels"))


def read_csv_bundle(path) -> Bundle:
    """Hand-written fixture reader; columns f0..f{H-1}, z0..z{C-1}[, label]."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty csv")
    header = [h.strip() for h in rows[0]]
    n_f = sum(1 for h in header if h.startswith("f"))
    n_z = sum(1 for h in header if h.startswith("z"))
    has_label = header[-1] == "label"
    expect = [f"f{i}" for i in range(n_f)] + [f"z{i}" for i in range(n_z)]
    if has_label:
        expect.append("label")
    if header != expect or n_f == 0 or n_z == 0:
        raise DataError(f"{path}: header must be f0..f{{H-1}},z0..z{{C-1}}[,label]")
    feats, logits, labels = [], [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise DataError(f"{path}:{lineno}: expected {len(header)} fields")
        try:
            vals = [float(v) for v in row[:n_f + n_z]]
            if has_label:
                labels.append(int(row[-1]))
        except ValueError:
            raise DataError(f"{path}:{lineno}: non-numeric field") from None
        feats.append(vals[:n_f])
        logits.append(vals[n_f:])
    return make_bundle(np.array(feats, dtype=np.float32).reshape(-1, n_f),
                       np.array(logits, dtype=np.float32).reshape(-1, n_z),
                       np.array(labels, dtype=np.int64) if has_label else None)
