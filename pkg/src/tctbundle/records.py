"""Fixed-width little-endian binary record files for bundle datasets.

Layout: a 32-byte header followed by packed records.

    magic    4s   b"TCTB"
    version  u1
    kind     u1   0 = bundles, 1 = estimates
    M        u1   measurement rows
    K        u1   paths
    flags    u4   bit 0: records are in sinogram order
    n        u8   record count
    per_row  u4   bundles per view (ordered files), else 0
    pad      8x

Bundle records hold x_true, counts, n0, x_svd, bundle_index, split.
Estimate records hold x_hat, iterations, bundle_index, split.
"""
from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np

MAGIC = b"TCTB"
VERSION = 1
HEADER = struct.Struct("<4sBBBBIQI8x")
KIND_BUNDLES = 0
KIND_ESTIMATES = 1
FLAG_ORDERED = 1
SPLITS = ("train", "val", "test")
SPLIT_CODE = {s: i for i, s in enumerate(SPLITS)}


class DatasetError(Exception):
    pass


class DatasetHeaderError(DatasetError):
    pass


class DatasetVersionError(DatasetError):
    pass


class DatasetTruncatedError(DatasetError):
    def __init__(self, index: int, path=""):
        super().__init__(f"{path}: truncated at record {index}")
        self.index = index


def bundle_dtype(m: int = 5, k: int = 3) -> np.dtype:
    return np.dtype([
        ("x_true", "<f8", (k,)),
        ("counts", "<u4", (m,)),
        ("n0", "<f8"),
        ("x_svd", "<f8", (k,)),
        ("bundle_index", "<u8"),
        ("split", "u1"),
    ])


def estimate_dtype(k: int = 3) -> np.dtype:
    return np.dtype([
        ("x_hat", "<f8", (k,)),
        ("iterations", "<u4"),
        ("bundle_index", "<u8"),
        ("split", "u1"),
    ])


@dataclass
class Header:
    kind: int = KIND_BUNDLES
    m: int = 5
    k: int = 3
    flags: int = 0
    n_records: int = 0
    per_row: int = 0
    version: int = VERSION

    @property
    def ordered(self) -> bool:
        return bool(self.flags & FLAG_ORDERED)

    def dtype(self) -> np.dtype:
        if self.kind == KIND_BUNDLES:
            return bundle_dtype(self.m, self.k)
        if self.kind == KIND_ESTIMATES:
            return estimate_dtype(self.k)
        raise DatasetHeaderError(f"unknown record kind {self.kind}")

    def pack(self) -> bytes:
        return HEADER.pack(MAGIC, self.version, self.kind, self.m, self.k,
                           self.flags, self.n_records, self.per_row)

    @classmethod
    def unpack(cls, raw: bytes, path="") -> "Header":
        if len(raw) < HEADER.size:
            raise DatasetHeaderError(f"{path}: header too short ({len(raw)} bytes)")
        magic, ver, kind, m, k, flags, n, per_row = HEADER.unpack(raw[: HEADER.size])
        if magic != MAGIC:
            raise DatasetHeaderError(f"{path}: bad magic {magic!r}")
        if ver != VERSION:
            raise DatasetVersionError(f"{path}: unsupported version {ver}")
        if kind not in (KIND_BUNDLES, KIND_ESTIMATES) or m == 0 or k == 0:
            raise DatasetHeaderError(f"{path}: corrupt header fields")
        return cls(kind, m, k, flags, n, per_row, ver)


@dataclass
class BundleRecord:
    x_true: np.ndarray
    counts: np.ndarray
    n0: float
    x_svd: np.ndarray
    bundle_index: int
    split_tag: str

    @classmethod
    def from_row(cls, row) -> "BundleRecord":
        return cls(np.array(row["x_true"]), np.array(row["counts"]), float(row["n0"]),
                   np.array(row["x_svd"]), int(row["bundle_index"]), SPLITS[int(row["split"])])


class DatasetWriter:
    """Streams record chunks to disk; the count is patched on close."""

    def __init__(self, path, header: Header):
        self.path = os.fspath(path)
        self.header = header
        self.dtype = header.dtype()
        self.n = 0
        self._fh = open(self.path, "wb")
        self._fh.write(header.pack())

    def write(self, chunk: np.ndarray):
        chunk = np.asarray(chunk)
        if chunk.dtype != self.dtype:
            chunk = chunk.astype(self.dtype)
        self._fh.write(chunk.tobytes())
        self.n += len(chunk)

    def close(self):
        if self._fh.closed:
            return
        self.header.n_records = self.n
        self._fh.seek(0)
        self._fh.write(self.header.pack())
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class DatasetReader:
    """Random-access and chunked streaming reader with constant memory."""

    def __init__(self, path):
        self.path = os.fspath(path)
        with open(self.path, "rb") as fh:
            self.header = Header.unpack(fh.read(HEADER.size), self.path)
        self.dtype = self.header.dtype()
        size = os.path.getsize(self.path) - HEADER.size
        complete = size // self.dtype.itemsize
        if complete < self.header.n_records:
            raise DatasetTruncatedError(int(complete), self.path)

    def __len__(self) -> int:
        return self.header.n_records

    def read(self, start: int = 0, count: int | None = None) -> np.ndarray:
        n = len(self)
        if count is None:
            count = n - start
        if start < 0 or start + count > n:
            raise IndexError(f"records [{start}, {start + count}) outside [0, {n})")
        with open(self.path, "rb") as fh:
            fh.seek(HEADER.size + start * self.dtype.itemsize)
            raw = fh.read(count * self.dtype.itemsize)
        if len(raw) != count * self.dtype.itemsize:
            raise DatasetTruncatedError(start + len(raw) // self.dtype.itemsize, self.path)
        return np.frombuffer(raw, dtype=self.dtype).copy()

    def __getitem__(self, i: int):
        if i < 0:
            i += len(self)
        row = self.read(i, 1)[0]
        if self.header.kind == KIND_BUNDLES:
            return BundleRecord.from_row(row)
        return row

    def chunks(self, size: int = 65536):
        for s in range(0, len(self), size):
            yield self.read(s, min(size, len(self) - s))

    def __iter__(self):
        for chunk in self.chunks():
            for row in chunk:
                yield BundleRecord.from_row(row) if self.header.kind == KIND_BUNDLES else row

    def read_all(self) -> np.ndarray:
        return self.read(0, len(self))


def read_dataset(path) -> DatasetReader:
    return DatasetReader(path)


def write_dataset(chunks, path, header: Header | None = None) -> int:
    """Write an iterable of structured-array chunks; returns the record count."""
    header = header or Header()
    with DatasetWriter(path, header) as w:
        for c in chunks:
            w.write(c)
    return w.n


def records_from_list(recs, m: int = 5, k: int = 3) -> np.ndarray:
    out = np.zeros(len(recs), dtype=bundle_dtype(m, k))
    for i, r in enumerate(recs):
        out[i] = (r.x_true, r.counts, r.n0, r.x_svd, r.bundle_index, SPLIT_CODE[r.split_tag])
    return out
