"""Two-view target dataset and its on-disk formats.

Binary container (all integers little-endian u32 unless noted)::

    magic   b"DCPL"
    version u16
    n, d_f, d_p, k, flags
    features_f   n*d_f  f64 row-major
    features_p   n*d_p  f64 row-major
    true_labels  n      u32     (flags & HAS_TRUE)
    pseudo       n      u32     (flags & HAS_PSEUDO)
    source head  k, d_f, weights k*d_f f64, bias k f64      (flags & HAS_HEAD)
    projection   rows, cols, values rows*cols f64           (flags & HAS_PROJECTION)

A standalone source head file is magic ``b"DCPH"``, the version, and the
source head section.

The CSV form has a header ``id[,label][,pseudo],f_0..f_{d_f-1},p_0..p_{d_p-1}``.
"""
from __future__ import annotations

import csv
import io
import os
import struct
import tempfile
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import (
    BadMagicError,
    DataFormatError,
    DegenerateInputError,
    DimensionMismatchError,
    LabelRangeError,
    MissingFileError,
    NonFiniteError,
)
from .model import ModelParams

MAGIC = b"DCPL"
HEAD_MAGIC = b"DCPH"
VERSION = 1

HAS_TRUE = 1
HAS_PSEUDO = 2
HAS_HEAD = 4
HAS_PROJECTION = 8


@dataclass(frozen=True, eq=False)
class Dataset:
    features_f: np.ndarray
    features_p: np.ndarray
    k: int
    true_labels: np.ndarray | None = None
    pseudo_labels: np.ndarray | None = None
    source_head: ModelParams | None = None
    # linear map that produced the pretrained view, kept for reproducibility
    projection: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.features_f.shape[0]

    @property
    def d_f(self) -> int:
        return self.features_f.shape[1]

    @property
    def d_p(self) -> int:
        return self.features_p.shape[1]

    def with_pseudo_labels(self, labels) -> "Dataset":
        ds = replace(self, pseudo_labels=np.asarray(labels, dtype=np.int64))
        ds.validate()
        return ds

    def subset(self, idx) -> "Dataset":
        pick = lambda a: None if a is None else a[idx]  # noqa: E731
        return replace(
            self,
            features_f=self.features_f[idx],
            features_p=self.features_p[idx],
            true_labels=pick(self.true_labels),
            pseudo_labels=pick(self.pseudo_labels),
        )

    def validate(self) -> None:
        if self.features_f.ndim != 2 or self.features_p.ndim != 2:
            raise DimensionMismatchError("feature views must be 2-D matrices")
        if self.n == 0:
            raise DegenerateInputError("dataset has no samples")
        if self.features_p.shape[0] != self.n:
            raise DimensionMismatchError(
                f"views disagree on sample count: {self.n} vs {self.features_p.shape[0]}"
            )
        if self.k < 1:
            raise DataFormatError(f"class count must be positive, got {self.k}")
        for name, mat in (("features_f", self.features_f), ("features_p", self.features_p)):
            bad = ~np.isfinite(mat)
            if bad.any():
                r, c = np.argwhere(bad)[0]
                raise NonFiniteError("non-finite feature value", row=int(r), field=f"{name}[{c}]")
        for name, lab in (("true_labels", self.true_labels), ("pseudo_labels", self.pseudo_labels)):
            if lab is None:
                continue
            if lab.shape != (self.n,):
                raise DimensionMismatchError(f"{name} has shape {lab.shape}, expected ({self.n},)")
            bad = (lab < 0) | (lab >= self.k)
            if bad.any():
                r = int(np.argmax(bad))
                raise LabelRangeError(f"label {int(lab[r])} outside [0, {self.k})", row=r, field=name)
        if self.source_head is not None:
            h = self.source_head
            if h.k != self.k or h.d_f != self.d_f:
                raise DimensionMismatchError(
                    f"source head is {h.k}x{h.d_f}, dataset expects {self.k}x{self.d_f}"
                )
            if not (np.isfinite(h.weights).all() and np.isfinite(h.bias).all()):
                raise NonFiniteError("non-finite source head parameter", field="source_head")

    def equals(self, other: "Dataset") -> bool:
        def same(a, b):
            if a is None or b is None:
                return a is None and b is None
            if isinstance(a, ModelParams):
                return a.equals(b)
            return a.shape == b.shape and a.tobytes() == b.tobytes()

        return self.k == other.k and all(
            same(getattr(self, f), getattr(other, f))
            for f in ("features_f", "features_p", "true_labels", "pseudo_labels", "source_head", "projection")
        )


def atomic_write(path, data: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# -- binary -----------------------------------------------------------------

def _u32(a) -> bytes:
    return np.ascontiguousarray(a, dtype="<u4").tobytes()


def _f64(a) -> bytes:
    return np.ascontiguousarray(a, dtype="<f8").tobytes()


def _head_section(head: ModelParams) -> bytes:
    return struct.pack("<II", head.k, head.d_f) + _f64(head.weights) + _f64(head.bias)


def dataset_to_bytes(ds: Dataset) -> bytes:
    ds.validate()
    flags = 0
    flags |= HAS_TRUE if ds.true_labels is not None else 0
    flags |= HAS_PSEUDO if ds.pseudo_labels is not None else 0
    flags |= HAS_HEAD if ds.source_head is not None else 0
    flags |= HAS_PROJECTION if ds.projection is not None else 0
    parts = [MAGIC, struct.pack("<H", VERSION), struct.pack("<5I", ds.n, ds.d_f, ds.d_p, ds.k, flags)]
    parts += [_f64(ds.features_f), _f64(ds.features_p)]
    if ds.true_labels is not None:
        parts.append(_u32(ds.true_labels))
    if ds.pseudo_labels is not None:
        parts.append(_u32(ds.pseudo_labels))
    if ds.source_head is not None:
        parts.append(_head_section(ds.source_head))
    if ds.projection is not None:
        parts.append(struct.pack("<II", *ds.projection.shape) + _f64(ds.projection))
    return b"".join(parts)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, nbytes: int, what: str) -> bytes:
        if self.pos + nbytes > len(self.buf):
            raise DataFormatError(f"file truncated while reading {what}")
        out = self.buf[self.pos:self.pos + nbytes]
        self.pos += nbytes
        return out

    def u32s(self, count: int, what: str) -> tuple:
        return struct.unpack(f"<{count}I", self.take(4 * count, what))

    def f64(self, shape: tuple, what: str) -> np.ndarray:
        count = int(np.prod(shape))
        return np.frombuffer(self.take(8 * count, what), dtype="<f8").astype(np.float64).reshape(shape)

    def labels(self, n: int, what: str) -> np.ndarray:
        return np.frombuffer(self.take(4 * n, what), dtype="<u4").astype(np.int64)

    def head(self) -> ModelParams:
        k, d_f = self.u32s(2, "source head header")
        w = self.f64((k, d_f), "source head weights")
        b = self.f64((k,), "source head bias")
        return ModelParams(w, b)


def _check_version(r: _Reader) -> None:
    (version,) = struct.unpack("<H", r.take(2, "version"))
    if version != VERSION:
        raise DataFormatError(f"unsupported format version {version}")


def dataset_from_bytes(buf: bytes) -> Dataset:
    r = _Reader(buf)
    magic = r.take(4, "magic")
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}, expected {MAGIC!r}")
    _check_version(r)
    n, d_f, d_p, k, flags = r.u32s(5, "header")
    if n == 0:
        raise DegenerateInputError("dataset has no samples")
    ff = r.f64((n, d_f), "features_f")
    fp = r.f64((n, d_p), "features_p")
    true = r.labels(n, "true_labels") if flags & HAS_TRUE else None
    pseudo = r.labels(n, "pseudo_labels") if flags & HAS_PSEUDO else None
    head = r.head() if flags & HAS_HEAD else None
    proj = None
    if flags & HAS_PROJECTION:
        rows, cols = r.u32s(2, "projection header")
        proj = r.f64((rows, cols), "projection")
    if r.pos != len(buf):
        raise DataFormatError(f"{len(buf) - r.pos} trailing bytes after dataset")
    ds = Dataset(ff, fp, k, true, pseudo, head, proj)
    ds.validate()
    return ds


def head_to_bytes(head: ModelParams) -> bytes:
    return HEAD_MAGIC + struct.pack("<H", VERSION) + _head_section(head)


def head_from_bytes(buf: bytes) -> ModelParams:
    r = _Reader(buf)
    magic = r.take(4, "magic")
    if magic != HEAD_MAGIC:
        raise BadMagicError(f"bad magic {magic!r}, expected {HEAD_MAGIC!r}")
    _check_version(r)
    head = r.head()
    if r.pos != len(buf):
        raise DataFormatError("trailing bytes after source head")
    if not (np.isfinite(head.weights).all() and np.isfinite(head.bias).all()):
        raise NonFiniteError("non-finite source head parameter", field="source_head")
    return head


# -- CSV --------------------------------------------------------------------

def dataset_to_csv(ds: Dataset) -> str:
    ds.validate()
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    header = ["id"]
    header += ["label"] if ds.true_labels is not None else []
    header += ["pseudo"] if ds.pseudo_labels is not None else []
    header += [f"f_{j}" for j in range(ds.d_f)] + [f"p_{j}" for j in range(ds.d_p)]
    w.writerow(header)
    for i in range(ds.n):
        row = [i]
        if ds.true_labels is not None:
            row.append(int(ds.true_labels[i]))
        if ds.pseudo_labels is not None:
            row.append(int(ds.pseudo_labels[i]))
        row += [repr(float(v)) for v in ds.features_f[i]]
        row += [repr(float(v)) for v in ds.features_p[i]]
        w.writerow(row)
    return out.getvalue()


def dataset_from_csv(text: str, k: int | None = None) -> Dataset:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise DataFormatError("empty CSV file")
    header = [h.strip() for h in rows[0]]
    if not header or header[0] != "id":
        raise DataFormatError("CSV header must start with 'id'", row=0)
    f_cols = [i for i, h in enumerate(header) if h.startswith("f_")]
    p_cols = [i for i, h in enumerate(header) if h.startswith("p_")]
    for cols, prefix in ((f_cols, "f_"), (p_cols, "p_")):
        names = [header[i] for i in cols]
        if names != [f"{prefix}{j}" for j in range(len(cols))]:
            raise DataFormatError(f"columns {prefix}* must be numbered 0..{len(cols) - 1} in order", row=0)
    if not f_cols or not p_cols:
        raise DataFormatError("CSV needs at least one f_ and one p_ column", row=0)
    known = {"id", "label", "pseudo"}
    for h in header:
        if h not in known and not h.startswith(("f_", "p_")):
            raise DataFormatError(f"unknown CSV column {h!r}", row=0)
    data = rows[1:]
    if not data:
        raise DegenerateInputError("dataset has no samples")
    n = len(data)
    ff = np.empty((n, len(f_cols)))
    fp = np.empty((n, len(p_cols)))
    lab = {name: np.empty(n, dtype=np.int64) for name in ("label", "pseudo") if name in header}
    for r, row in enumerate(data, start=1):
        if len(row) != len(header):
            raise DimensionMismatchError(f"expected {len(header)} fields, got {len(row)}", row=r)
        for name, arr in lab.items():
            cell = row[header.index(name)]
            try:
                arr[r - 1] = int(cell)
            except ValueError:
                raise DataFormatError(f"label {cell!r} is not an integer", row=r, field=name) from None
        for dst, cols in ((ff, f_cols), (fp, p_cols)):
            for j, c in enumerate(cols):
                try:
                    v = float(row[c])
                except ValueError:
                    raise DataFormatError(f"value {row[c]!r} is not a number", row=r, field=header[c]) from None
                if not np.isfinite(v):
                    raise NonFiniteError("non-finite feature value", row=r, field=header[c])
                dst[r - 1, j] = v
    if k is None:
        if not lab:
            raise DataFormatError("class count k must be given for a CSV without label columns")
        k = int(max(a.max() for a in lab.values())) + 1
    true = lab.get("label")
    pseudo = lab.get("pseudo")
    for name, arr in (("label", true), ("pseudo", pseudo)):
        if arr is not None:
            bad = (arr < 0) | (arr >= k)
            if bad.any():
                i = int(np.argmax(bad))
                raise LabelRangeError(f"label {int(arr[i])} outside [0, {k})", row=i + 1, field=name)
    ds = Dataset(ff, fp, k, true, pseudo)
    ds.validate()
    return ds


# -- file entry points ------------------------------------------------------

def _read(path) -> bytes:
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(f"no such file: {path}")
    return path.read_bytes()


def load_dataset(path, k: int | None = None) -> Dataset:
    """Load a dataset from the binary container or, for ``.csv`` paths, CSV.

    ``k`` is only consulted for CSV input, where the header cannot carry it.
    """
    buf = _read(path)
    if str(path).lower().endswith(".csv"):
        return dataset_from_csv(buf.decode("utf-8"), k=k)
    return dataset_from_bytes(buf)


def save_dataset(ds: Dataset, path) -> None:
    if str(path).lower().endswith(".csv"):
        atomic_write(path, dataset_to_csv(ds).encode("utf-8"))
    else:
        atomic_write(path, dataset_to_bytes(ds))


def load_head(path) -> ModelParams:
    buf = _read(path)
    if buf[:4] == MAGIC:
        ds = dataset_from_bytes(buf)
        if ds.source_head is None:
            raise DataFormatError(f"{path} carries no source head section")
        return ds.source_head
    return head_from_bytes(buf)


def save_head(head: ModelParams, path) -> None:
    atomic_write(path, head_to_bytes(head))
