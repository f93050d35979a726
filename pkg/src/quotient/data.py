"""Dataset ingestion into fixed-point integer arrays.

Features land in ``[-(2^p_a - 1), 2^p_a - 1]`` at precision ``p_a``; labels are
one-hot vectors whose hot entry is ``2^p_a - 1``.
"""
from __future__ import annotations

import csv
import gzip
import io
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .fxp import round_shift

IDX_IMAGES = 2051
IDX_LABELS = 2049


class DataError(ValueError):
    """Malformed or inconsistent dataset input."""


@dataclass
class Dataset:
    x: np.ndarray          # (n, ...) int64 features at p_a
    labels: np.ndarray     # (n,) class indices
    classes: int
    p_a: int = 7

    @property
    def y(self) -> np.ndarray:
        return one_hot(self.labels, self.classes, self.p_a)

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, idx) -> "Dataset":
        return Dataset(self.x[idx], self.labels[idx], self.classes, self.p_a)


def one_hot(labels, classes: int, p_a: int = 7) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= classes):
        raise DataError("label outside [0, classes)")
    y = np.zeros((len(labels), classes), dtype=np.int64)
    y[np.arange(len(labels)), labels] = (1 << p_a) - 1
    return y


def _open(path) -> bytes:
    path = Path(path)
    raw = path.read_bytes()
    return gzip.decompress(raw) if raw[:2] == b"\x1f\x8b" else raw


def read_idx(path, magic: int) -> np.ndarray:
    buf = _open(path)
    if len(buf) < 8:
        raise DataError(f"{path}: truncated IDX header")
    got, = struct.unpack(">I", buf[:4])
    if got != magic:
        raise DataError(f"{path}: IDX magic {got} != {magic}")
    ndim = buf[3]
    dims = struct.unpack(f">{ndim}I", buf[4:4 + 4 * ndim])
    data = np.frombuffer(buf, dtype=np.uint8, offset=4 + 4 * ndim)
    if data.size != int(np.prod(dims)):
        raise DataError(f"{path}: payload size does not match dims {dims}")
    return data.reshape(dims)


def scale_unit(num: np.ndarray, den, p_a: int) -> np.ndarray:
    """``round(num / den * (2^p_a - 1))`` with ties away from zero, exactly."""
    num = np.asarray(num, dtype=np.int64) * ((1 << p_a) - 1)
    den = np.asarray(den, dtype=np.int64)
    q, r = np.divmod(np.abs(num), den)
    q = q + (2 * r >= den)
    return np.sign(num) * q


def ingest_mnist(images_path, labels_path, p_a: int = 7, flatten: bool = True) -> Dataset:
    imgs = read_idx(images_path, IDX_IMAGES)
    labs = read_idx(labels_path, IDX_LABELS)
    if len(imgs) != len(labs):
        raise DataError("image and label counts differ")
    x = scale_unit(imgs.astype(np.int64), 255, p_a)
    x = x.reshape(len(x), -1) if flatten else x[:, None]
    return Dataset(x, labs.astype(np.int64), 10, p_a)


def load_mnist(root, p_a: int = 7, flatten: bool = True) -> tuple[Dataset, Dataset]:
    """Train and test splits from a directory holding the four IDX files."""
    root = Path(root)

    def find(stem):
        for name in (stem.replace("-idx", ".idx"), stem):
            for ext in ("", ".gz"):
                p = root / (name + ext)
                if p.exists():
                    return p
        raise DataError(f"{stem} not found under {root}")

    tr = ingest_mnist(find("train-images-idx3-ubyte"), find("train-labels-idx1-ubyte"), p_a, flatten)
    te = ingest_mnist(find("t10k-images-idx3-ubyte"), find("t10k-labels-idx1-ubyte"), p_a, flatten)
    return tr, te


@dataclass
class CsvSpec:
    path: str
    label: str | int = -1                      # column name or index
    categorical: list = field(default_factory=list)
    delimiter: str = ","
    header: bool = True


def _col_index(names, key) -> int:
    if isinstance(key, int):
        return key % len(names)
    if key not in names:
        raise DataError(f"unknown column {key!r}")
    return names.index(key)


def encode_table(rows: list[list[str]], names: list[str], label, categorical,
                 p_a: int = 7, classes: list | None = None) -> tuple[Dataset, list]:
    """Min-max numeric columns, one-hot categorical ones; column order follows
    the file, categories sort lexicographically."""
    if not rows:
        raise DataError("empty table")
    for i, r in enumerate(rows):
        if len(r) != len(names):
            raise DataError(f"row {i + 1}: expected {len(names)} fields, got {len(r)}")
        for j, v in enumerate(r):
            if v.strip() in ("", "?", "NA", "nan"):
                raise DataError(f"row {i + 1}: missing value in column {names[j]!r}")
    li = _col_index(names, label)
    cats = {_col_index(names, c) for c in categorical}
    m = (1 << p_a) - 1
    cols, feat_names = [], []
    for j, name in enumerate(names):
        if j == li:
            continue
        vals = [r[j].strip() for r in rows]
        if j in cats:
            levels = sorted(set(vals))
            for lv in levels:
                cols.append(np.array([m if v == lv else 0 for v in vals], dtype=np.int64))
                feat_names.append(f"{name}={lv}")
            continue
        try:
            num = np.array([float(v) for v in vals])
        except ValueError as exc:
            raise DataError(f"column {name!r} is not numeric; declare it categorical") from exc
        lo, hi = num.min(), num.max()
        if hi == lo:
            cols.append(np.zeros(len(vals), dtype=np.int64))
        else:
            t = (num - lo) / (hi - lo) * m
            cols.append(np.floor(t + 0.5).astype(np.int64))
        feat_names.append(name)
    raw = [r[li].strip() for r in rows]
    classes = sorted(set(raw)) if classes is None else classes
    idx = {c: k for k, c in enumerate(classes)}
    try:
        labels = np.array([idx[v] for v in raw], dtype=np.int64)
    except KeyError as exc:
        raise DataError(f"unknown class label {exc.args[0]!r}") from exc
    x = np.stack(cols, axis=1) if cols else np.zeros((len(rows), 0), dtype=np.int64)
    return Dataset(x, labels, len(classes), p_a), feat_names


def ingest_csv(spec: CsvSpec, p_a: int = 7) -> Dataset:
    text = Path(spec.path).read_text()
    rows = [r for r in csv.reader(io.StringIO(text), delimiter=spec.delimiter) if r]
    if spec.header:
        names, rows = rows[0], rows[1:]
    else:
        names = [str(i) for i in range(len(rows[0]))]
    ds, _ = encode_table(rows, [n.strip() for n in names], spec.label, spec.categorical, p_a)
    return ds


def load_german(path, p_a: int = 7) -> Dataset:
    """UCI German credit (``german.data``, space separated, or a comma
    separated copy).  Attributes starting with ``A`` are categorical; the
    last column is the class (1 good, 2 bad)."""
    text = Path(path).read_text().strip().splitlines()
    delim = "," if "," in text[0] else None
    rows = [ln.split(delim) if delim else ln.split() for ln in text]
    rows = [[v.strip() for v in r] for r in rows if r]
    names = [f"a{i + 1}" for i in range(len(rows[0]) - 1)] + ["class"]
    cat = [names[j] for j in range(len(names) - 1) if rows[0][j].startswith("A")]
    ds, _ = encode_table(rows, names, "class", cat, p_a, classes=["1", "2"])
    return ds


def load_thyroid(root, p_a: int = 7) -> tuple[Dataset, Dataset]:
    """UCI thyroid (``ann-train.data`` / ``ann-test.data``): 21 features, 3 classes."""
    root = Path(root)
    out = []
    for name in ("ann-train.data", "ann-test.data"):
        p = root / name
        if not p.exists():
            raise DataError(f"{p} not found")
        rows = [ln.split() for ln in p.read_text().splitlines() if ln.strip()]
        out.append(np.array(rows, dtype=float))
    tr, te = out
    lo = tr[:, :-1].min(0)
    span = np.where(tr[:, :-1].max(0) > lo, tr[:, :-1].max(0) - lo, 1.0)
    m = (1 << p_a) - 1

    def enc(a):
        t = np.clip((a[:, :-1] - lo) / span, 0.0, 1.0) * m
        return Dataset(np.floor(t + 0.5).astype(np.int64), a[:, -1].astype(np.int64) - 1, 3, p_a)

    return enc(tr), enc(te)


def train_test_split(ds: Dataset, test_frac: float, seed: int) -> tuple[Dataset, Dataset]:
    perm = np.random.default_rng(seed).permutation(len(ds))
    k = int(round(len(ds) * test_frac))
    return ds.subset(np.sort(perm[k:])), ds.subset(np.sort(perm[:k]))


def synthetic(n: int, dim: int, classes: int = 2, seed: int = 0, p_a: int = 7) -> Dataset:
    """Linearly separable toy data: class = argmax of a fixed random projection."""
    rng = np.random.default_rng(seed)
    m = (1 << p_a) - 1
    x = rng.integers(0, m + 1, (n, dim)).astype(np.int64)
    proj = rng.standard_normal((dim, classes))
    labels = ((x - m / 2) @ proj).argmax(1)
    return Dataset(x, labels.astype(np.int64), classes, p_a)


def default_data_dir() -> Path:
    return Path(os.environ.get("QUOTIENT_DATA", Path.cwd() / "data"))
