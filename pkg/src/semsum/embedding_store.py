"""Embedding matrices on disk and the frame-sentence compatibility matrix.

Two on-disk formats are supported:

* ``EMB1`` binary: the 4 magic bytes ``EMB1``, ``rows`` and ``dim`` as
  little-endian u32, then ``rows * dim`` little-endian float32 values in
  row-major order.
* CSV: one row per line, comma-separated decimal floats, no header.

Values are widened to float64 on load.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import numpy as np

from .errors import DimensionMismatch, EmbeddingError, MalformedHeader, NonFinite, ZeroRow

MAGIC = b"EMB1"
_HEADER = struct.Struct("<4sII")

Kind = Literal["frame", "sentence"]


@dataclass(frozen=True)
class EmbeddingMatrix:
    data: np.ndarray
    kind: Kind = "frame"

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float64, copy=True)
        if data.ndim == 1:
            data = data[None, :]
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
            raise EmbeddingError(f"embedding matrix must be 2-D and non-empty, got shape {data.shape}")
        _validate_rows(data)
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def __len__(self):
        return self.rows


def _validate_rows(data: np.ndarray) -> None:
    finite = np.isfinite(data).all(axis=1)
    if not finite.all():
        raise NonFinite("non-finite value", row=int(np.argmin(finite)))
    nonzero = np.any(data != 0.0, axis=1)
    if not nonzero.all():
        raise ZeroRow("all-zero row, cosine is undefined", row=int(np.argmin(nonzero)))


def load_embeddings(path, format: str | None = None, kind: Kind = "frame") -> EmbeddingMatrix:
    """Load an EMB1 or CSV file. ``format`` defaults from the file suffix."""
    path = Path(path)
    if format is None:
        format = "csv" if path.suffix.lower() in (".csv", ".txt") else "binary"
    if format == "binary":
        data = _read_binary(path.read_bytes())
    elif format == "csv":
        data = _read_csv(path.read_text())
    else:
        raise ValueError(f"unknown embedding format {format!r}")
    return EmbeddingMatrix(data, kind=kind)


def _read_binary(raw: bytes) -> np.ndarray:
    if len(raw) < _HEADER.size:
        raise MalformedHeader(f"file too short for EMB1 header ({len(raw)} bytes)")
    magic, rows, dim = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise MalformedHeader(f"bad magic {magic!r}, expected {MAGIC!r}")
    if rows < 1 or dim < 1:
        raise MalformedHeader(f"header declares rows={rows}, dim={dim}")
    payload = raw[_HEADER.size:]
    expected = rows * dim * 4
    if len(payload) != expected:
        # report the first row that is incomplete
        raise DimensionMismatch(
            f"payload has {len(payload)} bytes, header implies {expected}",
            row=min(len(payload) // (4 * dim), rows - 1),
        )
    values = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    return values.reshape(rows, dim)


def _read_csv(text: str) -> np.ndarray:
    rows = []
    dim = None
    for i, line in enumerate(ln for ln in text.splitlines() if ln.strip()):
        try:
            row = [float(tok) for tok in line.split(",")]
        except ValueError as exc:
            raise EmbeddingError(f"unparseable value: {exc}", row=i) from None
        if dim is None:
            dim = len(row)
        elif len(row) != dim:
            raise DimensionMismatch(f"row has {len(row)} values, expected {dim}", row=i)
        rows.append(row)
    if not rows:
        raise MalformedHeader("empty CSV embedding file")
    return np.asarray(rows, dtype=np.float64)


def save_embeddings(matrix, path, format: str | None = None) -> None:
    """Write an embedding matrix (or a plain 2-D array) in EMB1 or CSV form."""
    path = Path(path)
    data = matrix.data if isinstance(matrix, EmbeddingMatrix) else np.atleast_2d(np.asarray(matrix, float))
    if format is None:
        format = "csv" if path.suffix.lower() in (".csv", ".txt") else "binary"
    if format == "binary":
        rows, dim = data.shape
        path.write_bytes(_HEADER.pack(MAGIC, rows, dim) + data.astype("<f4").tobytes())
    elif format == "csv":
        path.write_text("".join(",".join(repr(float(v)) for v in row) + "\n" for row in data))
    else:
        raise ValueError(f"unknown embedding format {format!r}")


def cosine_similarity(a, b) -> float:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise DimensionMismatch(f"vector dims differ: {a.size} vs {b.size}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ZeroRow("zero-norm vector")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def _as_array(m) -> np.ndarray:
    return m.data if isinstance(m, EmbeddingMatrix) else np.atleast_2d(np.asarray(m, dtype=np.float64))


def compatibility_matrix(frames, sentences) -> np.ndarray:
    """F x N matrix of cosine scores between every frame and every sentence."""
    X, Y = _as_array(frames), _as_array(sentences)
    if X.shape[1] != Y.shape[1]:
        raise DimensionMismatch(f"frame dim {X.shape[1]} != sentence dim {Y.shape[1]}")
    nx = np.linalg.norm(X, axis=1)
    ny = np.linalg.norm(Y, axis=1)
    if (nx == 0).any() or (ny == 0).any():
        raise ZeroRow("zero-norm vector in compatibility input")
    S = (X / nx[:, None]) @ (Y / ny[:, None]).T
    return np.clip(S, -1.0, 1.0)
