"""Embedding containers, class manifests, and the EMB1 on-disk format.

The EMB1 container is a little-endian binary file:

    bytes 0-3    magic b"EMB1"
    bytes 4-7    u32 dim        (rows, embedding dimension)
    bytes 8-11   u32 count      (columns, number of vectors)
    byte  12     u8  normalized (0 or 1)
    bytes 13-15  zero padding
    bytes 16-    dim * count IEEE-754 float32 values, column-major

Vectors are stored one per column, matching the d x m layout used for
text-embedding stacks.  Values are held in float64 in memory (matrix
conditioning benefits from the extra precision) and narrowed to float32
on write, so a write/read round trip is bit-exact whenever the in-memory
values are float32-representable.

Class metadata never lives inside the binary payload.  Text-embedding
files carry a JSON sidecar (same basename, ``.manifest.json``) holding an
ordered array of ``{"name": ..., "partition": "forget"|"retain"}``;
image-feature files instead pair with a JSON label file (an array of
class indices).  A small CSV loader is provided for hand-written test
fixtures.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import BinaryIO, Iterable, Sequence

import numpy as np

MAGIC = b"EMB1"
_HEADER = struct.Struct("<4sIIB3s")

FORGET = "forget"
RETAIN = "retain"
_PARTITIONS = (FORGET, RETAIN)

MANIFEST_SUFFIX = ".manifest.json"
PROVENANCE_SUFFIX = ".provenance.json"
LABELS_SUFFIX = ".labels.json"


class EmbeddingIOError(Exception):
    """Malformed or inconsistent embedding container."""


class BadMagicError(EmbeddingIOError):
    """Source does not start with the EMB1 magic bytes."""


class TruncatedPayloadError(EmbeddingIOError):
    """Source ended before the declared payload was complete."""


class ManifestMismatchError(EmbeddingIOError):
    """Manifest class count disagrees with the container header."""


@dataclass(frozen=True)
class EmbeddingMatrix:
    """A d x n column stack of real-valued vectors.

    ``values[:, j]`` is vector j.  All entries must be finite; when
    ``normalized`` is set every column must have unit Euclidean norm
    within 1e-6.
    """

    dim: int
    count: int
    values: np.ndarray
    normalized: bool = False

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ValueError(f"dim must be positive, got {self.dim}")
        if self.count < 0:
            raise ValueError(f"count must be non-negative, got {self.count}")
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape != (self.dim, self.count):
            raise ValueError(
                f"values shape {values.shape} does not match "
                f"(dim, count) = ({self.dim}, {self.count})"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("embedding values must all be finite")
        if self.normalized and self.count > 0:
            norms = np.linalg.norm(values, axis=0)
            worst = float(np.max(np.abs(norms - 1.0)))
            if worst > 1e-6:
                raise ValueError(
                    f"normalized flag set but a column norm deviates from 1 "
                    f"by {worst:.3g}"
                )
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_array(cls, values: np.ndarray, normalized: bool = False) -> "EmbeddingMatrix":
        values = np.atleast_2d(np.asarray(values, dtype=np.float64))
        dim, count = values.shape
        return cls(dim=dim, count=count, values=values, normalized=normalized)

    def column(self, j: int) -> np.ndarray:
        return self.values[:, j]


@dataclass(frozen=True)
class ClassManifest:
    """Ordered class names with forget/retain partition labels.

    The column order of a text-embedding matrix and the label indices of
    an image dataset both refer to positions in this list.
    """

    classes: tuple[tuple[str, str], ...]

    def __post_init__(self) -> None:
        names = [name for name, _ in self.classes]
        if len(set(names)) != len(names):
            raise ValueError("class names must be unique")
        for name, partition in self.classes:
            if partition not in _PARTITIONS:
                raise ValueError(
                    f"class {name!r} has partition {partition!r}; "
                    f"expected one of {_PARTITIONS}"
                )

    def __len__(self) -> int:
        return len(self.classes)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.classes)

    @property
    def forget_indices(self) -> tuple[int, ...]:
        return tuple(i for i, (_, p) in enumerate(self.classes) if p == FORGET)

    @property
    def retain_indices(self) -> tuple[int, ...]:
        return tuple(i for i, (_, p) in enumerate(self.classes) if p == RETAIN)

    @property
    def forget_count(self) -> int:
        return len(self.forget_indices)

    @property
    def retain_count(self) -> int:
        return len(self.retain_indices)

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[str, str]]) -> "ClassManifest":
        return cls(classes=tuple((str(n), str(p)) for n, p in pairs))

    def to_json_obj(self) -> list[dict[str, str]]:
        return [{"name": n, "partition": p} for n, p in self.classes]

    @classmethod
    def from_json_obj(cls, obj: object) -> "ClassManifest":
        if not isinstance(obj, list):
            raise ManifestMismatchError("manifest JSON must be an array")
        pairs = []
        for entry in obj:
            if not isinstance(entry, dict) or "name" not in entry or "partition" not in entry:
                raise ManifestMismatchError(
                    "each manifest entry must be an object with 'name' and 'partition'"
                )
            pairs.append((entry["name"], entry["partition"]))
        return cls.from_pairs(pairs)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json_obj(), indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "ClassManifest":
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"manifest file not found: {path}")
        return cls.from_json_obj(json.loads(path.read_text()))


@dataclass(frozen=True)
class LabeledDataset:
    """Image features plus per-image class indices into a manifest."""

    features: EmbeddingMatrix
    labels: tuple[int, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        labels = tuple(int(v) for v in self.labels)
        if len(labels) != self.features.count:
            raise ValueError(
                f"label count {len(labels)} does not match "
                f"feature count {self.features.count}"
            )
        if any(v < 0 for v in labels):
            raise ValueError("labels must be non-negative class indices")
        object.__setattr__(self, "labels", labels)

    def validate_against(self, manifest: ClassManifest) -> None:
        upper = len(manifest)
        bad = [v for v in self.labels if v >= upper]
        if bad:
            raise ValueError(
                f"labels {sorted(set(bad))} are out of range for a "
                f"{upper}-class manifest"
            )


def manifest_path_for(path: str | Path) -> Path:
    return Path(path).with_suffix(MANIFEST_SUFFIX)


def labels_path_for(path: str | Path) -> Path:
    return Path(path).with_suffix(LABELS_SUFFIX)


def _payload_bytes(matrix: EmbeddingMatrix) -> bytes:
    with np.errstate(over="ignore"):
        values32 = matrix.values.astype(np.float32)
    if matrix.count > 0 and not np.all(np.isfinite(values32)):
        raise ValueError("embedding values overflow 32-bit float storage")
    return values32.tobytes(order="F")


def write_emb1(matrix: EmbeddingMatrix, destination: str | Path | BinaryIO) -> None:
    """Write the raw EMB1 container (no sidecar).

    Validation happens before any byte is written, so a rejected matrix
    leaves no partial file behind.
    """
    payload = _payload_bytes(matrix)
    header = _HEADER.pack(MAGIC, matrix.dim, matrix.count, int(matrix.normalized), b"\x00" * 3)
    if hasattr(destination, "write"):
        destination.write(header)
        destination.write(payload)
    else:
        with open(destination, "wb") as fh:
            fh.write(header)
            fh.write(payload)


def read_emb1(source: str | Path | BinaryIO) -> EmbeddingMatrix:
    """Read a raw EMB1 container and validate it."""
    if hasattr(source, "read"):
        data = source.read()
    else:
        path = Path(source)
        if not path.exists():
            raise FileNotFoundError(f"embedding file not found: {path}")
        data = path.read_bytes()

    if len(data) < 4 or data[:4] != MAGIC:
        raise BadMagicError("source does not begin with the EMB1 magic bytes")
    if len(data) < _HEADER.size:
        raise TruncatedPayloadError("EMB1 header is incomplete")
    _, dim, count, flag, pad = _HEADER.unpack_from(data, 0)
    if dim < 1:
        raise EmbeddingIOError(f"header dim must be positive, got {dim}")
    if flag not in (0, 1):
        raise EmbeddingIOError(f"normalized flag must be 0 or 1, got {flag}")
    if pad != b"\x00" * 3:
        raise EmbeddingIOError("header padding bytes are not zero")

    expected = dim * count * 4
    body = data[_HEADER.size:]
    if len(body) < expected:
        raise TruncatedPayloadError(
            f"payload holds {len(body)} bytes, expected {expected}"
        )
    if len(body) > expected:
        raise EmbeddingIOError(
            f"{len(body) - expected} trailing bytes after the declared payload"
        )
    values32 = np.frombuffer(body, dtype="<f4").reshape((dim, count), order="F")
    values = values32.astype(np.float64)
    if not np.all(np.isfinite(values)):
        raise EmbeddingIOError("payload contains non-finite values")
    return EmbeddingMatrix(dim=dim, count=count, values=values, normalized=bool(flag))


def write_embeddings(
    matrix: EmbeddingMatrix,
    manifest: ClassManifest,
    destination: str | Path,
) -> None:
    """Write a per-class text-embedding file plus its manifest sidecar.

    The matrix must hold exactly one column per manifest class.
    """
    if matrix.count != len(manifest):
        raise ManifestMismatchError(
            f"matrix has {matrix.count} columns but manifest lists "
            f"{len(manifest)} classes"
        )
    write_emb1(matrix, destination)
    manifest.save(manifest_path_for(destination))


def read_embeddings(source: str | Path) -> tuple[EmbeddingMatrix, ClassManifest]:
    """Read a text-embedding file and its manifest sidecar, cross-checked."""
    matrix = read_emb1(source)
    manifest = ClassManifest.load(manifest_path_for(source))
    if matrix.count != len(manifest):
        raise ManifestMismatchError(
            f"manifest lists {len(manifest)} classes but header count is "
            f"{matrix.count}"
        )
    return matrix, manifest


def save_labels(labels: Sequence[int], path: str | Path) -> None:
    Path(path).write_text(json.dumps([int(v) for v in labels]) + "\n")


def load_labels(path: str | Path) -> tuple[int, ...]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"label file not found: {path}")
    obj = json.loads(path.read_text())
    if not isinstance(obj, list) or not all(isinstance(v, int) for v in obj):
        raise ValueError(f"label file {path} must hold a JSON array of integers")
    return tuple(obj)


def load_embeddings_csv(path: str | Path) -> EmbeddingMatrix:
    """Load a hand-written CSV fixture.

    Line 1 is the literal header ``dim,count``, line 2 holds the two
    integers, and each following line is one vector (one column).
    """
    path = Path(path)
    lines = [ln.strip() for ln in path.read_text().splitlines() if ln.strip()]
    if not lines or lines[0].replace(" ", "").lower() != "dim,count":
        raise EmbeddingIOError(f"{path}: first line must be the header 'dim,count'")
    try:
        dim_s, count_s = lines[1].split(",")
        dim, count = int(dim_s), int(count_s)
    except (IndexError, ValueError) as exc:
        raise EmbeddingIOError(f"{path}: second line must hold 'dim,count' integers") from exc
    rows = lines[2:]
    if len(rows) != count:
        raise EmbeddingIOError(f"{path}: expected {count} vector lines, found {len(rows)}")
    values = np.empty((dim, count), dtype=np.float64)
    for j, row in enumerate(rows):
        parts = row.split(",")
        if len(parts) != dim:
            raise EmbeddingIOError(
                f"{path}: vector line {j + 1} has {len(parts)} entries, expected {dim}"
            )
        values[:, j] = [float(p) for p in parts]
    return EmbeddingMatrix(dim=dim, count=count, values=values)


def normalize_columns(matrix: EmbeddingMatrix) -> EmbeddingMatrix:
    """Divide every column by its Euclidean norm and set the flag.

    Idempotent within 1e-12 per entry; a zero column is an error naming
    the offending index.
    """
    if matrix.count == 0:
        return EmbeddingMatrix(matrix.dim, 0, matrix.values, normalized=True)
    norms = np.linalg.norm(matrix.values, axis=0)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise ValueError(f"cannot normalize zero column(s) at index {zero.tolist()}")
    values = matrix.values / norms
    if not np.all(np.isfinite(values)):
        raise ValueError("normalization produced non-finite values")
    return EmbeddingMatrix(matrix.dim, matrix.count, values, normalized=True)


def partition_columns(
    matrix: EmbeddingMatrix, manifest: ClassManifest
) -> tuple[EmbeddingMatrix, EmbeddingMatrix]:
    """Split a per-class matrix into (forget, retain) column stacks."""
    if matrix.count != len(manifest):
        raise ManifestMismatchError(
            f"matrix has {matrix.count} columns but manifest lists "
            f"{len(manifest)} classes"
        )
    f_idx = list(manifest.forget_indices)
    r_idx = list(manifest.retain_indices)
    forget = EmbeddingMatrix(
        matrix.dim, len(f_idx), matrix.values[:, f_idx], normalized=matrix.normalized
    )
    retain = EmbeddingMatrix(
        matrix.dim, len(r_idx), matrix.values[:, r_idx], normalized=matrix.normalized
    )
    return forget, retain
