"""Deterministic text embeddings and a bit-exact half-precision vector store.

The default embedder hashes unigrams and adjacent bigrams into signed
buckets; any externally computed vectors can be injected through the "TMV1"
file format instead.
"""

from __future__ import annotations

import hashlib
import re
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .events import EventStore

DEFAULT_DIM = 384

# Word characters keep compound tokens like "auth_fail" intact.
_TOKEN_RE = re.compile(r"[a-z0-9_]+")

MAGIC = b"TMV1"
_HEADER = struct.Struct("<4sIQ")  # magic, u32 dim, u64 count


class VectorFileError(RuntimeError):
    """Base class for vector-file integrity failures."""


class VectorMagicError(VectorFileError):
    pass


class VectorDimError(VectorFileError):
    pass


class VectorCountError(VectorFileError):
    pass


class VectorTruncatedError(VectorFileError):
    pass


def tokenize(text: str) -> list[str]:
    """Lowercase and split into alphanumeric/underscore runs."""
    return _TOKEN_RE.findall(text.lower())


def _hash64(feature: str) -> int:
    return int.from_bytes(hashlib.blake2b(feature.encode("utf-8"), digest_size=8).digest(), "little")


def hash_embed(text: str, dim: int = DEFAULT_DIM) -> np.ndarray:
    """Embed text as a unit-norm signed-bucket hash of unigrams and bigrams."""
    if dim < 2:
        raise ValueError(f"dim must be >= 2, got {dim}")
    tokens = tokenize(text)
    if not tokens:
        raise ValueError(f"no tokens in text: {text!r}")
    vec = np.zeros(dim, dtype=np.float32)
    features = list(tokens)
    features.extend(f"{a} {b}" for a, b in zip(tokens, tokens[1:]))
    for feature in features:
        h = _hash64(feature)
        sign = 1.0 if (h >> 63) & 1 else -1.0
        vec[h % dim] += sign
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        # Possible only if colliding features cancel exactly.
        raise ValueError(f"degenerate zero embedding for text: {text!r}")
    return vec / norm


@dataclass(frozen=True)
class HashEmbedder:
    name: str = "hash"
    dim: int = DEFAULT_DIM

    def embed(self, text: str) -> np.ndarray:
        return hash_embed(text, self.dim)


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity; symmetric by construction, errors on zero vectors."""
    a = np.asarray(a, dtype=np.float32)
    b = np.asarray(b, dtype=np.float32)
    if a.shape != b.shape:
        raise ValueError(f"dim mismatch: {a.shape} vs {b.shape}")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine undefined for zero vector")
    return float(np.dot(a, b) / (na * nb))


@dataclass(frozen=True)
class VectorStore:
    """Event vectors quantized to half precision, index-aligned with their ids."""

    dim: int
    ids: tuple[str, ...]
    vectors: np.ndarray  # shape (count, dim), float16

    def __post_init__(self) -> None:
        if self.vectors.dtype != np.float16:
            raise ValueError(f"vectors must be float16, got {self.vectors.dtype}")
        if self.vectors.shape != (len(self.ids), self.dim):
            raise ValueError(
                f"shape {self.vectors.shape} inconsistent with {len(self.ids)} ids × dim {self.dim}"
            )

    def __len__(self) -> int:
        return len(self.ids)

    def float32(self) -> np.ndarray:
        return self.vectors.astype(np.float32)


def encode_store(store: EventStore, embedder: HashEmbedder) -> VectorStore:
    """Embed every event's text_repr, in store order, quantizing to float16."""
    rows = np.zeros((len(store), embedder.dim), dtype=np.float32)
    for i, event in enumerate(store):
        try:
            rows[i] = embedder.embed(event.text_repr)
        except ValueError as exc:
            raise ValueError(f"event {event.event_id}: {exc}") from exc
    return VectorStore(dim=embedder.dim, ids=tuple(store.ids()), vectors=rows.astype(np.float16))


def write_vector_file(vs: VectorStore, path: Path | str) -> None:
    with Path(path).open("wb") as fh:
        fh.write(_HEADER.pack(MAGIC, vs.dim, len(vs.ids)))
        for event_id in vs.ids:
            fh.write(event_id.encode("utf-8"))
            fh.write(b"\n")
        fh.write(np.ascontiguousarray(vs.vectors, dtype="<f2").tobytes())


def read_vector_file(path: Path | str, expect_dim: int | None = None) -> VectorStore:
    """Read a TMV1 file, failing distinctly on magic, dim, count, or truncation problems."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise VectorTruncatedError(f"{path}: shorter than header")
    magic, dim, count = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise VectorMagicError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if dim < 2:
        raise VectorDimError(f"{path}: declared dim {dim} is invalid")
    if expect_dim is not None and dim != expect_dim:
        raise VectorDimError(f"{path}: dim {dim} does not match expected {expect_dim}")

    offset = _HEADER.size
    ids: list[str] = []
    for _ in range(count):
        end = data.find(b"\n", offset)
        if end < 0:
            raise VectorCountError(
                f"{path}: id section ended after {len(ids)} of {count} declared ids"
            )
        ids.append(data[offset:end].decode("utf-8"))
        offset = end + 1

    payload = data[offset:]
    expected_bytes = count * dim * 2
    if len(payload) < expected_bytes:
        raise VectorTruncatedError(
            f"{path}: payload has {len(payload)} bytes, expected {expected_bytes}"
        )
    if len(payload) > expected_bytes:
        raise VectorCountError(
            f"{path}: {len(payload) - expected_bytes} trailing bytes beyond declared count"
        )
    vectors = np.frombuffer(payload, dtype="<f2").reshape(count, dim).astype(np.float16)
    return VectorStore(dim=dim, ids=tuple(ids), vectors=vectors)


def check_alignment(store: EventStore, vs: VectorStore) -> None:
    """Require vectors to align index-for-index with the event store."""
    store_ids = store.ids()
    if list(vs.ids) != store_ids:
        missing = set(store_ids).symmetric_difference(vs.ids)
        detail = f"; {len(missing)} ids differ" if missing else "; same ids, different order"
        raise ValueError("vector store does not align with event store" + detail)
