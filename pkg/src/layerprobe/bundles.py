"""Portable per-layer word-embedding bundles.

Byte layout (all integers little-endian):

    offset  size  content
    0       8     magic b"DPROBE01"
    8       4     u32 manifest length m
    12      m     manifest JSON (UTF-8)
    12+m    ...   payload: per-sentence float32 tensors of shape
                  (num_layers+1, token_count, hidden_dim), C-order
                  (layer-major, then tokens, then features), concatenated
                  in manifest index order

Manifest offsets are relative to the payload start. Probe checkpoints reuse
the same header convention with magic b"DPCKPT01" (see probe.py).
"""

from __future__ import annotations

import json
import mmap
import os
import struct
import tempfile
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator, Sequence

import numpy as np

MAGIC = b"DPROBE01"
_HEADER_LEN = struct.Struct("<I")
_FLOAT32 = np.dtype("<f4")


class BundleError(Exception):
    """Base class for bundle I/O failures."""


class BundleFormatError(BundleError):
    pass


class BundleVersionError(BundleError):
    pass


class BundleTruncatedError(BundleError):
    pass


class BundleAlignmentError(BundleError):
    pass


@dataclass(frozen=True)
class SentenceRecord:
    id: str
    token_count: int
    offset: int  # bytes from payload start


@dataclass
class BundleManifest:
    model_name: str
    num_layers: int  # L; stored layer slices = L+1 (layer 0 included)
    hidden_dim: int
    sentences: list[SentenceRecord] = field(default_factory=list)
    dtype: str = "float32"
    byte_order: str = "little"
    pooling: str = "mean"

    def validate(self) -> None:
        if self.num_layers < 1:
            raise BundleFormatError(f"num_layers must be >= 1, got {self.num_layers}")
        if self.hidden_dim < 1:
            raise BundleFormatError(f"hidden_dim must be >= 1, got {self.hidden_dim}")
        if self.dtype != "float32" or self.byte_order != "little":
            raise BundleFormatError(f"unsupported encoding {self.dtype}/{self.byte_order}")
        last = -1
        for rec in self.sentences:
            if rec.offset <= last:
                raise BundleFormatError("sentence offsets not strictly increasing")
            last = rec.offset

    def sentence_nbytes(self, rec: SentenceRecord) -> int:
        return (self.num_layers + 1) * rec.token_count * self.hidden_dim * 4

    def to_json(self) -> dict:
        return {
            "model_name": self.model_name,
            "num_layers": self.num_layers,
            "hidden_dim": self.hidden_dim,
            "dtype": self.dtype,
            "byte_order": self.byte_order,
            "pooling": self.pooling,
            "sentences": [
                {"id": r.id, "token_count": r.token_count, "offset": r.offset}
                for r in self.sentences
            ],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "BundleManifest":
        return cls(
            model_name=obj["model_name"],
            num_layers=obj["num_layers"],
            hidden_dim=obj["hidden_dim"],
            sentences=[
                SentenceRecord(r["id"], r["token_count"], r["offset"]) for r in obj["sentences"]
            ],
            dtype=obj.get("dtype", "float32"),
            byte_order=obj.get("byte_order", "little"),
            pooling=obj.get("pooling", "mean"),
        )


def write_header(fh, magic: bytes, manifest: dict) -> None:
    blob = json.dumps(manifest, sort_keys=True).encode("utf-8")
    fh.write(magic)
    fh.write(_HEADER_LEN.pack(len(blob)))
    fh.write(blob)


def read_header(fh, magic: bytes) -> dict:
    head = fh.read(8)
    if len(head) < 8:
        raise BundleTruncatedError("file too short for magic header")
    if head != magic:
        if head[:6] == magic[:6]:
            raise BundleVersionError(
                f"unsupported version {head.decode('ascii', 'replace')!r}; expected {magic.decode('ascii')!r}"
            )
        raise BundleFormatError(f"bad magic {head!r}; not a {magic.decode('ascii')!r} file")
    raw_len = fh.read(4)
    if len(raw_len) < 4:
        raise BundleTruncatedError("file too short for manifest length")
    (mlen,) = _HEADER_LEN.unpack(raw_len)
    blob = fh.read(mlen)
    if len(blob) < mlen:
        raise BundleTruncatedError(f"manifest truncated: expected {mlen} bytes, found {len(blob)}")
    try:
        return json.loads(blob.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as err:
        raise BundleFormatError(f"manifest is not valid JSON: {err}") from err


def _check_tensor(arr: np.ndarray, manifest: BundleManifest, sent_id: str) -> np.ndarray:
    arr = np.asarray(arr)
    if arr.ndim != 3 or arr.shape[0] != manifest.num_layers + 1 or arr.shape[2] != manifest.hidden_dim:
        raise BundleFormatError(
            f"{sent_id}: tensor shape {arr.shape} does not match "
            f"(L+1={manifest.num_layers + 1}, T, d={manifest.hidden_dim})"
        )
    if arr.shape[1] < 1:
        raise BundleFormatError(f"{sent_id}: empty sentence tensor")
    arr = np.ascontiguousarray(arr, dtype=_FLOAT32)
    if not np.all(np.isfinite(arr)):
        raise BundleFormatError(f"{sent_id}: non-finite values in tensor")
    return arr


def write_bundle(
    path: str | os.PathLike,
    manifest: BundleManifest,
    sentences: Iterable[tuple[str, np.ndarray]],
) -> BundleManifest:
    """Write (sentence_id, tensor) pairs to a bundle file atomically.

    If ``manifest.sentences`` is non-empty it is treated as the expected
    index (ids, token counts, order) and validated against the stream;
    otherwise the index is built while writing. Returns the final manifest.
    """
    path = os.fspath(path)
    expected = list(manifest.sentences)
    records: list[SentenceRecord] = []
    directory = os.path.dirname(path) or "."
    payload_fd, payload_path = tempfile.mkstemp(dir=directory, suffix=".payload")
    try:
        offset = 0
        with os.fdopen(payload_fd, "wb") as payload:
            for i, (sent_id, arr) in enumerate(sentences):
                arr = _check_tensor(arr, manifest, sent_id)
                if expected:
                    if i >= len(expected) or expected[i].id != sent_id or expected[i].token_count != arr.shape[1]:
                        raise BundleFormatError(
                            f"stream does not match manifest index at position {i} ({sent_id!r})"
                        )
                records.append(SentenceRecord(sent_id, arr.shape[1], offset))
                payload.write(arr.tobytes())
                offset += arr.nbytes
        if expected and len(records) != len(expected):
            raise BundleFormatError(
                f"stream ended after {len(records)} sentences; manifest lists {len(expected)}"
            )
        final = replace(manifest, sentences=records)
        final.validate()
        out_fd, out_path = tempfile.mkstemp(dir=directory, suffix=".tmp")
        try:
            with os.fdopen(out_fd, "wb") as out:
                write_header(out, MAGIC, final.to_json())
                with open(payload_path, "rb") as src:
                    while chunk := src.read(1 << 20):
                        out.write(chunk)
            os.replace(out_path, path)
        except BaseException:
            os.unlink(out_path)
            raise
        return final
    finally:
        if os.path.exists(payload_path):
            os.unlink(payload_path)


class BundleReader:
    """Random access to bundle tensors via a read-only memory map.

    Reads from multiple threads are safe; each call returns a fresh array.
    """

    def __init__(self, path: str | os.PathLike):
        path = os.fspath(path)
        self.path = path
        with open(path, "rb") as fh:
            raw = read_header(fh, MAGIC)
            payload_start = fh.tell()
        self.manifest = BundleManifest.from_json(raw)
        self.manifest.validate()
        self._payload_start = payload_start
        size = os.path.getsize(path)
        payload_size = size - payload_start
        expected = 0
        if self.manifest.sentences:
            last = self.manifest.sentences[-1]
            expected = last.offset + self.manifest.sentence_nbytes(last)
        if payload_size != expected:
            raise BundleTruncatedError(
                f"payload size mismatch: expected {expected} bytes, found {payload_size}"
            )
        self._file = open(path, "rb")
        self._mm = mmap.mmap(self._file.fileno(), 0, access=mmap.ACCESS_READ) if size else None
        self._by_id = {rec.id: rec for rec in self.manifest.sentences}

    def __len__(self) -> int:
        return len(self.manifest.sentences)

    def ids(self) -> list[str]:
        return [rec.id for rec in self.manifest.sentences]

    def _read(self, rec: SentenceRecord) -> np.ndarray:
        start = self._payload_start + rec.offset
        nbytes = self.manifest.sentence_nbytes(rec)
        buf = self._mm[start : start + nbytes]
        arr = np.frombuffer(buf, dtype=_FLOAT32).reshape(
            self.manifest.num_layers + 1, rec.token_count, self.manifest.hidden_dim
        )
        return arr.copy()

    def sentence(self, index: int) -> np.ndarray:
        return self._read(self.manifest.sentences[index])

    def get(self, sent_id: str) -> np.ndarray:
        if sent_id not in self._by_id:
            raise KeyError(sent_id)
        return self._read(self._by_id[sent_id])

    def __iter__(self) -> Iterator[tuple[str, np.ndarray]]:
        for rec in self.manifest.sentences:
            yield rec.id, self._read(rec)

    def close(self) -> None:
        if self._mm is not None:
            self._mm.close()
            self._mm = None
        self._file.close()

    def __enter__(self) -> "BundleReader":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def read_bundle(path: str | os.PathLike) -> tuple[BundleManifest, BundleReader]:
    reader = BundleReader(path)
    return reader.manifest, reader


def check_alignment(manifest: BundleManifest, sentences: Sequence) -> None:
    """Ids and token counts must match the companion treebank exactly, in order."""
    if len(manifest.sentences) != len(sentences):
        raise BundleAlignmentError(
            f"bundle has {len(manifest.sentences)} sentences, treebank has {len(sentences)}"
        )
    for rec, sent in zip(manifest.sentences, sentences):
        if rec.id != sent.id:
            raise BundleAlignmentError(f"sentence id mismatch: bundle {rec.id!r} vs treebank {sent.id!r}")
        if rec.token_count != len(sent.tokens):
            raise BundleAlignmentError(
                f"{rec.id}: bundle has {rec.token_count} tokens, treebank has {len(sent.tokens)}"
            )


def pool_subwords(
    subword_embs: np.ndarray,
    alignment: Sequence[tuple[int, int]],
    rule: str = "mean",
) -> np.ndarray:
    """Pool [L+1][S][d] subword embeddings to [L+1][T][d] word embeddings.

    ``alignment`` maps each word to a half-open subword span [start, end);
    spans must be non-empty, in order, and non-overlapping. Positions not
    covered by any span (e.g. sentence delimiter tokens) are dropped.
    """
    subword_embs = np.asarray(subword_embs)
    if subword_embs.ndim != 3:
        raise ValueError(f"expected [L+1][S][d] input, got shape {subword_embs.shape}")
    n_sub = subword_embs.shape[1]
    prev_end = 0
    for w, (start, end) in enumerate(alignment):
        if start >= end:
            raise ValueError(f"word {w}: empty subword span [{start}, {end})")
        if start < prev_end or end > n_sub:
            raise ValueError(f"word {w}: span [{start}, {end}) overlaps or exceeds {n_sub} subwords")
        prev_end = end
    if rule == "mean":
        cols = [
            subword_embs[:, start:end, :].mean(axis=1, dtype=np.float64)
            for start, end in alignment
        ]
    elif rule == "first":
        cols = [subword_embs[:, start, :].astype(np.float64) for start, _ in alignment]
    else:
        raise ValueError(f"unknown pooling rule {rule!r}")
    pooled = np.stack(cols, axis=1)
    return pooled.astype(subword_embs.dtype if subword_embs.dtype == np.float64 else np.float32)
