"""Immutable single-segment inverted index with the corpus statistics BM25 needs.

On disk an index is a directory::

    <dir>/index.bin       versioned binary: header, analyzer config, doc table,
                          sorted term dictionary, delta-encoded postings, CRC32
    <dir>/meta.json       human-readable summary (not read back)
    <dir>/docstore.jsonl  raw document text, one {"id", "contents"} per line (optional)
"""

from __future__ import annotations

import io
import json
import logging
import os
import struct
import zlib
from collections import defaultdict
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Iterator, Mapping

from .analysis import AnalyzerConfig, DEFAULT_ANALYZER, TermVector, analyze, term_vector

logger = logging.getLogger(__name__)

MAGIC = b"FBLIDX\x00"
FORMAT_VERSION = 1
INDEX_FILE = "index.bin"
META_FILE = "meta.json"
DOCSTORE_FILE = "docstore.jsonl"


class DuplicateDocumentError(ValueError):
    pass


class EmptyIndexError(ValueError):
    pass


class IndexFormatError(ValueError):
    """Raised when an index file is truncated, corrupt, or of an unknown version."""


@dataclass(frozen=True)
class CorpusStats:
    num_docs: int
    total_terms: int
    doc_freq: Mapping[str, int]

    @property
    def avg_doc_length(self) -> float:
        return self.total_terms / self.num_docs if self.num_docs else 0.0


@dataclass(frozen=True, eq=False)
class InvertedIndex:
    postings: Mapping[str, tuple[tuple[str, int], ...]]
    doc_lengths: Mapping[str, int]
    analyzer: AnalyzerConfig = DEFAULT_ANALYZER
    doc_store: Mapping[str, str] | None = None
    stats: CorpusStats = field(init=False)

    def __post_init__(self):
        df = {t: len(p) for t, p in self.postings.items()}
        total = sum(self.doc_lengths.values())
        object.__setattr__(self, "stats", CorpusStats(len(self.doc_lengths), total, df))

    @property
    def num_docs(self) -> int:
        return self.stats.num_docs

    def __len__(self) -> int:
        return self.stats.num_docs

    def __contains__(self, term: str) -> bool:
        return term in self.postings

    def doc_freq(self, term: str) -> int:
        return self.stats.doc_freq.get(term, 0)

    @cached_property
    def _forward(self) -> dict[str, dict[str, int]]:
        fwd: dict[str, dict[str, int]] = {d: {} for d in self.doc_lengths}
        for term, plist in self.postings.items():
            for doc_id, tf in plist:
                fwd[doc_id][term] = tf
        return fwd

    def doc_vector(self, doc_id: str) -> TermVector:
        """Term vector of an indexed document, rebuilt from the postings."""
        try:
            return TermVector(self._forward[doc_id])
        except KeyError:
            raise KeyError(f"unknown doc_id {doc_id!r}") from None

    def doc_tokens(self, doc_id: str) -> list[str] | None:
        """Analyzed tokens in original order, if the raw text was stored."""
        if self.doc_store is None or doc_id not in self.doc_store:
            return None
        return analyze(self.doc_store[doc_id], self.analyzer)

    def analyze(self, text: str) -> list[str]:
        return analyze(text, self.analyzer)

    def same_as(self, other: "InvertedIndex") -> bool:
        return (
            dict(self.postings) == dict(other.postings)
            and dict(self.doc_lengths) == dict(other.doc_lengths)
            and self.analyzer == other.analyzer
            and self.stats == other.stats
        )


def build_index(corpus: Iterable[tuple[str, str]], analyzer: AnalyzerConfig | None = None,
                store_docs: bool = True) -> InvertedIndex:
    """Build an index from ``(doc_id, text)`` pairs.

    The result does not depend on the input order: postings and the document
    table are sorted by doc_id.
    """
    analyzer = analyzer or DEFAULT_ANALYZER
    vectors: dict[str, TermVector] = {}
    store: dict[str, str] = {}
    for doc_id, text in corpus:
        if not isinstance(doc_id, str) or not doc_id:
            raise ValueError(f"doc_id must be a non-empty string, got {doc_id!r}")
        if any(c.isspace() for c in doc_id):
            raise ValueError(f"doc_id must not contain whitespace: {doc_id!r}")
        if doc_id in vectors:
            raise DuplicateDocumentError(f"duplicate doc_id {doc_id!r}")
        vectors[doc_id] = term_vector(analyze(text, analyzer))
        if store_docs:
            store[doc_id] = text
    return index_from_vectors(vectors, analyzer, store if store_docs else None)


def index_from_vectors(vectors: Mapping[str, TermVector], analyzer: AnalyzerConfig | None = None,
                       doc_store: Mapping[str, str] | None = None) -> InvertedIndex:
    lists: dict[str, list[tuple[str, int]]] = defaultdict(list)
    doc_ids = sorted(vectors)
    for doc_id in doc_ids:
        for term, tf in vectors[doc_id].counts.items():
            lists[term].append((doc_id, tf))
    postings = {t: tuple(lists[t]) for t in sorted(lists)}
    lengths = {d: vectors[d].length for d in doc_ids}
    store = {d: doc_store[d] for d in doc_ids} if doc_store is not None else None
    return InvertedIndex(postings, lengths, analyzer or DEFAULT_ANALYZER, store)


def doc_frequency_ratio(index: InvertedIndex, term: str) -> float:
    if index.num_docs == 0:
        raise EmptyIndexError("document frequency ratio is undefined on an empty index")
    return index.doc_freq(term) / index.num_docs


def read_corpus_jsonl(path: str | Path) -> Iterator[tuple[str, str]]:
    """Yield ``(id, contents)`` from a JSON-Lines corpus. A ``title`` field, if present, is prepended."""
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                doc_id = str(obj["id"]) if "id" in obj else str(obj["_id"])
                text = obj.get("contents", obj.get("text"))
                if text is None:
                    raise KeyError("contents")
            except (json.JSONDecodeError, KeyError) as exc:
                raise ValueError(f"{path}:{lineno}: malformed corpus line ({exc})") from exc
            title = obj.get("title")
            yield doc_id, f"{title} {text}" if title else text


# -- binary format -----------------------------------------------------------

def _write_varint(buf: io.BytesIO, n: int) -> None:
    if n < 0:
        raise ValueError("varint must be non-negative")
    while True:
        byte = n & 0x7F
        n >>= 7
        if n:
            buf.write(bytes((byte | 0x80,)))
        else:
            buf.write(bytes((byte,)))
            return


def _write_str(buf: io.BytesIO, s: str) -> None:
    raw = s.encode("utf-8")
    _write_varint(buf, len(raw))
    buf.write(raw)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def varint(self) -> int:
        shift = result = 0
        data = self.data
        while True:
            if self.pos >= len(data):
                raise IndexFormatError("unexpected end of index data")
            byte = data[self.pos]
            self.pos += 1
            result |= (byte & 0x7F) << shift
            if not byte & 0x80:
                return result
            shift += 7

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise IndexFormatError("unexpected end of index data")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def string(self) -> str:
        try:
            return self.take(self.varint()).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise IndexFormatError("invalid UTF-8 in index data") from exc


def serialize_index(index: InvertedIndex) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<H", FORMAT_VERSION))
    header = {"analyzer": index.analyzer.to_dict(), "num_docs": index.num_docs,
              "total_terms": index.stats.total_terms}
    _write_str(buf, json.dumps(header, sort_keys=True, separators=(",", ":")))

    doc_ids = sorted(index.doc_lengths)
    docno = {d: i for i, d in enumerate(doc_ids)}
    _write_varint(buf, len(doc_ids))
    for d in doc_ids:
        _write_str(buf, d)
        _write_varint(buf, index.doc_lengths[d])

    terms = sorted(index.postings)
    _write_varint(buf, len(terms))
    for term in terms:
        plist = index.postings[term]
        _write_str(buf, term)
        _write_varint(buf, len(plist))
        prev = -1
        for doc_id, tf in plist:
            n = docno[doc_id]
            _write_varint(buf, n - prev - 1)
            _write_varint(buf, tf)
            prev = n
    body = buf.getvalue()
    return body + struct.pack("<I", zlib.crc32(body))


def deserialize_index(data: bytes, doc_store: Mapping[str, str] | None = None) -> InvertedIndex:
    if len(data) < len(MAGIC) + 2 + 4:
        raise IndexFormatError("index file too short")
    if not data.startswith(MAGIC):
        raise IndexFormatError("not a feedbacklab index (bad magic)")
    (version,) = struct.unpack_from("<H", data, len(MAGIC))
    if version != FORMAT_VERSION:
        raise IndexFormatError(f"unsupported index format version {version} (expected {FORMAT_VERSION})")
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(body) != crc:
        raise IndexFormatError("index checksum mismatch (file corrupt or truncated)")

    r = _Reader(body)
    r.pos = len(MAGIC) + 2
    try:
        header = json.loads(r.string())
        analyzer = AnalyzerConfig.from_dict(header["analyzer"])
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise IndexFormatError(f"bad index header: {exc}") from exc

    doc_ids, lengths = [], {}
    for _ in range(r.varint()):
        d = r.string()
        doc_ids.append(d)
        lengths[d] = r.varint()
    postings = {}
    for _ in range(r.varint()):
        term = r.string()
        plist = []
        prev = -1
        for _ in range(r.varint()):
            prev += r.varint() + 1
            if prev >= len(doc_ids):
                raise IndexFormatError(f"posting for {term!r} points past the doc table")
            plist.append((doc_ids[prev], r.varint()))
        postings[term] = tuple(plist)
    if r.pos != len(body):
        raise IndexFormatError("trailing bytes after postings")
    index = InvertedIndex(postings, lengths, analyzer, doc_store)
    if index.num_docs != header["num_docs"] or index.stats.total_terms != header["total_terms"]:
        raise IndexFormatError("header statistics disagree with index contents")
    return index


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def save_index(index: InvertedIndex, path: str | Path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    _atomic_write(out / INDEX_FILE, serialize_index(index))
    meta = {
        "format_version": FORMAT_VERSION,
        "num_docs": index.num_docs,
        "num_terms": len(index.postings),
        "total_terms": index.stats.total_terms,
        "avg_doc_length": index.stats.avg_doc_length,
        "analyzer": index.analyzer.to_dict(),
        "has_docstore": index.doc_store is not None,
    }
    _atomic_write(out / META_FILE, (json.dumps(meta, indent=2, sort_keys=True) + "\n").encode())
    store_path = out / DOCSTORE_FILE
    if index.doc_store is not None:
        lines = [json.dumps({"id": d, "contents": index.doc_store[d]}, ensure_ascii=False)
                 for d in sorted(index.doc_store)]
        _atomic_write(store_path, ("\n".join(lines) + "\n" if lines else "").encode("utf-8"))
    elif store_path.exists():
        store_path.unlink()
    return out


def load_index(path: str | Path) -> InvertedIndex:
    src = Path(path)
    bin_path = src / INDEX_FILE if src.is_dir() else src
    try:
        data = bin_path.read_bytes()
    except FileNotFoundError:
        raise FileNotFoundError(f"no index found at {bin_path}") from None
    store = None
    store_path = bin_path.parent / DOCSTORE_FILE
    if store_path.exists():
        store = dict(read_corpus_jsonl(store_path))
    index = deserialize_index(data, store)
    if store is not None and set(store) != set(index.doc_lengths):
        raise IndexFormatError("docstore does not match the indexed documents")
    logger.debug("loaded index %s: %d docs, %d terms", src, index.num_docs, len(index.postings))
    return index
