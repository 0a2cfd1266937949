"""Window embeddings: native TF-IDF and the external embedding container.

Tokenizer: split on non-alphanumerics, lowercase, drop empty and
pure-digit tokens (timestamps, block ids, and other instance identifiers
must not be memorised by a parser-free method).

External embeddings (e.g. from sentence encoders run elsewhere) arrive
as "K4EM" files: magic, u32 version, u64 rows, u64 dims, row-major
little-endian float64 payload, then per-row (chunk_id, start) u64 pairs
aligning rows with a window manifest.
"""

from __future__ import annotations

import csv
import math
import re
import struct
from dataclasses import dataclass

import numpy as np

MAX_FEATURES_DEFAULT = 5000

K4EM_MAGIC = b"K4EM"
K4EM_VERSION = 1

_TOKEN_RE = re.compile(r"[0-9a-zA-Z]+")
_DIGITS_RE = re.compile(r"\d+\Z")


def tokenize(text: str, lowercase: bool = True) -> list[str]:
    if lowercase:
        text = text.lower()
    return [t for t in _TOKEN_RE.findall(text) if not _DIGITS_RE.match(t)]


@dataclass
class TfidfVocab:
    """Term -> column index with smoothed inverse document frequencies.

    idf(t) = ln((1 + N) / (1 + df(t))) + 1, fitted on training windows
    only; the vocabulary never grows at embedding time.
    """

    terms: dict[str, int]
    idf: np.ndarray
    df: np.ndarray
    fitted_on: int
    lowercase: bool = True

    @property
    def dims(self) -> int:
        return len(self.terms)

    def save_csv(self, path: str) -> None:
        inv = sorted(self.terms.items(), key=lambda kv: kv[1])
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["term", "index", "idf", "df"])
            for term, idx in inv:
                w.writerow([term, idx, repr(float(self.idf[idx])), int(self.df[idx])])

    @classmethod
    def load_csv(cls, path: str, fitted_on: int = 0) -> "TfidfVocab":
        terms: dict[str, int] = {}
        idf: list[float] = []
        df: list[int] = []
        with open(path, newline="") as f:
            for row in csv.DictReader(f):
                terms[row["term"]] = int(row["index"])
                idf.append(float(row["idf"]))
                df.append(int(row["df"]))
        order = np.argsort(list(terms.values()))
        idf_arr = np.asarray(idf)[order]
        df_arr = np.asarray(df)[order]
        terms = {t: i for t, i in sorted(terms.items(), key=lambda kv: kv[1])}
        return cls(terms=terms, idf=idf_arr, df=df_arr, fitted_on=fitted_on)


def fit_tfidf(
    train_texts,
    max_features: int = MAX_FEATURES_DEFAULT,
    lowercase: bool = True,
) -> TfidfVocab:
    """Build the vocabulary and idf weights from training windows only.

    Vocabulary keeps the ``max_features`` terms with highest document
    frequency, ties broken lexicographically.
    """
    df_counts: dict[str, int] = {}
    n_docs = 0
    for text in train_texts:
        n_docs += 1
        for term in set(tokenize(text, lowercase)):
            df_counts[term] = df_counts.get(term, 0) + 1
    if n_docs == 0:
        raise ValueError("empty training corpus")
    ranked = sorted(df_counts.items(), key=lambda kv: (-kv[1], kv[0]))
    if max_features is not None:
        ranked = ranked[:max_features]
    ranked.sort(key=lambda kv: kv[0])  # stable column order: lexicographic
    terms = {term: i for i, (term, _) in enumerate(ranked)}
    df = np.array([df_counts[t] for t in terms], dtype=np.int64)
    idf = np.log((1.0 + n_docs) / (1.0 + df)) + 1.0
    return TfidfVocab(
        terms=terms, idf=idf, df=df, fitted_on=n_docs, lowercase=lowercase
    )


def embed_tfidf(vocab: TfidfVocab, text: str) -> np.ndarray:
    """Raw tf * idf, L2-normalised; unknown terms are ignored.

    A window with no in-vocabulary terms embeds to the zero vector.
    """
    row = np.zeros(vocab.dims, dtype=np.float64)
    for term in tokenize(text, vocab.lowercase):
        idx = vocab.terms.get(term)
        if idx is not None:
            row[idx] += 1.0
    row *= vocab.idf
    norm = math.sqrt(float(row @ row))
    if norm > 0.0:
        row /= norm
    return row


def embed_tfidf_many(vocab: TfidfVocab, texts) -> np.ndarray:
    rows = [embed_tfidf(vocab, t) for t in texts]
    if not rows:
        return np.zeros((0, vocab.dims), dtype=np.float64)
    return np.vstack(rows)


class EmbeddingFormatError(ValueError):
    pass


def write_k4em(path: str, matrix: np.ndarray, window_ids) -> None:
    """Serialise an embedding matrix with per-row (chunk_id, start) ids."""
    m = np.ascontiguousarray(matrix, dtype="<f8")
    if m.ndim != 2:
        raise ValueError("matrix must be 2-D")
    ids = list(window_ids)
    if len(ids) != m.shape[0]:
        raise ValueError("one window id required per matrix row")
    with open(path, "wb") as f:
        f.write(K4EM_MAGIC)
        f.write(struct.pack("<I", K4EM_VERSION))
        f.write(struct.pack("<QQ", m.shape[0], m.shape[1]))
        f.write(m.tobytes())
        for chunk_id, start in ids:
            f.write(struct.pack("<QQ", chunk_id, start))


def read_k4em(path: str) -> tuple[np.ndarray, list[tuple[int, int]]]:
    """Load and validate a K4EM file; rejects bad magic, version,
    payload-length mismatches, and non-finite values."""
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != K4EM_MAGIC:
        raise EmbeddingFormatError(f"{path}: bad magic {blob[:4]!r}")
    if len(blob) < 24:
        raise EmbeddingFormatError(f"{path}: truncated header")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != K4EM_VERSION:
        raise EmbeddingFormatError(f"{path}: unsupported version {version}")
    rows, dims = struct.unpack_from("<QQ", blob, 8)
    payload = rows * dims * 8
    ids_bytes = rows * 16
    if len(blob) != 24 + payload + ids_bytes:
        raise EmbeddingFormatError(
            f"{path}: expected {24 + payload + ids_bytes} bytes, got {len(blob)}"
        )
    matrix = np.frombuffer(blob, dtype="<f8", count=rows * dims, offset=24)
    matrix = matrix.reshape(rows, dims).copy()
    if not np.isfinite(matrix).all():
        raise EmbeddingFormatError(f"{path}: payload contains non-finite values")
    raw_ids = np.frombuffer(blob, dtype="<u8", count=rows * 2, offset=24 + payload)
    ids = [(int(raw_ids[2 * i]), int(raw_ids[2 * i + 1])) for i in range(rows)]
    return matrix, ids


def load_external(path: str, manifest_rows=None):
    """Load a K4EM file, optionally validating ids against a manifest."""
    matrix, ids = read_k4em(path)
    if manifest_rows is not None:
        known = {(r["chunk_id"], r["start"]) for r in manifest_rows}
        for wid in ids:
            if wid not in known:
                raise EmbeddingFormatError(
                    f"{path}: window id {wid} not present in manifest"
                )
    return matrix, ids
