"""Dataset parsing, chunking, sliding windows, and train/test assembly.

Supported input formats:

* ``hdfs`` -- raw HDFS log plus a block-label CSV (``BlockId,Label``
  header); a line is anomalous iff it references a block labelled
  ``Anomaly``.
* ``bgl_tbird`` -- BGL/Thunderbird alert-tag convention: the first
  whitespace-delimited token is ``-`` for normal lines, anything else
  marks an anomaly; the tag is stripped from the text.
* ``generic`` -- each line is prefixed ``"0 "`` or ``"1 "``.

Ground-truth labels feed only test-set stratification and metrics; the
training pool can additionally be curated with the keyword filter so no
label ever leaks into training.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np

CHUNK_SIZE_DEFAULT = 1_000_000
DEFAULT_KEYWORDS = ("error", "fatal", "warning")

_BLOCK_ID_RE = re.compile(r"blk_-?\d+")


@dataclass(slots=True)
class LabeledLine:
    index: int
    text: str
    anomalous: bool


@dataclass
class Chunk:
    chunk_id: int
    lines: list[LabeledLine]

    def __len__(self) -> int:
        return len(self.lines)


@dataclass(slots=True)
class LabeledWindow:
    """A fixed-length slice of consecutive log lines.

    ``text`` is materialised lazily from the owning chunk to keep large
    window grids cheap.
    """

    chunk_id: int
    start: int
    length: int
    anomaly_count: int
    _chunk: Chunk = field(repr=False)

    @property
    def anomalous(self) -> bool:
        return self.anomaly_count >= 1

    @property
    def lines(self) -> list[LabeledLine]:
        return self._chunk.lines[self.start : self.start + self.length]

    @property
    def text(self) -> str:
        return "\n".join(ln.text for ln in self.lines)


class ParseError(ValueError):
    pass


def load_hdfs_labels(path: str) -> dict[str, bool]:
    """Block-label table: block id -> anomalous?"""
    table: dict[str, bool] = {}
    with open(path, newline="", encoding="utf-8", errors="replace") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or len(header) < 2:
            raise ParseError(f"{path}: expected a two-column CSV with header")
        for row in reader:
            if len(row) < 2:
                continue
            table[row[0].strip()] = row[1].strip().lower() == "anomaly"
    return table


def parse_dataset(
    path: str,
    fmt: str,
    hdfs_labels: dict[str, bool] | None = None,
    warnings: dict[str, int] | None = None,
) -> Iterator[LabeledLine]:
    """Stream labelled lines from a raw log file.

    Empty lines (after label-artifact stripping) are skipped and counted
    under ``warnings["empty_lines"]``; unknown HDFS block ids are treated
    as normal and counted under ``warnings["unknown_block_ids"]``.
    """
    if fmt not in ("hdfs", "bgl_tbird", "generic"):
        raise ValueError(f"unknown dataset format: {fmt!r}")
    if fmt == "hdfs" and hdfs_labels is None:
        raise ValueError("hdfs format requires a block-label table")
    counts = warnings if warnings is not None else {}
    counts.setdefault("empty_lines", 0)
    counts.setdefault("unknown_block_ids", 0)

    index = 0
    with open(path, encoding="utf-8", errors="replace") as f:
        for raw in f:
            raw = raw.rstrip("\n").rstrip("\r")
            if fmt == "generic":
                if len(raw) >= 2 and raw[0] in "01" and raw[1] == " ":
                    anomalous = raw[0] == "1"
                    text = raw[2:]
                else:
                    raise ParseError(f"line {index}: expected '0 ' or '1 ' prefix")
            elif fmt == "bgl_tbird":
                parts = raw.split(None, 1)
                if not parts:
                    counts["empty_lines"] += 1
                    continue
                tag = parts[0]
                text = parts[1] if len(parts) > 1 else ""
                if tag == "-":
                    anomalous = False
                else:
                    anomalous = True
            else:  # hdfs
                text = raw
                anomalous = False
                for block_id in _BLOCK_ID_RE.findall(raw):
                    if block_id in hdfs_labels:
                        if hdfs_labels[block_id]:
                            anomalous = True
                            break
                    else:
                        counts["unknown_block_ids"] += 1
            if not text.strip():
                counts["empty_lines"] += 1
                continue
            yield LabeledLine(index=index, text=text, anomalous=anomalous)
            index += 1


def chunk_stream(
    lines: Iterable[LabeledLine], chunk_size: int = CHUNK_SIZE_DEFAULT
) -> Iterator[Chunk]:
    """Partition a line stream into consecutive disjoint chunks.

    Every chunk except possibly the last has exactly ``chunk_size``
    lines; a trailing partial chunk is retained.
    """
    if chunk_size < 1:
        raise ValueError("chunk_size must be >= 1")
    buf: list[LabeledLine] = []
    chunk_id = 0
    for line in lines:
        buf.append(line)
        if len(buf) == chunk_size:
            yield Chunk(chunk_id=chunk_id, lines=buf)
            buf = []
            chunk_id += 1
    if buf:
        yield Chunk(chunk_id=chunk_id, lines=buf)


def window_count(length: int, w: int, s: int) -> int:
    return (length - w) // s + 1 if length >= w else 0


def make_windows(chunk: Chunk, w: int, s: int) -> list[LabeledWindow]:
    """Sliding windows at offsets 0, s, 2s, ... with start + w <= len(chunk).

    A window is anomalous iff it contains at least one anomalous line.
    """
    if w < 1 or s < 1:
        raise ValueError("window size and stride must be >= 1")
    n = len(chunk)
    if n < w:
        return []
    # prefix sums of line labels -> O(1) anomaly count per window
    flags = np.fromiter(
        (ln.anomalous for ln in chunk.lines), dtype=np.int64, count=n
    )
    prefix = np.concatenate([[0], np.cumsum(flags)])
    windows = []
    for start in range(0, n - w + 1, s):
        windows.append(
            LabeledWindow(
                chunk_id=chunk.chunk_id,
                start=start,
                length=w,
                anomaly_count=int(prefix[start + w] - prefix[start]),
                _chunk=chunk,
            )
        )
    return windows


def keyword_filter(
    windows: list[LabeledWindow],
    keywords: Iterable[str] = DEFAULT_KEYWORDS,
    exclusion_radius: int = 0,
) -> list[int]:
    """Indices of windows eligible for training under keyword curation.

    A window is eligible iff none of its lines contains a keyword
    (case-insensitive substring) and no line lies within
    ``exclusion_radius`` lines of a keyword-bearing line in the chunk.
    """
    if exclusion_radius < 0:
        raise ValueError("exclusion_radius must be >= 0")
    kws = [k.lower() for k in keywords]
    if not windows:
        return []
    if not kws:
        return list(range(len(windows)))
    chunk = windows[0]._chunk
    n = len(chunk)
    tainted = np.zeros(n + 1, dtype=np.int64)  # difference array
    for i, line in enumerate(chunk.lines):
        low = line.text.lower()
        if any(k in low for k in kws):
            lo = max(0, i - exclusion_radius)
            hi = min(n, i + exclusion_radius + 1)
            tainted[lo] += 1
            tainted[hi] -= 1
    bad = np.cumsum(tainted[:-1]) > 0
    bad_prefix = np.concatenate([[0], np.cumsum(bad)])
    eligible = []
    for idx, win in enumerate(windows):
        if bad_prefix[win.start + win.length] - bad_prefix[win.start] == 0:
            eligible.append(idx)
    return eligible


@dataclass
class SplitSpec:
    """Disjoint window-id sets for one chunk experiment."""

    train: list[int]
    test_normal: list[int]
    test_anomalous: list[int]
    seed: int
    shortfall_train: int = 0
    shortfall_test_normal: int = 0
    shortfall_test_anomalous: int = 0


class UnusableChunkError(ValueError):
    """Chunk has no normal or no anomalous windows to sample from."""


def sample_sets(
    windows: list[LabeledWindow],
    n_train: int,
    n_test_normal: int,
    n_test_anomalous: int,
    seed: int,
    train_eligible: list[int] | None = None,
) -> SplitSpec:
    """Seeded uniform sampling without replacement into three disjoint sets.

    Training is drawn from ``train_eligible`` (curated normal windows)
    when given, otherwise from all label-normal windows. Undersupplied
    strata take all available windows and record the shortfall.
    """
    if min(n_train, n_test_normal, n_test_anomalous) < 1:
        raise ValueError("all requested set sizes must be >= 1")
    normal_ids = [i for i, w in enumerate(windows) if not w.anomalous]
    anomalous_ids = [i for i, w in enumerate(windows) if w.anomalous]
    if not normal_ids or not anomalous_ids:
        raise UnusableChunkError(
            f"chunk unusable: {len(normal_ids)} normal / "
            f"{len(anomalous_ids)} anomalous windows"
        )
    pool_train = (
        sorted(i for i in train_eligible if not windows[i].anomalous)
        if train_eligible is not None
        else normal_ids
    )
    rng = np.random.default_rng(seed)

    def draw(pool, want, taken):
        avail = [i for i in pool if i not in taken]
        picked = rng.permutation(len(avail))[: min(want, len(avail))]
        chosen = sorted(avail[int(j)] for j in picked)
        return chosen, max(0, want - len(avail))

    taken: set[int] = set()
    train, short_tr = draw(pool_train, n_train, taken)
    taken.update(train)
    test_normal, short_tn = draw(normal_ids, n_test_normal, taken)
    taken.update(test_normal)
    test_anomalous, short_ta = draw(anomalous_ids, n_test_anomalous, taken)
    return SplitSpec(
        train=train,
        test_normal=test_normal,
        test_anomalous=test_anomalous,
        seed=seed,
        shortfall_train=short_tr,
        shortfall_test_normal=short_tn,
        shortfall_test_anomalous=short_ta,
    )


def write_manifest(windows: list[LabeledWindow], path: str) -> None:
    """Window manifest CSV: chunk_id,start,length,anomaly_count,label."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["chunk_id", "start", "length", "anomaly_count", "label"])
        for win in windows:
            w.writerow(
                [win.chunk_id, win.start, win.length, win.anomaly_count,
                 int(win.anomalous)]
            )


def read_manifest(path: str) -> list[dict]:
    rows = []
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            rows.append(
                {
                    "chunk_id": int(row["chunk_id"]),
                    "start": int(row["start"]),
                    "length": int(row["length"]),
                    "anomaly_count": int(row["anomaly_count"]),
                    "label": int(row["label"]),
                }
            )
    return rows
