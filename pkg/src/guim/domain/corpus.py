"""
Interaction Corpus Domain Models.

Purchase sequences, cutoff partitioning, daily time bucketing and the
line-delimited corpus file format.

File layout of a saved corpus directory:
    catalog.jsonl     header record, then one ItemRecord per line
    sequences.jsonl   header record, then one InteractionSequence per line
    profiles.jsonl    optional planted user attributes (synthetic corpora)
"""

from __future__ import annotations

import bisect
from collections.abc import Iterable, Iterator
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from pydantic import BaseModel, ConfigDict, ValidationError

from guim.core.exceptions import (
    CorpusError,
    CorpusParseError,
    OrderingError,
    TimeRangeError,
)
from guim.core.logging import get_logger

logger = get_logger(__name__)

SECONDS_PER_DAY = 86_400
FORMAT_VERSION = 1
CATALOG_FILE = "catalog.jsonl"
SEQUENCES_FILE = "sequences.jsonl"
PROFILES_FILE = "profiles.jsonl"


# =============================================================================
# Domain Types
# =============================================================================


@dataclass(frozen=True)
class ItemRecord:
    """An item with its category and title word tokens."""

    item_id: int
    category_id: int
    title_tokens: tuple[int, ...] = ()


@dataclass(frozen=True)
class Interaction:
    """One purchase: an item reference and a timestamp in epoch seconds."""

    item_id: int
    timestamp: int


@dataclass(frozen=True)
class InteractionSequence:
    """
    One user's purchases in ``[cutoff - D1 days, cutoff + D2 days)``.

    Attributes:
        user_id: User identifier
        interactions: Purchases, chronologically nondecreasing
        cutoff: Cutoff timestamp T
        window: (D1, D2) in days
    """

    user_id: int
    interactions: tuple[Interaction, ...]
    cutoff: int
    window: tuple[int, int] = (365, 30)

    @property
    def history_start(self) -> int:
        """First timestamp of the history window, T - D1."""
        return self.cutoff - self.window[0] * SECONDS_PER_DAY

    @property
    def horizon_end(self) -> int:
        """End (exclusive) of the matching window, T + D2."""
        return self.cutoff + self.window[1] * SECONDS_PER_DAY


@dataclass
class Corpus:
    """Catalog, sequences and vocabulary sizes of one interaction corpus."""

    catalog: list[ItemRecord]
    sequences: list[InteractionSequence]
    num_categories: int
    word_vocab_size: int
    profiles: dict[int, dict[str, Any]] = field(default_factory=dict)

    def item_map(self) -> dict[int, ItemRecord]:
        """Map item id to its record."""
        return {item.item_id: item for item in self.catalog}


# =============================================================================
# Partitioning and Time Buckets
# =============================================================================


def check_sorted(seq: InteractionSequence) -> None:
    """Raise OrderingError if timestamps decrease anywhere."""
    stamps = [a.timestamp for a in seq.interactions]
    for position in range(1, len(stamps)):
        if stamps[position] < stamps[position - 1]:
            raise OrderingError(seq.user_id, position)


def split_at_cutoff(
    seq: InteractionSequence,
    cutoff: int | None = None,
) -> tuple[list[Interaction], list[Interaction]]:
    """
    Partition a sequence at its cutoff T.

    A timestamp equal to T belongs to the post window ``[T, T + D2)``.

    Args:
        seq: Sorted interaction sequence
        cutoff: Alternative cutoff (defaults to ``seq.cutoff``)

    Returns:
        (pre, post) lists whose concatenation is the original sequence

    Raises:
        OrderingError: If the interactions are not sorted
    """
    check_sorted(seq)
    boundary = seq.cutoff if cutoff is None else cutoff
    stamps = [a.timestamp for a in seq.interactions]
    split = bisect.bisect_left(stamps, boundary)
    return list(seq.interactions[:split]), list(seq.interactions[split:])


def day_bucket(
    timestamp: int | None,
    cutoff: int,
    window_days: int,
    time_rows: int | None = None,
) -> int:
    """
    Map a pre-cutoff timestamp to its daily time-embedding row.

    ``None`` is the CLS sentinel and maps to row 0 (t_0). Day k of the
    history window maps to row k + 1; rows beyond the table clamp to the
    last row. The table has ``window_days + 1`` rows unless overridden.

    Raises:
        TimeRangeError: If the timestamp precedes T - D1 or is not before T
    """
    if timestamp is None:
        return 0
    start = cutoff - window_days * SECONDS_PER_DAY
    if timestamp < start:
        raise TimeRangeError(timestamp, f"Timestamp {timestamp} precedes T-D1={start}")
    if timestamp >= cutoff:
        raise TimeRangeError(
            timestamp, f"Post-cutoff timestamp {timestamp} is never time-bucketed"
        )
    rows = window_days + 1 if time_rows is None else time_rows
    bucket = 1 + (timestamp - start) // SECONDS_PER_DAY
    return min(bucket, rows - 1)


def history_window(
    seq: InteractionSequence,
    cutoff: int | None = None,
) -> list[Interaction]:
    """Pre-cutoff interactions that fall inside ``[cutoff - D1, cutoff)``."""
    boundary = seq.cutoff if cutoff is None else cutoff
    start = boundary - seq.window[0] * SECONDS_PER_DAY
    pre, _ = split_at_cutoff(seq, boundary)
    return [a for a in pre if a.timestamp >= start]


def horizon_window(seq: InteractionSequence, days: int | None = None) -> list[Interaction]:
    """Post-cutoff interactions inside ``[T, T + days)`` (default D2)."""
    span = seq.window[1] if days is None else days
    end = seq.cutoff + span * SECONDS_PER_DAY
    _, post = split_at_cutoff(seq)
    return [a for a in post if a.timestamp < end]


# =============================================================================
# Corpus Utilities
# =============================================================================


def purchase_counts(sequences: Iterable[InteractionSequence]) -> dict[int, int]:
    """Count purchases per item id over all interactions."""
    counts: dict[int, int] = {}
    for seq in sequences:
        for a in seq.interactions:
            counts[a.item_id] = counts.get(a.item_id, 0) + 1
    return counts


def split_users(
    sequences: list[InteractionSequence],
    ratio: float = 0.9,
    seed: int = 0,
) -> tuple[list[InteractionSequence], list[InteractionSequence]]:
    """
    Split sequences by user into train and validation parts.

    Original order is preserved inside each part. With at least two users
    both parts are nonempty.
    """
    if not sequences:
        raise CorpusError("Cannot split an empty corpus")
    n = len(sequences)
    n_train = int(round(n * ratio))
    if n >= 2:
        n_train = min(max(n_train, 1), n - 1)
    order = np.random.default_rng([seed, 0x5EED]).permutation(n)
    train_idx = set(order[:n_train].tolist())
    train = [s for i, s in enumerate(sequences) if i in train_idx]
    valid = [s for i, s in enumerate(sequences) if i not in train_idx]
    return train, valid


def corpus_statistics(sequences: list[InteractionSequence]) -> dict[str, dict[str, float]]:
    """
    Summarise purchases per user before (N) and after (b) the cutoff.

    Returns:
        ``{"N": stats, "b": stats}`` with mean, stddev, min, q25, median,
        q75, q99 and max
    """
    counts: dict[str, list[int]] = {"N": [], "b": []}
    for seq in sequences:
        pre, post = split_at_cutoff(seq)
        counts["N"].append(len(pre))
        counts["b"].append(len(post))

    summary: dict[str, dict[str, float]] = {}
    for name, values in counts.items():
        arr = np.asarray(values, dtype=np.float64)
        if arr.size == 0:
            summary[name] = {}
            continue
        q25, q50, q75, q99 = np.quantile(arr, [0.25, 0.5, 0.75, 0.99])
        summary[name] = {
            "mean": float(arr.mean()),
            "stddev": float(arr.std(ddof=1)) if arr.size > 1 else 0.0,
            "min": float(arr.min()),
            "q25": float(q25),
            "median": float(q50),
            "q75": float(q75),
            "q99": float(q99),
            "max": float(arr.max()),
        }
    return summary


def validate_catalog(catalog: Iterable[ItemRecord], num_categories: int, word_vocab_size: int) -> None:
    """Check category and word ids against the vocabulary sizes."""
    for item in catalog:
        if not 0 <= item.category_id < num_categories:
            raise CorpusError(
                f"Item {item.item_id} category {item.category_id} out of range",
                details={"num_categories": num_categories},
            )
        for token in item.title_tokens:
            if not 0 <= token < word_vocab_size:
                raise CorpusError(
                    f"Item {item.item_id} word {token} out of range",
                    details={"word_vocab_size": word_vocab_size},
                )


# =============================================================================
# Serialization
# =============================================================================


class _Record(BaseModel):
    model_config = ConfigDict(extra="forbid", strict=True)


class _CatalogHeader(_Record):
    record: str = "header"
    kind: str = "catalog"
    version: int = FORMAT_VERSION
    num_categories: int
    word_vocab_size: int


class _CatalogRow(_Record):
    item_id: int
    category_id: int
    title_tokens: list[int]


class _SequencesHeader(_Record):
    record: str = "header"
    kind: str = "sequences"
    version: int = FORMAT_VERSION
    window_days: list[int]


class _InteractionRow(_Record):
    item_id: int
    ts: int


class _SequenceRow(_Record):
    user_id: int
    cutoff_ts: int
    interactions: list[_InteractionRow]
    window_days: list[int] | None = None


class _ProfileRow(_Record):
    user_id: int
    interests: list[int]
    dominant_cluster: int


def _parse(path: Path, line_no: int, line: str, model: type[_Record]) -> Any:
    try:
        return model.model_validate_json(line)
    except ValidationError as e:
        first = e.errors()[0]
        loc = ".".join(str(part) for part in first["loc"]) or None
        raise CorpusParseError(str(path), line_no, loc, first["msg"]) from e


def _lines(path: Path) -> Iterator[tuple[int, str]]:
    if not path.exists():
        raise CorpusError(f"Corpus file not found: {path}", details={"path": str(path)})
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if line.strip():
                yield line_no, line


def save_corpus(corpus: Corpus, directory: Path) -> None:
    """
    Write catalog, sequences and profiles as line-delimited records.

    The sequences header carries the window of the first sequence; a
    sequence with a different window stores its own.
    """
    directory.mkdir(parents=True, exist_ok=True)
    default_window = list(corpus.sequences[0].window) if corpus.sequences else [365, 30]

    with open(directory / CATALOG_FILE, "w", encoding="utf-8", newline="\n") as f:
        header = _CatalogHeader(
            num_categories=corpus.num_categories,
            word_vocab_size=corpus.word_vocab_size,
        )
        f.write(header.model_dump_json() + "\n")
        for item in corpus.catalog:
            row = _CatalogRow(
                item_id=item.item_id,
                category_id=item.category_id,
                title_tokens=list(item.title_tokens),
            )
            f.write(row.model_dump_json() + "\n")

    with open(directory / SEQUENCES_FILE, "w", encoding="utf-8", newline="\n") as f:
        f.write(_SequencesHeader(window_days=default_window).model_dump_json() + "\n")
        for seq in corpus.sequences:
            window = list(seq.window)
            row = _SequenceRow(
                user_id=seq.user_id,
                cutoff_ts=seq.cutoff,
                interactions=[
                    _InteractionRow(item_id=a.item_id, ts=a.timestamp)
                    for a in seq.interactions
                ],
                window_days=None if window == default_window else window,
            )
            f.write(row.model_dump_json(exclude_none=True) + "\n")

    if corpus.profiles:
        with open(directory / PROFILES_FILE, "w", encoding="utf-8", newline="\n") as f:
            for user_id in sorted(corpus.profiles):
                profile = corpus.profiles[user_id]
                row = _ProfileRow(
                    user_id=user_id,
                    interests=list(profile["interests"]),
                    dominant_cluster=profile["dominant_cluster"],
                )
                f.write(row.model_dump_json() + "\n")

    logger.info(
        "corpus saved",
        path=str(directory),
        items=len(corpus.catalog),
        users=len(corpus.sequences),
    )


def load_corpus(directory: Path) -> Corpus:
    """
    Read a corpus directory written by save_corpus.

    Raises:
        CorpusParseError: Naming the file, line number and offending field
    """
    catalog_path = directory / CATALOG_FILE
    sequences_path = directory / SEQUENCES_FILE

    catalog: list[ItemRecord] = []
    header: _CatalogHeader | None = None
    for line_no, line in _lines(catalog_path):
        if header is None:
            header = _parse(catalog_path, line_no, line, _CatalogHeader)
            continue
        row = _parse(catalog_path, line_no, line, _CatalogRow)
        catalog.append(ItemRecord(row.item_id, row.category_id, tuple(row.title_tokens)))
    if header is None:
        raise CorpusParseError(str(catalog_path), 1, "record", "missing header record")

    sequences: list[InteractionSequence] = []
    seq_header: _SequencesHeader | None = None
    for line_no, line in _lines(sequences_path):
        if seq_header is None:
            seq_header = _parse(sequences_path, line_no, line, _SequencesHeader)
            continue
        srow = _parse(sequences_path, line_no, line, _SequenceRow)
        window = srow.window_days or seq_header.window_days
        sequences.append(
            InteractionSequence(
                user_id=srow.user_id,
                interactions=tuple(Interaction(a.item_id, a.ts) for a in srow.interactions),
                cutoff=srow.cutoff_ts,
                window=(window[0], window[1]),
            )
        )
    if seq_header is None:
        raise CorpusParseError(str(sequences_path), 1, "record", "missing header record")

    profiles: dict[int, dict[str, Any]] = {}
    profiles_path = directory / PROFILES_FILE
    if profiles_path.exists():
        for line_no, line in _lines(profiles_path):
            prow = _parse(profiles_path, line_no, line, _ProfileRow)
            profiles[prow.user_id] = {
                "interests": list(prow.interests),
                "dominant_cluster": prow.dominant_cluster,
            }

    validate_catalog(catalog, header.num_categories, header.word_vocab_size)
    return Corpus(
        catalog=catalog,
        sequences=sequences,
        num_categories=header.num_categories,
        word_vocab_size=header.word_vocab_size,
        profiles=profiles,
    )
