"""Typed behavior sequences and the file formats they travel in.

The graph-embedding task and the CTR task share one raw input: a user's
time-ordered clicks and queries.  This module owns those types, the
tab-separated log format, the labeled-sample format, and the small
sequence manipulations (split, truncate, seeds filtering) everything
else builds on.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import ContractViolation, LogFormatError

log = logging.getLogger(__name__)

# A log with more than this fraction of malformed lines is rejected outright.
MALFORMED_HARD_LIMIT = 0.10


class EventKind(IntEnum):
    CLICK = 0
    QUERY = 1


_KIND_LETTER = {EventKind.CLICK: "C", EventKind.QUERY: "Q"}
_LETTER_KIND = {"C": EventKind.CLICK, "Q": EventKind.QUERY}


@dataclass(frozen=True)
class BehaviorEvent:
    """One click or query: entity id, time, and its category set."""

    kind: EventKind
    entity_id: int
    timestamp: int
    categories: frozenset[int]

    def __post_init__(self):
        if not self.categories:
            raise ContractViolation("event categories must be nonempty")
        if self.timestamp < 0:
            raise ContractViolation("event timestamp must be >= 0")

    def shares_category(self, other: "BehaviorEvent") -> bool:
        return bool(self.categories & other.categories)


def event_sort_key(event: BehaviorEvent) -> tuple[int, int, int]:
    # Ties on timestamp are broken by (kind, entity_id) so that sorting
    # is reproducible no matter the input order.
    return (event.timestamp, int(event.kind), event.entity_id)


@dataclass
class BehaviorSequence:
    """All of one user's events, ascending in time."""

    user_id: int
    events: list[BehaviorEvent]

    @classmethod
    def from_events(cls, user_id: int, events: Iterable[BehaviorEvent]) -> "BehaviorSequence":
        return cls(user_id=user_id, events=sorted(events, key=event_sort_key))


@dataclass(eq=False)
class TrainingSample:
    """One impression: target item, issuing query, history, label.

    ``other_features`` is a small dense vector carried opaquely from the
    log; the model concatenates it to the similarity features.
    """

    user_id: int
    target_item: BehaviorEvent
    current_query: BehaviorEvent
    click_seq: list[BehaviorEvent]
    query_seq: list[BehaviorEvent]
    seeds_seq: list[BehaviorEvent]
    other_features: np.ndarray
    label: int

    def validate(self) -> None:
        if self.target_item.kind != EventKind.CLICK:
            raise ContractViolation("target_item must be a click event")
        if self.current_query.kind != EventKind.QUERY:
            raise ContractViolation("current_query must be a query event")
        if self.label not in (0, 1):
            raise ContractViolation(f"label must be 0 or 1, got {self.label}")
        if self.target_item in self.click_seq:
            raise ContractViolation("target_item must not appear in click_seq")
        for event in (*self.click_seq, *self.query_seq, *self.seeds_seq, self.current_query):
            if event.timestamp >= self.target_item.timestamp:
                raise ContractViolation("history events must precede the target timestamp")
        if not np.all(np.isfinite(self.other_features)):
            raise ContractViolation("other_features must be finite")


# ---------------------------------------------------------------------------
# sequence manipulation


def truncate_recent(events: list[BehaviorEvent], limit: int | None) -> list[BehaviorEvent]:
    """Keep the most recent ``limit`` events (all of them if limit is None)."""
    if limit is None or len(events) <= limit:
        return list(events)
    return list(events[-limit:])


def split_sequences(
    seq: BehaviorSequence,
    l_click: int | None = None,
    l_query: int | None = None,
) -> tuple[list[BehaviorEvent], list[BehaviorEvent]]:
    """Partition a sequence into (clicks, queries), keeping time order.

    Each side is truncated to its most recent ``l_click`` / ``l_query``
    events after the split.
    """
    clicks = [e for e in seq.events if e.kind == EventKind.CLICK]
    queries = [e for e in seq.events if e.kind == EventKind.QUERY]
    return truncate_recent(clicks, l_click), truncate_recent(queries, l_query)


def derive_seeds_seq(
    click_seq: list[BehaviorEvent], current_query: BehaviorEvent
) -> list[BehaviorEvent]:
    """Clicks whose category set overlaps the current query's, order kept."""
    return [e for e in click_seq if e.shares_category(current_query)]


# ---------------------------------------------------------------------------
# behavior-log lines: user_id \t C|Q \t entity_id \t timestamp \t cat1,cat2,...


def format_log_line(user_id: int, event: BehaviorEvent) -> str:
    cats = ",".join(str(c) for c in sorted(event.categories))
    return f"{user_id}\t{_KIND_LETTER[event.kind]}\t{event.entity_id}\t{event.timestamp}\t{cats}"


def _parse_log_line(line: str) -> tuple[int, BehaviorEvent]:
    parts = line.split("\t")
    if len(parts) != 5:
        raise ValueError(f"expected 5 fields, got {len(parts)}")
    user_id = int(parts[0])
    kind = _LETTER_KIND[parts[1]]
    entity_id = int(parts[2])
    timestamp = int(parts[3])
    categories = frozenset(int(c) for c in parts[4].split(",") if c != "")
    return user_id, BehaviorEvent(kind, entity_id, timestamp, categories)


def write_log(sequences: Iterable[BehaviorSequence], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for seq in sequences:
            for event in seq.events:
                fh.write(format_log_line(seq.user_id, event) + "\n")


def parse_log(path) -> list[BehaviorSequence]:
    """Parse a behavior log into one sequence per user.

    Users appear in order of first occurrence; events are sorted within
    each user.  Malformed lines are skipped and counted; if more than
    10% of lines are malformed the whole file is rejected.
    """
    by_user: dict[int, list[BehaviorEvent]] = {}
    total = 0
    malformed = 0
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            total += 1
            try:
                user_id, event = _parse_log_line(line)
            except (ValueError, KeyError, IndexError, ContractViolation):
                malformed += 1
                continue
            by_user.setdefault(user_id, []).append(event)
    if malformed:
        log.warning("parse_log: skipped %d malformed of %d lines in %s",
                    malformed, total, path)
        if malformed > MALFORMED_HARD_LIMIT * total:
            raise LogFormatError(
                f"{path}: {malformed}/{total} lines malformed (> {MALFORMED_HARD_LIMIT:.0%})")
    return [BehaviorSequence.from_events(uid, events) for uid, events in by_user.items()]


# ---------------------------------------------------------------------------
# labeled-sample lines (tab-separated):
#   user_id \t label \t target \t current_query \t click_seq \t query_seq \t other_features
# where an event is "entity_id:timestamp:cat1,cat2" and sequences join
# events with ';'.  The seeds sequence is derived, not stored.


def _format_event(event: BehaviorEvent) -> str:
    cats = ",".join(str(c) for c in sorted(event.categories))
    return f"{event.entity_id}:{event.timestamp}:{cats}"


def _parse_event(raw: str, kind: EventKind) -> BehaviorEvent:
    entity_id, timestamp, cats = raw.split(":")
    categories = frozenset(int(c) for c in cats.split(",") if c != "")
    return BehaviorEvent(kind, int(entity_id), int(timestamp), categories)


def _format_seq(events: list[BehaviorEvent]) -> str:
    return ";".join(_format_event(e) for e in events)


def _parse_seq(raw: str, kind: EventKind) -> list[BehaviorEvent]:
    if not raw:
        return []
    return [_parse_event(part, kind) for part in raw.split(";")]


def format_sample(sample: TrainingSample) -> str:
    feats = ",".join(f"{v:.8g}" for v in sample.other_features)
    return "\t".join([
        str(sample.user_id),
        str(sample.label),
        _format_event(sample.target_item),
        _format_event(sample.current_query),
        _format_seq(sample.click_seq),
        _format_seq(sample.query_seq),
        feats,
    ])


def parse_sample_line(line: str) -> TrainingSample:
    parts = line.split("\t")
    if len(parts) != 7:
        raise ValueError(f"expected 7 fields, got {len(parts)}")
    user_id = int(parts[0])
    label = int(parts[1])
    target = _parse_event(parts[2], EventKind.CLICK)
    query = _parse_event(parts[3], EventKind.QUERY)
    click_seq = _parse_seq(parts[4], EventKind.CLICK)
    query_seq = _parse_seq(parts[5], EventKind.QUERY)
    feats = np.array([float(v) for v in parts[6].split(",") if v != ""], dtype=np.float64)
    sample = TrainingSample(
        user_id=user_id,
        target_item=target,
        current_query=query,
        click_seq=click_seq,
        query_seq=query_seq,
        seeds_seq=derive_seeds_seq(click_seq, query),
        other_features=feats,
        label=label,
    )
    sample.validate()
    return sample


def write_samples(samples: Iterable[TrainingSample], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for sample in samples:
            fh.write(format_sample(sample) + "\n")


def parse_samples(path) -> list[TrainingSample]:
    samples = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line:
            continue
        try:
            samples.append(parse_sample_line(line))
        except (ValueError, KeyError, ContractViolation) as exc:
            raise LogFormatError(f"{path}:{lineno}: bad sample line ({exc})") from exc
    return samples
