"""Typed positive pairs derived directly from one sample's sequences.

No graph is ever stored: each training sample's click and query
sequences are treated as a subgraph sample of the (implicit) global
interest graph, and the positive pairs for embedding learning are read
straight off them.  Three pair kinds exist: item-item co-occurrence
within a click window, query-query within a session, and query-item
within a time span under a category constraint.  Every pair is emitted
in both directions; repeated co-occurrences yield repeated edges.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ConfigError, ContractViolation
from .ingest import BehaviorEvent, TrainingSample


class EdgeKind(Enum):
    I2I = "i2i"
    Q2Q = "q2q"
    Q2I = "q2i"


class EntityType(Enum):
    ITEM = "item"
    QUERY = "query"


@dataclass(frozen=True)
class Edge:
    """A directed positive pair (anchor predicts positive)."""

    kind: EdgeKind
    anchor_id: int
    positive_id: int
    anchor_type: EntityType
    positive_type: EntityType

    def __post_init__(self):
        expected = {
            EdgeKind.I2I: {(EntityType.ITEM, EntityType.ITEM)},
            EdgeKind.Q2Q: {(EntityType.QUERY, EntityType.QUERY)},
            EdgeKind.Q2I: {(EntityType.QUERY, EntityType.ITEM),
                           (EntityType.ITEM, EntityType.QUERY)},
        }[self.kind]
        if (self.anchor_type, self.positive_type) not in expected:
            raise ContractViolation(
                f"{self.kind} edge cannot join {self.anchor_type} -> {self.positive_type}")
        if self.anchor_type == self.positive_type and self.anchor_id == self.positive_id:
            raise ContractViolation("self-edges are not allowed")


@dataclass
class EdgeConfig:
    """Windows and constraints for edge construction."""

    window_size: int = 2
    session_gap: float = 1800.0
    q2i_timespan: float = 600.0
    seeds_mix_rate: float = 0.2
    symmetric_q2i_time: bool = True

    def __post_init__(self):
        if self.window_size < 1:
            raise ConfigError(f"window_size must be >= 1, got {self.window_size}")
        if self.q2i_timespan <= 0:
            raise ConfigError(f"q2i_timespan must be > 0, got {self.q2i_timespan}")
        if self.session_gap <= 0:
            raise ConfigError(f"session_gap must be > 0, got {self.session_gap}")
        if not 0.0 <= self.seeds_mix_rate <= 1.0:
            raise ConfigError(f"seeds_mix_rate must be in [0, 1], got {self.seeds_mix_rate}")

    @classmethod
    def from_run_config(cls, cfg) -> "EdgeConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        return cls(**{n: getattr(cfg, n) for n in names})


def _pair(kind: EdgeKind, a: BehaviorEvent, b: BehaviorEvent,
          a_type: EntityType, b_type: EntityType) -> list[Edge]:
    return [
        Edge(kind, a.entity_id, b.entity_id, a_type, b_type),
        Edge(kind, b.entity_id, a.entity_id, b_type, a_type),
    ]


def build_i2i_edges(
    click_seq: list[BehaviorEvent],
    seeds_seq: list[BehaviorEvent],
    cfg: EdgeConfig,
    rng: np.random.Generator,
) -> list[Edge]:
    """Window co-occurrence pairs over the click (or seeds) sequence.

    One Bernoulli draw per call picks the source: the seeds sequence
    with probability ``seeds_mix_rate``, the raw click sequence
    otherwise.  Every unordered index pair within the window yields
    both directed edges; pairs with equal item ids are dropped.
    """
    use_seeds = rng.random() < cfg.seeds_mix_rate
    source = seeds_seq if use_seeds else click_seq
    edges: list[Edge] = []
    n = len(source)
    for j in range(n):
        for k in range(j + 1, min(j + cfg.window_size, n - 1) + 1):
            if source[j].entity_id == source[k].entity_id:
                continue
            edges.extend(_pair(EdgeKind.I2I, source[j], source[k],
                               EntityType.ITEM, EntityType.ITEM))
    return edges


def segment_query_sessions(
    query_seq: list[BehaviorEvent], cfg: EdgeConfig
) -> list[list[BehaviorEvent]]:
    """Split queries into sessions on time gaps or category breaks.

    A new session starts when the gap to the previous query exceeds
    ``session_gap`` or the two queries share no category.
    """
    sessions: list[list[BehaviorEvent]] = []
    for query in query_seq:
        if sessions:
            prev = sessions[-1][-1]
            same_session = (query.timestamp - prev.timestamp <= cfg.session_gap
                            and query.shares_category(prev))
            if same_session:
                sessions[-1].append(query)
                continue
        sessions.append([query])
    return sessions


def build_q2q_edges(sessions: list[list[BehaviorEvent]]) -> list[Edge]:
    """Complete digraph over the distinct query ids of each session."""
    edges: list[Edge] = []
    for session in sessions:
        distinct: list[BehaviorEvent] = []
        seen: set[int] = set()
        for query in session:
            if query.entity_id not in seen:
                seen.add(query.entity_id)
                distinct.append(query)
        for j in range(len(distinct)):
            for k in range(j + 1, len(distinct)):
                edges.extend(_pair(EdgeKind.Q2Q, distinct[j], distinct[k],
                                   EntityType.QUERY, EntityType.QUERY))
    return edges


def build_q2i_edges(
    query_seq: list[BehaviorEvent],
    click_seq: list[BehaviorEvent],
    cfg: EdgeConfig,
) -> list[Edge]:
    """Query-item pairs within the timespan under a category constraint.

    With ``symmetric_q2i_time`` the click may fall on either side of the
    query (0 < |dt| < T); without it only clicks strictly after the
    query count (0 < dt < T).  The pair must share a category.
    """
    edges: list[Edge] = []
    for query in query_seq:
        for click in click_seq:
            dt = click.timestamp - query.timestamp
            if cfg.symmetric_q2i_time:
                in_span = 0 < abs(dt) < cfg.q2i_timespan
            else:
                in_span = 0 < dt < cfg.q2i_timespan
            if in_span and query.shares_category(click):
                edges.extend(_pair(EdgeKind.Q2I, query, click,
                                   EntityType.QUERY, EntityType.ITEM))
    return edges


def build_all_edges(
    sample: TrainingSample,
    cfg: EdgeConfig,
    rng: np.random.Generator,
) -> list[Edge]:
    """All positive pairs of one sample, in i2i, q2q, q2i order."""
    edges = build_i2i_edges(sample.click_seq, sample.seeds_seq, cfg, rng)
    edges += build_q2q_edges(segment_query_sessions(sample.query_seq, cfg))
    edges += build_q2i_edges(sample.query_seq, sample.click_seq, cfg)
    return edges
