"""Shared builders for tests."""

import numpy as np
import pytest

from clickgraph.ingest import BehaviorEvent, EventKind, TrainingSample


def click(entity_id, timestamp, cats=(0,)):
    return BehaviorEvent(EventKind.CLICK, entity_id, timestamp, frozenset(cats))


def query(entity_id, timestamp, cats=(0,)):
    return BehaviorEvent(EventKind.QUERY, entity_id, timestamp, frozenset(cats))


def make_sample(click_seq, query_seq, target=None, current_query=None,
                seeds_seq=None, label=1, user_id=0):
    last_ts = max([e.timestamp for e in click_seq + query_seq], default=0)
    if target is None:
        target = click(999, last_ts + 100, cats=(0,))
    if current_query is None:
        current_query = query(888, last_ts + 50, cats=(0,))
    return TrainingSample(
        user_id=user_id,
        target_item=target,
        current_query=current_query,
        click_seq=list(click_seq),
        query_seq=list(query_seq),
        seeds_seq=list(seeds_seq) if seeds_seq is not None else [],
        other_features=np.array([0.5, 0.25]),
        label=label,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
