"""Synthetic behavior logs with planted category and cluster structure.

Items are grouped into coarse categories (observable: every event
carries its category ids) and each category is split into a few fine
clusters (latent: never written to the log).  A user session locks onto
one fine cluster, issues queries from that cluster's query pool, and
clicks mostly inside the cluster; interest jumps to a different
category at every session boundary.  A model can therefore only
recover the fine structure through co-occurrence, which is exactly the
signal the graph embeddings are supposed to pick up.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .ingest import (
    BehaviorEvent,
    BehaviorSequence,
    EventKind,
    TrainingSample,
    derive_seeds_seq,
    truncate_recent,
)

# rng stream tags so the catalog, the log, and the labels never share draws
_CATALOG_STREAM = 100
_LOG_STREAM = 101
_LABEL_STREAM = 102

OTHER_FEATURES_DIM = 2


@dataclass
class GenConfig:
    """Knobs for the synthetic log generator."""

    num_users: int = 2000
    num_items: int = 1000
    num_queries: int = 240
    num_categories: int = 20
    items_per_category: int = 50
    session_gap_mean: float = 7200.0
    intra_category_click_prob: float = 0.8
    seq_len_max: int = 200
    seed: int = 7

    # planted-structure knobs
    clusters_per_category: int = 4
    fine_click_fraction: float = 0.75
    mean_sessions_per_user: float = 4.0
    mean_clicks_per_session: float = 3.5
    max_queries_per_session: int = 2
    extra_category_prob: float = 0.05
    valid_fraction: float = 0.1

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for name in ("num_users", "num_items", "num_queries", "num_categories",
                     "items_per_category", "seq_len_max", "clusters_per_category",
                     "max_queries_per_session"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be > 0, got {getattr(self, name)}")
        for name in ("session_gap_mean", "mean_sessions_per_user",
                     "mean_clicks_per_session"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be > 0, got {getattr(self, name)}")
        for name in ("intra_category_click_prob", "fine_click_fraction",
                     "extra_category_prob", "valid_fraction"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {value}")
        if self.num_items < self.num_categories:
            raise ConfigError("num_items must be >= num_categories")
        if self.num_queries < self.num_categories * self.clusters_per_category:
            raise ConfigError(
                "num_queries must be >= num_categories * clusters_per_category")

    @classmethod
    def from_run_config(cls, cfg) -> "GenConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        return cls(**{n: getattr(cfg, n) for n in names})


class Catalog:
    """Deterministic item/query universe derived from a GenConfig.

    Category of item i is ``(i // items_per_category) % num_categories``;
    its fine cluster is its position within the category's item list.
    Query q maps to fine cluster ``q % (num_categories * clusters)``.
    A small fraction of items carries one extra category, drawn once
    here so every consumer sees the same category sets.
    """

    def __init__(self, cfg: GenConfig):
        self.cfg = cfg
        ncat = cfg.num_categories
        clusters = cfg.clusters_per_category
        rng = np.random.default_rng([cfg.seed, _CATALOG_STREAM])

        self.item_primary = np.array(
            [(i // cfg.items_per_category) % ncat for i in range(cfg.num_items)],
            dtype=np.int64)
        self._category_items: list[list[int]] = [[] for _ in range(ncat)]
        for i in range(cfg.num_items):
            self._category_items[self.item_primary[i]].append(i)
        for c, items in enumerate(self._category_items):
            if not items:
                raise ConfigError(
                    f"items_per_category={cfg.items_per_category} leaves category {c} empty")

        # fine cluster id of each item, local to its category
        self.item_fine = np.zeros(cfg.num_items, dtype=np.int64)
        self._fine_pools: dict[tuple[int, int], np.ndarray] = {}
        for c, items in enumerate(self._category_items):
            for pos, i in enumerate(items):
                self.item_fine[i] = (pos * clusters) // len(items)
            for f in range(clusters):
                pool = [i for i in items if self.item_fine[i] == f]
                self._fine_pools[(c, f)] = np.array(pool if pool else items, dtype=np.int64)

        # optional second category per item (never for single-category worlds)
        self._item_cats: list[frozenset[int]] = []
        for i in range(cfg.num_items):
            cats = {int(self.item_primary[i])}
            if ncat > 1 and rng.random() < cfg.extra_category_prob:
                extra = int(rng.integers(ncat - 1))
                if extra >= self.item_primary[i]:
                    extra += 1
                cats.add(extra)
            self._item_cats.append(frozenset(cats))

        # items reachable from a category, secondary memberships included
        self._category_pool: list[np.ndarray] = []
        for c in range(ncat):
            pool = [i for i in range(cfg.num_items) if c in self._item_cats[i]]
            self._category_pool.append(np.array(pool, dtype=np.int64))

        # query pools per (category, fine cluster)
        n_fine = ncat * clusters
        self._query_pools = [
            np.arange(g, cfg.num_queries, n_fine, dtype=np.int64) for g in range(n_fine)
        ]

    def item_categories(self, item_id: int) -> frozenset[int]:
        return self._item_cats[item_id]

    def query_categories(self, query_id: int) -> frozenset[int]:
        g = query_id % (self.cfg.num_categories * self.cfg.clusters_per_category)
        return frozenset({g // self.cfg.clusters_per_category})

    def category_items(self, category: int) -> list[int]:
        return self._category_items[category]

    def category_pool(self, category: int) -> np.ndarray:
        return self._category_pool[category]

    def fine_pool(self, category: int, fine: int) -> np.ndarray:
        return self._fine_pools[(category, fine)]

    def query_pool(self, category: int, fine: int) -> np.ndarray:
        g = category * self.cfg.clusters_per_category + fine
        return self._query_pools[g]

    def primary_category_map(self) -> dict[int, int]:
        """item id -> primary category, for the similarity report."""
        return {i: int(self.item_primary[i]) for i in range(self.cfg.num_items)}


def generate_log(cfg: GenConfig) -> list[BehaviorSequence]:
    """Generate one behavior sequence per user, deterministic in the seed."""
    catalog = Catalog(cfg)
    rng = np.random.default_rng([cfg.seed, _LOG_STREAM])
    ncat = cfg.num_categories
    clusters = cfg.clusters_per_category
    p_intra = cfg.intra_category_click_prob
    p_fine = p_intra * cfg.fine_click_fraction

    sequences = []
    for user_id in range(cfg.num_users):
        t = int(rng.integers(1_000_000, 2_000_000))
        n_sessions = 1 + int(rng.poisson(max(cfg.mean_sessions_per_user - 1.0, 0.0)))
        prev_cat = -1
        events: list[BehaviorEvent] = []
        for _ in range(n_sessions):
            if ncat > 1:
                cat = int(rng.integers(ncat - 1))
                if cat >= prev_cat:
                    cat += 1
            else:
                cat = 0
            prev_cat = cat
            fine = int(rng.integers(clusters))
            query_pool = catalog.query_pool(cat, fine)

            n_queries = 1 + int(rng.integers(cfg.max_queries_per_session))
            n_clicks = 1 + int(rng.poisson(max(cfg.mean_clicks_per_session - 1.0, 0.0)))
            kinds = [EventKind.QUERY] + [EventKind.CLICK] * n_clicks
            for _ in range(n_queries - 1):
                pos = 1 + int(rng.integers(len(kinds)))
                kinds.insert(min(pos, len(kinds)), EventKind.QUERY)

            for kind in kinds:
                t += int(rng.integers(1, 31))
                if kind == EventKind.QUERY:
                    qid = int(query_pool[rng.integers(len(query_pool))])
                    events.append(BehaviorEvent(
                        EventKind.QUERY, qid, t, catalog.query_categories(qid)))
                else:
                    r = rng.random()
                    if r < p_fine or ncat == 1:
                        pool = catalog.fine_pool(cat, fine)
                    elif r < p_intra:
                        pool = np.asarray(catalog.category_items(cat))
                    else:
                        other = int(rng.integers(ncat - 1))
                        if other >= cat:
                            other += 1
                        pool = np.asarray(catalog.category_items(other))
                    item = int(pool[rng.integers(len(pool))])
                    events.append(BehaviorEvent(
                        EventKind.CLICK, item, t, catalog.item_categories(item)))
            t += int(cfg.session_gap_mean * (0.5 + rng.exponential(1.0)))
        sequences.append(BehaviorSequence(user_id=user_id, events=events))
    return sequences


def _other_features(total_events: int, history_len: int) -> np.ndarray:
    # crude activity descriptors; scales fixed so they do not depend on config
    return np.array([min(total_events, 50) / 50.0,
                     min(history_len, 200) / 200.0], dtype=np.float64)


def generate_labeled_samples(
    cfg: GenConfig,
    log: list[BehaviorSequence],
    l_click: int | None = None,
    l_query: int | None = None,
    include_current_query: bool = False,
) -> list[TrainingSample]:
    """Next-click samples: one positive and one hard negative per user.

    The last click is the positive target with everything before it as
    history; the negative target is drawn uniformly from items sharing
    a category with the current query (excluding the positive), so the
    label cannot be predicted from category match alone.  Users with
    fewer than two clicks, or no query before the target, are skipped.
    """
    catalog = Catalog(cfg)
    rng = np.random.default_rng([cfg.seed, _LABEL_STREAM])
    cap_click = cfg.seq_len_max if l_click is None else min(cfg.seq_len_max, l_click)
    cap_query = cfg.seq_len_max if l_query is None else min(cfg.seq_len_max, l_query)

    samples = []
    for seq in log:
        clicks = [e for e in seq.events if e.kind == EventKind.CLICK]
        if len(clicks) < 2:
            continue
        target = clicks[-1]
        queries = [e for e in seq.events
                   if e.kind == EventKind.QUERY and e.timestamp < target.timestamp]
        if not queries:
            continue
        current_query = queries[-1]
        query_seq = queries if include_current_query else queries[:-1]
        query_seq = truncate_recent(query_seq, cap_query)
        click_seq = truncate_recent(clicks[:-1], cap_click)

        pool: set[int] = set()
        for c in sorted(current_query.categories):
            pool.update(int(i) for i in catalog.category_pool(c))
        pool.discard(target.entity_id)
        if not pool:
            continue
        pool_list = sorted(pool)
        neg_id = pool_list[int(rng.integers(len(pool_list)))]
        neg_target = BehaviorEvent(EventKind.CLICK, neg_id, target.timestamp,
                                   catalog.item_categories(neg_id))

        feats = _other_features(len(seq.events), len(click_seq))
        seeds = derive_seeds_seq(click_seq, current_query)
        for target_event, label in ((target, 1), (neg_target, 0)):
            sample = TrainingSample(
                user_id=seq.user_id,
                target_item=target_event,
                current_query=current_query,
                click_seq=click_seq,
                query_seq=query_seq,
                seeds_seq=seeds,
                other_features=feats,
                label=label,
            )
            sample.validate()
            samples.append(sample)
    return samples


def split_train_valid(
    samples: list[TrainingSample], valid_fraction: float
) -> tuple[list[TrainingSample], list[TrainingSample]]:
    """Deterministic user-level split: both labels of a user stay together."""
    if valid_fraction <= 0.0:
        return list(samples), []
    denom = max(2, round(1.0 / valid_fraction))
    train = [s for s in samples if s.user_id % denom != denom - 1]
    valid = [s for s in samples if s.user_id % denom == denom - 1]
    return train, valid
