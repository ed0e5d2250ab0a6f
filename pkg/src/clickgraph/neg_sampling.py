"""Cross-batch negative-sample queues.

One FIFO ring per entity type holds the most recently seen ids; the
sampled-softmax loss draws its negatives uniformly (with replacement)
from that ring, so negatives always reflect the recent id stream
without any global frequency table.  Optional word2vec-style
subsampling can thin out very frequent ids at insertion time.
"""

from __future__ import annotations

import logging
import math

import numpy as np

from .errors import ContractViolation, NotWarmedUpError
from .graph_edges import EntityType

log = logging.getLogger(__name__)

# Rejection sampling gives up after this many draws per requested id.
_MAX_DRAW_FACTOR = 10

# stable rng sub-stream tags (str hashes are salted per process)
_TYPE_TAG = {EntityType.ITEM: 1, EntityType.QUERY: 2}


class NegQueue:
    """Fixed-capacity FIFO of entity ids with uniform sampling."""

    def __init__(
        self,
        entity_type: EntityType,
        capacity: int,
        subsample_threshold: float | None = None,
        seed: int = 0,
    ):
        if capacity < 1:
            raise ContractViolation(f"capacity must be >= 1, got {capacity}")
        if subsample_threshold is not None and subsample_threshold <= 0:
            subsample_threshold = None
        self.entity_type = entity_type
        self.capacity = capacity
        self.subsample_threshold = subsample_threshold
        self._buf = np.empty(capacity, dtype=np.int64)
        self._n = 0
        self._next = 0
        self._rng = np.random.default_rng([seed, 7, _TYPE_TAG[entity_type]])
        self._freq_counts: dict[int, int] = {}
        self._observed = 0
        self.shortfalls = 0

    def __len__(self) -> int:
        return self._n

    def contents(self) -> list[int]:
        """Buffer ids oldest to newest (mainly for tests)."""
        if self._n < self.capacity:
            return self._buf[: self._n].tolist()
        return np.concatenate([self._buf[self._next:], self._buf[: self._next]]).tolist()

    def push(self, entity_id: int, entity_type: EntityType | None = None) -> None:
        """Append an id, evicting the oldest at capacity.

        With subsampling enabled, insertion is skipped with probability
        1 - sqrt(t / f) where f is the id's observed relative frequency;
        ids at or below the threshold frequency are always kept.
        """
        if entity_type is not None and entity_type != self.entity_type:
            raise ContractViolation(
                f"cannot push {entity_type} id into a {self.entity_type} queue")
        if self.subsample_threshold is not None:
            self._observed += 1
            count = self._freq_counts.get(entity_id, 0) + 1
            self._freq_counts[entity_id] = count
            freq = count / self._observed
            if freq > self.subsample_threshold:
                p_skip = 1.0 - math.sqrt(self.subsample_threshold / freq)
                if self._rng.random() < p_skip:
                    return
        self._buf[self._next] = entity_id
        self._next = (self._next + 1) % self.capacity
        self._n = min(self._n + 1, self.capacity)

    def push_many(self, entity_ids) -> None:
        for entity_id in entity_ids:
            self.push(int(entity_id))

    def sample_negatives(
        self,
        n: int,
        exclude: set[int],
        rng: np.random.Generator,
    ) -> list[int]:
        """Draw n ids uniformly with replacement, rejecting ``exclude``.

        If rejection cannot fill n slots within 10n draws the shorter
        list is returned and the shortfall counted.
        """
        if self._n == 0:
            raise NotWarmedUpError(f"{self.entity_type} queue is empty")
        draws = self._buf[rng.integers(0, self._n, size=_MAX_DRAW_FACTOR * n)]
        mask = np.ones(len(draws), dtype=bool)
        for ex in exclude:
            mask &= draws != ex
        accepted = draws[mask][:n]
        if len(accepted) < n:
            self.shortfalls += 1
            log.debug("negative sampling shortfall: %d/%d from %s queue",
                      len(accepted), n, self.entity_type)
        return [int(i) for i in accepted]

    def sample_matrix(
        self,
        rows: int,
        n: int,
        exclude_a: np.ndarray,
        exclude_b: np.ndarray,
        rng: np.random.Generator,
    ) -> tuple[np.ndarray, np.ndarray]:
        """Vectorized per-row sampling with two excluded ids per row.

        Returns an (rows, n) id matrix plus a boolean mask of rows that
        were filled completely; callers fall back to per-edge sampling
        for unfilled rows (only possible when the buffer is tiny).
        """
        if self._n == 0:
            raise NotWarmedUpError(f"{self.entity_type} queue is empty")
        ids = self._buf[rng.integers(0, self._n, size=(rows, n))]
        bad = (ids == exclude_a[:, None]) | (ids == exclude_b[:, None])
        for _ in range(_MAX_DRAW_FACTOR - 1):
            n_bad = int(bad.sum())
            if n_bad == 0:
                break
            redraw = self._buf[rng.integers(0, self._n, size=n_bad)]
            ids[bad] = redraw
            bad = (ids == exclude_a[:, None]) | (ids == exclude_b[:, None])
        ok_rows = ~bad.any(axis=1)
        if not ok_rows.all():
            self.shortfalls += int((~ok_rows).sum())
        return ids, ok_rows
