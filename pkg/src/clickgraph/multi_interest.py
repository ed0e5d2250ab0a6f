"""Similarity features: cosine top-k over graph embeddings, binned.

For a (target, sequence) pair the extractor computes cosine similarity
between the target's embedding and every sequence element, keeps the k
largest, maps each similarity into an equal-width bin over [-1, 1], and
represents each kept element as bin embedding + positional embedding
(position = the element's original index).  The k slot vectors are
concatenated in descending-similarity order; short sequences are padded
with dedicated pad embeddings so the output width never varies.

Graph-table lookups here are read-only: hard binning and top-k
selection admit no gradient, so the CTR loss trains only the bin and
position tables (and the MLP), never the item/query embeddings.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation
from .embed_learn import EmbeddingTable
from .ingest import BehaviorEvent, EventKind, TrainingSample

_NORM_FLOOR = 1e-12

_EVENT_TABLE = {EventKind.CLICK: "item", EventKind.QUERY: "query"}


@dataclass
class BinningScheme:
    """Equal-width bins over [-1, 1] plus the pad conventions."""

    num_bins: int = 20
    max_seq_len: int = 100
    use_positional: bool = True

    def __post_init__(self):
        if self.num_bins < 1:
            raise ContractViolation(f"num_bins must be >= 1, got {self.num_bins}")
        if self.max_seq_len < 1:
            raise ContractViolation(f"max_seq_len must be >= 1, got {self.max_seq_len}")

    @property
    def pad_bin_id(self) -> int:
        return self.num_bins

    @property
    def pad_pos_id(self) -> int:
        return self.max_seq_len

    def bin_id(self, similarity: float) -> int:
        raw = math.floor((similarity + 1.0) / 2.0 * self.num_bins)
        return min(max(raw, 0), self.num_bins - 1)

    def bin_ids(self, similarities: np.ndarray) -> np.ndarray:
        raw = np.floor((similarities + 1.0) / 2.0 * self.num_bins).astype(np.int64)
        return np.clip(raw, 0, self.num_bins - 1)


@dataclass
class SimFeature:
    """Exactly k (bin, position) entries and their concatenated vector."""

    entries: list[tuple[int, int]]
    vector: np.ndarray


def make_feature_tables(dim: int, seed: int, scheme: BinningScheme
                        ) -> dict[str, EmbeddingTable]:
    tables = {
        "bin": EmbeddingTable("bin", dim=dim, seed=seed),
        "position": EmbeddingTable("position", dim=dim, seed=seed),
    }
    tables["bin"].ensure(range(scheme.num_bins + 1))
    tables["position"].ensure(range(scheme.max_seq_len + 1))
    return tables


def cosine_sim(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine similarity; 0 when either vector is (numerically) zero."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ContractViolation(f"dim mismatch: {u.shape} vs {v.shape}")
    nu = math.sqrt((u * u).sum())
    nv = math.sqrt((v * v).sum())
    if nu < _NORM_FLOOR or nv < _NORM_FLOOR:
        return 0.0
    return float((u * v).sum() / (nu * nv))


def top_k(
    target: BehaviorEvent,
    seq: list[BehaviorEvent],
    tables: dict[str, EmbeddingTable],
    k: int,
) -> list[tuple[int, float]]:
    """(original index, similarity) of the k most similar sequence items.

    Ties go to the smaller original index; fewer than k entries are
    returned when the sequence is short.
    """
    if not seq:
        return []
    target_vec = tables[_EVENT_TABLE[target.kind]].lookup(target.entity_id)
    seq_table = tables[_EVENT_TABLE[seq[0].kind]]
    sims = [cosine_sim(target_vec, seq_table.lookup(e.entity_id)) for e in seq]
    order = sorted(range(len(seq)), key=lambda i: (-sims[i], i))
    return [(i, sims[i]) for i in order[:k]]


def sim_extract(
    target: BehaviorEvent,
    seq: list[BehaviorEvent],
    tables: dict[str, EmbeddingTable],
    scheme: BinningScheme,
    k: int,
) -> SimFeature:
    """The binned + positional top-k representation of (target, seq)."""
    top = top_k(target, seq, tables, k)
    entries = [(scheme.bin_id(sim), idx) for idx, sim in top]
    entries += [(scheme.pad_bin_id, scheme.pad_pos_id)] * (k - len(entries))

    bin_rows = tables["bin"].lookup_many([b for b, _ in entries])
    if scheme.use_positional:
        pos_rows = tables["position"].lookup_many([p for _, p in entries])
        slots = bin_rows + pos_rows
    else:
        slots = bin_rows
    return SimFeature(entries=entries, vector=slots.reshape(-1))


def build_features(
    sample: TrainingSample,
    tables: dict[str, EmbeddingTable],
    scheme: BinningScheme,
    k: int,
    use_query: bool = True,
) -> tuple[SimFeature, SimFeature, SimFeature]:
    """(target vs clicks, query vs queries, query vs clicks) features.

    With ``use_query`` off the two query-anchored features are fully
    padded, removing every query signal from the CTR input.
    """
    f_i2i = sim_extract(sample.target_item, sample.click_seq, tables, scheme, k)
    if use_query:
        f_q2q = sim_extract(sample.current_query, sample.query_seq, tables, scheme, k)
        f_q2i = sim_extract(sample.current_query, sample.click_seq, tables, scheme, k)
    else:
        f_q2q = sim_extract(sample.current_query, [], tables, scheme, k)
        f_q2i = sim_extract(sample.current_query, [], tables, scheme, k)
    return f_i2i, f_q2q, f_q2i


# ---------------------------------------------------------------------------
# batched path: same outputs as build_features, vectorized across samples


def _batch_sims(
    anchor_events: list[BehaviorEvent],
    seqs: list[list[BehaviorEvent]],
    tables: dict[str, EmbeddingTable],
) -> tuple[np.ndarray, np.ndarray]:
    """Cosine matrix (n, max_len) with -inf outside each row's length."""
    n = len(anchor_events)
    max_len = max((len(s) for s in seqs), default=0)
    if max_len == 0:
        return np.full((n, 0), -np.inf), np.zeros(n, dtype=np.int64)

    anchor_table = tables[_EVENT_TABLE[anchor_events[0].kind]]
    A = anchor_table.lookup_many([e.entity_id for e in anchor_events])

    seq_kind = None
    for s in seqs:
        if s:
            seq_kind = s[0].kind
            break
    seq_table = tables[_EVENT_TABLE[seq_kind]]
    flat_ids = [e.entity_id for s in seqs for e in s]
    lengths = np.array([len(s) for s in seqs], dtype=np.int64)
    S_flat = seq_table.lookup_many(flat_ids)

    S = np.zeros((n, max_len, A.shape[1]), dtype=np.float64)
    mask = np.zeros((n, max_len), dtype=bool)
    offset = 0
    for i, length in enumerate(lengths):
        S[i, :length] = S_flat[offset:offset + length]
        mask[i, :length] = True
        offset += length

    dots = (S * A[:, None, :]).sum(axis=2)
    a_norm = np.sqrt((A * A).sum(axis=1))
    s_norm = np.sqrt((S * S).sum(axis=2))
    norm_prod = a_norm[:, None] * s_norm
    safe = (a_norm[:, None] >= _NORM_FLOOR) & (s_norm >= _NORM_FLOOR)
    sims = np.where(safe, dots / np.where(safe, norm_prod, 1.0), 0.0)
    return np.where(mask, sims, -np.inf), lengths


def _batch_extract(
    anchor_events: list[BehaviorEvent],
    seqs: list[list[BehaviorEvent]],
    tables: dict[str, EmbeddingTable],
    scheme: BinningScheme,
    k: int,
) -> tuple[np.ndarray, np.ndarray]:
    """(bin_ids, pos_ids), each (n, k), matching sim_extract per row."""
    n = len(anchor_events)
    bin_ids = np.full((n, k), scheme.pad_bin_id, dtype=np.int64)
    pos_ids = np.full((n, k), scheme.pad_pos_id, dtype=np.int64)
    sims, lengths = _batch_sims(anchor_events, seqs, tables)
    if sims.shape[1] == 0:
        return bin_ids, pos_ids
    # stable argsort on -sims realizes the smaller-index tie rule
    order = np.argsort(-sims, axis=1, kind="stable")
    for i in range(n):
        take = min(k, int(lengths[i]))
        if take == 0:
            continue
        idx = order[i, :take]
        bin_ids[i, :take] = scheme.bin_ids(sims[i, idx])
        pos_ids[i, :take] = idx
    return bin_ids, pos_ids


def build_features_batch(
    samples: list[TrainingSample],
    tables: dict[str, EmbeddingTable],
    scheme: BinningScheme,
    k: int,
    use_query: bool = True,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Feature matrix (n, 3*k*dim) plus bin/pos id arrays (n, 3, k)."""
    n = len(samples)
    empty: list[BehaviorEvent] = []
    groups = [
        ([s.target_item for s in samples], [s.click_seq for s in samples]),
        ([s.current_query for s in samples],
         [s.query_seq if use_query else empty for s in samples]),
        ([s.current_query for s in samples],
         [s.click_seq if use_query else empty for s in samples]),
    ]
    bin_ids = np.empty((n, 3, k), dtype=np.int64)
    pos_ids = np.empty((n, 3, k), dtype=np.int64)
    for g, (anchors, seqs) in enumerate(groups):
        b, p = _batch_extract(anchors, seqs, tables, scheme, k)
        bin_ids[:, g, :] = b
        pos_ids[:, g, :] = p

    dim = tables["bin"].dim
    slots = tables["bin"].lookup_many(bin_ids.ravel()).reshape(n, 3, k, dim)
    if scheme.use_positional:
        slots = slots + tables["position"].lookup_many(pos_ids.ravel()).reshape(n, 3, k, dim)
    return slots.reshape(n, 3 * k * dim), bin_ids, pos_ids


def pairwise_similarity_matrix(
    table: EmbeddingTable, entity_ids: list[int]
) -> np.ndarray:
    """Cosine similarity matrix over a list of ids (for inspection)."""
    out = np.zeros((len(entity_ids), len(entity_ids)), dtype=np.float64)
    vecs = [table.lookup(i) for i in entity_ids]
    for a in range(len(entity_ids)):
        for b in range(len(entity_ids)):
            out[a, b] = cosine_sim(vecs[a], vecs[b])
    return out
