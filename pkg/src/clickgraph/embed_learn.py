"""Embedding tables and the sampled-softmax loss over positive pairs.

Tables grow lazily: the vector for an unseen id is a deterministic
function of (table seed, entity type, id), so two runs with the same
config initialize identically regardless of data order.  The loss for
one pair is a softmax over the positive logit and n sampled negative
logits; gradients are exact partial derivatives and flow into anchor,
positive, and every negative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation, NumericError
from .graph_edges import Edge, EdgeKind, EntityType
from .neg_sampling import NegQueue

_TYPE_TAG = {"item": 1, "query": 2, "bin": 3, "position": 4}


class EmbeddingTable:
    """id -> dense vector map with deterministic lazy initialization."""

    def __init__(
        self,
        entity_type: str,
        dim: int = 10,
        seed: int = 0,
        init_scale: float | None = None,
        namespace: int = 0,
    ):
        if entity_type not in _TYPE_TAG:
            raise ContractViolation(f"unknown entity_type {entity_type!r}")
        if dim < 1:
            raise ContractViolation(f"dim must be >= 1, got {dim}")
        self.entity_type = entity_type
        self.dim = dim
        self.seed = seed
        self.namespace = namespace
        self.init_scale = 0.5 / dim if init_scale is None else init_scale
        self._index: dict[int, int] = {}
        self._rows = np.empty((0, dim), dtype=np.float64)

    def __len__(self) -> int:
        return len(self._index)

    def __contains__(self, entity_id: int) -> bool:
        return int(entity_id) in self._index

    def ids(self) -> list[int]:
        return list(self._index.keys())

    def init_vector(self, entity_id: int) -> np.ndarray:
        """The deterministic initial vector for an id (fresh copy)."""
        rng = np.random.default_rng(
            [self.seed, self.namespace, _TYPE_TAG[self.entity_type], int(entity_id)])
        return rng.uniform(-self.init_scale, self.init_scale, self.dim)

    def _grow(self, extra: int) -> None:
        cap = len(self._rows)
        need = len(self._index) + extra
        if need <= cap:
            return
        new_cap = max(1024, cap * 2, need)
        grown = np.empty((new_cap, self.dim), dtype=np.float64)
        grown[:cap] = self._rows
        self._rows = grown

    def ensure(self, entity_ids) -> np.ndarray:
        """Row indices for ids, initializing any unseen ones."""
        out = np.empty(len(entity_ids), dtype=np.int64)
        for i, raw in enumerate(entity_ids):
            entity_id = int(raw)
            row = self._index.get(entity_id)
            if row is None:
                self._grow(1)
                row = len(self._index)
                self._index[entity_id] = row
                self._rows[row] = self.init_vector(entity_id)
            out[i] = row
        return out

    def lookup(self, entity_id: int) -> np.ndarray:
        row = self.ensure([entity_id])[0]
        return self._rows[row].copy()

    def lookup_many(self, entity_ids) -> np.ndarray:
        rows = self.ensure(entity_ids)
        return self._rows[rows].copy()

    def rows_view(self) -> np.ndarray:
        """Writable storage view for the optimizer (rows 0..len-1 live)."""
        return self._rows

    def set_vector(self, entity_id: int, vector: np.ndarray) -> None:
        """Overwrite (or create) an id's vector, e.g. when loading."""
        vector = np.asarray(vector, dtype=np.float64)
        if vector.shape != (self.dim,):
            raise ContractViolation(f"expected shape ({self.dim},), got {vector.shape}")
        row = self.ensure([entity_id])[0]
        self._rows[row] = vector

    def items(self):
        for entity_id in sorted(self._index):
            yield entity_id, self._rows[self._index[entity_id]]


def make_graph_tables(dim: int, seed: int) -> dict[str, EmbeddingTable]:
    return {
        "item": EmbeddingTable("item", dim=dim, seed=seed),
        "query": EmbeddingTable("query", dim=dim, seed=seed),
    }


@dataclass
class GraphLossTerms:
    """Per-kind mean losses over the edges of one batch."""

    l_i2i: float = 0.0
    l_q2q: float = 0.0
    l_q2i: float = 0.0
    edge_counts: dict = field(default_factory=lambda: {k: 0 for k in EdgeKind})
    skipped: int = 0

    def weighted_total(self, alpha: float, beta: float, gamma: float) -> float:
        return alpha * self.l_i2i + beta * self.l_q2q + gamma * self.l_q2i


def softmax_edge_loss(
    e_a: np.ndarray, e_p: np.ndarray, negs: np.ndarray
) -> tuple[float, np.ndarray, np.ndarray, np.ndarray]:
    """Sampled-softmax loss of one positive pair and its gradients.

    loss = -log( exp(a.p) / (exp(a.p) + sum_n exp(a.n)) ), computed with
    max-subtraction.  Returns (loss, d/da, d/dp, d/dnegs).
    """
    e_a = np.asarray(e_a, dtype=np.float64)
    e_p = np.asarray(e_p, dtype=np.float64)
    negs = np.asarray(negs, dtype=np.float64)
    if negs.ndim != 2 or negs.shape[0] < 1:
        raise ContractViolation("need at least one negative vector")
    if e_a.shape != e_p.shape or negs.shape[1] != e_a.shape[0]:
        raise ContractViolation(
            f"dim mismatch: anchor {e_a.shape}, positive {e_p.shape}, negs {negs.shape}")
    if not (np.isfinite(e_a).all() and np.isfinite(e_p).all() and np.isfinite(negs).all()):
        raise NumericError("non-finite embedding input")

    z_pos = (e_a * e_p).sum()
    z_neg = (negs * e_a).sum(axis=1)
    m = max(z_pos, z_neg.max())
    exp_pos = np.exp(z_pos - m)
    exp_neg = np.exp(z_neg - m)
    denom = exp_pos + exp_neg.sum()
    loss = float(np.log(denom) - (z_pos - m))

    p_pos = exp_pos / denom
    p_neg = exp_neg / denom
    # multiply-then-reduce keeps this bit-identical to the batch path
    grad_a = (p_pos - 1.0) * e_p + (p_neg[:, None] * negs).sum(axis=0)
    grad_p = (p_pos - 1.0) * e_a
    grad_negs = p_neg[:, None] * e_a[None, :]
    return loss, grad_a, grad_p, grad_negs


# gradients of a batch: per edge kind, per table, id array + grad matrix
KindGrads = dict[EdgeKind, dict[str, tuple[np.ndarray, np.ndarray]]]

_TABLE_OF = {EntityType.ITEM: "item", EntityType.QUERY: "query"}


def _accumulate_unique(ids: np.ndarray, grads: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    unique, inverse = np.unique(ids, return_inverse=True)
    acc = np.zeros((len(unique), grads.shape[1]), dtype=np.float64)
    np.add.at(acc, inverse, grads)
    return unique, acc


def batch_graph_loss(
    edges: list[Edge],
    tables: dict[str, EmbeddingTable],
    queues: dict[EntityType, NegQueue],
    n_neg: int,
    rng: np.random.Generator,
) -> tuple[GraphLossTerms, KindGrads]:
    """Mean loss per edge kind plus gradients of those means.

    Negatives are drawn from the queue matching the positive's type,
    excluding the edge's own positive id and, when the anchor shares
    that type, the anchor id.  Edges whose queue is still empty are
    skipped and counted.
    """
    terms = GraphLossTerms()
    grads: KindGrads = {}
    if not edges:
        return terms, grads

    # group edges by (kind, direction) so each group gathers one way
    groups: dict[tuple[EdgeKind, EntityType], list[Edge]] = {}
    for edge in edges:
        groups.setdefault((edge.kind, edge.anchor_type), []).append(edge)

    sums = {k: 0.0 for k in EdgeKind}
    id_chunks: dict[EdgeKind, dict[str, list]] = {
        k: {"item": [], "query": []} for k in EdgeKind}
    grad_chunks: dict[EdgeKind, dict[str, list]] = {
        k: {"item": [], "query": []} for k in EdgeKind}

    for (kind, anchor_type), group in sorted(
            groups.items(), key=lambda kv: (kv[0][0].value, kv[0][1].value)):
        positive_type = group[0].positive_type
        queue = queues[positive_type]
        if len(queue) == 0:
            terms.skipped += len(group)
            continue
        anchor_ids = np.array([e.anchor_id for e in group], dtype=np.int64)
        pos_ids = np.array([e.positive_id for e in group], dtype=np.int64)
        a_table = tables[_TABLE_OF[anchor_type]]
        p_table = tables[_TABLE_OF[positive_type]]

        # the anchor id only makes sense as an exclusion in the
        # positive's id space
        if anchor_type == positive_type:
            exclude_a = anchor_ids
        else:
            exclude_a = np.full(len(group), -1, dtype=np.int64)
        neg_ids, ok_rows = queue.sample_matrix(len(group), n_neg, exclude_a, pos_ids, rng)
        if not ok_rows.all():
            # queue almost entirely excluded; keep only fillable rows
            terms.skipped += int((~ok_rows).sum())
            anchor_ids = anchor_ids[ok_rows]
            pos_ids = pos_ids[ok_rows]
            neg_ids = neg_ids[ok_rows]
            exclude_a = exclude_a[ok_rows]
            if len(anchor_ids) == 0:
                continue

        A = a_table.lookup_many(anchor_ids)
        P = p_table.lookup_many(pos_ids)
        N = p_table.lookup_many(neg_ids.ravel()).reshape(len(anchor_ids), n_neg, -1)
        if not (np.isfinite(A).all() and np.isfinite(P).all() and np.isfinite(N).all()):
            raise NumericError("non-finite embedding in batch loss")

        z_pos = (A * P).sum(axis=1)
        z_neg = (N * A[:, None, :]).sum(axis=2)
        m = np.maximum(z_pos, z_neg.max(axis=1))
        exp_pos = np.exp(z_pos - m)
        exp_neg = np.exp(z_neg - m[:, None])
        denom = exp_pos + exp_neg.sum(axis=1)
        losses = np.log(denom) - (z_pos - m)
        sums[kind] += float(losses.sum())
        terms.edge_counts[kind] += len(anchor_ids)

        p_pos = exp_pos / denom
        p_neg = exp_neg / denom[:, None]
        grad_A = (p_pos - 1.0)[:, None] * P + (p_neg[:, :, None] * N).sum(axis=1)
        grad_P = (p_pos - 1.0)[:, None] * A
        grad_N = p_neg[:, :, None] * A[:, None, :]

        id_chunks[kind][_TABLE_OF[anchor_type]].append(anchor_ids)
        grad_chunks[kind][_TABLE_OF[anchor_type]].append(grad_A)
        id_chunks[kind][_TABLE_OF[positive_type]].append(pos_ids)
        grad_chunks[kind][_TABLE_OF[positive_type]].append(grad_P)
        id_chunks[kind][_TABLE_OF[positive_type]].append(neg_ids.ravel())
        grad_chunks[kind][_TABLE_OF[positive_type]].append(
            grad_N.reshape(-1, grad_N.shape[2]))

    for kind in EdgeKind:
        count = terms.edge_counts[kind]
        if count == 0:
            continue
        mean_loss = sums[kind] / count
        if kind == EdgeKind.I2I:
            terms.l_i2i = mean_loss
        elif kind == EdgeKind.Q2Q:
            terms.l_q2q = mean_loss
        else:
            terms.l_q2i = mean_loss
        per_table = {}
        for table_name in ("item", "query"):
            if not id_chunks[kind][table_name]:
                continue
            ids = np.concatenate(id_chunks[kind][table_name])
            gs = np.concatenate(grad_chunks[kind][table_name], axis=0) / count
            per_table[table_name] = _accumulate_unique(ids, gs)
        grads[kind] = per_table
    return terms, grads


def merge_kind_grads(
    grads: KindGrads, weights: dict[EdgeKind, float]
) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Combine per-kind gradients into one per-table set with weights."""
    merged: dict[str, tuple[list, list]] = {}
    for kind, per_table in grads.items():
        w = weights[kind]
        if w == 0.0:
            continue
        for table_name, (ids, gs) in per_table.items():
            bucket = merged.setdefault(table_name, ([], []))
            bucket[0].append(ids)
            bucket[1].append(w * gs)
    out = {}
    for table_name, (id_list, grad_list) in merged.items():
        ids = np.concatenate(id_list)
        gs = np.concatenate(grad_list, axis=0)
        out[table_name] = _accumulate_unique(ids, gs)
    return out


class SgdState:
    """Plain SGD: v <- v - lr * g, applied sparsely."""

    def apply(self, table: EmbeddingTable, ids: np.ndarray, grads: np.ndarray,
              lr: float) -> None:
        if lr == 0.0:
            return
        rows = table.ensure(ids)
        table.rows_view()[rows] -= lr * grads


class AdamState:
    """Adaptive-moment updates with a shared step count per table."""

    def __init__(self, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self._m: dict[int, np.ndarray] = {}
        self._v: dict[int, np.ndarray] = {}
        self._t: dict[int, int] = {}

    def apply(self, table: EmbeddingTable, ids: np.ndarray, grads: np.ndarray,
              lr: float) -> None:
        if lr == 0.0:
            return
        key = id(table)
        if key not in self._m:
            self._m[key] = np.zeros((0, table.dim))
            self._v[key] = np.zeros((0, table.dim))
            self._t[key] = 0
        rows = table.ensure(ids)
        need = len(table)
        if len(self._m[key]) < need:
            pad = need - len(self._m[key])
            self._m[key] = np.vstack([self._m[key], np.zeros((pad, table.dim))])
            self._v[key] = np.vstack([self._v[key], np.zeros((pad, table.dim))])
        self._t[key] += 1
        t = self._t[key]
        m = self._m[key]
        v = self._v[key]
        m[rows] = self.beta1 * m[rows] + (1 - self.beta1) * grads
        v[rows] = self.beta2 * v[rows] + (1 - self.beta2) * grads**2
        m_hat = m[rows] / (1 - self.beta1**t)
        v_hat = v[rows] / (1 - self.beta2**t)
        table.rows_view()[rows] -= lr * m_hat / (np.sqrt(v_hat) + self.eps)


def make_optimizer(name: str):
    if name == "sgd":
        return SgdState()
    if name == "adam":
        return AdamState()
    raise ContractViolation(f"unknown optimizer {name!r}")


def apply_gradients(
    tables: dict[str, EmbeddingTable],
    grads: dict[str, tuple[np.ndarray, np.ndarray]],
    optimizer_state,
    lr: float,
) -> dict[str, EmbeddingTable]:
    """Apply per-id gradients to the named tables; untouched ids keep."""
    for table_name, (ids, gs) in grads.items():
        if not np.isfinite(gs).all():
            bad = ids[~np.isfinite(gs).all(axis=1)]
            raise NumericError(
                f"non-finite gradient for {table_name} id(s) {bad[:5].tolist()}")
        optimizer_state.apply(tables[table_name], ids, gs, lr)
    return tables


def grads_from_pairs(pairs: dict[tuple[str, int], np.ndarray]
                     ) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Convenience: convert {(table, id): vec} into the array form."""
    by_table: dict[str, tuple[list, list]] = {}
    for (table_name, entity_id), vec in pairs.items():
        bucket = by_table.setdefault(table_name, ([], []))
        bucket[0].append(entity_id)
        bucket[1].append(np.asarray(vec, dtype=np.float64))
    return {
        name: (np.array(ids, dtype=np.int64), np.vstack(vecs))
        for name, (ids, vecs) in by_table.items()
    }
