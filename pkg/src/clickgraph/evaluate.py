"""Metrics, embedding analysis, ablations, and the pooling baseline.

AUC is computed from rank statistics (ties count half), RelaImpr
measures AUC lift over a baseline above the 0.5 random-ranking floor,
and the embedding analysis contrasts mean cosine similarity of
same-category vs cross-category item pairs.  The ablation harness
retrains the model with individual components disabled; the DNN
baseline replaces the whole graph apparatus with sum-pooled embeddings
trained directly by the CTR loss.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .config import RunConfig
from .ctr_net import (
    MlpParams,
    TrainResult,
    make_mlp_optimizer,
    predict,
    prepare_samples,
    sigmoid,
    train,
)
from .embed_learn import EmbeddingTable, apply_gradients, make_optimizer
from .errors import ContractViolation, MetricUndefinedError
from .ingest import TrainingSample

_PAIR_RNG_STREAM = 50
_BASELINE_NAMESPACE = 1


@dataclass
class EvalReport:
    """AUC with counts, optional baseline lift, optional ablation table."""

    auc: float
    n_pos: int
    n_neg: int
    relaimpr_vs: tuple[str, float] | None = None
    ablation_table: dict[str, float] | None = None

    def to_text(self) -> str:
        lines = [f"auc={self.auc:.6f} n_pos={self.n_pos} n_neg={self.n_neg}"]
        if self.relaimpr_vs is not None:
            name, pct = self.relaimpr_vs
            lines.append(f"relaimpr_vs_{name}={pct:+.2f}%")
        if self.ablation_table:
            base = self.ablation_table.get("full")
            lines.append("")
            lines.append(f"{'method':<14} {'auc':>8} {'diff%':>8}")
            for name, value in self.ablation_table.items():
                if name == "full" or base is None:
                    lines.append(f"{name:<14} {value:>8.4f} {'':>8}")
                else:
                    lines.append(f"{name:<14} {value:>8.4f} {100 * (value - base):>+8.2f}")
        return "\n".join(lines)


def auc(scores) -> float:
    """Probability a random positive outranks a random negative.

    ``scores`` is an iterable of (score, label) pairs; ties count 0.5.
    Computed from average ranks in O(n log n).
    """
    pairs = list(scores)
    if not pairs:
        raise MetricUndefinedError("AUC needs at least one score")
    s = np.array([p[0] for p in pairs], dtype=np.float64)
    y = np.array([p[1] for p in pairs])
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise MetricUndefinedError(
            f"AUC undefined for single-class input (pos={n_pos}, neg={n_neg})")

    n = len(s)
    order = np.argsort(s, kind="mergesort")
    s_sorted = s[order]
    ranks = np.empty(n, dtype=np.float64)
    i = 0
    while i < n:
        j = i
        while j + 1 < n and s_sorted[j + 1] == s_sorted[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j + 2) / 2.0  # 1-based average rank
        i = j + 1
    pos_rank_sum = float(ranks[y == 1].sum())
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def relaimpr(auc_model: float, auc_base: float) -> float:
    """Relative AUC improvement (%) above the 0.5 random-ranking floor."""
    if auc_base <= 0.5:
        raise MetricUndefinedError(
            f"RelaImpr undefined for baseline AUC {auc_base} <= 0.5")
    return ((auc_model - 0.5) / (auc_base - 0.5) - 1.0) * 100.0


def category_similarity_report(
    table: EmbeddingTable,
    categories: dict[int, int],
    n_pairs: int = 10000,
    rng: np.random.Generator | None = None,
) -> tuple[float, float]:
    """Mean cosine over sampled same-category and cross-category pairs.

    Only ids present in the table participate.  Requires at least two
    categories with two or more items each.
    """
    if rng is None:
        rng = np.random.default_rng(_PAIR_RNG_STREAM)
    by_cat: dict[int, list[int]] = {}
    for entity_id, cat in categories.items():
        if entity_id in table:
            by_cat.setdefault(cat, []).append(entity_id)
    eligible = sorted(c for c, ids in by_cat.items() if len(ids) >= 2)
    if len(eligible) < 2:
        raise MetricUndefinedError(
            "need >= 2 categories with >= 2 embedded items each")

    cat_vecs = {c: table.lookup_many(sorted(ids)) for c, ids in by_cat.items()}

    def _cosine_rows(U, V):
        nu = np.sqrt((U * U).sum(axis=1))
        nv = np.sqrt((V * V).sum(axis=1))
        denom = np.where((nu > 1e-12) & (nv > 1e-12), nu * nv, 1.0)
        return np.where((nu > 1e-12) & (nv > 1e-12), (U * V).sum(axis=1) / denom, 0.0)

    # intra: random category, two distinct member items
    cats = np.array(eligible)[rng.integers(len(eligible), size=n_pairs)]
    U = np.empty((n_pairs, table.dim))
    V = np.empty((n_pairs, table.dim))
    for p in range(n_pairs):
        vecs = cat_vecs[int(cats[p])]
        i1 = int(rng.integers(len(vecs)))
        i2 = int(rng.integers(len(vecs) - 1))
        if i2 >= i1:
            i2 += 1
        U[p] = vecs[i1]
        V[p] = vecs[i2]
    intra = float(_cosine_rows(U, V).mean())

    # inter: two distinct categories, one item from each
    nonempty = sorted(by_cat)
    for p in range(n_pairs):
        c1 = int(rng.integers(len(nonempty)))
        c2 = int(rng.integers(len(nonempty) - 1))
        if c2 >= c1:
            c2 += 1
        v1 = cat_vecs[nonempty[c1]]
        v2 = cat_vecs[nonempty[c2]]
        U[p] = v1[int(rng.integers(len(v1)))]
        V[p] = v2[int(rng.integers(len(v2)))]
    inter = float(_cosine_rows(U, V).mean())
    return intra, inter


def evaluate_model(result: TrainResult, samples: list[TrainingSample]) -> EvalReport:
    """Score held-out samples with a trained model and report AUC."""
    prepared = prepare_samples(samples, result.cfg)
    scores = predict(prepared, result.tables, result.mlp, result.scheme,
                     result.cfg.k, result.cfg.use_query)
    labels = [s.label for s in prepared]
    return EvalReport(
        auc=auc(list(zip(scores, labels))),
        n_pos=sum(labels),
        n_neg=len(labels) - sum(labels),
    )


# ---------------------------------------------------------------------------
# DNN sum-pooling baseline: no graph, embeddings trained by the CTR loss


@dataclass
class DnnPoolingModel:
    item_table: EmbeddingTable
    query_table: EmbeddingTable
    mlp: MlpParams
    cfg: RunConfig

    def predict(self, samples: list[TrainingSample]) -> np.ndarray:
        X = _baseline_inputs(samples, self.item_table, self.query_table)
        z, _ = self.mlp.forward_batch(X)
        return sigmoid(z)


def _baseline_inputs(samples, item_table, query_table) -> np.ndarray:
    dim = item_table.dim
    n = len(samples)
    pooled = np.zeros((n, dim))
    for i, s in enumerate(samples):
        if s.click_seq:
            pooled[i] = item_table.lookup_many(
                [e.entity_id for e in s.click_seq]).sum(axis=0)
    targets = item_table.lookup_many([s.target_item.entity_id for s in samples])
    queries = query_table.lookup_many([s.current_query.entity_id for s in samples])
    f_o = np.stack([s.other_features for s in samples])
    return np.hstack([pooled, targets, queries, f_o])


def train_dnn_pooling(
    train_samples: list[TrainingSample],
    valid_samples: list[TrainingSample],
    cfg: RunConfig,
) -> DnnPoolingModel:
    """Train the baseline with the same optimizer/epochs as the model."""
    if not train_samples:
        raise ContractViolation("training stream is empty")
    samples = prepare_samples(train_samples, cfg)
    item_table = EmbeddingTable("item", dim=cfg.dim, seed=cfg.seed,
                                namespace=_BASELINE_NAMESPACE)
    query_table = EmbeddingTable("query", dim=cfg.dim, seed=cfg.seed,
                                 namespace=_BASELINE_NAMESPACE)
    fo_dim = len(samples[0].other_features)
    mlp = MlpParams.create(3 * cfg.dim + fo_dim, cfg.hidden_dims, cfg.seed,
                           namespace=_BASELINE_NAMESPACE)
    table_opt = make_optimizer(cfg.optimizer)
    mlp_opt = make_mlp_optimizer(cfg.optimizer)
    shuffle_rng = np.random.default_rng([cfg.seed, 52])

    for epoch in range(cfg.epochs):
        order = np.arange(len(samples))
        if epoch > 0:
            shuffle_rng.shuffle(order)
        for start in range(0, len(order), cfg.batch_size):
            batch = [samples[i] for i in order[start:start + cfg.batch_size]]
            X = _baseline_inputs(batch, item_table, query_table)
            y = np.array([s.label for s in batch], dtype=np.float64)
            z, caches = mlp.forward_batch(X)
            dz = (sigmoid(z) - y) / len(batch)
            w_grads, b_grads, dX = mlp.backward_batch(caches, dz)

            dim = cfg.dim
            d_pool, d_target, d_query = dX[:, :dim], dX[:, dim:2 * dim], dX[:, 2 * dim:3 * dim]
            item_ids, item_grads = [], []
            for i, s in enumerate(batch):
                for e in s.click_seq:
                    item_ids.append(e.entity_id)
                    item_grads.append(d_pool[i])
                item_ids.append(s.target_item.entity_id)
                item_grads.append(d_target[i])
            grads = {
                "item": _dedupe(np.array(item_ids), np.vstack(item_grads)),
                "query": _dedupe(
                    np.array([s.current_query.entity_id for s in batch]), d_query),
            }
            apply_gradients({"item": item_table, "query": query_table},
                            grads, table_opt, cfg.lr_ctr)
            mlp_opt.apply(mlp, w_grads, b_grads, cfg.lr_ctr)
    return DnnPoolingModel(item_table=item_table, query_table=query_table,
                           mlp=mlp, cfg=cfg)


def _dedupe(ids: np.ndarray, grads: np.ndarray):
    unique, inverse = np.unique(ids, return_inverse=True)
    acc = np.zeros((len(unique), grads.shape[1]))
    np.add.at(acc, inverse, grads)
    return unique, acc


def dnn_pooling_baseline(
    train_samples: list[TrainingSample],
    valid_samples: list[TrainingSample],
    cfg: RunConfig,
) -> EvalReport:
    """Train and evaluate the sum-pooling baseline."""
    model = train_dnn_pooling(train_samples, valid_samples, cfg)
    prepared = prepare_samples(valid_samples, cfg)
    scores = model.predict(prepared)
    labels = [s.label for s in prepared]
    return EvalReport(
        auc=auc(list(zip(scores, labels))),
        n_pos=sum(labels),
        n_neg=len(labels) - sum(labels),
    )


# ---------------------------------------------------------------------------
# ablation harness


ABLATIONS: dict[str, dict] = {
    "full": {},
    "no_graph": {"use_graph": False},
    "no_query": {"use_query": False},
    "no_pos_emb": {"use_pos_emb": False},
}


def run_ablations(
    cfg: RunConfig,
    train_samples: list[TrainingSample],
    valid_samples: list[TrainingSample],
    seeds: list[int] | None = None,
    include_baseline: bool = True,
) -> EvalReport:
    """Retrain with components disabled and report mean AUC per variant.

    Variants: full model; no_graph (graph loss weights zero and graph
    tables frozen at initialization); no_query (query edges and
    query-anchored features removed); no_pos_emb (positional vectors
    zeroed and frozen).  All variants share the same seed list.
    """
    if not valid_samples:
        raise ContractViolation("run_ablations needs a validation split")
    seeds = list(seeds) if seeds else [cfg.seed]
    table: dict[str, float] = {}
    for name, overrides in ABLATIONS.items():
        if name == "no_graph":
            overrides = dict(overrides, alpha=0.0, beta=0.0, gamma=0.0, lr_graph=0.0)
        aucs = []
        for seed in seeds:
            variant = dataclasses.replace(cfg, seed=seed, **overrides)
            aucs.append(train(train_samples, valid_samples, variant).valid_auc)
        table[name] = float(np.mean(aucs))
    if include_baseline:
        aucs = []
        for seed in seeds:
            variant = dataclasses.replace(cfg, seed=seed)
            aucs.append(dnn_pooling_baseline(train_samples, valid_samples, variant).auc)
        table["dnn_pooling"] = float(np.mean(aucs))

    labels = [s.label for s in valid_samples]
    return EvalReport(
        auc=table["full"],
        n_pos=sum(labels),
        n_neg=len(labels) - sum(labels),
        ablation_table=table,
    )
