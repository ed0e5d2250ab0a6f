"""CTR prediction head and the joint training loop.

The head is a small MLP over the concatenated similarity features and
the sample's other features, with a sigmoid output and cross-entropy
loss.  Training interleaves both objectives over the same input stream:
each batch pushes its ids into the negative queues, computes the graph
loss and its gradients from the batch's edges, computes the CTR loss
and its gradients (which reach the bin and position tables but stop at
the graph tables), and only then applies the weighted updates

    total = l_ctr + alpha * l_i2i + beta * l_q2q + gamma * l_q2i
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field

import numpy as np

from .config import RunConfig
from .errors import ContractViolation, NumericError
from .embed_learn import (
    EmbeddingTable,
    GraphLossTerms,
    apply_gradients,
    batch_graph_loss,
    make_graph_tables,
    make_optimizer,
    merge_kind_grads,
)
from .graph_edges import (
    EdgeConfig,
    EdgeKind,
    EntityType,
    build_all_edges,
    build_i2i_edges,
)
from .ingest import TrainingSample, derive_seeds_seq, truncate_recent
from .multi_interest import (
    BinningScheme,
    SimFeature,
    build_features,
    build_features_batch,
    make_feature_tables,
)
from .neg_sampling import NegQueue

log = logging.getLogger(__name__)

_EDGE_RNG_STREAM = 40
_NEG_RNG_STREAM = 41
_SHUFFLE_RNG_STREAM = 42
_MLP_RNG_STREAM = 43


def sigmoid(z):
    """Numerically stable logistic function."""
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out if out.ndim else float(out)


def _stable_ce(z: np.ndarray, y: np.ndarray) -> np.ndarray:
    # -[y log sigma(z) + (1-y) log(1 - sigma(z))], computed from logits
    return np.maximum(z, 0.0) - y * z + np.log1p(np.exp(-np.abs(z)))


@dataclass
class MlpParams:
    """Weights and biases; rectifier hidden layers, scalar output logit."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @classmethod
    def create(cls, input_dim: int, hidden_dims: tuple[int, ...], seed: int,
               namespace: int = 0) -> "MlpParams":
        dims = [input_dim, *hidden_dims, 1]
        weights, biases = [], []
        for layer, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
            rng = np.random.default_rng([seed, namespace, _MLP_RNG_STREAM, layer])
            limit = 1.0 / np.sqrt(fan_in)
            weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(weights=weights, biases=biases)

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    def forward_batch(self, X: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        """Logits (n,) plus the per-layer activations for backward."""
        if X.shape[1] != self.input_dim:
            raise ContractViolation(
                f"input dim {X.shape[1]} != expected {self.input_dim}")
        caches = [X]
        H = X
        for W, b in zip(self.weights[:-1], self.biases[:-1]):
            H = np.maximum(H @ W + b, 0.0)
            caches.append(H)
        z = (H @ self.weights[-1] + self.biases[-1]).ravel()
        return z, caches

    def backward_batch(
        self, caches: list[np.ndarray], dz: np.ndarray
    ) -> tuple[list[np.ndarray], list[np.ndarray], np.ndarray]:
        """Gradients for all layers and the input, given dL/dlogit."""
        dH = dz[:, None]
        w_grads = [None] * len(self.weights)
        b_grads = [None] * len(self.biases)
        for layer in range(len(self.weights) - 1, -1, -1):
            w_grads[layer] = caches[layer].T @ dH
            b_grads[layer] = dH.sum(axis=0)
            dH = dH @ self.weights[layer].T
            if layer > 0:
                dH = dH * (caches[layer] > 0)
        return w_grads, b_grads, dH


class MlpSgd:
    def apply(self, params: MlpParams, w_grads, b_grads, lr: float) -> None:
        if lr == 0.0:
            return
        for W, b, dW, db in zip(params.weights, params.biases, w_grads, b_grads):
            W -= lr * dW
            b -= lr * db


class MlpAdam:
    def __init__(self, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self._state = None
        self._t = 0

    def apply(self, params: MlpParams, w_grads, b_grads, lr: float) -> None:
        if lr == 0.0:
            return
        if self._state is None:
            self._state = [(np.zeros_like(W), np.zeros_like(W),
                            np.zeros_like(b), np.zeros_like(b))
                           for W, b in zip(params.weights, params.biases)]
        self._t += 1
        t = self._t
        for (W, b, dW, db, (mW, vW, mb, vb)) in zip(
                params.weights, params.biases, w_grads, b_grads, self._state):
            for param, grad, m, v in ((W, dW, mW, vW), (b, db, mb, vb)):
                m *= self.beta1
                m += (1 - self.beta1) * grad
                v *= self.beta2
                v += (1 - self.beta2) * grad**2
                m_hat = m / (1 - self.beta1**t)
                v_hat = v / (1 - self.beta2**t)
                param -= lr * m_hat / (np.sqrt(v_hat) + self.eps)


def make_mlp_optimizer(name: str):
    if name == "sgd":
        return MlpSgd()
    if name == "adam":
        return MlpAdam()
    raise ContractViolation(f"unknown optimizer {name!r}")


def forward(f_i2i, f_q2q, f_q2i, f_o, params: MlpParams) -> float:
    """pctr in (0, 1) for one sample's concatenated features."""
    x = np.concatenate([_as_vector(f_i2i), _as_vector(f_q2q),
                        _as_vector(f_q2i), np.asarray(f_o, dtype=np.float64)])
    z, _ = params.forward_batch(x[None, :])
    return float(sigmoid(z[0]))


def _as_vector(f) -> np.ndarray:
    return f.vector if isinstance(f, SimFeature) else np.asarray(f, dtype=np.float64)


def ctr_loss(pctr: float, label: int) -> tuple[float, float]:
    """Cross-entropy of one prediction and its d/dpctr."""
    if not 0.0 < pctr < 1.0:
        raise NumericError(f"pctr must be in (0, 1), got {pctr}")
    if label not in (0, 1):
        raise ContractViolation(f"label must be 0 or 1, got {label}")
    y = float(label)
    loss = -(y * np.log(pctr) + (1.0 - y) * np.log(1.0 - pctr))
    dloss = (pctr - y) / (pctr * (1.0 - pctr))
    return float(loss), float(dloss)


def backward(
    features: tuple[SimFeature, SimFeature, SimFeature],
    f_o: np.ndarray,
    label: int,
    params: MlpParams,
    scheme: BinningScheme,
) -> tuple[list[np.ndarray], list[np.ndarray], dict[tuple[str, int], np.ndarray]]:
    """Exact single-sample gradients of the CTR loss.

    Returns (mlp weight grads, mlp bias grads, table grads keyed by
    ('bin'|'position', id)).  Graph tables get nothing: the similarity
    features are constants with respect to the CTR loss.
    """
    x = np.concatenate([f.vector for f in features] + [np.asarray(f_o, dtype=np.float64)])
    z, caches = params.forward_batch(x[None, :])
    pctr = sigmoid(z[0])
    dz = np.array([pctr - float(label)])  # sigmoid + CE identity
    w_grads, b_grads, dX = params.backward_batch(caches, dz)

    dim = len(features[0].vector) // len(features[0].entries)
    table_grads: dict[tuple[str, int], np.ndarray] = {}
    offset = 0
    for feat in features:
        for bin_id, pos_id in feat.entries:
            slot = dX[0, offset:offset + dim]
            _accumulate_pair(table_grads, ("bin", bin_id), slot)
            if scheme.use_positional:
                _accumulate_pair(table_grads, ("position", pos_id), slot)
            offset += dim
    return w_grads, b_grads, table_grads


def _accumulate_pair(store, key, value) -> None:
    if key in store:
        store[key] = store[key] + value
    else:
        store[key] = value.copy()


@dataclass
class JointLossConfig:
    """Weights and optimization settings of the joint objective."""

    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0
    lr_ctr: float = 0.1
    lr_graph: float = 0.25
    batch_size: int = 256
    epochs: int = 1

    def __post_init__(self):
        if min(self.alpha, self.beta, self.gamma) < 0:
            raise ContractViolation("loss weights must be >= 0")

    @classmethod
    def from_run_config(cls, cfg: RunConfig) -> "JointLossConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        return cls(**{n: getattr(cfg, n) for n in names})


@dataclass
class TrainResult:
    """Trained state plus the per-batch metrics log."""

    tables: dict[str, EmbeddingTable]
    mlp: MlpParams
    scheme: BinningScheme
    cfg: RunConfig
    metrics_lines: list[str] = field(default_factory=list)
    valid_auc: float | None = None


def prepare_samples(samples: list[TrainingSample], cfg: RunConfig) -> list[TrainingSample]:
    """Re-truncate histories to the configured lengths, rebuilding seeds."""
    out = []
    for s in samples:
        clicks = truncate_recent(s.click_seq, cfg.l_click)
        queries = truncate_recent(s.query_seq, cfg.l_query)
        out.append(TrainingSample(
            user_id=s.user_id,
            target_item=s.target_item,
            current_query=s.current_query,
            click_seq=clicks,
            query_seq=queries,
            seeds_seq=derive_seeds_seq(clicks, s.current_query),
            other_features=s.other_features,
            label=s.label,
        ))
    return out


def predict(
    samples: list[TrainingSample],
    tables: dict[str, EmbeddingTable],
    mlp: MlpParams,
    scheme: BinningScheme,
    k: int,
    use_query: bool = True,
    batch_size: int = 1024,
) -> np.ndarray:
    """pctr scores for a list of samples (read-only)."""
    scores = np.empty(len(samples), dtype=np.float64)
    for start in range(0, len(samples), batch_size):
        batch = samples[start:start + batch_size]
        X_feat, _, _ = build_features_batch(batch, tables, scheme, k, use_query)
        F_o = np.stack([s.other_features for s in batch])
        z, _ = mlp.forward_batch(np.hstack([X_feat, F_o]))
        scores[start:start + len(batch)] = sigmoid(z)
    return scores


def train(
    train_samples: list[TrainingSample],
    valid_samples: list[TrainingSample],
    cfg: RunConfig,
) -> TrainResult:
    """Stream-style joint training over the shared sample input.

    Per batch: (1) push ids into the negative queues, (2) build each
    sample's edges and the per-kind graph losses and gradients,
    (3) build similarity features against the current tables, run the
    CTR forward/backward, (4) apply the weighted updates.  Emits one
    metrics line per batch and (optionally) periodic validation AUC.
    """
    if not train_samples:
        raise ContractViolation("training stream is empty")
    # local import: evaluate depends on this module for the baseline
    from .evaluate import auc as compute_auc

    samples = prepare_samples(train_samples, cfg)
    valid = prepare_samples(valid_samples, cfg) if valid_samples else []

    loss_cfg = JointLossConfig.from_run_config(cfg)
    edge_cfg = EdgeConfig.from_run_config(cfg)
    scheme = BinningScheme(num_bins=cfg.num_bins,
                           max_seq_len=max(cfg.l_click, cfg.l_query),
                           use_positional=cfg.use_pos_emb)
    tables = make_graph_tables(cfg.dim, cfg.seed)
    tables.update(make_feature_tables(cfg.dim, cfg.seed, scheme))
    fo_dim = len(samples[0].other_features)
    mlp = MlpParams.create(3 * cfg.k * cfg.dim + fo_dim, cfg.hidden_dims, cfg.seed)

    queues = {
        EntityType.ITEM: NegQueue(EntityType.ITEM, cfg.queue_capacity,
                                  cfg.subsample_threshold or None, seed=cfg.seed),
        EntityType.QUERY: NegQueue(EntityType.QUERY, cfg.queue_capacity,
                                   cfg.subsample_threshold or None, seed=cfg.seed),
    }
    graph_opt = make_optimizer(cfg.optimizer)
    feature_opt = make_optimizer(cfg.optimizer)
    mlp_opt = make_mlp_optimizer(cfg.optimizer)
    edge_rng = np.random.default_rng([cfg.seed, _EDGE_RNG_STREAM])
    neg_rng = np.random.default_rng([cfg.seed, _NEG_RNG_STREAM])
    shuffle_rng = np.random.default_rng([cfg.seed, _SHUFFLE_RNG_STREAM])
    kind_weights = {EdgeKind.I2I: loss_cfg.alpha, EdgeKind.Q2Q: loss_cfg.beta,
                    EdgeKind.Q2I: loss_cfg.gamma}

    result = TrainResult(tables=tables, mlp=mlp, scheme=scheme, cfg=cfg)
    step = 0
    for epoch in range(loss_cfg.epochs):
        order = np.arange(len(samples))
        if epoch > 0:
            # first pass keeps arrival order (stream-style); later
            # passes reshuffle deterministically
            shuffle_rng.shuffle(order)
        for start in range(0, len(order), loss_cfg.batch_size):
            batch = [samples[i] for i in order[start:start + loss_cfg.batch_size]]
            step += 1

            for s in batch:
                queues[EntityType.ITEM].push_many(
                    [e.entity_id for e in s.click_seq] + [s.target_item.entity_id])
                queues[EntityType.QUERY].push_many(
                    [e.entity_id for e in s.query_seq] + [s.current_query.entity_id])

            if cfg.use_graph:
                edges = []
                for s in batch:
                    if cfg.use_query:
                        edges.extend(build_all_edges(s, edge_cfg, edge_rng))
                    else:
                        edges.extend(build_i2i_edges(
                            s.click_seq, s.seeds_seq, edge_cfg, edge_rng))
                terms, kind_grads = batch_graph_loss(
                    edges, tables, queues, cfg.n_neg, neg_rng)
                graph_grads = merge_kind_grads(kind_grads, kind_weights)
            else:
                terms, graph_grads = GraphLossTerms(), {}

            X_feat, bin_ids, pos_ids = build_features_batch(
                batch, tables, scheme, cfg.k, cfg.use_query)
            F_o = np.stack([s.other_features for s in batch])
            X = np.hstack([X_feat, F_o])
            y = np.array([s.label for s in batch], dtype=np.float64)
            z, caches = mlp.forward_batch(X)
            l_ctr = float(_stable_ce(z, y).mean())
            dz = (sigmoid(z) - y) / len(batch)
            w_grads, b_grads, dX = mlp.backward_batch(caches, dz)

            n, dim = len(batch), cfg.dim
            d_slots = dX[:, : 3 * cfg.k * dim].reshape(-1, dim)
            flat_bins = bin_ids.reshape(-1)
            feature_grads = {"bin": _scatter_rows(flat_bins, d_slots)}
            if cfg.use_pos_emb:
                feature_grads["position"] = _scatter_rows(pos_ids.reshape(-1), d_slots)

            # updates last, so both tasks saw the same table snapshot
            if graph_grads:
                apply_gradients(tables, graph_grads, graph_opt, cfg.lr_graph)
            apply_gradients(tables, feature_grads, feature_opt, cfg.lr_ctr)
            mlp_opt.apply(mlp, w_grads, b_grads, cfg.lr_ctr)

            total = l_ctr + terms.weighted_total(loss_cfg.alpha, loss_cfg.beta,
                                                 loss_cfg.gamma)
            if not np.isfinite(total):
                raise NumericError(
                    f"non-finite loss at step {step} (epoch {epoch}, "
                    f"batch starting at {start}): l_ctr={l_ctr}, terms={terms}")
            result.metrics_lines.append(
                f"step={step} l_ctr={l_ctr:.8g} l_i2i={terms.l_i2i:.8g} "
                f"l_q2q={terms.l_q2q:.8g} l_q2i={terms.l_q2i:.8g} total={total:.8g}")

            if cfg.eval_every and valid and step % cfg.eval_every == 0:
                scores = predict(valid, tables, mlp, scheme, cfg.k, cfg.use_query)
                v_auc = compute_auc(list(zip(scores, (s.label for s in valid))))
                result.metrics_lines.append(f"step={step} valid_auc={v_auc:.8g}")

    if valid:
        scores = predict(valid, tables, mlp, scheme, cfg.k, cfg.use_query)
        result.valid_auc = compute_auc(list(zip(scores, (s.label for s in valid))))
        result.metrics_lines.append(f"final valid_auc={result.valid_auc:.8g}")
    return result


def _scatter_rows(ids: np.ndarray, grads: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    unique, inverse = np.unique(ids, return_inverse=True)
    acc = np.zeros((len(unique), grads.shape[1]), dtype=np.float64)
    np.add.at(acc, inverse, grads)
    return unique, acc
