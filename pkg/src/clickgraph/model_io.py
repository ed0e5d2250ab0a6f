"""Model-directory persistence.

A trained model is a plain directory:

    config.txt        resolved config, key=value (feed back to reproduce)
    embeddings.tsv    entity_type \\t id \\t v_1 ... v_dim   (8 significant digits)
    mlp.npz           numpy archive with keys W0, b0, W1, b1, ...
    metrics.log       one line per training batch, plus validation lines

``embeddings.tsv`` covers all four tables (item, query, bin, position),
ids ascending within each table, so identical runs export identical
bytes.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .config import RunConfig
from .ctr_net import MlpParams, TrainResult
from .embed_learn import EmbeddingTable
from .errors import LogFormatError
from .multi_interest import BinningScheme

TABLE_ORDER = ("item", "query", "bin", "position")


def export_embeddings(tables: dict[str, EmbeddingTable], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for name in TABLE_ORDER:
            table = tables.get(name)
            if table is None:
                continue
            for entity_id, vector in table.items():
                values = "\t".join(f"{v:.8g}" for v in vector)
                fh.write(f"{name}\t{entity_id}\t{values}\n")


def parse_embeddings(path, seed: int = 0) -> dict[str, EmbeddingTable]:
    tables: dict[str, EmbeddingTable] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) < 3:
            raise LogFormatError(f"{path}:{lineno}: expected >= 3 fields")
        name, entity_id = parts[0], int(parts[1])
        vector = np.array([float(v) for v in parts[2:]], dtype=np.float64)
        if name not in tables:
            tables[name] = EmbeddingTable(name, dim=len(vector), seed=seed)
        tables[name].set_vector(entity_id, vector)
    return tables


def save_mlp(mlp: MlpParams, path) -> None:
    arrays = {}
    for i, (W, b) in enumerate(zip(mlp.weights, mlp.biases)):
        arrays[f"W{i}"] = W
        arrays[f"b{i}"] = b
    np.savez(path, **arrays)


def load_mlp(path) -> MlpParams:
    with np.load(path) as data:
        n_layers = sum(1 for key in data.files if key.startswith("W"))
        weights = [data[f"W{i}"] for i in range(n_layers)]
        biases = [data[f"b{i}"] for i in range(n_layers)]
    return MlpParams(weights=weights, biases=biases)


def save_model(result: TrainResult, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    result.cfg.save(out / "config.txt")
    export_embeddings(result.tables, out / "embeddings.tsv")
    save_mlp(result.mlp, out / "mlp.npz")
    (out / "metrics.log").write_text(
        "".join(line + "\n" for line in result.metrics_lines), encoding="utf-8")
    return out


def load_model(model_dir) -> TrainResult:
    model_dir = Path(model_dir)
    cfg = RunConfig.from_file(model_dir / "config.txt")
    tables = parse_embeddings(model_dir / "embeddings.tsv", seed=cfg.seed)
    for name in TABLE_ORDER:
        tables.setdefault(name, EmbeddingTable(name, dim=cfg.dim, seed=cfg.seed))
    mlp = load_mlp(model_dir / "mlp.npz")
    scheme = BinningScheme(num_bins=cfg.num_bins,
                           max_seq_len=max(cfg.l_click, cfg.l_query),
                           use_positional=cfg.use_pos_emb)
    metrics_path = model_dir / "metrics.log"
    metrics = metrics_path.read_text(encoding="utf-8").splitlines() \
        if metrics_path.exists() else []
    return TrainResult(tables=tables, mlp=mlp, scheme=scheme, cfg=cfg,
                       metrics_lines=metrics)
