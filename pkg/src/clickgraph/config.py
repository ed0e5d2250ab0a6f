"""Flat run configuration: every tunable in one place.

Configs are stored as ``key=value`` text files.  Unknown keys are
rejected so a typo cannot silently fall back to a default, and the
resolved config printed by the CLI can be fed back in as a config file
to reproduce the identical run.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError


def _parse_bool(raw: str) -> bool:
    low = raw.strip().lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _parse_int_tuple(raw: str) -> tuple[int, ...]:
    raw = raw.strip()
    if not raw:
        return ()
    return tuple(int(part) for part in raw.split(","))


@dataclass
class RunConfig:
    """All tunables for data generation, training and evaluation."""

    # reproducibility
    seed: int = 7

    # embedding geometry
    dim: int = 10
    num_bins: int = 20
    k: int = 10

    # graph construction
    window_size: int = 2
    session_gap: float = 1800.0
    q2i_timespan: float = 600.0
    seeds_mix_rate: float = 0.2
    symmetric_q2i_time: bool = True
    include_current_query: bool = False

    # negative sampling
    n_neg: int = 100
    queue_capacity: int = 10000
    subsample_threshold: float = 0.0  # 0 disables frequency subsampling

    # joint objective and optimization
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0
    lr_ctr: float = 0.1
    lr_graph: float = 0.25
    optimizer: str = "sgd"
    batch_size: int = 256
    epochs: int = 1
    eval_every: int = 0  # 0: validation AUC only after training
    hidden_dims: tuple[int, ...] = (64, 32)
    l_click: int = 100
    l_query: int = 100

    # ablation switches
    use_graph: bool = True
    use_query: bool = True
    use_pos_emb: bool = True

    # evaluation
    n_sim_pairs: int = 10000

    # synthetic data
    num_users: int = 2000
    num_items: int = 1000
    num_queries: int = 240
    num_categories: int = 20
    items_per_category: int = 50
    clusters_per_category: int = 4
    intra_category_click_prob: float = 0.8
    fine_click_fraction: float = 0.75
    mean_sessions_per_user: float = 4.0
    mean_clicks_per_session: float = 3.5
    max_queries_per_session: int = 2
    extra_category_prob: float = 0.05
    session_gap_mean: float = 7200.0
    seq_len_max: int = 200
    valid_fraction: float = 0.1

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        positive = (
            "dim", "num_bins", "k", "window_size", "n_neg", "queue_capacity",
            "batch_size", "epochs", "l_click", "l_query", "num_users",
            "num_items", "num_queries", "num_categories", "items_per_category",
            "clusters_per_category", "max_queries_per_session", "seq_len_max",
            "n_sim_pairs",
        )
        for name in positive:
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be > 0, got {getattr(self, name)}")
        for name in ("session_gap", "q2i_timespan", "session_gap_mean",
                     "mean_sessions_per_user", "mean_clicks_per_session"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be > 0, got {getattr(self, name)}")
        for name in ("seeds_mix_rate", "intra_category_click_prob",
                     "fine_click_fraction", "extra_category_prob", "valid_fraction"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {value}")
        for name in ("alpha", "beta", "gamma", "lr_ctr", "lr_graph",
                     "subsample_threshold"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigError(f"optimizer must be 'sgd' or 'adam', got {self.optimizer!r}")
        if self.eval_every < 0:
            raise ConfigError(f"eval_every must be >= 0, got {self.eval_every}")
        if not self.hidden_dims or any(h <= 0 for h in self.hidden_dims):
            raise ConfigError(f"hidden_dims must be positive, got {self.hidden_dims}")
        if self.num_items < self.num_categories:
            raise ConfigError("num_items must be >= num_categories")
        if self.num_queries < self.num_categories * self.clusters_per_category:
            raise ConfigError(
                "num_queries must be >= num_categories * clusters_per_category "
                "so every planted cluster has a query pool")

    # -- serialization ---------------------------------------------------

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if isinstance(value, bool):
                rendered = "true" if value else "false"
            elif isinstance(value, tuple):
                rendered = ",".join(str(v) for v in value)
            else:
                rendered = repr(value) if isinstance(value, float) else str(value)
            lines.append(f"{f.name}={rendered}")
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")

    @classmethod
    def from_items(cls, items: dict[str, str]) -> "RunConfig":
        fields = {f.name: f for f in dataclasses.fields(cls)}
        kwargs = {}
        for key, raw in items.items():
            if key not in fields:
                raise ConfigError(f"unknown config key: {key!r}")
            ftype = fields[key].type
            try:
                if ftype == "bool":
                    kwargs[key] = _parse_bool(raw)
                elif ftype == "int":
                    kwargs[key] = int(raw)
                elif ftype == "float":
                    kwargs[key] = float(raw)
                elif ftype.startswith("tuple"):
                    kwargs[key] = _parse_int_tuple(raw)
                else:
                    kwargs[key] = raw.strip()
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {raw!r} ({exc})") from exc
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path, overrides: dict[str, str] | None = None) -> "RunConfig":
        items: dict[str, str] = {}
        for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, _, raw = stripped.partition("=")
            items[key.strip()] = raw
        if overrides:
            items.update(overrides)
        return cls.from_items(items)
