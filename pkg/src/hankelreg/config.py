"""Flat ``key = value`` run configuration files."""
from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path

from .hankel import TauSampler
from .train import DEFAULT_LAMBDA_GRID, MODES, TrainConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    # training
    grammar: str = "T5"
    seed: int = 0
    hidden_size: int = 50
    batch_size: int = 32
    initial_lr: float = 0.01
    regularizer: str = "none"
    lam: float = 0.0
    naive_len: int = 10
    max_epochs: int = 500
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    # truncation sampler
    sampler: str = "truncated_geometric"
    p: float = 0.2
    t_max: int = 8
    # scheduler / early stopping
    patience: int = 5
    reduction_factor: float = 0.5
    min_lr: float = 1e-5
    early_stop_patience: int = 20
    improvement_threshold: float = 1e-4
    # data
    data_seed: int = 0
    max_len: int = 12
    train_pool_fraction: float = 0.5
    train_size: int = -1  # -1: the whole training split
    # sweep
    training_sizes: tuple[int, ...] = (25, 50, 100)
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    modes: tuple[str, ...] = MODES
    lambda_grid: tuple[float, ...] = DEFAULT_LAMBDA_GRID
    # output
    record_wall_clock: bool = False

    def sampler_config(self) -> TauSampler:
        return TauSampler(self.sampler, self.p, self.t_max)

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            grammar=self.grammar,
            seed=self.seed,
            hidden_size=self.hidden_size,
            batch_size=self.batch_size,
            initial_lr=self.initial_lr,
            regularizer=self.regularizer,
            lam=self.lam,
            sampler=self.sampler_config(),
            naive_len=self.naive_len,
            max_epochs=self.max_epochs,
            patience=self.patience,
            reduction_factor=self.reduction_factor,
            min_lr=self.min_lr,
            early_stop_patience=self.early_stop_patience,
            improvement_threshold=self.improvement_threshold,
            beta1=self.beta1,
            beta2=self.beta2,
            adam_eps=self.adam_eps,
            record_wall_clock=self.record_wall_clock,
        )


# file key -> field name, where they differ
_ALIASES = {"lambda": "lam"}
_KEYS = {_f.name: _f for _f in fields(RunConfig)}
_FILE_KEYS = {v: k for k, v in _ALIASES.items()}


def _parse_value(name: str, raw: str):
    default = getattr(RunConfig, name)
    if isinstance(default, bool):
        low = raw.lower()
        if low in ("true", "yes", "1"):
            return True
        if low in ("false", "no", "0"):
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if isinstance(default, tuple):
        items = [x for x in raw.replace(",", " ").split() if x]
        kind = type(default[0]) if default else str
        return tuple(kind(x) for x in items)
    return type(default)(raw)


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line.strip()!r}")
        key, raw = (s.strip() for s in body.split("=", 1))
        name = _ALIASES.get(key, key)
        if name not in _KEYS or key in _FILE_KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        try:
            values[name] = _parse_value(name, raw)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {exc}") from None
    cfg = replace(RunConfig(), **values)
    validate(cfg, source)
    return cfg


def validate(cfg: RunConfig, source: str = "<config>") -> None:
    try:
        cfg.train_config()
        for m in cfg.modes:
            if m not in MODES:
                raise ValueError(f"unknown mode {m!r} in modes")
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, str(path))


def dumps(cfg: RunConfig) -> str:
    lines = []
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if isinstance(v, tuple):
            text = ", ".join(repr(x) if isinstance(x, float) else str(x) for x in v)
        elif isinstance(v, bool):
            text = "true" if v else "false"
        elif isinstance(v, float):
            text = repr(v)
        else:
            text = str(v)
        lines.append(f"{_FILE_KEYS.get(f.name, f.name)} = {text}")
    return "\n".join(lines) + "\n"
