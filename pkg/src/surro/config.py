"""Model and training configuration, read from ``key = value`` INI files."""
from __future__ import annotations

import configparser
import io
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from .errors import InvalidConfig

ENCODER_KINDS = ("tcn", "transformer", "autoencoder")
DEFAULT_BLOCKS = {"tcn": 3, "transformer": 2, "autoencoder": 3}


@dataclass(frozen=True)
class EncoderConfig:
    kind: str
    embed_dim: int = 16
    first_filters: int = 16    # tcn / autoencoder
    n_blocks: int = 0          # 0 -> per-kind default
    kernel_size: int = 5       # tcn / autoencoder
    heads: int = 2             # transformer
    t_ffnn_size: int = 32      # transformer

    def __post_init__(self):
        if self.kind not in ENCODER_KINDS:
            raise InvalidConfig(f"unknown encoder kind {self.kind!r}; expected one of {ENCODER_KINDS}")
        if self.n_blocks == 0:
            object.__setattr__(self, "n_blocks", DEFAULT_BLOCKS[self.kind])
        if self.n_blocks < 1:
            raise InvalidConfig("n_blocks must be >= 1")
        if self.embed_dim < 1:
            raise InvalidConfig("embed_dim must be >= 1")
        if self.kind in ("tcn", "autoencoder"):
            if self.first_filters < 1:
                raise InvalidConfig("first_filters must be >= 1")
            if self.kernel_size < 1 or self.kernel_size % 2 == 0:
                raise InvalidConfig("kernel_size must be odd")
        if self.kind == "transformer":
            if self.heads < 1 or self.embed_dim % self.heads:
                raise InvalidConfig(f"embed_dim {self.embed_dim} not divisible by heads {self.heads}")
            if self.embed_dim % 2:
                raise InvalidConfig("transformer embed_dim must be even (sinusoidal encoding)")
            if self.t_ffnn_size < 1:
                raise InvalidConfig("t_ffnn_size must be >= 1")


@dataclass(frozen=True)
class HeadConfig:
    first_hidden: int = 64
    n_layers: int = 4
    dropout_p: float = 0.1
    approach: int = 1          # 1: fixed four halving layers; 2: n_layers halving layers

    def __post_init__(self):
        if self.first_hidden < 2:
            raise InvalidConfig("first_hidden must be >= 2")
        if not 0.0 <= self.dropout_p < 1.0:
            raise InvalidConfig("dropout must be in [0, 1)")
        if self.approach not in (1, 2):
            raise InvalidConfig("approach must be 1 or 2")
        if self.n_layers < 1:
            raise InvalidConfig("n_layers must be >= 1")

    def widths(self) -> list[int]:
        n = 4 if self.approach == 1 else self.n_layers
        return [-(-self.first_hidden // 2 ** i) for i in range(n)]


@dataclass(frozen=True)
class TrainConfig:
    encoder: EncoderConfig
    head: HeadConfig = field(default_factory=HeadConfig)
    lr: float = 1e-3
    batch_size: int = 64
    max_epochs: int = 200
    patience: int = 20
    seed: int = 0
    train_locations: tuple[str, ...] = ()
    inject_nan_epoch: int | None = None   # test hook: poison the loss at this epoch

    def __post_init__(self):
        if self.batch_size < 1:
            raise InvalidConfig("batch_size must be >= 1")
        if self.max_epochs < 1:
            raise InvalidConfig("max_epochs must be >= 1")
        if not 0 < self.patience < self.max_epochs:
            raise InvalidConfig(f"patience must be in [1, max_epochs), got patience {self.patience} "
                                f"with max_epochs {self.max_epochs}")
        if not self.lr > 0:
            raise InvalidConfig("lr must be > 0")
        if len(self.train_locations) > 3:
            raise InvalidConfig("at most three training locations")

    def with_(self, **changes) -> "TrainConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        d["encoder"] = EncoderConfig(**d["encoder"])
        d["head"] = HeadConfig(**d["head"])
        d["train_locations"] = tuple(d.get("train_locations", ()))
        return cls(**d)


_INT_KEYS = {"embed_dim", "first_filters", "n_blocks", "kernel_size", "heads", "t_ffnn_size",
             "first_hidden", "n_layers", "approach", "batch_size", "max_epochs", "patience", "seed"}
_FLOAT_KEYS = {"dropout_p", "lr"}
_ALIASES = {"dropout": "dropout_p", "filters": "first_filters", "hidden": "first_hidden",
            "layers": "n_layers", "blocks": "n_blocks", "kernel": "kernel_size"}


def _section(parser, name, path):
    if not parser.has_section(name):
        return {}
    out = {}
    for key, raw in parser.items(name):
        key = _ALIASES.get(key, key)
        try:
            if key in _INT_KEYS:
                out[key] = int(raw)
            elif key in _FLOAT_KEYS:
                out[key] = float(raw)
            elif key == "train_locations":
                out[key] = tuple(s.strip() for s in raw.split(",") if s.strip())
            elif key == "kind":
                out[key] = raw.strip()
            else:
                raise InvalidConfig(f"{path}: unknown key {key!r} in [{name}]")
        except ValueError:
            raise InvalidConfig(f"{path}: bad value for {key!r}: {raw!r}") from None
    return out


def parse_config(text: str, source: str = "<config>", **overrides) -> TrainConfig:
    parser = configparser.ConfigParser()
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise InvalidConfig(f"{source}: {exc}") from None
    enc = _section(parser, "encoder", source)
    if "kind" not in enc:
        raise InvalidConfig(f"{source}: [encoder] kind is required")
    head = _section(parser, "head", source)
    train = _section(parser, "training", source)
    train.update({k: v for k, v in overrides.items() if v is not None})
    # a shortened run keeps early stopping meaningful instead of failing validation
    if overrides.get("max_epochs") and train.get("patience", 20) >= train["max_epochs"]:
        train["patience"] = max(1, train["max_epochs"] - 1)
    return TrainConfig(encoder=EncoderConfig(**enc), head=HeadConfig(**head), **train)


def load_config(path: Path, **overrides) -> TrainConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InvalidConfig(f"cannot read config {path}: {exc}") from None
    return parse_config(text, str(path), **overrides)


def config_to_text(cfg: TrainConfig) -> str:
    parser = configparser.ConfigParser()
    parser["encoder"] = {k: str(v) for k, v in asdict(cfg.encoder).items()}
    parser["head"] = {k: str(v) for k, v in asdict(cfg.head).items()}
    train = {k: str(v) for k, v in asdict(cfg).items()
             if k not in ("encoder", "head", "train_locations", "inject_nan_epoch")}
    if cfg.train_locations:
        train["train_locations"] = ", ".join(cfg.train_locations)
    parser["training"] = train
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()
