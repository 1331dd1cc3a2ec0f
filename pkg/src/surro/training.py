"""Joint encoder+head training, autoencoder pre-training, and frozen-encoder
head training, all with seeded shuffling and early stopping on validation MSE."""
from __future__ import annotations

import hashlib
import json
import time
from contextlib import nullcontext
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import EncoderConfig, TrainConfig
from .dataset import Dataset
from .encoders import ConvAutoencoder, Encoder, SurrogateModel, build_model
from .engine import Adam, Module, Tensor, backward, initialize, no_grad
from .engine import functional as F
from .errors import InsufficientData, InvalidArgument, NumericFailure
from .prng import SplitMix64, derive_seed
from .weather import MinMaxScaler

try:  # keeps BLAS single-threaded so reductions are reproducible run to run
    from threadpoolctl import threadpool_limits
except ImportError:  # pragma: no cover
    threadpool_limits = None


def single_thread():
    return threadpool_limits(1) if threadpool_limits is not None else nullcontext()


@dataclass
class TrainReport:
    train_losses: list[float] = field(default_factory=list)
    val_losses: list[float] = field(default_factory=list)
    best_epoch: int = -1
    wall_time_s: float = 0.0
    model_path: str | None = None
    stage: str = "joint"

    def to_json(self, include_time: bool = True) -> str:
        d = {"stage": self.stage, "train_losses": self.train_losses,
             "val_losses": self.val_losses, "best_epoch": self.best_epoch,
             "model_path": self.model_path}
        if include_time:
            d["wall_time_s"] = self.wall_time_s
        return json.dumps(d, indent=2, sort_keys=True) + "\n"

    def write(self, path: Path) -> None:
        Path(path).write_text(self.to_json())


def _snapshot(module: Module):
    params = [p.data.copy() for p in module.parameters()]
    bufs = [b.copy() for _, b in module.named_buffers()]
    return params, bufs


def _restore(module: Module, snap) -> None:
    params, bufs = snap
    for p, v in zip(module.parameters(), params):
        p.data = v
    for (_, b), v in zip(module.named_buffers(), bufs):
        b[...] = v


def _check_finite(value: float, epoch: int, what: str = "loss"):
    if not np.isfinite(value):
        raise NumericFailure(f"non-finite training {what}", epoch=epoch)


class _EarlyStopper:
    def __init__(self, module: Module, patience: int):
        self.module = module
        self.patience = patience
        self.best = np.inf
        self.best_epoch = -1
        self.snap = None

    def update(self, epoch: int, val: float) -> bool:
        """Record one epoch; returns True when training should stop."""
        if val < self.best:
            self.best, self.best_epoch = val, epoch
            self.snap = _snapshot(self.module)
            return False
        return epoch - self.best_epoch >= self.patience

    def restore(self):
        if self.snap is not None:
            _restore(self.module, self.snap)


def _target_stats(y: np.ndarray):
    mu = float(y.mean())
    sd = float(y.std())
    return mu, (sd if sd > 0 else 1.0)


def _same_scaler(a: MinMaxScaler, b: MinMaxScaler) -> bool:
    return np.array_equal(a.min, b.min) and np.array_equal(a.max, b.max)


def _head_predict(model: SurrogateModel, h: np.ndarray, week_ids, designs_scaled, design_idx,
                  chunk: int = 4096) -> np.ndarray:
    """Eval-mode head outputs (standardized units) for cached embeddings."""
    out = np.empty(len(week_ids))
    with no_grad():
        for s in range(0, len(week_ids), chunk):
            sl = slice(s, s + chunk)
            x = np.concatenate([h[week_ids[sl]], designs_scaled[design_idx[sl]]], axis=1)
            out[sl] = model.head(Tensor(x)).data
    return out


def _validation_mse(model: SurrogateModel, val: Dataset, mu: float, sd: float,
                    h_val: np.ndarray | None = None) -> float:
    model.eval()
    if h_val is None:
        with no_grad():
            h_val = model.encoder(Tensor(model.scaler.transform_array(val.raw_weeks))).data
    week_ids, design_idx, y = val.index_arrays()
    pred = _head_predict(model, h_val, week_ids, val.designs_scaled, design_idx)
    return float(np.mean((pred - (y - mu) / sd) ** 2))


def _fit_loop(model: SurrogateModel, train: Dataset, val: Dataset, cfg: TrainConfig,
              params, embed_batch, h_val_fn, report: TrainReport,
              train_encoder: bool = True) -> None:
    """Shared epoch loop. ``embed_batch(unique_week_ids)`` returns a tracked
    or constant embedding tensor for the batch's distinct weeks."""
    week_ids, design_idx, y = train.index_arrays()
    mu, sd = _target_stats(y)
    model.target_mean, model.target_std = mu, sd
    z = (y - mu) / sd
    n = len(z)
    opt = Adam(params, cfg.lr)
    stopper = _EarlyStopper(model, cfg.patience)
    step = 0
    for epoch in range(cfg.max_epochs):
        order = SplitMix64(derive_seed(cfg.seed, "shuffle", epoch)).permutation(n)
        model.head.train()
        model.encoder.train(train_encoder)
        total = 0.0
        for s in range(0, n, cfg.batch_size):
            idx = order[s:s + cfg.batch_size]
            uniq, inv = np.unique(week_ids[idx], return_inverse=True)
            h = F.take_rows(embed_batch(uniq), inv)
            model.head.set_step(cfg.seed, step)
            pred = model.head_forward(h, train.designs_scaled[design_idx[idx]])
            loss = F.mse_loss(pred, z[idx])
            value = loss.item()
            if cfg.inject_nan_epoch is not None and epoch >= cfg.inject_nan_epoch:
                value = float("nan")
            _check_finite(value, epoch)
            opt.zero_grad()
            backward(loss)
            opt.step()
            step += 1
            total += value * len(idx)
        report.train_losses.append(total / n)
        v = _validation_mse(model, val, mu, sd, h_val_fn())
        _check_finite(v, epoch, "validation loss")
        report.val_losses.append(v)
        if stopper.update(epoch, v):
            break
    stopper.restore()
    report.best_epoch = stopper.best_epoch
    model.round_to_float32()
    model.trained = True
    model.eval()


def _check_pair(train: Dataset, val: Dataset):
    if len(train) == 0 or len(val) == 0:
        raise InsufficientData("training and validation datasets must be non-empty")
    if not _same_scaler(train.scaler, val.scaler):
        raise InvalidArgument("training and validation datasets must share one scaler")


def train_joint(train: Dataset, val: Dataset, cfg: TrainConfig):
    """End-to-end training of encoder and head on the prediction MSE.

    Returns (model, report); the model holds the best-validation weights.
    """
    _check_pair(train, val)
    if cfg.encoder.kind == "autoencoder":
        raise InvalidArgument("autoencoder models train in two stages (train_autoencoder + train_head)")
    t0 = time.perf_counter()
    report = TrainReport(stage="joint")
    with single_thread():
        model = build_model(cfg.encoder, cfg.head, train.scaler, train.space, cfg.seed)
        weeks = train.weeks

        def embed_batch(uniq):
            return model.encoder(Tensor(weeks[uniq]))

        _fit_loop(model, train, val, cfg, model.parameters(), embed_batch, lambda: None, report)
    report.wall_time_s = time.perf_counter() - t0
    return model, report


# ------------------------------------------------------------ autoencoder

@dataclass
class TrainedAutoencoder:
    model: ConvAutoencoder
    scaler: MinMaxScaler
    cfg: EncoderConfig
    seed: int
    report: TrainReport

    @property
    def encoder(self) -> Encoder:
        return self.model.encoder


def reconstruction_mse(ae: ConvAutoencoder, weeks: np.ndarray, chunk: int = 64) -> float:
    """Per-element mean squared reconstruction error in scaled units."""
    ae.eval()
    total = 0.0
    with no_grad():
        for s in range(0, len(weeks), chunk):
            w = weeks[s:s + chunk]
            total += float(((ae(Tensor(w)).data - w) ** 2).sum())
    return total / weeks.size


def freeze(module: Module) -> None:
    for p in module.parameters():
        p.requires_grad = False
    module.eval()


def train_autoencoder(weeks: np.ndarray, scaler: MinMaxScaler, cfg: TrainConfig,
                      val_weeks: np.ndarray | None = None) -> TrainedAutoencoder:
    """Unsupervised reconstruction training on scaled weeks (n, T, d_w).

    Early stopping watches ``val_weeks`` when given, else the training loss.
    The returned encoder is frozen.
    """
    weeks = np.asarray(weeks, dtype=np.float64)
    if weeks.ndim != 3 or len(weeks) == 0:
        raise InsufficientData("train_autoencoder needs a non-empty (n, T, d_w) week array")
    t0 = time.perf_counter()
    report = TrainReport(stage="autoencoder")
    with single_thread():
        ae = ConvAutoencoder(cfg.encoder, weeks.shape[2], weeks.shape[1])
        initialize(ae, cfg.seed)
        opt = Adam(ae.parameters(), cfg.lr)
        stopper = _EarlyStopper(ae, cfg.patience)
        n = len(weeks)
        for epoch in range(cfg.max_epochs):
            order = SplitMix64(derive_seed(cfg.seed, "ae-shuffle", epoch)).permutation(n)
            ae.train()
            total = 0.0
            for s in range(0, n, cfg.batch_size):
                batch = weeks[order[s:s + cfg.batch_size]]
                loss = F.mse_loss(ae(Tensor(batch)), batch)
                value = loss.item()
                if cfg.inject_nan_epoch is not None and epoch >= cfg.inject_nan_epoch:
                    value = float("nan")
                _check_finite(value, epoch)
                opt.zero_grad()
                backward(loss)
                opt.step()
                total += value * len(batch)
            report.train_losses.append(total / n)
            v = reconstruction_mse(ae, val_weeks) if val_weeks is not None else total / n
            _check_finite(v, epoch, "validation loss")
            report.val_losses.append(v)
            if stopper.update(epoch, v):
                break
        stopper.restore()
        report.best_epoch = stopper.best_epoch
        for p in ae.parameters():
            p.data = p.data.astype(np.float32).astype(np.float64)
        for _, b in ae.named_buffers():
            b[...] = b.astype(np.float32).astype(np.float64)
        freeze(ae)
    report.wall_time_s = time.perf_counter() - t0
    return TrainedAutoencoder(ae, scaler, cfg.encoder, cfg.seed, report)


def encoder_checksum(encoder: Module) -> str:
    h = hashlib.sha256()
    for name, p in encoder.named_parameters():
        h.update(name.encode())
        h.update(np.ascontiguousarray(p.data).tobytes())
    for name, b in encoder.named_buffers():
        h.update(name.encode())
        h.update(np.ascontiguousarray(b).tobytes())
    return h.hexdigest()


def train_head(encoder: Encoder, scaler: MinMaxScaler, encoder_cfg: EncoderConfig,
               train: Dataset, val: Dataset, cfg: TrainConfig):
    """Head-only training on top of a frozen encoder.

    Each distinct training and validation week is encoded exactly once; the
    weather is re-scaled with the encoder's own scaler.
    """
    if len(train) == 0 or len(val) == 0:
        raise InsufficientData("training and validation datasets must be non-empty")
    t0 = time.perf_counter()
    report = TrainReport(stage="head")
    with single_thread():
        freeze(encoder)
        model = build_model(encoder_cfg, cfg.head, scaler, train.space, cfg.seed, encoder=encoder)
        with no_grad():
            h_train = encoder(Tensor(scaler.transform_array(train.raw_weeks))).data
            h_val = encoder(Tensor(scaler.transform_array(val.raw_weeks))).data

        def embed_batch(uniq):
            return Tensor(h_train[uniq])

        # encoder stays in eval mode, so its BN statistics are never touched
        _fit_loop(model, train, val, cfg, model.head.parameters(), embed_batch,
                  lambda: h_val, report, train_encoder=False)
    report.wall_time_s = time.perf_counter() - t0
    return model, report
