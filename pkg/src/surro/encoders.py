"""Weather encoders (TCN, Transformer, convolutional autoencoder), the
prediction head, and the assembled surrogate model."""
from __future__ import annotations

import numpy as np

from .config import EncoderConfig, HeadConfig
from .engine import (BatchNorm1d, Conv1d, ConvTranspose1d, Dropout, LayerNorm, Linear, Module,
                     MultiHeadAttention, Tensor, initialize, no_grad)
from .engine import functional as F
from .errors import InvalidConfig, ShapeError, UntrainedModel
from .prng import derive_seed
from .sampling import DesignSpace, normalize_design
from .weather import D_W, HOURS_PER_WEEK, MinMaxScaler


class ResidualBlock(Module):
    """[conv -> BN -> relu -> conv -> BN] + skip, then relu."""

    def __init__(self, cin: int, cout: int, kernel: int):
        self.conv1 = Conv1d(cin, cout, kernel)
        self.bn1 = BatchNorm1d(cout)
        self.conv2 = Conv1d(cout, cout, kernel, nonlinearity="relu")
        self.bn2 = BatchNorm1d(cout)
        # 1x1 projection only when the channel count changes
        self.skip = Conv1d(cin, cout, 1, nonlinearity="linear") if cin != cout else None

    def forward(self, x):
        h = F.relu(self.bn1(self.conv1(x)))
        h = self.bn2(self.conv2(h))
        s = self.skip(x) if self.skip is not None else x
        return F.relu(h + s)


class ConvStack(Module):
    """Residual blocks with doubling channels, each followed by maxpool(2)."""

    def __init__(self, cin: int, first_filters: int, n_blocks: int, kernel: int):
        self.channels = [first_filters * 2 ** c for c in range(n_blocks)]
        prev = cin
        self.blocks = []
        for c in self.channels:
            self.blocks.append(ResidualBlock(prev, c, kernel))
            prev = c

    def forward(self, x):
        for block in self.blocks:
            x = F.max_pool1d(block(x), 2)
        return x


class Encoder(Module):
    """Maps scaled weeks (B, T, d_w) to embeddings (B, embed_dim)."""

    embed_dim: int

    def __init__(self):
        self.weeks_encoded = 0

    def __call__(self, x):
        self.weeks_encoded += x.shape[0]
        return self.forward(x)


class TCNEncoder(Encoder):
    def __init__(self, cfg: EncoderConfig, d_w: int = D_W):
        super().__init__()
        self.embed_dim = cfg.embed_dim
        self.stack = ConvStack(d_w, cfg.first_filters, cfg.n_blocks, cfg.kernel_size)
        self.proj = Linear(self.stack.channels[-1], cfg.embed_dim, nonlinearity="linear")

    def forward(self, x):
        if x.ndim != 3 or x.shape[1] < 2 ** len(self.stack.blocks):
            raise ShapeError(f"TCN input {x.shape} too short for {len(self.stack.blocks)} poolings")
        h = self.stack(F.transpose(x, (0, 2, 1)))
        return self.proj(F.global_avg_pool(h))


class TransformerBlock(Module):
    """Pre-norm: x + MHA(LN x), then x + FFN(LN x)."""

    def __init__(self, dim: int, heads: int, ffn: int):
        self.ln1 = LayerNorm(dim)
        self.attn = MultiHeadAttention(dim, heads)
        self.ln2 = LayerNorm(dim)
        self.ff1 = Linear(dim, ffn)
        self.ff2 = Linear(ffn, dim, nonlinearity="linear")

    def forward(self, x):
        x = x + self.attn(self.ln1(x))
        return x + self.ff2(F.relu(self.ff1(self.ln2(x))))


class TransformerEncoder(Encoder):
    def __init__(self, cfg: EncoderConfig, d_w: int = D_W):
        super().__init__()
        self.embed_dim = cfg.embed_dim
        self.embed = Linear(d_w, cfg.embed_dim, nonlinearity="linear")
        self.blocks = [TransformerBlock(cfg.embed_dim, cfg.heads, cfg.t_ffnn_size)
                       for _ in range(cfg.n_blocks)]
        self.ln = LayerNorm(cfg.embed_dim)
        self._pe = {}

    def positional(self, T: int) -> np.ndarray:
        if T not in self._pe:
            self._pe[T] = F.sinusoidal_positional_encoding(T, self.embed_dim)
        return self._pe[T]

    def forward(self, x):
        if x.ndim != 3:
            raise ShapeError(f"transformer input must be (B, T, d_w), got {x.shape}")
        h = self.embed(x) + self.positional(x.shape[1])
        for block in self.blocks:
            h = block(h)
        return F.mean(self.ln(h), axis=1)


class ConvAutoencoder(Module):
    """Residual conv encoder to a flat embedding and a mirrored decoder that
    upsamples with stride-2 transposed convolutions."""

    def __init__(self, cfg: EncoderConfig, d_w: int = D_W, length: int = HOURS_PER_WEEK):
        if length % 2 ** cfg.n_blocks:
            raise InvalidConfig(f"length {length} not divisible by 2^{cfg.n_blocks}")
        self.encoder = AutoencoderEncoder(cfg, d_w, length)
        ch = self.encoder.stack.channels
        self.t_last = length // 2 ** cfg.n_blocks
        self.c_last = ch[-1]
        self.expand = Linear(cfg.embed_dim, self.c_last * self.t_last)
        self.up, self.up_bn, self.refine = [], [], []
        outs = ch[-2::-1] + [ch[0]]
        prev = self.c_last
        for c in outs:
            self.up.append(ConvTranspose1d(prev, c, 4, 2))
            self.up_bn.append(BatchNorm1d(c))
            self.refine.append(ResidualBlock(c, c, cfg.kernel_size))
            prev = c
        self.out = Conv1d(prev, d_w, 1, nonlinearity="linear")

    def decode(self, h):
        B = h.shape[0]
        x = F.reshape(F.relu(self.expand(h)), (B, self.c_last, self.t_last))
        for up, bn, ref in zip(self.up, self.up_bn, self.refine):
            x = ref(F.relu(bn(up(x))))
        return F.transpose(self.out(x), (0, 2, 1))

    def forward(self, x):
        return self.decode(self.encoder(x))


class AutoencoderEncoder(Encoder):
    def __init__(self, cfg: EncoderConfig, d_w: int = D_W, length: int = HOURS_PER_WEEK):
        super().__init__()
        self.embed_dim = cfg.embed_dim
        self.length = length
        self.stack = ConvStack(d_w, cfg.first_filters, cfg.n_blocks, cfg.kernel_size)
        flat = self.stack.channels[-1] * (length // 2 ** cfg.n_blocks)
        self.proj = Linear(flat, cfg.embed_dim, nonlinearity="linear")

    def forward(self, x):
        if x.ndim != 3 or x.shape[1] != self.length:
            raise ShapeError(f"autoencoder input must be (B, {self.length}, d_w), got {x.shape}")
        h = self.stack(F.transpose(x, (0, 2, 1)))
        return self.proj(F.reshape(h, (h.shape[0], -1)))


class Head(Module):
    """Halving relu+dropout layers ending in a scalar output."""

    def __init__(self, cfg: HeadConfig, in_dim: int):
        self.in_dim = in_dim
        self.layers, self.drops = [], []
        prev = in_dim
        for w in cfg.widths():
            self.layers.append(Linear(prev, w))
            self.drops.append(Dropout(cfg.dropout_p))
            prev = w
        self.out = Linear(prev, 1, nonlinearity="linear")

    def forward(self, x):
        if x.shape[-1] != self.in_dim:
            raise ShapeError(f"head expects {self.in_dim} inputs, got {x.shape[-1]}")
        for lin, drop in zip(self.layers, self.drops):
            x = drop(F.relu(lin(x)))
        return F.reshape(self.out(x), (x.shape[0],))

    def set_step(self, seed: int, step: int):
        for i, d in enumerate(self.drops):
            d.seed, d.layer_id, d.step = seed, i, step


def build_encoder(cfg: EncoderConfig, d_w: int = D_W) -> Encoder:
    if cfg.kind == "tcn":
        return TCNEncoder(cfg, d_w)
    if cfg.kind == "transformer":
        return TransformerEncoder(cfg, d_w)
    return ConvAutoencoder(cfg, d_w).encoder


class SurrogateModel(Module):
    """E_hat = head([encoder(scaled week), normalized design]), de-standardized."""

    def __init__(self, encoder: Encoder, head: Head, scaler: MinMaxScaler, space: DesignSpace,
                 encoder_cfg: EncoderConfig, head_cfg: HeadConfig, seed: int = 0,
                 target_mean: float = 0.0, target_std: float = 1.0):
        self.encoder = encoder
        self.head = head
        self.scaler = scaler
        self.space = space
        self.encoder_cfg = encoder_cfg
        self.head_cfg = head_cfg
        self.seed = seed
        self.target_mean = float(target_mean)
        self.target_std = float(target_std)
        self.trained = False
        if head.in_dim != encoder.embed_dim + space.dim:
            raise ShapeError("head input dim must equal embed_dim + design dim")

    @property
    def embed_dim(self) -> int:
        return self.encoder.embed_dim

    def head_forward(self, h, designs_scaled):
        return self.head(F.concat([h, Tensor(designs_scaled)], axis=1))

    def embed_raw(self, raw_weeks: np.ndarray) -> np.ndarray:
        raw_weeks = np.asarray(raw_weeks, dtype=np.float64)
        if raw_weeks.ndim != 3 or raw_weeks.shape[2] != self.scaler.n_features:
            raise ShapeError(f"expected (n, T, {self.scaler.n_features}) raw weeks, got {raw_weeks.shape}")
        self.eval()
        with no_grad():
            return self.encoder(Tensor(self.scaler.transform_array(raw_weeks))).data

    def predict_weeks(self, raw_weeks: np.ndarray, designs: np.ndarray) -> np.ndarray:
        """kWh for every (design, week) pair: (m, 14) x (n, T, d_w) -> (m, n)."""
        if not self.trained:
            raise UntrainedModel("model has not been trained or loaded")
        designs = np.atleast_2d(np.asarray(designs, dtype=np.float64))
        b = normalize_design(self.space, designs)
        h = self.embed_raw(raw_weeks)
        m, n = b.shape[0], h.shape[0]
        with no_grad():
            z = self.head_forward(Tensor(np.repeat(h[None], m, axis=0).reshape(m * n, -1)),
                                  np.repeat(b, n, axis=0)).data
        return (z * self.target_std + self.target_mean).reshape(m, n)

    def predict(self, raw_week: np.ndarray, b: np.ndarray) -> float:
        raw_week = np.asarray(raw_week, dtype=np.float64)
        if raw_week.ndim != 2:
            raise ShapeError(f"expected one (T, d_w) week, got {raw_week.shape}")
        return float(self.predict_weeks(raw_week[None], np.asarray(b)[None])[0, 0])

    def round_to_float32(self):
        """Snap weights to float32-representable values so the saved file
        reproduces predictions exactly."""
        for _, p in self.named_parameters():
            p.data = p.data.astype(np.float32).astype(np.float64)
        for m in self.modules():
            for name in m.buffer_names:
                buf = getattr(m, name)
                buf[...] = buf.astype(np.float32).astype(np.float64)


def build_model(encoder_cfg: EncoderConfig, head_cfg: HeadConfig, scaler: MinMaxScaler,
                space: DesignSpace, seed: int, encoder: Encoder | None = None) -> SurrogateModel:
    """Fresh seeded model; a pre-trained (frozen) encoder may be supplied."""
    fresh = encoder is None
    if fresh:
        encoder = build_encoder(encoder_cfg, scaler.n_features)
    head = Head(head_cfg, encoder.embed_dim + space.dim)
    model = SurrogateModel(encoder, head, scaler, space, encoder_cfg, head_cfg, seed)
    if fresh:
        initialize(encoder, seed)
    initialize(head, derive_seed(seed, "head"))
    return model
