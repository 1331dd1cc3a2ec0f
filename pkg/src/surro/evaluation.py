"""Error metrics, per-cell model evaluation, the cross-location grid and the
annual-resolution baseline."""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .config import TrainConfig
from .dataset import build_dataset
from .encoders import Head, SurrogateModel, TCNEncoder
from .engine import Adam, Tensor, backward, initialize, no_grad
from .engine import functional as F
from .errors import InvalidArgument, ShapeError, SurroError, UndefinedCorrelation
from .oracle import simulate_weeks
from .prng import SplitMix64, derive_seed
from .sampling import DESIGN_SPACE, DesignSpace, lhs_sample, normalize_design
from .training import (TrainReport, _EarlyStopper, _check_finite, _target_stats, single_thread,
                       train_autoencoder, train_head, train_joint)
from .weather import HOURS_PER_WEEK, WEEKS_PER_YEAR, HourlyWeatherYear, fit_scaler, window_weeks

EVAL_DESIGNS = 30
EVAL_SEED_OFFSET = 1000


# ------------------------------------------------------------------ metrics

def _pair(actual, predicted):
    a = np.asarray(actual, dtype=np.float64).ravel()
    p = np.asarray(predicted, dtype=np.float64).ravel()
    if a.shape != p.shape:
        raise ShapeError(f"length mismatch: {a.size} actual vs {p.size} predicted")
    if a.size == 0:
        raise ShapeError("metrics need at least one value")
    return a, p


def smape(actual, predicted) -> float:
    """Symmetric MAPE in percent; a term with both values zero counts as 0."""
    a, p = _pair(actual, predicted)
    denom = (np.abs(a) + np.abs(p)) / 2.0
    diff = np.abs(a - p)
    terms = np.divide(diff, denom, out=np.zeros_like(diff), where=denom > 0)
    return float(terms.mean() * 100.0)


def rmse(actual, predicted) -> float:
    a, p = _pair(actual, predicted)
    return float(math.sqrt(np.mean((a - p) ** 2)))


def pearson(actual, predicted) -> float:
    a, p = _pair(actual, predicted)
    if a.size < 2:
        raise UndefinedCorrelation("pearson needs at least two points")
    da, dp = a - a.mean(), p - p.mean()
    sa, sp = math.sqrt(float(da @ da)), math.sqrt(float(dp @ dp))
    if sa == 0.0 or sp == 0.0:
        raise UndefinedCorrelation("pearson undefined for a constant sequence")
    return float(np.clip((da @ dp) / (sa * sp), -1.0, 1.0))


# ------------------------------------------------------------- single cell

@dataclass(frozen=True)
class CellMetrics:
    weekly_smape: float
    annual_smape: float
    weekly_rmse: float
    pearson: float          # median over designs; nan if every design is undefined
    failed: bool = False
    note: str = ""

    @classmethod
    def failure(cls, note: str) -> "CellMetrics":
        nan = float("nan")
        return cls(nan, nan, nan, nan, True, note)


class OracleModel:
    """Uses the simulator itself as the predictor (zero-error sanity gate)."""

    def __init__(self, space: DesignSpace = DESIGN_SPACE):
        self.space = space

    def predict_weeks(self, raw_weeks, designs):
        return simulate_weeks(designs, raw_weeks, self.space)


def evaluation_designs(seed: int, space: DesignSpace = DESIGN_SPACE,
                       n: int = EVAL_DESIGNS) -> np.ndarray:
    """Fresh LHS designs, drawn with the training seed offset by 1000."""
    return lhs_sample(space, n, seed + EVAL_SEED_OFFSET)


def evaluate_model(model, test_year: HourlyWeatherYear, designs: np.ndarray,
                   oracle: Callable = simulate_weeks) -> CellMetrics:
    """Weekly metrics over all (design, week) pairs, annual SMAPE over
    per-design 52-week sums, and the median per-design Pearson r."""
    weeks = window_weeks(test_year)
    truth = oracle(designs, weeks)
    pred = model.predict_weeks(weeks, designs)
    rs = []
    for t, p in zip(truth, pred):
        try:
            rs.append(pearson(t, p))
        except UndefinedCorrelation:
            rs.append(np.nan)
    r = float(np.nanmedian(rs)) if not np.all(np.isnan(rs)) else float("nan")
    return CellMetrics(smape(truth, pred), smape(truth.sum(axis=1), pred.sum(axis=1)),
                       rmse(truth, pred), r)


# ------------------------------------------------------------ grid running

@dataclass(frozen=True)
class GridRow:
    row_id: str
    train_locations: tuple[str, ...]
    config: TrainConfig
    ae_config: TrainConfig | None = None   # autoencoder rows only


@dataclass
class EvaluationMatrix:
    row_ids: list[str]
    col_ids: list[str]
    cells: dict = field(default_factory=dict)   # (row, col) -> CellMetrics

    def cell(self, row: str, col: str) -> CellMetrics:
        return self.cells[(row, col)]

    def values(self, metric: str) -> np.ndarray:
        return np.array([[getattr(self.cells[(r, c)], metric) for c in self.col_ids]
                         for r in self.row_ids])


WeatherStore = dict  # location id -> (primary year, alternate year)


def train_row(row: GridRow, weather: WeatherStore, n_designs: int = 50,
              space: DesignSpace = DESIGN_SPACE):
    """Train one row's model on the primary years of its locations, validating
    on their alternate years. Returns (model, report)."""
    cfg = row.config
    train_years = [weather[loc][0] for loc in row.train_locations]
    val_years = [weather[loc][1] for loc in row.train_locations]
    scaler = fit_scaler([window_weeks(y) for y in train_years], "+".join(row.train_locations))
    designs = lhs_sample(space, n_designs, cfg.seed)
    if cfg.encoder.kind == "autoencoder":
        if row.ae_config is None:
            raise InvalidArgument(f"row {row.row_id}: autoencoder rows need an autoencoder config")
        ae_weeks = [window_weeks(y) for y, _ in weather.values()]
        ae_scaler = fit_scaler(ae_weeks, "all")
        trained = train_autoencoder(ae_scaler.transform_array(np.concatenate(ae_weeks)), ae_scaler,
                                    row.ae_config)
        scaler = ae_scaler
    train = build_dataset(train_years, space, n_designs, cfg.seed, scaler, designs)
    val = build_dataset(val_years, space, n_designs, cfg.seed, scaler, designs)
    if cfg.encoder.kind == "autoencoder":
        return train_head(trained.encoder, scaler, trained.cfg, train, val, cfg)
    return train_joint(train, val, cfg)


def evaluate_row(model, row: GridRow, weather: WeatherStore, cols: Sequence[str],
                 designs: np.ndarray) -> dict:
    out = {}
    for col in cols:
        # a training location is tested on its other weather year
        year = weather[col][1] if col in row.train_locations else weather[col][0]
        try:
            out[col] = evaluate_model(model, year, designs)
        except SurroError as exc:
            out[col] = CellMetrics.failure(str(exc))
    return out


def _run_row(args):
    row, weather, cols, n_designs, eval_seed = args
    designs = evaluation_designs(eval_seed)
    try:
        model, _ = train_row(row, weather, n_designs)
    except (SurroError, FloatingPointError) as exc:
        return row.row_id, {c: CellMetrics.failure(f"training failed: {exc}") for c in cols}
    return row.row_id, evaluate_row(model, row, weather, cols, designs)


def cross_evaluate(rows: Sequence[GridRow], cols: Sequence[str], weather: WeatherStore,
                   n_designs: int = 50, eval_seed: int = 0, jobs: int = 1) -> EvaluationMatrix:
    """Train each row and evaluate it at every test location.

    Rows are independent; with jobs > 1 they run in worker processes and are
    merged back in (row, column) order.
    """
    missing = sorted({loc for r in rows for loc in r.train_locations} | set(cols))
    missing = [loc for loc in missing if loc not in weather]
    if missing:
        raise InvalidArgument(f"no weather for location(s): {', '.join(missing)}")
    tasks = [(r, weather, list(cols), n_designs, eval_seed) for r in rows]
    if jobs > 1 and len(rows) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = dict(pool.map(_run_row, tasks))
    else:
        results = dict(_run_row(t) for t in tasks)
    matrix = EvaluationMatrix([r.row_id for r in rows], list(cols))
    for r in rows:
        for c in cols:
            matrix.cells[(r.row_id, c)] = results[r.row_id][c]
    return matrix


# -------------------------------------------------------- annual baseline

ANNUAL_HOURS = WEEKS_PER_YEAR * HOURS_PER_WEEK


class AnnualBaseline:
    """TCN + head predicting annual kWh from the full 8736-hour year."""

    def __init__(self, model: SurrogateModel):
        self.model = model

    def predict_annual(self, year: HourlyWeatherYear, designs: np.ndarray) -> np.ndarray:
        raw = year.data[:ANNUAL_HOURS][None]
        m = self.model
        h = m.embed_raw(raw)
        b = normalize_design(m.space, np.atleast_2d(designs))
        with no_grad():
            z = m.head_forward(Tensor(np.repeat(h, len(b), axis=0)), b).data
        return z * m.target_std + m.target_mean


def train_annual_baseline(train_years: Sequence[HourlyWeatherYear],
                          val_years: Sequence[HourlyWeatherYear], cfg: TrainConfig,
                          n_designs: int = 50, space: DesignSpace = DESIGN_SPACE):
    """Same TCN as the weekly model, but one sample per (location, design):
    the whole year in, annual energy out."""
    if cfg.encoder.kind != "tcn":
        raise InvalidArgument("the annual baseline uses the TCN encoder")
    designs = lhs_sample(space, n_designs, cfg.seed)
    scaler = fit_scaler([window_weeks(y) for y in train_years],
                        "+".join(y.location_id for y in train_years))

    def annual(years):
        x = np.stack([scaler.transform_array(y.data[:ANNUAL_HOURS]) for y in years])
        t = np.stack([simulate_weeks(designs, window_weeks(y), space).sum(axis=1) for y in years])
        return x, t   # (L, 8736, d_w), (L, n)

    x_tr, y_tr = annual(train_years)
    x_va, y_va = annual(val_years)
    b = normalize_design(space, designs)
    report = TrainReport(stage="annual")
    with single_thread():
        encoder = TCNEncoder(cfg.encoder, scaler.n_features)
        head = Head(cfg.head, encoder.embed_dim + space.dim)
        model = SurrogateModel(encoder, head, scaler, space, cfg.encoder, cfg.head, cfg.seed)
        initialize(encoder, cfg.seed)
        initialize(head, derive_seed(cfg.seed, "head"))
        L, n = y_tr.shape
        mu, sd = _target_stats(y_tr)
        model.target_mean, model.target_std = mu, sd
        z_tr = ((y_tr - mu) / sd).reshape(-1)
        loc_of = np.repeat(np.arange(L), n)
        des_of = np.tile(np.arange(n), L)
        opt = Adam(model.parameters(), cfg.lr)
        stopper = _EarlyStopper(model, cfg.patience)
        step = 0
        for epoch in range(cfg.max_epochs):
            order = SplitMix64(derive_seed(cfg.seed, "shuffle", epoch)).permutation(L * n)
            model.train()
            total = 0.0
            for s in range(0, L * n, cfg.batch_size):
                idx = order[s:s + cfg.batch_size]
                uniq, inv = np.unique(loc_of[idx], return_inverse=True)
                h = F.take_rows(encoder(Tensor(x_tr[uniq])), inv)
                head.set_step(cfg.seed, step)
                loss = F.mse_loss(model.head_forward(h, b[des_of[idx]]), z_tr[idx])
                _check_finite(loss.item(), epoch)
                opt.zero_grad()
                backward(loss)
                opt.step()
                step += 1
                total += loss.item() * len(idx)
            report.train_losses.append(total / (L * n))
            model.eval()
            with no_grad():
                h_va = encoder(Tensor(x_va)).data
                preds = np.stack([head(Tensor(np.concatenate(
                    [np.repeat(h_va[i:i + 1], n, axis=0), b], axis=1))).data
                    for i in range(len(h_va))])
            v = float(np.mean((preds - (y_va - mu) / sd) ** 2))
            _check_finite(v, epoch, "validation loss")
            report.val_losses.append(v)
            if stopper.update(epoch, v):
                break
        stopper.restore()
        report.best_epoch = stopper.best_epoch
        model.round_to_float32()
        model.trained = True
        model.eval()
    return AnnualBaseline(model), report


def annual_smape(baseline: AnnualBaseline, test_year: HourlyWeatherYear,
                 designs: np.ndarray) -> float:
    truth = simulate_weeks(designs, window_weeks(test_year)).sum(axis=1)
    return smape(truth, baseline.predict_annual(test_year, designs))


__all__ = [
    "AnnualBaseline", "CellMetrics", "EvaluationMatrix", "GridRow", "OracleModel",
    "annual_smape", "cross_evaluate", "evaluate_model", "evaluation_designs", "pearson", "rmse",
    "smape", "train_annual_baseline", "train_row",
]
