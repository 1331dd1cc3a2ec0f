"""Command-line entry point: ``surro <command> ...``.

Exit codes: 0 success, 1 usage/config error, 2 data or I/O error,
3 numeric failure during training.
"""
from __future__ import annotations

import argparse
import configparser
import json
import os
import sys
import time
from pathlib import Path

from . import __version__
from .climates import load_manifest
from .config import ENCODER_KINDS, load_config
from .dataset import build_dataset, load_dataset, save_dataset
from .errors import (DegenerateFeature, InsufficientData, InvalidArgument, InvalidConfig,
                     MalformedData, MalformedModel, MalformedWeather, NumericFailure, ShapeError)
from .sampling import DESIGN_SPACE
from .weather import (fit_scaler, parse_epw, read_weather_csv, variability_report, window_weeks,
                      write_weather_csv)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def write_run_manifest(out_dir: Path, command: str, args: argparse.Namespace, seeds: dict,
                       inputs: list, outputs: list, started: float) -> None:
    record = {"command": command, "config": getattr(args, "config", None), "seeds": seeds,
              "inputs": [str(p) for p in inputs], "outputs": [str(p) for p in outputs],
              "version": __version__, "wall_time_s": round(time.perf_counter() - started, 3)}
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / f"run_manifest.{command}.json").write_text(
        json.dumps(record, indent=2, sort_keys=True) + "\n")


def weather_paths(weather_dir: Path, loc: str) -> tuple[Path, Path]:
    return weather_dir / f"{loc}.csv", weather_dir / f"{loc}.alt.csv"


def _read_year(path: Path, loc: str):
    if not path.exists():
        raise DataError(f"missing weather file {path}")
    return read_weather_csv(path, loc)


# ----------------------------------------------------------------- commands

def cmd_gen_weather(args) -> int:
    t0 = time.perf_counter()
    try:
        locations = load_manifest(args.manifest)
    except InvalidConfig as exc:
        raise DataError(f"bad manifest: {exc}") from None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for loc in locations:
        primary, alternate = weather_paths(out, loc.location_id)
        write_weather_csv(loc.year(), primary)
        write_weather_csv(loc.year(alternate=True), alternate)
        written += [primary, alternate]
    write_run_manifest(out, "gen-weather", args, {loc.location_id: loc.seed for loc in locations},
                       [args.manifest or "<bundled default>"], written, t0)
    print(f"wrote {len(written)} weather files to {out}")
    return EXIT_OK


def cmd_parse_epw(args) -> int:
    src = Path(args.input)
    try:
        raw = src.read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read {src}: {exc}") from None
    year = parse_epw(raw, args.location)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_weather_csv(year, out)
    print(f"{year.location_id}: 8760 hours -> {out}")
    return EXIT_OK


def _locations_in(weather_dir: Path, names: str | None) -> list[str]:
    if names:
        return [s.strip() for s in names.split(",") if s.strip()]
    return sorted(p.name[:-4] for p in weather_dir.glob("*.csv") if not p.name.endswith(".alt.csv"))


def cmd_variability(args) -> int:
    wdir = Path(args.weather)
    locs = _locations_in(wdir, args.locs)
    if not locs:
        raise DataError(f"no weather files in {wdir}")
    years = [_read_year(weather_paths(wdir, loc)[0], loc) for loc in locs]
    rep = variability_report(years)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "variability.csv").write_text(rep.metrics_csv())
    (out / "similarity.csv").write_text(rep.pairs_csv())
    for feat in ("drybulb_c", "rel_humidity_pct"):
        print(f"{feat}: weekly variance {rep.weekly_variance[feat]:.2f}, "
              f"annual variance {rep.annual_variance[feat]:.2f}")
    return EXIT_OK


def cmd_gen_data(args) -> int:
    t0 = time.perf_counter()
    if args.designs < 1:
        raise UsageError("--designs must be a positive integer")
    wdir = Path(args.weather)
    locs = _locations_in(wdir, args.locs)
    if not 1 <= len(locs) <= 10:
        raise UsageError("--locs needs at least one location id")
    years = [_read_year(weather_paths(wdir, loc)[1 if args.alternate else 0], loc) for loc in locs]
    designs = None
    if args.like:
        ref = load_dataset(Path(args.like), DESIGN_SPACE)
        scaler, designs, seed = ref.scaler, ref.designs, ref.seed
    else:
        train_years = [_read_year(weather_paths(wdir, loc)[0], loc) for loc in locs]
        scaler = fit_scaler([window_weeks(y) for y in train_years], "+".join(locs))
        seed = args.seed
    ds = build_dataset(years, DESIGN_SPACE, args.designs if designs is None else len(designs),
                       seed, scaler, designs)
    ds.provenance["weather_year"] = "alternate" if args.alternate else "primary"
    out = Path(args.out)
    save_dataset(ds, out)
    write_run_manifest(out, "gen-data", args, {"design_seed": seed},
                       [wdir / f"{loc}.csv" for loc in locs], [out], t0)
    print(len(ds))
    return EXIT_OK


def cmd_train(args) -> int:
    from .model_io import load_autoencoder, save_autoencoder, save_model
    from .training import train_autoencoder, train_head, train_joint

    t0 = time.perf_counter()
    if args.encoder not in ENCODER_KINDS:
        raise UsageError(f"unknown encoder {args.encoder!r}; choose from {', '.join(ENCODER_KINDS)}")
    cfg = load_config(args.config, seed=args.seed, inject_nan_epoch=args.inject_nan_epoch,
                      max_epochs=args.max_epochs)
    stage = args.stage or ("both" if args.encoder == "autoencoder" else "joint")
    if stage in ("ae", "both", "head") and args.encoder != "autoencoder":
        raise UsageError("--stage applies to autoencoder models only")
    if args.encoder == "autoencoder" and stage == "joint":
        raise UsageError("autoencoder models train with --stage ae, head or both")
    if stage not in ("ae", "head") and cfg.encoder.kind != args.encoder:
        raise UsageError(f"config encoder kind {cfg.encoder.kind!r} != --encoder {args.encoder!r}")

    out = Path(args.out)
    data = load_dataset(Path(args.data), DESIGN_SPACE)
    val = load_dataset(Path(args.val_data), DESIGN_SPACE) if args.val_data else None
    seeds = {"seed": cfg.seed}
    if stage == "joint":
        if val is None:
            raise UsageError("--val-data is required")
        model, report = train_joint(data, val, cfg)
        save_model(model, out)
    elif stage == "ae":
        trained = train_autoencoder(data.weeks, data.scaler, cfg,
                                    data.scaler.transform_array(val.raw_weeks) if val else None)
        save_autoencoder(trained.model, trained.scaler, trained.cfg, cfg.seed, out)
        report = trained.report
    else:
        if val is None:
            raise UsageError("--val-data is required")
        if stage == "head":
            if not args.encoder_model:
                raise UsageError("--stage head needs --encoder-model")
            ae, scaler, enc_cfg, _ = load_autoencoder(Path(args.encoder_model))
        else:
            if not args.ae_config:
                raise UsageError("--stage both needs --ae-config")
            ae_cfg = load_config(args.ae_config, seed=args.seed, max_epochs=args.max_epochs)
            trained = train_autoencoder(data.weeks, data.scaler, ae_cfg,
                                        data.scaler.transform_array(val.raw_weeks))
            ae, scaler, enc_cfg = trained.model, trained.scaler, trained.cfg
            save_autoencoder(ae, scaler, enc_cfg, ae_cfg.seed, out.with_suffix(".ae"))
        model, report = train_head(ae.encoder, scaler, enc_cfg, data, val, cfg)
        save_model(model, out)
    report.model_path = str(out)
    report_path = out.with_name(out.name + ".report.json")
    report.write(report_path)
    write_run_manifest(out.parent, "train", args, seeds, [args.data, args.val_data],
                       [out, report_path], t0)
    print(f"best epoch {report.best_epoch}, validation MSE {min(report.val_losses):.6g}")
    return EXIT_OK


def parse_grid(path: Path):
    """Grid file: a [grid] section with test_locations (and optional
    n_designs, eval_seed) plus one [row <id>] section per training setup."""
    from .evaluation import GridRow

    parser = configparser.ConfigParser()
    try:
        with Path(path).open() as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise DataError(f"cannot read grid {path}: {exc}") from None
    except configparser.Error as exc:
        raise UsageError(f"{path}: {exc}") from None
    if "grid" not in parser:
        raise UsageError(f"{path}: missing [grid] section")
    g = parser["grid"]
    cols = [s.strip() for s in g.get("test_locations", "").split(",") if s.strip()]
    if not cols:
        raise UsageError(f"{path}: test_locations is empty")
    base = Path(path).parent
    rows = []
    for sec in parser.sections():
        if not sec.startswith("row "):
            continue
        r = parser[sec]
        locs = tuple(s.strip() for s in r.get("train_locations", "").split(",") if s.strip())
        if not locs or "config" not in r:
            raise UsageError(f"{path}: [{sec}] needs train_locations and config")
        overrides = {"seed": int(r["seed"])} if "seed" in r else {}
        cfg = load_config(base / r["config"], train_locations=locs, **overrides)
        ae_cfg = load_config(base / r["ae_config"], **overrides) if "ae_config" in r else None
        rows.append(GridRow(sec[4:].strip(), locs, cfg, ae_cfg))
    if not rows:
        raise UsageError(f"{path}: no [row ...] sections")
    return rows, cols, int(g.get("n_designs", "50")), int(g.get("eval_seed", "0"))


def cmd_cross_eval(args) -> int:
    from .evaluation import cross_evaluate
    from .report import render_report

    t0 = time.perf_counter()
    rows, cols, n_designs, eval_seed = parse_grid(Path(args.grid))
    wdir = Path(args.weather)
    needed = sorted({loc for r in rows for loc in r.train_locations} | set(cols))
    weather = {}
    for loc in needed:
        primary, alternate = weather_paths(wdir, loc)
        weather[loc] = (_read_year(primary, loc), _read_year(alternate, loc))
    env = os.environ.get("SURRO_JOBS")
    jobs = int(env) if env else (args.jobs or os.cpu_count() or 1)
    matrix = cross_evaluate(rows, cols, weather, n_designs, eval_seed, max(1, jobs))
    out = Path(args.out)
    csv_path, svg_path = out / "matrix.csv", out / "heatmap.svg"
    render_report(matrix, csv_path, svg_path)
    write_run_manifest(out, "cross-eval", args,
                       {r.row_id: r.config.seed for r in rows} | {"eval_seed": eval_seed},
                       [args.grid, wdir], [csv_path, svg_path], t0)
    failed = sum(m.failed for m in matrix.cells.values())
    print(f"{len(matrix.cells)} cells ({failed} failed) -> {csv_path}")
    return EXIT_OK


def cmd_report(args) -> int:
    from .report import matrix_from_csv, render_report

    src = Path(args.input)
    if not src.exists():
        raise DataError(f"missing matrix file {src}")
    matrix = matrix_from_csv(src)
    render_report(matrix, None, Path(args.out), args.metric)
    print(f"{len(matrix.row_ids)}x{len(matrix.col_ids)} heatmap -> {args.out}")
    return EXIT_OK


# ------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="surro", description="Weekly weather-guided building energy surrogates.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("gen-weather", help="synthesize primary and alternate weather years")
    s.add_argument("--manifest", help="climate manifest (default: bundled ten locations)")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_gen_weather)

    s = sub.add_parser("parse-epw", help="convert an EPW file to the internal weather CSV")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--location", help="location id (default: from the EPW header)")
    s.set_defaults(func=cmd_parse_epw)

    s = sub.add_parser("variability", help="weekly vs annual variance and climate similarity")
    s.add_argument("--weather", required=True)
    s.add_argument("--locs", help="comma-separated ids (default: every primary file)")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_variability)

    s = sub.add_parser("gen-data", help="label LHS designs x weeks with the simulator")
    s.add_argument("--weather", required=True)
    s.add_argument("--locs", required=True)
    s.add_argument("--designs", type=int, default=50)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.add_argument("--alternate", action="store_true", help="use the alternate weather years")
    s.add_argument("--like", help="reuse scaler, designs and seed of this dataset directory")
    s.set_defaults(func=cmd_gen_data)

    s = sub.add_parser("train", help="train a surrogate (or autoencoder stage)")
    s.add_argument("--encoder", required=True, help="tcn | transformer | autoencoder")
    s.add_argument("--config", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--val-data")
    s.add_argument("--out", required=True)
    s.add_argument("--stage", choices=("ae", "head", "both"))
    s.add_argument("--encoder-model", help="trained autoencoder file for --stage head")
    s.add_argument("--ae-config", help="autoencoder config for --stage both")
    s.add_argument("--seed", type=int)
    s.add_argument("--max-epochs", type=int)
    s.add_argument("--inject-nan-epoch", type=int, help=argparse.SUPPRESS)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("cross-eval", help="train every grid row and evaluate every column")
    s.add_argument("--grid", required=True)
    s.add_argument("--weather", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--jobs", type=int, help="parallel rows (default: CPU count; SURRO_JOBS wins)")
    s.set_defaults(func=cmd_cross_eval)

    s = sub.add_parser("report", help="render a matrix CSV as an SVG heatmap")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--metric", default="weekly_smape",
                   choices=("weekly_smape", "annual_smape", "weekly_rmse", "pearson"))
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NumericFailure as exc:
        print(f"error: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (UsageError, InvalidConfig, InvalidArgument) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, MalformedWeather, MalformedData, MalformedModel, DegenerateFeature,
            InsufficientData, ShapeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
