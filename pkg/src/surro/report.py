"""Matrix CSV and SVG heatmap output."""
from __future__ import annotations

import csv
import io
import math
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .errors import InvalidArgument, MalformedData
from .evaluation import CellMetrics, EvaluationMatrix
from .model_io import write_atomic

CSV_HEADER = ("train_config", "test_loc", "weekly_smape", "annual_smape", "rmse", "pearson")
GOOD = (0x1A, 0x98, 0x50)   # #1a9850
BAD = (0xD7, 0x30, 0x27)    # #d73027
FAILED = "#bdbdbd"


def _fmt(v: float) -> str:
    return "failed" if not math.isfinite(v) else repr(float(v))


def matrix_to_csv(matrix: EvaluationMatrix) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in matrix.row_ids:
        for c in matrix.col_ids:
            m = matrix.cells[(r, c)]
            if m.failed:
                w.writerow([r, c, "failed", "failed", "failed", "failed"])
            else:
                w.writerow([r, c, _fmt(m.weekly_smape), _fmt(m.annual_smape),
                            _fmt(m.weekly_rmse), repr(float(m.pearson))])
    return buf.getvalue()


def _num(text: str) -> float:
    return float("nan") if text in ("failed", "") else float(text)


def matrix_from_csv(path: Path) -> EvaluationMatrix:
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise MalformedData(f"cannot read {path}: {exc}") from None
    if not rows or tuple(rows[0]) != CSV_HEADER:
        raise InvalidArgument(f"{path}: expected header {','.join(CSV_HEADER)}")
    body = [r for r in rows[1:] if r]
    if not body:
        raise InvalidArgument(f"{path}: matrix has no cells")
    matrix = EvaluationMatrix([], [])
    for rec in body:
        if len(rec) != len(CSV_HEADER):
            raise MalformedData(f"{path}: row with {len(rec)} fields")
        r, c = rec[0], rec[1]
        if r not in matrix.row_ids:
            matrix.row_ids.append(r)
        if c not in matrix.col_ids:
            matrix.col_ids.append(c)
        if rec[2] == "failed":
            matrix.cells[(r, c)] = CellMetrics.failure("failed")
        else:
            try:
                matrix.cells[(r, c)] = CellMetrics(*(_num(v) for v in rec[2:]))
            except ValueError:
                raise MalformedData(f"{path}: unparseable number in row {rec}") from None
    for r in matrix.row_ids:
        for c in matrix.col_ids:
            if (r, c) not in matrix.cells:
                raise MalformedData(f"{path}: missing cell ({r}, {c})")
    return matrix


def cell_color(value: float, vmax: float) -> str:
    """Linear green (0) to red (vmax) interpolation; non-finite -> grey."""
    if not math.isfinite(value):
        return FAILED
    t = 0.0 if vmax <= 0 else min(max(value / vmax, 0.0), 1.0)
    rgb = [round(g + (b - g) * t) for g, b in zip(GOOD, BAD)]
    return "#" + "".join(f"{v:02x}" for v in rgb)


def render_svg(matrix: EvaluationMatrix, metric: str = "weekly_smape", cell: int = 64) -> str:
    if not matrix.row_ids or not matrix.col_ids:
        raise InvalidArgument("cannot render an empty matrix")
    values = matrix.values(metric)
    finite = values[np.isfinite(values)]
    vmax = float(finite.max()) if finite.size else 0.0
    label_w = 8 * max(len(r) for r in matrix.row_ids) + 16
    top = 40
    width = label_w + cell * len(matrix.col_ids) + 10
    height = top + cell * len(matrix.row_ids) + 10
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'font-family="sans-serif" font-size="12">',
           f'<text x="{label_w}" y="14">{escape(metric)} (%)</text>']
    for j, c in enumerate(matrix.col_ids):
        x = label_w + j * cell + cell / 2
        out.append(f'<text x="{x:g}" y="{top - 6}" text-anchor="middle">{escape(c)}</text>')
    for i, r in enumerate(matrix.row_ids):
        y = top + i * cell
        out.append(f'<text x="{label_w - 6}" y="{y + cell / 2 + 4:g}" text-anchor="end">'
                   f'{escape(r)}</text>')
        for j in range(len(matrix.col_ids)):
            v = values[i, j]
            x = label_w + j * cell
            out.append(f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" '
                       f'fill="{cell_color(v, vmax)}" stroke="#ffffff"/>')
            label = f"{v:.1f}" if math.isfinite(v) else "failed"
            out.append(f'<text x="{x + cell / 2:g}" y="{y + cell / 2 + 4:g}" '
                       f'text-anchor="middle">{label}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def render_report(matrix: EvaluationMatrix, csv_path: Path | None, svg_path: Path | None,
                  metric: str = "weekly_smape") -> None:
    if not matrix.row_ids or not matrix.col_ids:
        raise InvalidArgument("cannot report an empty matrix")
    if csv_path is not None:
        write_atomic(csv_path, matrix_to_csv(matrix).encode())
    if svg_path is not None:
        write_atomic(svg_path, render_svg(matrix, metric).encode())
