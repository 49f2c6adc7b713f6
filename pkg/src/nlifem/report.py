"""CSV tables, log-log SVG charts and run manifests for study reports."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

from . import __version__
from .studies import StudyReport, config_dict

NORM_ORDER = ("energy", "l2", "max")


def fmt(x) -> str:
    """Scientific notation with 6 significant digits; empty for missing values."""
    if x is None:
        return ""
    x = float(x)
    if math.isnan(x):
        return "nan"
    return f"{x:.5e}"


def norms_of(report: StudyReport) -> list:
    keys = [k[4:] for k in report.rows[0] if k.startswith("err_")] if report.rows else []
    lead = [n for n in NORM_ORDER if n in keys]
    return lead + [k for k in keys if k not in lead]


def csv_columns(report: StudyReport) -> list:
    ndelta = max((len(r.get("deltas", [])) for r in report.rows), default=0)
    cols = ["level", "h"] + [f"delta{i + 1}" for i in range(ndelta)]
    for n in norms_of(report):
        cols += [f"err_{n}", f"rate_{n}"]
    extra = [k for k in report.rows[0] if k not in cols and k not in ("deltas", "components")
             and not k.startswith("err_") and not k.startswith("rate_")] if report.rows else []
    return cols + extra


def _cell(row: dict, col: str) -> str:
    if col == "level":
        return str(row["level"])
    if col.startswith("delta") and col[5:].isdigit():
        ds = row.get("deltas", [])
        j = int(col[5:]) - 1
        return fmt(ds[j]) if j < len(ds) else ""
    val = row.get(col)
    if isinstance(val, bool):
        return "1" if val else "0"
    if isinstance(val, str):
        return val
    return fmt(val)


def report_csv(report: StudyReport) -> str:
    cols = csv_columns(report)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for row in report.rows:
        w.writerow([_cell(row, c) for c in cols])
    return buf.getvalue()


def read_csv(path) -> list:
    """Rows of an emitted CSV as dicts of floats (None for empty cells)."""
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            conv = {}
            for k, v in row.items():
                try:
                    conv[k] = float(v) if v != "" else None
                except ValueError:
                    conv[k] = v
            out.append(conv)
    return out


# ---------------------------------------------------------------- SVG

def _x_values(report: StudyReport) -> list:
    if report.x_label == "delta":
        return [r["deltas"][0] for r in report.rows]
    return [r["h"] for r in report.rows]


def guide_orders(report: StudyReport) -> list:
    if report.x_label == "delta":
        return [1, 2]
    k = report.config.k
    return [k, k + 1]


_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b", "#e377c2")


def report_svg(report: StudyReport, width: int = 520, height: int = 400) -> str:
    """Log-log chart: log2 of h (or delta) against log10 of each error norm."""
    xs = _x_values(report)
    series = []
    for n in norms_of(report):
        pts = [(math.log2(x), math.log10(r[f"err_{n}"])) for x, r in zip(xs, report.rows)
               if r.get(f"err_{n}") and r[f"err_{n}"] > 0]
        if pts:
            series.append((n, pts))
    guides = []
    if series:
        x0, y0 = series[0][1][-1]
        xa = min(p[0] for p in series[0][1])
        for p in guide_orders(report):
            # error ~ x^p, so log10 e changes by p*log10(2) per unit of log2 x
            guides.append((f"order {p}", [(xa, y0 + p * (xa - x0) * math.log10(2.0)), (x0, y0)]))
    allpts = [p for _, pts in series + guides for p in pts] or [(0.0, 0.0), (1.0, 1.0)]
    xmin, xmax = min(p[0] for p in allpts), max(p[0] for p in allpts)
    ymin, ymax = min(p[1] for p in allpts), max(p[1] for p in allpts)
    xmax = xmax if xmax > xmin else xmin + 1.0
    ymax = ymax if ymax > ymin else ymin + 1.0
    ml, mr, mt, mb = 70, 130, 30, 50
    pw, ph = width - ml - mr, height - mt - mb

    def sx(x):
        return ml + (x - xmin) / (xmax - xmin) * pw

    def sy(y):
        return mt + (ymax - y) / (ymax - ymin) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">',
           f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="#333"/>']
    for t in range(math.ceil(xmin), math.floor(xmax) + 1):
        out.append(f'<text x="{sx(t):.1f}" y="{mt + ph + 16}" font-size="11" text-anchor="middle">{t}</text>')
    for t in range(math.ceil(ymin), math.floor(ymax) + 1):
        out.append(f'<text x="{ml - 6}" y="{sy(t) + 4:.1f}" font-size="11" text-anchor="end">1e{t}</text>')
    xl = "log2(delta)" if report.x_label == "delta" else "log2(h)"
    out.append(f'<text x="{ml + pw / 2:.1f}" y="{height - 12}" font-size="12" text-anchor="middle">{xl}</text>')
    out.append(f'<text x="16" y="{mt + ph / 2:.1f}" font-size="12" text-anchor="middle" '
               f'transform="rotate(-90 16 {mt + ph / 2:.1f})">error</text>')
    for j, (name, pts) in enumerate(series):
        c = _COLORS[j % len(_COLORS)]
        coords = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in pts)
        out.append(f'<polyline class="norm" fill="none" stroke="{c}" stroke-width="2" points="{coords}"/>')
        out.append(f'<text x="{ml + pw + 10}" y="{mt + 14 + 16 * j}" font-size="11" fill="{c}">{name}</text>')
    for j, (name, pts) in enumerate(guides):
        coords = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in pts)
        out.append(f'<polyline class="guide" fill="none" stroke="#888" stroke-dasharray="5,4" points="{coords}"/>')
        out.append(f'<text x="{ml + pw + 10}" y="{mt + 14 + 16 * (len(series) + j)}" font-size="11" '
                   f'fill="#888">{name}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------- manifest

@dataclass
class RunManifest:
    tool_version: str
    config_hash: str
    timestamp: str
    outputs: list
    summary: dict = field(default_factory=dict)
    passed: bool = True

    def write(self, path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")


def config_hash(cfg) -> str:
    blob = json.dumps(config_dict(cfg) if not isinstance(cfg, dict) else cfg, sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


def write_report(report: StudyReport, csv_path, svg_path=None, png_path=None) -> RunManifest:
    """Write CSV (and optionally SVG/PNG charts); return the manifest of written files."""
    outputs = []
    for p in (csv_path, svg_path, png_path):
        if p is not None:
            parent = Path(p).parent
            if not parent.exists() or not os.access(parent, os.W_OK):
                raise OSError(f"cannot write to {parent}")
    Path(csv_path).write_text(report_csv(report))
    outputs.append(str(csv_path))
    if svg_path is not None:
        Path(svg_path).write_text(report_svg(report))
        outputs.append(str(svg_path))
    if png_path is not None:
        from .plotting import plot_report
        plot_report(report, png_path)
        outputs.append(str(png_path))
    return RunManifest(__version__, config_hash(report.config),
                       datetime.now(timezone.utc).isoformat(timespec="seconds"), outputs,
                       {k: bool(v) for k, v in report.flags.items()}, report.passed)


def combined_table_csv(reports: Sequence[StudyReport]) -> str:
    """Side-by-side layout: one row per mesh level, energy and L2 error [rate] per degree."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    head = ["h"]
    for rep in reports:
        k = rep.config.k
        head += [f"k{k}_err_energy", f"k{k}_rate_energy", f"k{k}_err_l2", f"k{k}_rate_l2"]
    w.writerow(head)
    for j in range(len(reports[0].rows)):
        line = [fmt(reports[0].rows[j]["h"])]
        for rep in reports:
            r = rep.rows[j]
            line += [fmt(r["err_energy"]), fmt(r["rate_energy"]), fmt(r["err_l2"]), fmt(r["rate_l2"])]
        w.writerow(line)
    return buf.getvalue()
