"""Plottable CSV series from run reports, and matplotlib renderings of them."""

from __future__ import annotations

import csv
from collections import OrderedDict
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .runner import RunReport, mmd_trajectory

KINDS = ("mistake_curve", "mmd_curve", "weight_curve", "sensitivity")
HEADER = ("x", "series_name", "value")

_AXES = {
    "mistake_curve": ("round", "cumulative mistake rate"),
    "mmd_curve": ("round", "aggregate MMD"),
    "weight_curve": ("round", "expert weight"),
    "sensitivity": ("parameter value", "mean mistake rate"),
}


class MissingSeries(ValueError):
    pass


def _as_reports(obj) -> list[RunReport]:
    if isinstance(obj, RunReport):
        return [obj]
    if isinstance(obj, dict):
        return [RunReport.from_dict(obj)]
    return [r if isinstance(r, RunReport) else RunReport.from_dict(r) for r in obj]


def _label(report: RunReport, many: bool, suffix: str) -> str:
    return f"{report.variant}/{suffix}" if many else suffix


def mistake_rows(reports: Sequence[RunReport], mean: bool) -> list[tuple]:
    rows = []
    many = len(reports) > 1
    for rep in reports:
        curves = [t.curve() for t in rep.trials]
        if not curves or not curves[0].size:
            continue
        if mean:
            avg = np.mean(np.vstack(curves), axis=0)
            rows += [(t + 1, rep.variant, float(v)) for t, v in enumerate(avg)]
        else:
            for j, c in enumerate(curves):
                name = _label(rep, many, f"trial_{j}")
                rows += [(t + 1, name, float(v)) for t, v in enumerate(c)]
    return rows


def mmd_rows(reports: Sequence[RunReport], mean: bool) -> list[tuple]:
    rows = []
    many = len(reports) > 1
    for rep in reports:
        per_trial = [mmd_trajectory(rep, j) for j in range(len(rep.trials))]
        if not per_trial or not per_trial[0]:
            raise MissingSeries(f"{rep.variant} report has no MMD trajectory (run with --log-mmd)")
        trials = per_trial if not mean else [per_trial[0]]
        for dom in sorted(per_trial[0]):
            name = _label(rep, many, f"domain_{dom + 1}")
            if mean:
                xs = [r for r, _ in per_trial[0][dom]]
                vals = np.mean([[v for _, v in tr[dom]] for tr in per_trial], axis=0)
                rows += [(x, name, float(v)) for x, v in zip(xs, vals)]
            else:
                for j, tr in enumerate(trials):
                    nm = name if len(trials) == 1 else f"{name}/trial_{j}"
                    rows += [(x, nm, float(v)) for x, v in tr[dom]]
    return rows


def weight_rows(reports: Sequence[RunReport], mean: bool) -> list[tuple]:
    rows = []
    many = len(reports) > 1
    for rep in reports:
        logged = [np.asarray(t.weights) for t in rep.trials if t.weights]
        if not logged:
            raise MissingSeries(f"{rep.variant} report has no weight log (run with --log-weights)")
        n = logged[0].shape[1] // 2
        names = [f"u_{i + 1}" for i in range(n)] + [f"v_{i + 1}" for i in range(n)]
        blocks = [np.mean(np.stack(logged), axis=0)] if mean else logged
        for j, W in enumerate(blocks):
            for col, nm in enumerate(names):
                label = _label(rep, many, nm if len(blocks) == 1 else f"{nm}/trial_{j}")
                rows += [(t + 1, label, float(v)) for t, v in enumerate(W[:, col])]
    return rows


def sensitivity_rows(sweep: dict) -> list[tuple]:
    if "rows" not in sweep:
        raise MissingSeries("sensitivity plots need a sweep result")
    return [(r["value"], r["variant"], r["mean"]) for r in sweep["rows"]]


def plot_rows(source, kind: str, mean: bool = False) -> list[tuple]:
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}")
    if kind == "sensitivity":
        return sensitivity_rows(source)
    reports = _as_reports(source)
    if kind == "mistake_curve":
        rows = mistake_rows(reports, mean)
    elif kind == "mmd_curve":
        rows = mmd_rows(reports, mean)
    else:
        rows = weight_rows(reports, mean)
    if not rows:
        raise MissingSeries(f"no {kind} data in report")
    return rows


def write_rows(rows: Iterable[tuple], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HEADER)
        for x, name, v in rows:
            w.writerow([repr(x) if isinstance(x, float) else x, name, repr(float(v))])
    return path


def load_plot_data(path) -> list[tuple]:
    rows = []
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        if tuple(next(reader)) != HEADER:
            raise ValueError(f"{path}: not a plot-data file")
        for x, name, v in reader:
            xv = float(x)
            rows.append((int(xv) if xv.is_integer() and "." not in x else xv, name, float(v)))
    return rows


def emit_plot_data(source, kind: str, out_path, mean: bool = False) -> Path:
    """Write ``x,series_name,value`` rows for ``kind`` to ``out_path``."""
    return write_rows(plot_rows(source, kind, mean), out_path)


def render_figure(rows: Sequence[tuple], kind: str, path, title: str | None = None) -> Path:
    """Line plot of every series in ``rows``, saved to ``path``."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    series: "OrderedDict[str, list]" = OrderedDict()
    for x, name, v in rows:
        series.setdefault(name, []).append((x, v))
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    for name, pts in series.items():
        pts.sort(key=lambda p: p[0])
        xs, ys = zip(*pts)
        marker = "o" if kind == "sensitivity" or len(xs) < 60 else None
        ax.plot(xs, ys, label=name, marker=marker, linewidth=1.2, markersize=3)
    xlabel, ylabel = _AXES[kind]
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if kind == "sensitivity" and all(x > 0 for x, _, _ in rows):
        ax.set_xscale("log")
    if title:
        ax.set_title(title)
    if len(series) <= 12:
        ax.legend(fontsize=8, frameon=False)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
