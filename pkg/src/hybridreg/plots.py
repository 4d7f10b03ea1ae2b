"""Deterministic SVG figures from result CSVs.

Kinds: ``re_vs_t`` (sweep table), ``rho`` (rho table), ``spectrum``
(columns series, index, value) and ``objective`` (columns zeta, value,
method). Output carries no timestamp and uses a fixed hash salt, so the
same CSV always renders to the same bytes.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .experiment import read_rows  # noqa: E402

REQUIRED = {
    "re_vs_t": ("method", "t", "k", "re", "t_opt_rho"),
    "rho": ("c", "t", "logrho", "t_opt_rho", "t_opt_min", "t_opt_g"),
    "spectrum": ("series", "index", "value"),
    "objective": ("zeta", "value", "method"),
}
SPECTRUM_COLUMNS = ("series", "index", "value")


class PlotError(ValueError):
    pass


def write_spectrum_csv(path, sigma, gammas):
    """``sigma``: leading singular values of A; ``gammas``: {t: singular values of B_t}."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SPECTRUM_COLUMNS)
        for i, v in enumerate(np.asarray(sigma, dtype=float), start=1):
            w.writerow(["A", i, repr(float(v))])
        for t in sorted(gammas):
            for i, v in enumerate(np.asarray(gammas[t], dtype=float), start=1):
                w.writerow([f"B_{t}", i, repr(float(v))])


def _read(csv_path, kind):
    if kind not in REQUIRED:
        raise PlotError(f"unknown plot kind {kind!r}; choose from {sorted(REQUIRED)}")
    if kind in ("spectrum", "objective"):
        with open(csv_path, newline="") as fh:
            reader = csv.DictReader(fh)
            rows = list(reader)
            cols = list(reader.fieldnames or [])
    else:
        rows, cols = read_rows(csv_path)
    missing = [c for c in REQUIRED[kind] if c not in cols]
    if missing:
        raise PlotError(f"{csv_path}: missing column(s) {', '.join(missing)} for plot {kind!r}")
    return rows


def _markers(ax, trho, tmin, tg):
    if trho is not None:
        ax.axvline(trho, color="k", linestyle="-.", label=r"$t_{opt-\rho}$")
    if tg is not None:
        ax.axvline(tg, color="tab:red", linestyle="-", marker="o", markevery=[0],
                   label=r"$t_{opt-G}$")
    if tmin is not None:
        ax.axvline(tmin, color="tab:green", linestyle="-", label=r"$t_{opt-min}$")


def _plot_re_vs_t(ax, rows):
    rows = [r for r in rows if r["k"] == 0 and r["re"] is not None]
    if not rows:
        raise PlotError("no k = 0 rows with a relative error")
    for method in sorted({r["method"] for r in rows}):
        per_t = {}
        for r in rows:
            if r["method"] == method:
                per_t.setdefault(r["t"], []).append(r["re"])
        ts = sorted(per_t)
        ax.semilogy(ts, [np.mean(per_t[t]) for t in ts], marker=".", label=method)
    trho = [r["t_opt_rho"] for r in rows if r["t_opt_rho"] is not None]
    if trho:
        ax.axvline(np.mean(trho), color="k", linestyle="-.")
    ax.set_xlabel("t")
    ax.set_ylabel("average RE")


def _plot_rho(ax, rows):
    samples = sorted({r["c"] for r in rows})
    for c in samples:
        rs = sorted((r for r in rows if r["c"] == c and np.isfinite(r["logrho"])),
                    key=lambda r: r["t"])
        label = f"c={c}" if len(samples) <= 8 else None
        ax.semilogy([r["t"] for r in rs], np.exp([r["logrho"] for r in rs]), label=label,
                    linewidth=1 if len(samples) <= 8 else 0.5)
    first = sorted((r for r in rows if r["c"] == samples[0]), key=lambda r: r["t"])[0]
    _markers(ax, first["t_opt_rho"], first["t_opt_min"], first["t_opt_g"])
    ax.set_xlabel("t")
    ax.set_ylabel(r"$\rho(t)$")


def _plot_spectrum(ax, rows):
    series = {}
    for r in rows:
        series.setdefault(r["series"], []).append((int(r["index"]), float(r["value"])))
    order = sorted(series, key=lambda s: (s != "A", int(s[2:]) if s.startswith("B_") else 0))
    for s in order:
        pts = sorted(series[s])
        style = {"color": "k", "linewidth": 2} if s == "A" else {"marker": "."}
        ax.semilogy([p[0] for p in pts], [p[1] for p in pts], label=s, **style)
    ax.set_xlabel("index")
    ax.set_ylabel("singular value")


def _plot_objective(ax, rows):
    for method in sorted({r["method"] for r in rows}):
        pts = sorted((float(r["zeta"]), float(r["value"])) for r in rows if r["method"] == method)
        ax.semilogx([p[0] for p in pts], [p[1] for p in pts], label=method)
    ax.set_xlabel(r"$\zeta$")
    ax.set_ylabel("objective")


_DRAW = {
    "re_vs_t": _plot_re_vs_t,
    "rho": _plot_rho,
    "spectrum": _plot_spectrum,
    "objective": _plot_objective,
}


def emit_plot(csv_path, kind, out_path, title=None):
    rows = _read(csv_path, kind)
    if not rows:
        raise PlotError(f"{csv_path}: no rows to plot")
    with plt.rc_context({"svg.hashsalt": "hybridreg", "svg.fonttype": "path"}):
        fig, ax = plt.subplots(figsize=(6, 4))
        try:
            _DRAW[kind](ax, rows)
            if title:
                ax.set_title(title)
            if ax.get_legend_handles_labels()[0]:
                ax.legend(fontsize="small")
            fig.tight_layout()
            fig.savefig(Path(out_path), format="svg", metadata={"Date": None})
        finally:
            plt.close(fig)
    return Path(out_path)
