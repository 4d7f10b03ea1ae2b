"""Seeded sweeps over noise samples, subspace sizes and parameter rules.

One GKB factorization per noise sample is truncated to every ``t`` in the
schedule. Each finished sample is written to its own part file, so an
interrupted sweep can be resumed without recomputing completed samples.
The merged table is sorted by (c, t, method, k) and is byte-identical across
reruns of the same configuration; timings live only in the manifest.
"""

from __future__ import annotations

import csv
import functools
import json
import math
import os
import subprocess
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import regparam
from .problems import PROBLEMS, bsnr, make_problem, noisy_sample, relative_error
from .solver import HybridOptions, ProjectedSystem, irr_iterate

COLUMNS = (
    "problem", "method", "c", "t", "k", "zeta", "re", "res_proj", "res_full",
    "bsnr", "t_opt_rho", "t_opt_min", "t_opt_g", "flag",
)
RHO_COLUMNS = ("c", "t", "logrho", "t_opt_rho", "t_opt_min", "t_opt_g")
SUMMARY_COLUMNS = (
    "problem", "method", "k", "n_samples", "t_opt_rho_avg", "t_ref", "re_at_t_ref",
    "re_min_avg", "t_at_min_avg",
)
_INT_COLS = {"c", "t", "k", "t_opt_rho", "t_opt_min", "t_opt_g"}
_FLOAT_COLS = {"zeta", "re", "res_proj", "res_full", "bsnr", "logrho"}


class ConfigError(ValueError):
    pass


def default_schedule(t_max=74):
    """t = 3:20 together with 24:5:74, cut at t_max."""
    ts = list(range(3, 21)) + list(range(24, 75, 5))
    return [t for t in ts if t <= t_max]


@dataclass
class ExperimentConfig:
    problem: str = "phillips"
    params: dict = field(default_factory=dict)
    eta: float = 0.005
    samples: int = 50
    seed: int | None = None
    methods: tuple = regparam.METHODS
    t_schedule: list | None = None
    options: HybridOptions = field(default_factory=HybridOptions)
    irr_k_max: int = 1
    positivity: bool = False
    rel_tol: float = 0.0
    outdir: str = "results"
    workers: int = 1

    def validate(self):
        if self.problem not in PROBLEMS:
            raise ConfigError(f"unknown problem {self.problem!r}; choose from {sorted(PROBLEMS)}")
        if self.seed is None:
            raise ConfigError("a base seed is required")
        if self.samples < 1:
            raise ConfigError("need at least one noise sample")
        if not self.eta >= 0:
            raise ConfigError("noise level must be nonnegative")
        if not self.methods:
            raise ConfigError("method list is empty")
        bad = [m for m in self.methods if m not in regparam.METHODS]
        if bad:
            raise ConfigError(f"unknown methods {bad}; choose from {list(regparam.METHODS)}")
        if self.t_schedule is not None:
            if not self.t_schedule or any(int(t) < 1 for t in self.t_schedule):
                raise ConfigError("t schedule must be a nonempty list of positive integers")
        if self.irr_k_max < 1:
            raise ConfigError("irr_k_max must be at least 1")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        try:
            self.options.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return self

    def schedule(self):
        ts = default_schedule(self.options.t_max) if self.t_schedule is None else self.t_schedule
        return sorted({int(t) for t in ts})

    def to_dict(self):
        d = asdict(self)
        d["methods"] = list(self.methods)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        opts = d.pop("options", {}) or {}
        if isinstance(opts, dict):
            if opts.get("min_range") is not None:
                opts["min_range"] = tuple(opts["min_range"])
            opts = HybridOptions(**opts)
        unknown = set(d) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ConfigError(f"unknown config fields {sorted(unknown)}")
        if "methods" in d:
            d["methods"] = tuple(d["methods"])
        return cls(options=opts, **d)

    @classmethod
    def load(cls, path):
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except (OSError, json.JSONDecodeError, TypeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None


# ------------------------------------------------------------------ row helpers


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _row(config, method, c, t, k=0, sol=None, re=None, b_snr=None, markers=None, flags=()):
    markers = markers or {}
    return {
        "problem": config.problem,
        "method": method,
        "c": c,
        "t": t,
        "k": k,
        "zeta": None if sol is None else sol["zeta"],
        "re": re,
        "res_proj": None if sol is None else sol["res_proj"],
        "res_full": None if sol is None else sol["res_full"],
        "bsnr": b_snr,
        "t_opt_rho": markers.get("t_opt_rho"),
        "t_opt_min": markers.get("t_opt_min"),
        "t_opt_g": markers.get("t_opt_g"),
        "flag": ";".join(sorted(set(flags))),
    }


def sort_key(row):
    return (int(row["c"]), int(row["t"]), str(row["method"]), int(row["k"]))


def write_rows(path, rows, columns=COLUMNS):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(col)) for col in columns])
    os.replace(tmp, path)


def read_rows(path):
    """Rows of a result/rho CSV with numeric columns converted (blank -> None)."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = []
        for raw in reader:
            row = {}
            for key, val in raw.items():
                if val == "" or val is None:
                    row[key] = None if key in _INT_COLS | _FLOAT_COLS else ""
                elif key in _INT_COLS:
                    row[key] = int(val)
                elif key in _FLOAT_COLS:
                    row[key] = float(val)
                else:
                    row[key] = val
            rows.append(row)
        return rows, list(reader.fieldnames or [])


# ------------------------------------------------------------------ per sample


@functools.lru_cache(maxsize=4)
def _problem(name, params_json):
    return make_problem(name, **json.loads(params_json))


def _problem_for(config):
    return _problem(config.problem, json.dumps(config.params, sort_keys=True))


def _sweep_sample(config, c):
    pi = _problem_for(config)
    smp = noisy_sample(pi, config.eta, config.seed, c)
    b_snr = bsnr(pi.b_ex, smp.b)
    opts = config.options
    m, n = pi.shape
    ps = ProjectedSystem(pi.op, smp.b, min(opts.t_max, m, n), cov=smp.cov)
    markers, mflags = ps.markers(opts.t_min)
    t_star = ps.t_star(opts, markers)
    ts = sorted(set(config.schedule()) | {v for v in markers.values() if v >= 1})
    rows = []
    for t in ts:
        for method in config.methods:
            if t > ps.t_achieved:
                rows.append(_row(config, method, c, t, b_snr=b_snr, markers=markers,
                                 flags=mflags + ["beyond_breakdown"]))
                continue
            try:
                sol = ps.solve(t, opts, x_ex=pi.x_ex, t_star=t_star, method=method)
            except Exception as exc:  # recorded per row, sweep continues
                rows.append(_row(config, method, c, t, b_snr=b_snr, markers=markers,
                                 flags=mflags + [f"error:{type(exc).__name__}"]))
                continue
            rows.append(_row(
                config, method, c, t,
                sol={"zeta": sol.zeta, "res_proj": sol.residual_proj, "res_full": sol.residual_full},
                re=relative_error(sol.x, pi.x_ex), b_snr=b_snr, markers=markers,
                flags=mflags + sol.flags,
            ))
    logrho = ps.rho(opts.t_min).logrho
    rho_rows = [dict(c=c, t=t, logrho=float(v), **markers) for t, v in enumerate(logrho, start=1)]
    return rows, rho_rows


def _irr_sample(config, c):
    pi = _problem_for(config)
    smp = noisy_sample(pi, config.eta, config.seed, c)
    b_snr = bsnr(pi.b_ex, smp.b)
    rows, rho_rows = [], []
    for method in config.methods:
        opts = replace(config.options, method=method)
        try:
            hist = irr_iterate(pi.op, smp.b, smp.cov, opts, k_max=config.irr_k_max,
                               positivity=config.positivity, x_ex=pi.x_ex, rel_tol=config.rel_tol)
        except Exception as exc:
            rows.append(_row(config, method, c, 0, b_snr=b_snr,
                             flags=[f"error:{type(exc).__name__}"]))
            continue
        for it in hist.iterations:
            rows.append(_row(
                config, method, c, it.t_used, k=it.k,
                sol={"zeta": it.zeta, "res_proj": it.residual_proj, "res_full": it.residual_full},
                re=it.re, b_snr=b_snr, markers=it.markers,
                flags=it.flags + (["converged"] if hist.converged and it is hist.iterations[-1] else []),
            ))
    return rows, rho_rows


def _run_sample(config_dict, c):
    config = ExperimentConfig.from_dict(config_dict)
    if config.irr_k_max > 1:
        return c, *_irr_sample(config, c)
    return c, *_sweep_sample(config, c)


def _run_sample_star(args):
    return _run_sample(*args)


# ------------------------------------------------------------------ sweep


def git_describe():
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=Path(__file__).resolve().parent, capture_output=True, text=True, timeout=10,
        )
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return out.stdout.strip() or "unknown"


def _part_paths(outdir, c):
    parts = Path(outdir) / "parts"
    return parts / f"c{c:05d}.csv", parts / f"c{c:05d}.rho.csv"


def run_sweep(config, resume=False):
    """Run (or resume) a sweep; returns the merged, sorted result rows.

    Writes ``results.csv``, ``rho.csv`` and ``manifest.json`` into
    ``config.outdir``.
    """
    config.validate()
    pi = _problem_for(config)
    if config.options.t_max > min(pi.shape):
        raise ConfigError(f"t_max={config.options.t_max} exceeds min(m, n)={min(pi.shape)}")
    outdir = Path(config.outdir)
    (outdir / "parts").mkdir(parents=True, exist_ok=True)
    manifest_path = outdir / "manifest.json"
    cfg = config.to_dict()
    if resume and manifest_path.exists():
        previous = json.loads(manifest_path.read_text()).get("config")
        if previous != json.loads(json.dumps(cfg)):
            raise ConfigError("cannot resume: configuration differs from the existing run")
    elif not resume:
        for p in (outdir / "parts").glob("c*.csv"):
            p.unlink()
    todo = [c for c in range(config.samples) if not (resume and _part_paths(outdir, c)[0].exists())]
    skipped = config.samples - len(todo)
    # manifest first, so a resumed run can verify the configuration
    manifest = {"config": cfg, "git": git_describe(), "status": "running"}
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")

    start = time.perf_counter()
    jobs = [(cfg, c) for c in todo]
    if config.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = pool.map(_run_sample_star, jobs)
            for c, rows, rho_rows in results:
                _write_part(outdir, c, rows, rho_rows)
    else:
        for job in jobs:
            c, rows, rho_rows = _run_sample_star(job)
            _write_part(outdir, c, rows, rho_rows)
    wall = time.perf_counter() - start

    rows, rho_rows = [], []
    for c in range(config.samples):
        res_path, rho_path = _part_paths(outdir, c)
        rows += read_rows(res_path)[0]
        if rho_path.exists():
            rho_rows += read_rows(rho_path)[0]
    rows.sort(key=sort_key)
    rho_rows.sort(key=lambda r: (r["c"], r["t"]))
    write_rows(outdir / "results.csv", rows)
    write_rows(outdir / "rho.csv", rho_rows, RHO_COLUMNS)
    failures = sum(1 for r in rows if "error:" in (r["flag"] or ""))
    manifest.update(
        status="complete",
        seeds=[[int(config.seed), c] for c in range(config.samples)],
        wall_time_s=round(wall, 3),
        samples_computed=len(todo),
        samples_resumed=skipped,
        rows=len(rows),
        failed_rows=failures,
    )
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return rows


def _write_part(outdir, c, rows, rho_rows):
    res_path, rho_path = _part_paths(outdir, c)
    if rho_rows:
        write_rows(rho_path, rho_rows, RHO_COLUMNS)
    # the result part is written last: its presence marks the sample complete
    write_rows(res_path, sorted(rows, key=sort_key))


def failed_rows(rows):
    return [r for r in rows if "error:" in (r.get("flag") or "")]


# ------------------------------------------------------------------ summary


def table_summarize(csv_path, out_path=None):
    """Per (problem, method, k): mean RE at the mean t_opt-rho, and mean per-sample minimum.

    The reference ``t`` is the scheduled size nearest the sample-averaged
    t_opt-rho (ties to the smaller size). The minimum block averages each
    sample's minimum RE over t and the t attaining it.
    """
    rows, _ = read_rows(csv_path)
    rows = [r for r in rows if r["re"] is not None and math.isfinite(r["re"])]
    if not rows:
        raise ValueError(f"{csv_path}: no usable result rows")
    groups = {}
    for r in rows:
        groups.setdefault((r["problem"], r["method"], r["k"]), []).append(r)
    out = []
    for (problem, method, k), grp in sorted(groups.items()):
        by_c = {}
        for r in grp:
            by_c.setdefault(r["c"], []).append(r)
        trho = [rs[0]["t_opt_rho"] for rs in by_c.values() if rs[0]["t_opt_rho"] is not None]
        t_bar = float(np.mean(trho)) if trho else float("nan")
        if all(len(rs) == 1 for rs in by_c.values()):
            # one row per sample (e.g. an IRR step): no t to choose
            t_ref = float(np.mean([rs[0]["t"] for rs in by_c.values()]))
            re_ref = float(np.mean([rs[0]["re"] for rs in by_c.values()]))
        else:
            ts = sorted({r["t"] for r in grp})
            t_ref = min(ts, key=lambda t: (abs(t - t_bar), t)) if trho else ts[0]
            at = [r["re"] for r in grp if r["t"] == t_ref]
            re_ref = float(np.mean(at))
        mins = [min(rs, key=lambda r: (r["re"], r["t"])) for rs in by_c.values()]
        out.append({
            "problem": problem,
            "method": method,
            "k": k,
            "n_samples": len(by_c),
            "t_opt_rho_avg": t_bar,
            "t_ref": t_ref,
            "re_at_t_ref": re_ref,
            "re_min_avg": float(np.mean([r["re"] for r in mins])),
            "t_at_min_avg": float(np.mean([r["t"] for r in mins])),
        })
    if out_path is not None:
        write_rows(out_path, out, SUMMARY_COLUMNS)
    return out
