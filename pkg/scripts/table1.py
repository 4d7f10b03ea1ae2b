"""1-D reproduction: phillips and gravity sweeps, summary table and figures.

    python scripts/table1.py --out results/table1 [--samples 50] [--workers 4]
"""

import argparse
from pathlib import Path

from hybridreg.experiment import ExperimentConfig, run_sweep, table_summarize
from hybridreg.plots import emit_plot
from hybridreg.solver import HybridOptions

PROBLEMS = {
    "phillips": {"m": 152, "n": 304},
    "gravity": {"m": 152, "n": 304, "d": 0.75},
}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results/table1")
    ap.add_argument("--samples", type=int, default=50)
    ap.add_argument("--seed", type=int, default=2016)
    ap.add_argument("--eta", type=float, default=0.005)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    for name, params in PROBLEMS.items():
        outdir = Path(args.out) / name
        cfg = ExperimentConfig(
            problem=name, params=params, eta=args.eta, samples=args.samples, seed=args.seed,
            options=HybridOptions(t_min=3, t_max=74, window="spectrum"),
            outdir=str(outdir), workers=args.workers,
        )
        run_sweep(cfg)
        summary = table_summarize(outdir / "results.csv", outdir / "summary.csv")
        emit_plot(outdir / "results.csv", "re_vs_t", outdir / "re_vs_t.svg", title=name)
        emit_plot(outdir / "rho.csv", "rho", outdir / "rho.svg", title=name)
        print(f"\n{name}  (avg t_opt-rho = {summary[0]['t_opt_rho_avg']:.2f})")
        print(f"{'method':>6} {'t_ref':>6} {'RE(t_ref)':>10} {'min RE':>8} {'t(min)':>7}")
        for s in summary:
            print(f"{s['method']:>6} {s['t_ref']:>6g} {s['re_at_t_ref']:>10.4g} "
                  f"{s['re_min_avg']:>8.4f} {s['t_at_min_avg']:>7.2f}")


if __name__ == "__main__":
    main()
