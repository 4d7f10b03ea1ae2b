"""Singular values of A against those of B_t, and rho(t), for one noisy sample.

    python scripts/spectrum_rho.py --problem gravity --out results/spectrum
"""

import argparse
from pathlib import Path

import numpy as np

from hybridreg.experiment import write_rows
from hybridreg.operators import to_dense
from hybridreg.plots import emit_plot, write_spectrum_csv
from hybridreg.problems import gravity, noisy_sample, phillips
from hybridreg.solver import ProjectedSystem
from hybridreg.svdcore import svd

FACTORIES = {"phillips": phillips, "gravity": gravity}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--problem", choices=sorted(FACTORIES), default="gravity")
    ap.add_argument("--out", default="results/spectrum")
    ap.add_argument("--seed", type=int, default=2016)
    ap.add_argument("--eta", type=float, default=0.005)
    ap.add_argument("--t-max", type=int, default=71)
    args = ap.parse_args()

    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    pi = FACTORIES[args.problem](152, 304)
    smp = noisy_sample(pi, args.eta, args.seed, 0)
    ps = ProjectedSystem(pi.op, smp.b, args.t_max, cov=smp.cov)
    sigma = svd(to_dense(pi.op)).gamma[: args.t_max]
    gammas = {t: ps.spectral(t)[0].gamma for t in range(1, ps.t_achieved + 1, 10)}
    write_spectrum_csv(outdir / "spectrum.csv", sigma, gammas)
    emit_plot(outdir / "spectrum.csv", "spectrum", outdir / "spectrum.svg", title=args.problem)

    markers, _ = ps.markers(3)
    rows = [dict(c=0, t=t, logrho=float(v), **markers)
            for t, v in enumerate(ps.rho(0).logrho, start=1) if np.isfinite(v)]
    write_rows(outdir / "rho.csv", rows, ("c", "t", "logrho", "t_opt_rho", "t_opt_min", "t_opt_g"))
    emit_plot(outdir / "rho.csv", "rho", outdir / "rho.svg", title=args.problem)
    print(f"t achieved {ps.t_achieved}; " + " ".join(f"{k}={v}" for k, v in markers.items()))


if __name__ == "__main__":
    main()
