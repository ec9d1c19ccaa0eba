"""Scan the normal-mode spectrum of the linearised model around rest states.

    python3 scripts/spectral_scan.py --out runs/spectral_scan.csv

For each depth and viscosity on a grid, computes the eigenvalues of
``S_W - i xi A`` over a range of wavenumbers, records the largest real part
and, for fully-settled states, the distance to the closed-form spectrum.
Suspended states (c_m > 0) are not equilibria of the full source, so their
scan uses the finite-difference Jacobian as a frozen-coefficient estimate.
"""

import argparse
import csv
from pathlib import Path

import numpy as np

from swemed.model import conservative
from swemed.params import Parameters
from swemed.stability import spectral_scan


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", default="runs/spectral_scan.csv")
    ap.add_argument("--xi-max", type=float, default=20.0)
    ap.add_argument("--n-xi", type=int, default=81)
    ap.add_argument("--c-m", type=float, default=0.0, help="suspended concentration of the base state")
    args = ap.parse_args()

    xi = np.linspace(-args.xi_max, args.xi_max, args.n_xi)
    depths = np.geomspace(0.1, 5.0, 12)
    viscosities = (1.0, 5.0, 10.0, 20.0)

    rows = []
    for nu in viscosities:
        p = Parameters(nu=nu)
        for h in depths:
            scan = spectral_scan(conservative(h, 0.0, 0.0, args.c_m, 0.0), p, xi)
            err = np.nan if scan.closed_form_error is None else float(scan.closed_form_error.max())
            slowest = float(np.max(np.where(np.abs(scan.eigenvalues.real) > 1e-12, scan.eigenvalues.real, -np.inf)))
            rows.append((nu, h, scan.overall_max_real, slowest, err))

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("nu", "h", "max_real", "slowest_decay", "closed_form_error"))
        w.writerows(("%.6g" % a, "%.6g" % b, "%.3e" % c, "%.6e" % d, "%.3e" % e) for a, b, c, d, e in rows)

    top = max(r[2] for r in rows)
    worst = np.nanmax([r[4] for r in rows]) if args.c_m == 0 else float("nan")
    print(f"{len(rows)} base states x {len(xi)} wavenumbers")
    print(f"largest real part {top:.3e}")
    print(f"largest closed-form error {worst:.3e}")
    print(f"written to {out}")


if __name__ == "__main__":
    main()
