"""Run the relaxation scenario and print how the flow settles.

    python3 scripts/relaxation_experiment.py --out runs/relaxation
    python3 scripts/relaxation_experiment.py --n-cells 100 --t-end 10 --splitting Strang

Writes the same CSV files as ``swemed simulate`` and prints, per snapshot,
the largest hydrodynamic deviation, suspended concentration and bed change.
"""

import argparse
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from swemed.cli import simulate
from swemed.config import GridSpec, preset
from swemed.solver import Boundary, Splitting, set_threads_from_env


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", default="runs/relaxation")
    ap.add_argument("--n-cells", type=int, default=None)
    ap.add_argument("--t-end", type=float, default=None, help="truncate the snapshot list at this time")
    ap.add_argument("--splitting", choices=[s.value for s in Splitting], default=None)
    ap.add_argument("--periodic", action="store_true")
    args = ap.parse_args()
    set_threads_from_env()

    cfg = preset("relaxation")
    if args.n_cells:
        cfg = replace(cfg, grid=GridSpec(cfg.grid.x_left, cfg.grid.x_right, args.n_cells))
    if args.t_end is not None:
        times = tuple(t for t in cfg.snapshot_times if t < args.t_end) + (args.t_end,)
        cfg = replace(cfg, snapshot_times=times, t_end=args.t_end)
    if args.splitting:
        cfg = replace(cfg, splitting=Splitting(args.splitting))
    if args.periodic:
        cfg = replace(cfg, boundary=Boundary.PERIODIC)

    out = Path(args.out)
    start = time.perf_counter()
    files = simulate(cfg, out)
    elapsed = time.perf_counter() - start

    print(f"{'t':>7} {'max EQ1':>11} {'max|u_m|':>11} {'max|alpha_1|':>13} {'max c_m':>11} {'max|h_b|':>11}")
    for path in files:
        if not path.name.startswith("snapshot_"):
            continue
        data = np.loadtxt(path, delimiter=",", skiprows=1)
        t = float(path.stem.split("_t", 1)[1])
        print(f"{t:7g} {data[:, 6].max():11.3e} {np.abs(data[:, 2]).max():11.3e} "
              f"{np.abs(data[:, 3]).max():13.3e} {data[:, 4].max():11.3e} {np.abs(data[:, 5]).max():11.3e}")
    ts = np.loadtxt(out / "timeseries.csv", delimiter=",", skiprows=1, ndmin=2)
    print(f"\ntotal surface {ts[0, 2]:.12g} -> {ts[-1, 2]:.12g}, "
          f"total sediment {ts[0, 3]:.12g} -> {ts[-1, 3]:.12g}")
    print(f"{len(files)} files in {out}, {elapsed:.1f} s")


if __name__ == "__main__":
    main()
