"""Command-line entry point: ``simulate``, ``stability``, ``spectrum``, ``verify``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, SimulationConfig, load_config, preset
from .linalg import LinAlgFailure
from .model import InadmissibleState, conservative
from .params import Parameters
from .solver import SolverError, init_relaxation_scenario, run, set_threads_from_env
from .stability import DEFAULT_XI, OffManifold, spectral_scan, stability_report
from .verify import run_checks

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2

SNAPSHOT_COLUMNS = ("x", "h", "u_m", "alpha_1", "c_m", "h_b", "EQ1")
TIMESERIES_COLUMNS = ("t", "EQ1_max", "total_surface", "total_sediment", "total_momentum")
FLOAT_FMT = "%.12e"


class UsageError(ValueError):
    pass


def _fmt(v: float) -> str:
    return FLOAT_FMT % v


def _write_csv(path: Path, header, rows) -> None:
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_fmt(v) for v in row])
    except OSError as exc:
        raise UsageError(f"cannot write {path}: {exc.strerror}") from None


def snapshot_name(index: int, t: float) -> str:
    return f"snapshot_{index:02d}_t{t:g}.csv"


def simulate(cfg: SimulationConfig, out_dir: Path) -> list[Path]:
    """Run the relaxation scenario of ``cfg`` and write CSV files to ``out_dir``."""
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create {out_dir}: {exc.strerror}") from None
    p = cfg.parameters
    f = init_relaxation_scenario(cfg.grid.n_cells, cfg.grid.x_left, cfg.grid.x_right, cfg.boundary)
    written: list[Path] = []

    def on_snapshot(t, g, d):
        pr = g.primitives()
        cols = [g.grid.centers, pr["h"], pr["u_m"], pr["alpha_1"], pr["c_m"], pr["h_b"], d.eq1]
        path = out_dir / snapshot_name(len(written), t)
        _write_csv(path, SNAPSHOT_COLUMNS, zip(*cols))
        written.append(path)

    result = run(
        f, p, cfg.t_end,
        cfl=cfg.cfl, splitting=cfg.splitting, newton=cfg.newton,
        snapshot_times=cfg.snapshot_times, timeseries_interval=cfg.timeseries_interval,
        on_snapshot=on_snapshot,
    )
    ts = out_dir / "timeseries.csv"
    _write_csv(ts, TIMESERIES_COLUMNS,
               ((d.t, d.eq1_max, d.total_surface, d.total_sediment, d.total_momentum) for d in result.timeseries))
    written.append(ts)
    try:
        (out_dir / "config.json").write_text(cfg.to_json() + "\n", encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot write {out_dir / 'config.json'}: {exc.strerror}") from None
    return written


def parse_state(text: str) -> np.ndarray:
    """``h,u_m,alpha_1,c_m,h_b`` in primitive variables, returned in conservative form."""
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise UsageError(f"--state: expected five comma-separated numbers, got {text!r}") from None
    if len(vals) != 5:
        raise UsageError(f"--state: expected five values h,u_m,alpha_1,c_m,h_b, got {len(vals)}")
    if not np.all(np.isfinite(vals)):
        raise UsageError(f"--state: values must be finite, got {text!r}")
    if vals[0] <= 0:
        raise UsageError(f"--state: h must be > 0, got {vals[0]}")
    return conservative(*vals)


def parse_xi(text: str) -> tuple[float, ...]:
    try:
        xi = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise UsageError(f"--xi: expected comma-separated numbers, got {text!r}") from None
    if not all(np.isfinite(xi)):
        raise UsageError("--xi: values must be finite")
    return xi


def _parameters(args) -> Parameters:
    if getattr(args, "config", None):
        return load_config(args.config).parameters
    return preset("relaxation").parameters


def spectrum_rows(w, p: Parameters, xi) -> list[tuple[float, float, float]]:
    scan = spectral_scan(w, p, xi)
    rows = []
    for x, lam in zip(scan.xi, scan.eigenvalues):
        lam = np.round(lam, 14) + 0.0  # drop -0.0 and rounding noise so output is stable
        for v in sorted(lam, key=lambda z: (z.real, z.imag)):
            rows.append((float(x), float(v.real), float(v.imag)))
    return rows


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    out = args.out or cfg.output_dir
    if not out:
        raise UsageError("--out: output directory required (or set output_dir in the config)")
    paths = simulate(cfg, Path(out))
    print(json.dumps({"status": "ok", "files": [str(p) for p in paths]}, indent=2))
    return EXIT_OK


def cmd_stability(args) -> int:
    p = _parameters(args)
    report = stability_report(parse_state(args.state), p)
    print(report.to_json())
    return EXIT_OK


def cmd_spectrum(args) -> int:
    p = _parameters(args)
    rows = spectrum_rows(parse_state(args.state), p, parse_xi(args.xi))
    if args.out:
        _write_csv(Path(args.out), ("xi", "re", "im"), rows)
    else:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("xi", "re", "im"))
        for row in rows:
            w.writerow([_fmt(v) for v in row])
        sys.stdout.write(buf.getvalue())
    return EXIT_OK


def cmd_verify(args) -> int:
    p = _parameters(args)
    results = run_checks(p, seed=args.seed)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name}: {r.detail}")
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return EXIT_OK if failed == 0 else EXIT_NUMERICAL


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="swemed", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true", help="log solver events to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run the relaxation scenario and write CSV snapshots")
    s.add_argument("--config", required=True, help="JSON configuration file")
    s.add_argument("--out", help="output directory")
    s.set_defaults(func=cmd_simulate)

    st = sub.add_parser("stability", help="structural stability report for one state, as JSON")
    st.add_argument("--state", required=True, help="h,u_m,alpha_1,c_m,h_b")
    st.add_argument("--config", help="JSON configuration supplying the parameters")
    st.set_defaults(func=cmd_stability)

    sp = sub.add_parser("spectrum", help="eigenvalues of S_W - i xi A as CSV")
    sp.add_argument("--state", required=True, help="h,u_m,alpha_1,c_m,h_b")
    sp.add_argument("--xi", default=",".join(f"{x:g}" for x in DEFAULT_XI), help="comma-separated wavenumbers")
    sp.add_argument("--config", help="JSON configuration supplying the parameters")
    sp.add_argument("--out", help="write CSV here instead of stdout")
    sp.set_defaults(func=cmd_spectrum)

    v = sub.add_parser("verify", help="run the built-in structural checks")
    v.add_argument("--config", help="JSON configuration supplying the parameters")
    v.add_argument("--seed", type=int, default=0)
    v.set_defaults(func=cmd_verify)
    return ap


def _fail(kind: str, exc: BaseException, code: int) -> int:
    err = {"status": "error", "kind": kind, "type": type(exc).__name__, "message": str(exc)}
    key = getattr(exc, "key", None)
    if key:
        err["key"] = key
    for attr in ("cell", "t"):
        v = getattr(exc, attr, None)
        if v is not None:
            err[attr] = v
    print(json.dumps(err), file=sys.stderr)
    return code


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        set_threads_from_env()
        return args.func(args)
    except (ConfigError, UsageError, InadmissibleState, OffManifold) as exc:
        return _fail("validation", exc, EXIT_VALIDATION)
    except (SolverError, LinAlgFailure, FloatingPointError) as exc:
        return _fail("numerical", exc, EXIT_NUMERICAL)
    except ValueError as exc:
        return _fail("validation", exc, EXIT_VALIDATION)


if __name__ == "__main__":
    sys.exit(main())
