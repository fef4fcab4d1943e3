"""Command-line entry point: ``run``, ``fit-gamma`` and ``compare``."""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from ..chu1d import read_snapshot
from .config import load_config
from .diagnostics import FitError, damping_rate_fit, trapezoid_l2
from .output import latest_snapshot, read_timeseries
from .run import run


def _common_points(fine: np.ndarray, coarse: np.ndarray):
    """Indices of ``coarse`` inside ``fine`` when the lattices nest, else None."""
    idx = np.searchsorted(fine, coarse)
    idx = np.clip(idx, 0, len(fine) - 1)
    tol = 1e-9 * max(1.0, float(np.abs(fine).max()))
    return idx if np.all(np.abs(fine[idx] - coarse) <= tol) else None


def compare_tables(ref_path, run_path) -> float:
    """Lattice L2 distance between two ``x, v_x, value`` tables.

    Nested lattices (the ``2**l + 1`` point snapshots of different levels)
    are compared on their shared points.  Otherwise the run table is
    interpolated bilinearly onto the reference lattice.  The domains must
    coincide.
    """
    ra, rb, rv = read_snapshot(ref_path)
    a, b, v = read_snapshot(run_path)
    for lat_r, lat in ((ra, a), (rb, b)):
        if not (np.isclose(lat_r[0], lat[0]) and np.isclose(lat_r[-1], lat[-1])):
            raise ValueError("domain mismatch between the reference and the run")
    if len(a) <= len(ra) and len(b) <= len(rb):
        ia, ib = _common_points(ra, a), _common_points(rb, b)
        if ia is not None and ib is not None:
            return trapezoid_l2(v - rv[np.ix_(ia, ib)], a, b)
    else:
        ia, ib = _common_points(a, ra), _common_points(b, rb)
        if ia is not None and ib is not None:
            return trapezoid_l2(v[np.ix_(ia, ib)] - rv, ra, rb)
    interp = RegularGridInterpolator((a, b), v)
    A, B = np.meshgrid(np.clip(ra, a[0], a[-1]), np.clip(rb, b[0], b[-1]), indexing="ij")
    diff = interp(np.stack([A, B], axis=-1)) - rv
    return trapezoid_l2(diff, ra, rb)


def _cmd_run(args) -> int:
    cfg = load_config(args.config, args.set or ())
    if args.output:
        cfg = dataclasses.replace(cfg, output_dir=args.output)
    result = run(cfg)
    last = result.records[-1]
    print(f"steps={result.steps} t={result.t!r} active_elements={last.active_elements} "
          f"dn={last.dn!r} dmom={last.dmom!r} denergy={last.denergy!r}")
    if result.status:
        print(f"error: {result.message}", file=sys.stderr)
    return result.status


def _cmd_fit(args) -> int:
    cols = read_timeseries(args.timeseries)
    try:
        gamma = damping_rate_fit(cols["t"], cols["epot"], args.t_min, args.t_max)
    except FitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"gamma={gamma!r}")
    return 0


def _cmd_compare(args) -> int:
    run_path = Path(args.run)
    if run_path.is_dir():
        found = latest_snapshot(run_path, args.weight)
        if found is None:
            print(f"error: no {args.weight} snapshot in {run_path}", file=sys.stderr)
            return 1
        run_path = found
    try:
        err = compare_tables(args.ref, run_path)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"l2_error={err!r}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sgvplb", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a configured simulation")
    p.add_argument("config", help="key = value configuration file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a configuration key")
    p.add_argument("--output", help="output directory (overrides output.dir)")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("fit-gamma", help="fit the damping rate of a time series")
    p.add_argument("timeseries", help="timeseries.csv of a run")
    p.add_argument("--t-min", type=float, default=0.0)
    p.add_argument("--t-max", type=float, default=None)
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("compare", help="L2 distance between a run snapshot and a reference")
    p.add_argument("--ref", required=True, help="reference snapshot CSV")
    p.add_argument("--run", required=True, help="run directory or snapshot CSV")
    p.add_argument("--weight", choices=("g1", "g2", "g3"), default="g1")
    p.set_defaults(func=_cmd_compare)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
