"""Deterministic CSV and grid-dump emission."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .. import chu1d
from ..chu1d import ChuConfig, ChuState
from ..hiergrid import AdaptiveGrid, dump_grid
from ..vplb import PhaseSpaceConfig
from . import diagnostics as dg
from .diagnostics import TIMESERIES_COLUMNS, TimeSeriesRecord

TIMESERIES_NAME = "timeseries.csv"


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


class TimeSeriesWriter:
    """Append-only ``timeseries.csv`` writer; the header is written on open."""

    def __init__(self, path):
        self.path = Path(path)
        self._fh = open(self.path, "w", newline="")
        self._csv = csv.writer(self._fh, lineterminator="\n")
        self._csv.writerow(TIMESERIES_COLUMNS)
        self._fh.flush()

    def write(self, record: TimeSeriesRecord) -> None:
        self._csv.writerow([_fmt(v) for v in record.row()])
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_timeseries(path, records: Iterable[TimeSeriesRecord]) -> None:
    """Write all ``records`` (possibly none) to ``path``."""
    with TimeSeriesWriter(path) as w:
        for r in records:
            w.write(r)


def read_timeseries(path) -> dict:
    """Column name -> float array."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    header = rows[0]
    missing = [c for c in ("t", "epot") if c not in header]
    if missing:
        raise ValueError(f"{path}: missing columns {missing}")
    data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float).reshape(-1, len(header))
    return {name: data[:, i] for i, name in enumerate(header)}


def snapshot_name(kind: str, step: int) -> str:
    return f"snap_{kind}_{step:06d}.csv"


def grid_name(step: int) -> str:
    return f"grid_{step:06d}.txt"


def write_table(path, a: np.ndarray, b: np.ndarray, values: np.ndarray, names: tuple) -> None:
    """Lattice table with columns ``names[0], names[1], value``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([names[0], names[1], "value"])
        for i, ai in enumerate(a):
            for j, bj in enumerate(b):
                w.writerow([repr(float(ai)), repr(float(bj)), repr(float(values[i, j]))])


def lattice(domain, level: int) -> np.ndarray:
    """``2**level + 1`` uniform points including both ends."""
    return np.linspace(float(domain[0]), float(domain[1]), 2**level + 1)


def write_phase_snapshot(directory, step: int, state: np.ndarray, grid: AdaptiveGrid,
                         config: PhaseSpaceConfig, mode: str = "marginal",
                         weights: tuple = ("g1",)) -> list:
    """Sampled marginals (or slices) of a phase-space state.

    Slab states give ``x, v_x`` tables, one per weight (or a single
    ``v_y = v_z = 0`` slice); 0x3v states give one ``v_x, v_y`` table.
    """
    directory = Path(directory)
    k = config.k
    levels = tuple(config.caps[:2])
    domains = tuple(config.domains[:2])
    names = ("x", "v_x") if config.geometry == "1x3v" else ("v_x", "v_y")
    a, b = lattice(domains[0], levels[0]), lattice(domains[1], levels[1])
    written = []
    if mode == "slice":
        jobs = [("slice", dg.slice_plane(state, grid, config))]
    elif config.geometry == "0x3v":
        jobs = [("g1", dg.marginal(state, grid, config))]
    else:
        jobs = [(w, dg.marginal(state, grid, config, w)) for w in weights]
    for kind, L in jobs:
        vals = dg.evaluate_plane(L, k, levels, domains, a, b)
        path = directory / snapshot_name(kind, step)
        write_table(path, a, b, vals, names)
        written.append(path)
    return written


def write_chu_snapshot(directory, step: int, state: ChuState, config: ChuConfig,
                       weights: tuple = ("g1",)) -> list:
    """One ``x, v_x`` table per requested reduced field."""
    written = []
    for w in weights:
        path = Path(directory) / snapshot_name(w, step)
        chu1d.write_snapshot(path, state, config, w)
        written.append(path)
    return written


def write_grid(directory, step: int, grid: AdaptiveGrid) -> Path:
    path = Path(directory) / grid_name(step)
    path.write_text(dump_grid(grid))
    return path


def latest_snapshot(directory, kind: str) -> Optional[Path]:
    """Highest-step snapshot of ``kind`` in ``directory``."""
    found = sorted(Path(directory).glob(f"snap_{kind}_*.csv"))
    return found[-1] if found else None


def write_error(directory, step: int, t: float, exc: BaseException) -> Path:
    """Diagnostic record of a failed run."""
    path = Path(directory) / "error.txt"
    lines = [f"step = {step}", f"t = {t!r}", f"type = {type(exc).__name__}", f"message = {exc}"]
    report = getattr(exc, "report", None)
    if report is not None:
        lines += [f"gmres.iterations = {report.iterations}", f"gmres.residual = {report.final_residual!r}"]
    path.write_text("\n".join(lines) + "\n")
    return path
