"""Run configuration: flat ``key = value`` files with dotted sections."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

PROBLEMS = ("relaxation", "riemann", "landau", "chu-riemann", "chu-landau")
GRIDS = ("full", "sparse", "mixed", "adaptive")


@dataclass(frozen=True)
class RunConfig:
    """Everything a run needs.

    Unset physical parameters (``None``) are filled from the problem
    preset by :func:`sgvplb.driver.presets.resolve`.

    Attributes
    ----------
    problem : {"relaxation", "riemann", "landau", "chu-riemann", "chu-landau"}
    grid : {"full", "sparse", "mixed", "adaptive"}
    levels : tuple of int
        ``(l_v,)`` for relaxation, ``(l_x, l_v)`` otherwise.
    caps : tuple of int, optional
        Per-dimension caps; default from ``levels``.
    sparse_level : int, optional
        ``N`` of the sparse grid (and of the adaptive starting grid).
    chu_solver : {"gmres", "direct"}
        Implicit solver of the reduced model; "direct" is a sparse LU.
    """

    problem: str = "relaxation"
    grid: str = "full"
    levels: tuple = (3,)
    caps: Optional[tuple] = None
    sparse_level: Optional[int] = None
    k: int = 2
    nu: Optional[float] = None
    dt: Optional[float] = None
    t_final: Optional[float] = None
    max_steps: Optional[int] = None
    x_domain: Optional[tuple] = None
    v_domain: Optional[tuple] = None
    electric_field: Optional[bool] = None
    tau: float = 1e-4
    mu: float = 0.1
    max_refine_passes: int = 10
    norm: str = "linf"
    gmres_tol: Optional[float] = None
    gmres_restart: int = 100
    gmres_maxiter: int = 2000
    gmres_precond: bool = False
    chu_solver: str = "gmres"
    output_dir: str = "out"
    snapshot_every: int = 0
    snapshot_mode: str = "marginal"
    snapshot_weights: tuple = ("g1",)
    grid_dump: bool = True

    def __post_init__(self):
        if self.problem not in PROBLEMS:
            raise ValueError(f"unknown problem {self.problem!r}")
        if self.grid not in GRIDS:
            raise ValueError(f"unknown grid {self.grid!r}")
        want = 1 if self.problem == "relaxation" else 2
        if len(self.levels) != want:
            raise ValueError(f"{self.problem} expects {want} level value(s), got {self.levels}")
        if self.problem.startswith("chu") and self.grid != "full":
            raise ValueError("the reduced solver runs on full grids only")
        if self.problem == "relaxation" and self.grid == "mixed":
            raise ValueError("mixed grids need a spatial dimension")
        if self.grid == "adaptive" and not (self.tau > 0 and 0 < self.mu < 1):
            raise ValueError("adaptive runs need tau > 0 and 0 < mu < 1")
        if self.chu_solver not in ("gmres", "direct"):
            raise ValueError(f"unknown reduced solver {self.chu_solver!r}")
        if self.snapshot_mode not in ("marginal", "slice"):
            raise ValueError(f"unknown snapshot mode {self.snapshot_mode!r}")
        for w in self.snapshot_weights:
            if w not in ("g1", "g2", "g3"):
                raise ValueError(f"unknown snapshot weight {w!r}")

    @property
    def is_chu(self) -> bool:
        return self.problem.startswith("chu")

    @property
    def geometry(self) -> str:
        return "0x3v" if self.problem == "relaxation" else "1x3v"

    @property
    def dims(self) -> int:
        return 3 if self.problem == "relaxation" else 4

    def resolved_caps(self) -> tuple:
        if self.caps is not None:
            return tuple(self.caps)
        if self.problem == "relaxation":
            return (self.levels[0],) * 3
        if self.is_chu:
            return tuple(self.levels)
        return (self.levels[0],) + (self.levels[1],) * 3

    def to_text(self) -> str:
        """Serialize in the file format read by :func:`parse_config`."""
        lines = []
        for f in dataclasses.fields(self):
            val = getattr(self, f.name)
            if val is None:
                continue
            lines.append(f"{_KEYS_INV[f.name]} = {_format(val)}")
        return "\n".join(lines) + "\n"


# file key -> field name
_KEYS = {
    "problem": "problem",
    "grid": "grid",
    "levels": "levels",
    "caps": "caps",
    "sparse_level": "sparse_level",
    "k": "k",
    "nu": "nu",
    "dt": "dt",
    "t_final": "t_final",
    "max_steps": "max_steps",
    "x_domain": "x_domain",
    "v_domain": "v_domain",
    "electric_field": "electric_field",
    "adapt.tau": "tau",
    "adapt.mu": "mu",
    "adapt.max_refine_passes": "max_refine_passes",
    "adapt.norm": "norm",
    "gmres.tol": "gmres_tol",
    "gmres.restart": "gmres_restart",
    "gmres.maxiter": "gmres_maxiter",
    "gmres.precond": "gmres_precond",
    "chu.solver": "chu_solver",
    "output.dir": "output_dir",
    "output.snapshot_every": "snapshot_every",
    "output.snapshot_mode": "snapshot_mode",
    "output.snapshot_weights": "snapshot_weights",
    "output.grid_dump": "grid_dump",
}
_KEYS_INV = {v: k for k, v in _KEYS.items()}

_INT_TUPLES = {"levels", "caps"}
_FLOAT_TUPLES = {"x_domain", "v_domain"}
_STR_TUPLES = {"snapshot_weights"}
_INTS = {"sparse_level", "k", "max_steps", "max_refine_passes", "gmres_restart", "gmres_maxiter", "snapshot_every"}
_FLOATS = {"nu", "dt", "t_final", "tau", "mu", "gmres_tol"}
_BOOLS = {"electric_field", "gmres_precond", "grid_dump"}


def _format(val) -> str:
    if isinstance(val, bool):
        return "true" if val else "false"
    if isinstance(val, tuple):
        return ",".join(_format(v) for v in val)
    if isinstance(val, float):
        return repr(val)
    return str(val)


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _convert(name: str, text: str):
    text = text.strip()
    if text.lower() in ("none", ""):
        return None
    if name in _INT_TUPLES:
        return tuple(int(v) for v in text.split(","))
    if name in _FLOAT_TUPLES:
        vals = tuple(float(v) for v in text.split(","))
        if len(vals) != 2:
            raise ValueError(f"{name} needs two values")
        return vals
    if name in _STR_TUPLES:
        return tuple(v.strip() for v in text.split(",") if v.strip())
    if name in _INTS:
        return int(text)
    if name in _FLOATS:
        return float(text)
    if name in _BOOLS:
        return _parse_bool(text)
    return text


def parse_assignments(lines: Iterable[str]) -> dict:
    """Parse ``key = value`` lines into field-name keyed values.

    Blank lines and ``#`` comments are ignored; unknown keys are errors.
    """
    out = {}
    for num, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {num}: expected key = value, got {raw.strip()!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in _KEYS:
            raise ValueError(f"line {num}: unknown key {key!r}")
        name = _KEYS[key]
        try:
            out[name] = _convert(name, val)
        except ValueError as exc:
            raise ValueError(f"line {num}: bad value for {key}: {exc}") from None
    return out


def parse_config(text: str, overrides: Iterable[str] = ()) -> RunConfig:
    """Build a :class:`RunConfig` from file text plus ``key=value`` overrides."""
    values = parse_assignments(text.splitlines())
    values.update(parse_assignments(overrides))
    return RunConfig(**values)


def load_config(path, overrides: Iterable[str] = ()) -> RunConfig:
    """Read a config file; see :func:`parse_config`."""
    return parse_config(Path(path).read_text(), overrides)
