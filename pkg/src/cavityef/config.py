"""Run configuration: INI parsing, validation and canonical serialization.

Every numeric field is checked against the model and grid invariants before a
run starts, so a bad file fails with a configuration error and no output. The
canonical text form is what artifacts embed and hash; parsing it back yields an
identical configuration.
"""
from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

from .errors import ConfigurationError
from .lcao_dho import OVERLAP_FORMS
from .model import (
    DEFAULT_MAX_DIMENSION,
    DEFAULT_NQ,
    DEFAULT_NX,
    DEFAULT_X_MAX,
    ModelParams,
    make_grid,
)
from .resonance import DEFAULT_BRACKET, REFERENCE_RESONANCES, GridSettings

TASKS = ("solve", "factorize", "resonance", "approx", "compare")
SOLVER_METHODS = ("auto", "dense", "lanczos", "shift-invert")
HEADER_PREFIX = "# config: "


@dataclass(frozen=True)
class GridConfig:
    nx: int = DEFAULT_NX
    nq: int = DEFAULT_NQ
    x_max: float = DEFAULT_X_MAX
    q_max: Optional[float] = None
    max_dimension: int = DEFAULT_MAX_DIMENSION

    def settings(self) -> GridSettings:
        return GridSettings(self.nx, self.nq, self.x_max, self.q_max)

    def build(self, p: ModelParams):
        return make_grid(p, self.nx, self.nq, self.x_max, self.q_max)


@dataclass(frozen=True)
class SolverConfig:
    k: int = 6
    tol: float = 1e-9
    method: str = "auto"


@dataclass(frozen=True)
class FactorizeConfig:
    states: tuple = (0, 1, 2)
    eps_node: float = 1e-8


@dataclass(frozen=True)
class ResonanceConfig:
    lambda_values: tuple = tuple(REFERENCE_RESONANCES)
    bracket: tuple = DEFAULT_BRACKET
    tol: float = 1e-9
    criterion: str = "metric"
    n_scan: int = 11


@dataclass(frozen=True)
class ApproxConfig:
    n: int = 1
    overlap_form: str = "exact"
    sweep_lambda_min: float = 0.0
    sweep_lambda_max: float = 1.0
    sweep_count: int = 101


@dataclass(frozen=True)
class RunConfig:
    model: ModelParams = field(default_factory=ModelParams)
    grid: GridConfig = field(default_factory=GridConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    factorize: FactorizeConfig = field(default_factory=FactorizeConfig)
    resonance: ResonanceConfig = field(default_factory=ResonanceConfig)
    approx: ApproxConfig = field(default_factory=ApproxConfig)
    #: (lambda_c, omega_c) pairs for the multi-coupling figure panels
    couplings: tuple = tuple(REFERENCE_RESONANCES.items())
    task: str = "solve"
    output_dir: str = "out"

    # -- serialization -------------------------------------------------------

    def to_ini(self) -> str:
        """Canonical text: fixed section/key order, floats written with repr."""
        lines = ["[task]", f"name = {self.task}", "", "[output]", f"directory = {self.output_dir}", ""]
        for section, obj in (
            ("model", self.model),
            ("grid", self.grid),
            ("solver", self.solver),
            ("factorize", self.factorize),
            ("resonance", self.resonance),
            ("approx", self.approx),
        ):
            lines.append(f"[{section}]")
            for f in fields(obj):
                lines.append(f"{f.name} = {_format(getattr(obj, f.name))}")
            lines.append("")
        lines.append("[figures]")
        lines.append(
            "couplings = " + ", ".join(f"{_format(l)}:{_format(w)}" for l, w in self.couplings)
        )
        return "\n".join(lines) + "\n"

    def sha256(self) -> str:
        return hashlib.sha256(self.to_ini().encode()).hexdigest()

    def with_overrides(self, task: Optional[str] = None, output_dir: Optional[str] = None):
        cfg = replace(
            self,
            task=task if task is not None else self.task,
            output_dir=output_dir if output_dir is not None else self.output_dir,
        )
        cfg.validate()
        return cfg

    # -- validation ----------------------------------------------------------

    def validate(self) -> None:
        if self.task not in TASKS:
            raise ConfigurationError(f"task must be one of {TASKS}, got {self.task!r}")
        g, s, fz, r, a = self.grid, self.solver, self.factorize, self.resonance, self.approx
        if g.nx < 5 or g.nq < 5:
            raise ConfigurationError("grid needs at least 5 nodes per axis")
        if not (g.x_max > 0) or (g.q_max is not None and not g.q_max > 0):
            raise ConfigurationError("box half-widths must be positive")
        if g.max_dimension < 1:
            raise ConfigurationError("max_dimension must be positive")
        if g.nx * g.nq > g.max_dimension:
            raise ConfigurationError(
                f"dimension {g.nx * g.nq} exceeds max_dimension {g.max_dimension}"
            )
        if not (1 <= s.k <= g.nx * g.nq):
            raise ConfigurationError(f"solver k must lie in [1, {g.nx * g.nq}]")
        if not s.tol > 0:
            raise ConfigurationError("solver tol must be positive")
        if s.method not in SOLVER_METHODS:
            raise ConfigurationError(f"solver method must be one of {SOLVER_METHODS}")
        if not fz.states or any(j < 0 or j >= s.k for j in fz.states):
            raise ConfigurationError(f"factorize states must lie in [0, k) with k = {s.k}")
        if not (0 < fz.eps_node < 1):
            raise ConfigurationError("eps_node must lie in (0, 1)")
        lo, hi = r.bracket
        if not (0 < lo < hi):
            raise ConfigurationError("resonance bracket must satisfy 0 < lo < hi")
        if not r.tol > 0 or r.n_scan < 3 or r.criterion not in ("metric", "gap"):
            raise ConfigurationError("resonance needs tol > 0, n_scan >= 3, criterion metric|gap")
        if not r.lambda_values or any(not 0 <= lam <= 1 for lam in r.lambda_values):
            raise ConfigurationError("resonance lambda_values must lie in [0, 1]")
        if a.n < 1 or a.overlap_form not in OVERLAP_FORMS:
            raise ConfigurationError(f"approx needs n >= 1 and overlap_form in {OVERLAP_FORMS}")
        if a.sweep_count < 2 or not (0 <= a.sweep_lambda_min < a.sweep_lambda_max):
            raise ConfigurationError("approx sweep needs count >= 2 and 0 <= min < max")
        if not self.couplings:
            raise ConfigurationError("figures couplings must not be empty")
        # the model parameters validate themselves; check each grid builds
        for lam, w in ((self.model.lambda_c, self.model.omega_c),) + tuple(self.couplings):
            g.build(self.model.replace(lambda_c=lam, omega_c=w))
        for lam in r.lambda_values:
            for w in (lo, hi):
                g.build(self.model.replace(lambda_c=lam, omega_c=w))


def _format(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    return str(value)


# -- parsing -----------------------------------------------------------------


def _float(section, key, text):
    try:
        return float(text)
    except ValueError:
        raise ConfigurationError(f"[{section}] {key}: not a number: {text!r}") from None


def _int(section, key, text):
    try:
        value = float(text)
    except ValueError:
        raise ConfigurationError(f"[{section}] {key}: not an integer: {text!r}") from None
    if value != int(value):
        raise ConfigurationError(f"[{section}] {key}: not an integer: {text!r}")
    return int(value)


def _list(section, key, text, conv):
    items = [t.strip() for t in text.split(",") if t.strip()]
    return tuple(conv(section, key, t) for t in items)


def _coerce(section: str, key: str, text: str, default):
    text = text.strip()
    if isinstance(default, bool):
        return text.lower() in ("1", "true", "yes", "on")
    if isinstance(default, int):
        return _int(section, key, text)
    if isinstance(default, float) or (default is None and key == "q_max"):
        if default is None and text == "":
            return None
        return _float(section, key, text)
    if isinstance(default, tuple):
        conv = _int if default and isinstance(default[0], int) else _float
        return _list(section, key, text, conv)
    return text


_SECTIONS = {
    "model": ModelParams,
    "grid": GridConfig,
    "solver": SolverConfig,
    "factorize": FactorizeConfig,
    "resonance": ResonanceConfig,
    "approx": ApproxConfig,
}


def parse_config(text: str) -> RunConfig:
    """Parse INI text into a validated :class:`RunConfig`.

    Missing sections and keys take their defaults; unknown ones are errors.
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigurationError(f"malformed config: {exc}") from None
    known = set(_SECTIONS) | {"task", "output", "figures"}
    unknown = set(parser.sections()) - known
    if unknown:
        raise ConfigurationError(f"unknown config sections: {sorted(unknown)}")

    parts = {}
    for section, cls in _SECTIONS.items():
        defaults = cls.__dataclass_fields__
        values = {}
        if parser.has_section(section):
            for key, raw in parser.items(section):
                if key not in defaults:
                    raise ConfigurationError(f"unknown key [{section}] {key}")
                values[key] = _coerce(section, key, raw, getattr(cls(), key))
        try:
            parts[section] = cls(**values)
        except (TypeError, ValueError) as exc:
            raise ConfigurationError(f"[{section}] {exc}") from None

    def single(section, key, default):
        if not parser.has_section(section):
            return default
        extra = set(parser.options(section)) - {key}
        if extra:
            raise ConfigurationError(f"unknown keys in [{section}]: {sorted(extra)}")
        return parser.get(section, key, fallback=default).strip()

    couplings = RunConfig().couplings
    raw = single("figures", "couplings", None)
    if raw is not None:
        pairs = []
        for item in (t.strip() for t in raw.split(",") if t.strip()):
            if ":" not in item:
                raise ConfigurationError(f"[figures] couplings entries are lambda:omega, got {item!r}")
            lam, w = item.split(":", 1)
            pairs.append((_float("figures", "couplings", lam), _float("figures", "couplings", w)))
        couplings = tuple(pairs)

    cfg = RunConfig(
        model=parts["model"],
        grid=parts["grid"],
        solver=parts["solver"],
        factorize=parts["factorize"],
        resonance=parts["resonance"],
        approx=parts["approx"],
        couplings=couplings,
        task=single("task", "name", "solve"),
        output_dir=single("output", "directory", "out"),
    )
    cfg.validate()
    return cfg


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)


def config_from_artifact(path) -> RunConfig:
    """Recover the configuration embedded in a CSV artifact header."""
    lines = []
    with open(path) as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            if line.startswith(HEADER_PREFIX):
                lines.append(line[len(HEADER_PREFIX):].rstrip("\n"))
    if not lines:
        raise ConfigurationError(f"{path} carries no embedded configuration")
    return parse_config("\n".join(lines) + "\n")
