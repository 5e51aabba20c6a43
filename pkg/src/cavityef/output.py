"""Deterministic CSV tables with a provenance header.

Numbers are written as ``{:.16e}`` (17 significant digits), which round-trips
every double exactly. Masked samples are written as ``nan`` and flagged by a
``mask`` column, so rows are never dropped.
"""
from __future__ import annotations

import csv
import io
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import scipy

from . import __version__
from .config import HEADER_PREFIX, RunConfig
from .efactor import PotentialCurve

CURVE_COLUMNS = ("x", "bare_V", "eph_em", "eph_kin", "total", "density", "mask")


def format_value(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, str):
        return value
    v = float(value)
    if np.isnan(v):
        return "nan"
    if np.isinf(v):
        return "inf" if v > 0 else "-inf"
    return f"{v:.16e}"


@dataclass
class CurveTable:
    """Named columns of equal length plus free-form annotation lines."""

    columns: dict
    annotations: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    def __post_init__(self):
        lengths = {len(v) for v in self.columns.values()}
        if len(lengths) > 1:
            raise ValueError(f"columns have unequal lengths {sorted(lengths)}")

    @property
    def n_rows(self) -> int:
        return len(next(iter(self.columns.values()))) if self.columns else 0

    @classmethod
    def from_curve(cls, curve: PotentialCurve, annotations: Sequence[str] = ()) -> "CurveTable":
        m = np.asarray(curve.mask, dtype=bool)

        def masked(values):
            return np.where(m, values, np.nan)

        density = curve.density if curve.density is not None else np.full(curve.x.shape, np.nan)
        cols = {
            "x": curve.x,
            "bare_V": curve.bare,
            "eph_em": masked(curve.eph_em),
            "eph_kin": masked(curve.eph_kin),
            "total": masked(curve.total),
            "density": density,
            "mask": m.astype(int),
        }
        return cls(cols, list(annotations), list(curve.warnings))

    def body(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(list(self.columns))
        for row in zip(*self.columns.values()):
            writer.writerow([format_value(v) for v in row])
        return buf.getvalue()

    def render(self, config: Optional[RunConfig] = None) -> str:
        head = [f"# cavityef {__version__} numpy {np.__version__} scipy {scipy.__version__}"]
        if config is not None:
            head.append(f"# config_sha256: {config.sha256()}")
        head.append(f"# warnings: {len(self.warnings)}")
        head.extend(f"# warning: {w}" for w in self.warnings)
        head.extend(f"# {a}" for a in self.annotations)
        if config is not None:
            head.extend(HEADER_PREFIX + line for line in config.to_ini().splitlines())
        return "\n".join(head) + "\n" + self.body()


def write_atomic(path: Path, text: str) -> None:
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_table(path) -> dict:
    """Parse a table written by :meth:`CurveTable.render` into float arrays."""
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader)
    rows = list(reader)
    out = {}
    for j, name in enumerate(header):
        col = [r[j] for r in rows]
        try:
            out[name] = np.array([float(v) for v in col])
        except ValueError:
            out[name] = np.array(col)
    return out
