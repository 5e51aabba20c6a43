"""Locating the cavity frequency that delocalizes the first excited state.

Near resonance the two lowest excited levels form an avoided crossing. The
search runs in two stages: a coarse scan plus golden-section on the gap of that
pair (smooth and wide), then golden-section on the density imbalance of the
pair inside a narrow window around the gap minimum (sharp, since its width
scales with the splitting, which is microhartree-sized at strong coupling).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .eigensolver import solve_lowest
from .errors import BracketingError, UsageError
from .model import (
    DEFAULT_NQ,
    DEFAULT_NX,
    DEFAULT_X_MAX,
    Grid2D,
    ModelParams,
    assemble_coupled_hamiltonian,
    make_grid,
)

log = logging.getLogger(__name__)

#: Reference resonance frequencies (a.u.) keyed by coupling constant.
REFERENCE_RESONANCES = {0.1: 0.37676260, 0.5: 0.39495042, 0.9: 0.43442993}

DEFAULT_BRACKET = (0.30, 0.55)
DEFAULT_TOL = 1e-9
DEFAULT_SCAN = 11
#: pair-gap stage stops at this bracket width before the metric stage takes over
GAP_STAGE_TOL = 1e-7
#: relative disagreement between the two criteria that is flagged
CRITERIA_DISAGREEMENT = 0.01
MAX_WINDOW_DOUBLINGS = 30

_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0

# the two states forming the first polariton pair
PAIR = (1, 2)


def delocalization_metric(phi: np.ndarray, g) -> float:
    """|P_left - P_right| of the density |phi|^2 on the x axis of ``g``.

    A node exactly at x = 0 contributes half its weight to each side. The
    density is renormalized first, so uniform scaling of ``phi`` is harmless.
    """
    x = g.x_nodes if isinstance(g, Grid2D) else np.asarray(g, dtype=float)
    rho = np.abs(np.asarray(phi)) ** 2
    total = rho.sum()
    if not total > 0:
        raise UsageError("density is zero everywhere")
    centre = 0.5 * rho[x == 0].sum()
    left = rho[x < 0].sum() + centre
    right = rho[x > 0].sum() + centre
    return float(abs(left - right) / total)


@dataclass
class ResonanceSample:
    omega_c: float
    gap: float
    metric: float
    stage: str


@dataclass
class ResonanceResult:
    lambda_c: float
    omega_c_star: float
    metric_at_star: float
    bracket: tuple
    trace: list = field(default_factory=list)
    criterion: str = "metric"
    gap_at_star: float = float("nan")
    omega_c_gap: float = float("nan")
    criteria_disagree: bool = False
    scan_unimodal: bool = True

    @property
    def n_solves(self) -> int:
        return len(self.trace)


@dataclass
class GridSettings:
    nx: int = DEFAULT_NX
    nq: int = DEFAULT_NQ
    x_max: float = DEFAULT_X_MAX
    q_max: Optional[float] = None


def pair_observables(p: ModelParams, grid: GridSettings, k: int = 4, solver_tol: float = 1e-9):
    """Gap of the first excited pair and min over the pair of the imbalance."""
    g = make_grid(p, grid.nx, grid.nq, grid.x_max, grid.q_max)
    res = solve_lowest(assemble_coupled_hamiltonian(g, p), k=k, tol=solver_tol)
    gap = float(res[PAIR[1]].energy - res[PAIR[0]].energy)
    metrics = []
    for j in PAIR:
        density = np.sum(res[j].vector.reshape(g.shape) ** 2, axis=1)
        metrics.append(delocalization_metric(np.sqrt(density), g))
    return gap, float(min(metrics))


def golden_section(
    f: Callable[[float], float], lo: float, hi: float, tol: float
) -> tuple:
    """Golden-section search for a minimum of ``f`` on [lo, hi].

    Returns ``(lo, hi)`` with ``hi - lo <= tol`` containing the minimum of a
    unimodal ``f``.
    """
    c = hi - _INV_PHI * (hi - lo)
    d = lo + _INV_PHI * (hi - lo)
    fc, fd = f(c), f(d)
    while hi - lo > tol:
        if fc <= fd:
            hi, d, fd = d, c, fc
            c = hi - _INV_PHI * (hi - lo)
            fc = f(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + _INV_PHI * (hi - lo)
            fd = f(d)
    return lo, hi


def _is_unimodal(values, slack: float = 1e-3) -> bool:
    values = np.asarray(values)
    i = int(np.argmin(values))
    down = np.all(np.diff(values[: i + 1]) <= slack)
    up = np.all(np.diff(values[i:]) >= -slack)
    return bool(down and up)


def find_resonance(
    lambda_c: float,
    bracket: tuple = DEFAULT_BRACKET,
    tol: float = DEFAULT_TOL,
    base: Optional[ModelParams] = None,
    grid: Optional[GridSettings] = None,
    criterion: str = "metric",
    n_scan: int = DEFAULT_SCAN,
    k: int = 4,
    solver_tol: float = 1e-9,
) -> ResonanceResult:
    """Cavity frequency in ``bracket`` that best delocalizes the first excited pair.

    ``criterion="metric"`` minimizes the density imbalance (min over the pair);
    ``criterion="gap"`` stops after the pair-gap minimization and reports the
    imbalance there. Both frequencies are kept on the result, and a relative
    disagreement above 1% sets ``criteria_disagree``.
    """
    if criterion not in ("metric", "gap"):
        raise UsageError(f"unknown criterion {criterion!r}")
    lo, hi = map(float, bracket)
    if not (0 < lo < hi):
        raise UsageError(f"bracket must satisfy 0 < lo < hi, got {bracket}")
    if not tol > 0:
        raise UsageError("tol must be positive")
    if n_scan < 3:
        raise UsageError("coarse scan needs at least 3 points")
    base = base or ModelParams()
    grid = grid or GridSettings()
    p0 = base.replace(lambda_c=float(lambda_c))

    trace: list = []
    cache: dict = {}

    def sample(omega: float, stage: str) -> ResonanceSample:
        if omega not in cache:
            gap, metric = pair_observables(p0.replace(omega_c=omega), grid, k, solver_tol)
            cache[omega] = ResonanceSample(omega, gap, metric, stage)
            trace.append(cache[omega])
        return cache[omega]

    scan = [sample(float(w), "scan") for w in np.linspace(lo, hi, n_scan)]
    gaps = [s.gap for s in scan]
    i = int(np.argmin(gaps))
    if i == 0 or i == n_scan - 1:
        raise BracketingError(
            f"pair gap is smallest at the bracket edge omega_c = {scan[i].omega_c:.6g}",
            [vars(s) for s in trace],
        )
    unimodal = _is_unimodal([s.metric for s in scan]) and _is_unimodal(gaps)
    if not unimodal:
        log.warning("coarse scan at lambda_c=%g is not unimodal", lambda_c)

    gap_tol = tol if criterion == "gap" else max(tol, GAP_STAGE_TOL)
    g_lo, g_hi = golden_section(
        lambda w: sample(w, "gap").gap, scan[i - 1].omega_c, scan[i + 1].omega_c, gap_tol
    )
    inside = [s for s in trace if g_lo <= s.omega_c <= g_hi]
    if not inside:
        inside = [sample(0.5 * (g_lo + g_hi), "gap")]
    omega_gap = min(inside, key=lambda s: s.gap).omega_c

    if criterion == "gap":
        best = sample(omega_gap, "gap")
        return ResonanceResult(
            lambda_c=float(lambda_c),
            omega_c_star=best.omega_c,
            metric_at_star=best.metric,
            bracket=(g_lo, g_hi),
            trace=[vars(s) for s in trace],
            criterion=criterion,
            gap_at_star=best.gap,
            omega_c_gap=omega_gap,
            scan_unimodal=unimodal,
        )

    # widen a window around the gap minimum until the imbalance rises on both sides
    centre = sample(omega_gap, "metric")
    half = 10.0 * (g_hi - g_lo)
    for _ in range(MAX_WINDOW_DOUBLINGS):
        left = sample(omega_gap - half, "metric")
        right = sample(omega_gap + half, "metric")
        if left.metric > centre.metric and right.metric > centre.metric:
            break
        half *= 2.0
    else:
        raise BracketingError(
            "density imbalance has no interior minimum near the gap minimum",
            [vars(s) for s in trace],
        )
    m_lo, m_hi = golden_section(
        lambda w: sample(w, "metric").metric, omega_gap - half, omega_gap + half, tol
    )
    # the endpoints are sampled so the reported point is never worse than them
    sample(m_lo, "metric")
    sample(m_hi, "metric")
    best = min(
        (s for s in trace if m_lo <= s.omega_c <= m_hi),
        key=lambda s: s.metric,
    )
    disagree = abs(best.omega_c - omega_gap) > CRITERIA_DISAGREEMENT * best.omega_c
    if disagree:
        log.warning(
            "metric and gap criteria disagree: %.8f vs %.8f", best.omega_c, omega_gap
        )
    return ResonanceResult(
        lambda_c=float(lambda_c),
        omega_c_star=best.omega_c,
        metric_at_star=best.metric,
        bracket=(m_lo, m_hi),
        trace=[vars(s) for s in trace],
        criterion=criterion,
        gap_at_star=best.gap,
        omega_c_gap=omega_gap,
        criteria_disagree=disagree,
        scan_unimodal=unimodal,
    )
