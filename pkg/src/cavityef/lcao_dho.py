"""Analytical approximation: atomic orbitals times displaced oscillator states.

Each well contributes a Gaussian orbital; the cavity mode is represented by
oscillator eigenfunctions centred where the photon potential is minimal for an
electron sitting in that well. At resonance the left-well state with N photons
mixes with the right-well state with N-1 photons, giving the polariton pair.

Phase convention: the oscillator functions carry a factor (-1)**n relative to
the textbook Hermite functions, so the pair overlap <xi-_N|xi+_(N-1)> is
negative and the "-" branch is the lower one.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np
import scipy.linalg
from scipy import integrate
from scipy.special import binom, factorial

from .efactor import DEFAULT_EPS_NODE, PotentialCurve
from .errors import EmptyReportError, NumericError, UsageError
from .model import Grid2D, ModelParams, adw_potential, kinetic_matrix

LEFT, RIGHT = -1, +1
LOWER, UPPER = -1, +1
GAUSS_HERMITE_POINTS = 200
#: radicand values above this (negative) threshold are clamped silently
RADICAND_CLAMP = -1e-12
OVERLAP_FORMS = ("exact", "printed")

# plateau windows (|x| range) and the window for locating the kinetic peak
PLATEAU_WINDOW = (3.0, 6.0)
CURVATURE_HALF_WIDTH = 0.6


def _side(side) -> int:
    if side in (LEFT, "left", "-"):
        return LEFT
    if side in (RIGHT, "right", "+"):
        return RIGHT
    raise UsageError(f"side must be left/-1 or right/+1, got {side!r}")


def _branch(branch) -> int:
    if branch in (LOWER, "-", "lower"):
        return LOWER
    if branch in (UPPER, "+", "upper"):
        return UPPER
    raise UsageError(f"branch must be -1/'-' or +1/'+', got {branch!r}")


def _manifold(n) -> int:
    if int(n) != n or n < 1:
        raise UsageError(f"manifold index must be an integer >= 1, got {n!r}")
    return int(n)


# ---------------------------------------------------------------------------
# electronic part


def atomic_orbital(side, x, p: ModelParams) -> np.ndarray:
    """Normalized harmonic ground state of frequency omega_e centred at side*a."""
    s = _side(side)
    x = np.asarray(x, dtype=float)
    return (p.omega_e / np.pi) ** 0.25 * np.exp(-0.5 * p.omega_e * (x - s * p.a) ** 2)


@dataclass(frozen=True)
class LcaoElements:
    alpha: float
    beta: float
    s: float


def _orbital_second_derivative(side: int, x, p: ModelParams):
    u = p.omega_e * (x - side * p.a)
    return atomic_orbital(side, x, p) * (u * u - p.omega_e)


def _symmetric_well_element(bra: int, ket: int, p: ModelParams) -> float:
    """<phi_bra| -1/(2m) d2/dx2 + 0.5 omega_e^2 (|x|-a)^2 |phi_ket> by adaptive quadrature."""

    def integrand(x):
        kinetic = -0.5 / p.mass * _orbital_second_derivative(ket, x, p)
        well = 0.5 * p.omega_e**2 * (abs(x) - p.a) ** 2 * atomic_orbital(ket, x, p)
        return atomic_orbital(bra, x, p) * (kinetic + well)

    total = 0.0
    # split at the kink of |x| so each piece is smooth
    for lo, hi in ((-np.inf, 0.0), (0.0, np.inf)):
        value, err = integrate.quad(integrand, lo, hi, epsabs=1e-15, epsrel=1e-12, limit=200)
        if not np.isfinite(value) or err > 1e-9:
            raise NumericError(f"LCAO quadrature did not converge (error estimate {err:.2e})")
        total += value
    return total


def lcao_elements(p: ModelParams) -> LcaoElements:
    """On-site energy alpha, hopping beta and overlap S of the two orbitals."""
    alpha = _symmetric_well_element(LEFT, LEFT, p)
    beta = _symmetric_well_element(LEFT, RIGHT, p)
    return LcaoElements(alpha, beta, math.exp(-p.omega_e * p.a**2))


# ---------------------------------------------------------------------------
# displaced oscillators


def laguerre(n: int, k: float, x):
    """Associated Laguerre polynomial L_n^k(x) by the three-term recurrence."""
    if n < 0:
        raise UsageError("Laguerre degree must be >= 0")
    x = np.asarray(x, dtype=float)
    prev = np.ones_like(x)
    if n == 0:
        return prev
    cur = 1.0 + k - x
    for j in range(1, n):
        prev, cur = cur, ((2 * j + 1 + k - x) * cur - (j + k) * prev) / (j + 1)
    return cur


def laguerre_direct(n: int, k: float, x):
    """Explicit power sum for L_n^k(x); reference for the recurrence."""
    x = np.asarray(x, dtype=float)
    return sum((-1) ** i * binom(n + k, n - i) * x**i / factorial(i) for i in range(n + 1))


def _hermite_functions(nmax: int, y) -> np.ndarray:
    """Normalized Hermite polynomials times pi**-0.25, without the Gaussian factor.

    Row n holds p_n(y) such that p_n(y)*exp(-y**2/2) is the n-th oscillator
    eigenfunction in the dimensionless coordinate y.
    """
    y = np.asarray(y, dtype=float)
    out = np.empty((nmax + 1,) + y.shape)
    out[0] = np.pi**-0.25
    if nmax >= 1:
        out[1] = np.sqrt(2.0) * y * out[0]
    for n in range(1, nmax):
        out[n + 1] = np.sqrt(2.0 / (n + 1)) * y * out[n] - np.sqrt(n / (n + 1)) * out[n - 1]
    return out


def dho_centre(side, p: ModelParams) -> float:
    """Photon coordinate that minimizes the mode potential with the electron at side*a."""
    return _side(side) * p.lambda_c * p.a / p.omega_c


def dho_function(n: int, side, q, p: ModelParams) -> np.ndarray:
    """Displaced oscillator eigenfunction xi^side_n(q), with the (-1)**n phase."""
    if n < 0:
        raise UsageError("oscillator quantum number must be >= 0")
    y = np.sqrt(p.omega_c) * (np.asarray(q, dtype=float) - dho_centre(side, p))
    poly = _hermite_functions(n, y)[n]
    return (-1) ** n * p.omega_c**0.25 * poly * np.exp(-0.5 * y * y)


@dataclass(frozen=True)
class DhoState:
    side: int
    n: int
    params: ModelParams

    @property
    def centre(self) -> float:
        return dho_centre(self.side, self.params)

    @property
    def energy(self) -> float:
        """Adiabatic level +-Delta + (n + 1/2) omega_c."""
        return self.side * self.params.delta + (self.n + 0.5) * self.params.omega_c

    def __call__(self, q) -> np.ndarray:
        return dho_function(self.n, self.side, q, self.params)


@lru_cache(maxsize=4)
def _gauss_hermite(points: int):
    return np.polynomial.hermite.hermgauss(points)


def _pair_integral(n: int, p: ModelParams, with_q: bool) -> float:
    """<xi-_n| q^with_q |xi+_(n-1)> by Gauss-Hermite quadrature in y = sqrt(omega_c) q."""
    nodes, weights = _gauss_hermite(GAUSS_HERMITE_POINTS)
    shift = np.sqrt(p.omega_c) * dho_centre(RIGHT, p)
    # product of the two Gaussians is exp(-y^2 - shift^2)
    left = _hermite_functions(n, nodes + shift)[n]
    right = _hermite_functions(n - 1, nodes - shift)[n - 1]
    factor = nodes / np.sqrt(p.omega_c) if with_q else 1.0
    phase = (-1) ** (2 * n - 1)
    return float(phase * np.exp(-shift * shift) * np.sum(weights * factor * left * right))


def dho_overlap(n: int, p: ModelParams, form: str = "exact") -> float:
    """Overlap <xi-_N|xi+_(N-1)> of the two displaced oscillators.

    ``form="exact"`` is the displaced-oscillator closed form
    -sqrt(1/N) b exp(-b^2/2) L^1_(N-1)(b^2) with b^2 = 2 lambda^2 a^2 / omega_c,
    which agrees with direct quadrature. ``form="printed"`` evaluates
    exp(-y/2) (-a lambda/omega_c) sqrt(1/N) L^1_N(y) with
    y = (a lambda/omega_c)^2, kept as an alternative closed form.
    """
    n = _manifold(n)
    if form == "exact":
        b2 = 2.0 * p.lambda_c**2 * p.a**2 / p.omega_c
        return float(-math.sqrt(b2 / n) * math.exp(-0.5 * b2) * laguerre(n - 1, 1, b2))
    if form == "printed":
        y = (p.a * p.lambda_c / p.omega_c) ** 2
        return float(
            math.exp(-0.5 * y) * (-p.a * p.lambda_c / p.omega_c) * math.sqrt(1.0 / n)
            * laguerre(n, 1, y)
        )
    raise UsageError(f"overlap form must be one of {OVERLAP_FORMS}, got {form!r}")


def dho_overlap_quadrature(n: int, p: ModelParams) -> float:
    return _pair_integral(_manifold(n), p, with_q=False)


def dho_q_element(n: int, p: ModelParams) -> float:
    """<xi-_N| q |xi+_(N-1)> by 200-point Gauss-Hermite quadrature."""
    return _pair_integral(_manifold(n), p, with_q=True)


# ---------------------------------------------------------------------------
# ground state


def ground_eph_potential(x, p: ModelParams) -> np.ndarray:
    """omega_c/2 + lambda_c^2 (x + a)^2 / 2."""
    x = np.asarray(x, dtype=float)
    return 0.5 * p.omega_c + 0.5 * p.lambda_c**2 * (x + p.a) ** 2


def approx_ground_curve(x, p: ModelParams) -> PotentialCurve:
    x = np.asarray(x, dtype=float)
    return PotentialCurve(
        x.copy(),
        adw_potential(x, p),
        ground_eph_potential(x, p),
        np.zeros_like(x),
        np.ones(x.shape, dtype=bool),
        atomic_orbital(LEFT, x, p) ** 2,
    )


# ---------------------------------------------------------------------------
# excited polaritons


@dataclass
class ApproxPolariton:
    n: int
    branch: int
    overlap: float
    nu: float
    coefficients: tuple
    energy: float
    elements: LcaoElements
    warnings: list = field(default_factory=list)


def approx_polariton(
    n: int,
    branch,
    p: ModelParams,
    overlap_form: str = "exact",
    third_level: Optional[float] = None,
) -> ApproxPolariton:
    """Polariton (phi- xi-_N +- phi+ xi+_(N-1)) / sqrt(2 nu) and its energy.

    ``third_level`` is the third uncoupled electronic level; when given, an
    energy above it is flagged since the two-orbital picture no longer holds.
    """
    n = _manifold(n)
    b = _branch(branch)
    ovl = dho_overlap(n, p, overlap_form)
    el = lcao_elements(p)
    nu = 1.0 + b * el.s * ovl
    if not nu > 0:
        raise NumericError(f"normalization factor nu = {nu} is not positive")
    energy = n * p.omega_c + (el.alpha + b * el.beta * ovl) / nu
    c = 1.0 / math.sqrt(2.0 * nu)
    notes = []
    if third_level is not None and energy > third_level:
        msg = f"energy {energy:.6f} exceeds the third uncoupled level {third_level:.6f}"
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        notes.append(msg)
    return ApproxPolariton(n, b, ovl, nu, (c, b * c), energy, el, notes)


def approx_wavefunction(n: int, branch, g: Grid2D, p: ModelParams, overlap_form: str = "exact"):
    """Psi^+-_N on the tensor grid, shape (nx, nq)."""
    pol = approx_polariton(n, branch, p, overlap_form)
    x, q = g.x_nodes, g.q_nodes
    left = np.outer(atomic_orbital(LEFT, x, p), dho_function(n, LEFT, q, p))
    right = np.outer(atomic_orbital(RIGHT, x, p), dho_function(n - 1, RIGHT, q, p))
    return pol.coefficients[0] * left + pol.coefficients[1] * right


@dataclass
class RadicandReport:
    clamped: int
    violations: int
    most_negative: float


def _radicand(n: int, b: int, x, p: ModelParams, overlap_form: str):
    ovl = dho_overlap(n, p, overlap_form)
    a = atomic_orbital(LEFT, x, p)
    c = atomic_orbital(RIGHT, x, p)
    return a * a + c * c + 2.0 * b * ovl * a * c


def radicand_report(n: int, branch, x, p: ModelParams, overlap_form: str = "exact") -> RadicandReport:
    r = _radicand(_manifold(n), _branch(branch), np.asarray(x, dtype=float), p, overlap_form)
    neg = r < 0
    return RadicandReport(
        int(np.count_nonzero(neg & (r >= RADICAND_CLAMP))),
        int(np.count_nonzero(r < RADICAND_CLAMP)),
        float(r.min()) if neg.any() else 0.0,
    )


def approx_marginal(n: int, branch, x, p: ModelParams, overlap_form: str = "exact") -> np.ndarray:
    """Phi^+-_N(x) = [phi-^2 + phi+^2 +- 2 <xi-|xi+> phi- phi+]^(1/2) / sqrt(2 nu).

    Negative radicands are clamped to zero; values below -1e-12 also raise a
    RuntimeWarning with the count.
    """
    n, b = _manifold(n), _branch(branch)
    x = np.asarray(x, dtype=float)
    r = _radicand(n, b, x, p, overlap_form)
    bad = int(np.count_nonzero(r < RADICAND_CLAMP))
    if bad:
        warnings.warn(f"{bad} radicand values below {RADICAND_CLAMP} clamped", RuntimeWarning, stacklevel=2)
    nu = approx_polariton(n, b, p, overlap_form).nu
    return np.sqrt(np.clip(r, 0.0, None) / (2.0 * nu))


def _node_mask(phi, eps_node: float):
    rho = phi * phi
    return rho >= eps_node * rho.max()


def approx_kinetic_term(
    n: int, branch, x, p: ModelParams, overlap_form: str = "exact", eps_node: float = DEFAULT_EPS_NODE
) -> np.ndarray:
    """(1/2m)<d_x chi|d_x chi> for the approximate conditional amplitude.

    a^2 omega_e^2 phi+^2 phi-^2 (1 - ovl^2) / (2 m nu^2 Phi^4), where the
    nu^2 keeps chi normalized over q. NaN below the node threshold.
    """
    n, b = _manifold(n), _branch(branch)
    x = np.asarray(x, dtype=float)
    pol = approx_polariton(n, b, p, overlap_form)
    phi = approx_marginal(n, b, x, p, overlap_form)
    mask = _node_mask(phi, eps_node)
    a2 = atomic_orbital(LEFT, x, p) ** 2
    c2 = atomic_orbital(RIGHT, x, p) ** 2
    out = np.full(x.shape, np.nan)
    out[mask] = (
        p.a**2 * p.omega_e**2 * a2[mask] * c2[mask] * (1.0 - pol.overlap**2)
        / (2.0 * p.mass * pol.nu**2 * phi[mask] ** 4)
    )
    return out


def peak_height_at_origin(n: int, branch, p: ModelParams, overlap_form: str = "exact") -> float:
    """Closed-form kinetic term at x = 0: (a^2 omega_e^2 / 2m)(1 -+ ovl)/(1 +- ovl)."""
    b = _branch(branch)
    ovl = dho_overlap(n, p, overlap_form)
    return p.a**2 * p.omega_e**2 / (2.0 * p.mass) * (1.0 - b * ovl) / (1.0 + b * ovl)


def approx_em_term(
    n: int, branch, x, p: ModelParams, overlap_form: str = "exact", eps_node: float = DEFAULT_EPS_NODE
) -> np.ndarray:
    """Approximate <chi|H_EM|chi>: N omega_c + step term + lambda-dependent part.

    The step term is (omega_c/4)(phi-^2 - phi+^2)/Phi^2. The lambda-dependent
    part is lambda^2 a x/2 (phi-^2 - phi+^2)/Phi^2 + lambda^2 x^2/2
    + lambda^2 a^2/2 (Phi_opposite/Phi)^2 -+ lambda omega_c x Q phi- phi+ / Phi^2
    with Q = <xi-_N|q|xi+_(N-1)>. NaN below the node threshold.
    """
    n, b = _manifold(n), _branch(branch)
    x = np.asarray(x, dtype=float)
    phi = approx_marginal(n, b, x, p, overlap_form)
    phi_other = approx_marginal(n, -b, x, p, overlap_form)
    mask = _node_mask(phi, eps_node)
    a = atomic_orbital(LEFT, x, p)
    c = atomic_orbital(RIGHT, x, p)
    q_el = dho_q_element(n, p)
    lam, w = p.lambda_c, p.omega_c
    out = np.full(x.shape, np.nan)
    xm, am, cm, rho = x[mask], a[mask], c[mask], phi[mask] ** 2
    imbalance = (am * am - cm * cm) / rho
    lambda_part = (
        0.5 * lam**2 * p.a * xm * imbalance
        + 0.5 * lam**2 * xm * xm
        + 0.5 * lam**2 * p.a**2 * (phi_other[mask] ** 2 / rho)
        - b * lam * w * xm * q_el * am * cm / rho
    )
    out[mask] = n * w + 0.25 * w * imbalance + lambda_part
    return out


def step_term(n: int, branch, x, p: ModelParams, overlap_form: str = "exact") -> np.ndarray:
    """(omega_c/4)(phi-^2 - phi+^2)/Phi^2 alone."""
    x = np.asarray(x, dtype=float)
    phi = approx_marginal(n, branch, x, p, overlap_form)
    a2 = atomic_orbital(LEFT, x, p) ** 2
    c2 = atomic_orbital(RIGHT, x, p) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(phi > 0, 0.25 * p.omega_c * (a2 - c2) / phi**2, np.nan)


def approx_excited_curve(
    n: int, branch, x, p: ModelParams, overlap_form: str = "exact", eps_node: float = DEFAULT_EPS_NODE
) -> PotentialCurve:
    x = np.asarray(x, dtype=float)
    phi = approx_marginal(n, branch, x, p, overlap_form)
    em = approx_em_term(n, branch, x, p, overlap_form, eps_node)
    kin = approx_kinetic_term(n, branch, x, p, overlap_form, eps_node)
    mask = np.isfinite(em) & np.isfinite(kin)
    return PotentialCurve(x.copy(), adw_potential(x, p), em, kin, mask, phi**2)


# ---------------------------------------------------------------------------
# comparison and derived features


def plateau_step(x, values, mask, window: tuple = PLATEAU_WINDOW) -> float:
    """Mean over x in [-hi, -lo] minus mean over x in [lo, hi], valid points only."""
    x = np.asarray(x)
    lo, hi = window
    left = mask & (x >= -hi) & (x <= -lo)
    right = mask & (x >= lo) & (x <= hi)
    if not (left.any() and right.any()):
        return float("nan")
    return float(np.mean(values[left]) - np.mean(values[right]))


def peak_location(x, values, mask, half_width: float):
    """(index, x, value) of the maximum over valid points with |x| < half_width."""
    x = np.asarray(x)
    window = mask & (np.abs(x) < half_width) & np.isfinite(values)
    if not window.any():
        return -1, float("nan"), float("nan")
    i = int(np.flatnonzero(window)[np.argmax(values[window])])
    return i, float(x[i]), float(values[i])


def well_curvature(x, total, mask, side, half_width: float = CURVATURE_HALF_WIDTH) -> float:
    """Second derivative of a parabola fitted to ``total`` around the minimum on one side."""
    x = np.asarray(x)
    s = _side(side)
    sel = mask & (s * x > 0) & np.isfinite(total)
    if np.count_nonzero(sel) < 3:
        return float("nan")
    i = np.flatnonzero(sel)[np.argmin(total[sel])]
    fit = sel & (np.abs(x - x[i]) <= half_width)
    if np.count_nonzero(fit) < 3:
        return float("nan")
    coeffs = np.polyfit(x[fit], total[fit], 2)
    return float(2.0 * coeffs[0])


def right_well_elevation(curve: PotentialCurve) -> float:
    """Lift of the right-well minimum relative to the left, in excess of the bare potential's."""
    x, m = curve.x, curve.mask
    total = curve.total

    def split(values, valid):
        return np.min(values[valid & (x > 0)]) - np.min(values[valid & (x < 0)])

    return float(split(total, m) - split(curve.bare, np.ones_like(m)))


def density_spread(x, density, centre: float) -> float:
    """Variance of a (renormalized) density about ``centre``."""
    x = np.asarray(x)
    rho = np.asarray(density, dtype=float)
    rho = np.where(np.isfinite(rho), rho, 0.0)
    return float(np.sum(rho * (x - centre) ** 2) / np.sum(rho))


def ground_density_on_potential(x, potential, mass: float = 1.0) -> np.ndarray:
    """Ground-state density of -1/(2m) d2/dx2 + potential on the uniform nodes ``x``."""
    x = np.asarray(x, dtype=float)
    h = (x[-1] - x[0]) / (x.size - 1)
    ham = kinetic_matrix(x.size, h, mass).toarray() + np.diag(potential)
    _, vec = scipy.linalg.eigh(ham, subset_by_index=(0, 0))
    rho = vec[:, 0] ** 2
    return rho / (np.sum(rho) * h)


@dataclass
class CurveComparison:
    n_common: int
    max_abs_diff: float
    rms_diff: float
    mean_diff: float
    step_exact: float
    step_approx: float
    peak_x_exact: float
    peak_x_approx: float
    peak_height_exact: float
    peak_height_approx: float
    peak_offset_nodes: int
    curvature_left_exact: float
    curvature_left_approx: float


def compare_curves(
    exact: PotentialCurve, approx: PotentialCurve, peak_window: Optional[float] = None
) -> CurveComparison:
    """Pointwise statistics of total(exact) - total(approx) plus feature estimates.

    Steps are plateau differences of the e-ph part and curvature is fitted in
    the left well. Peaks are the kinetic-term maxima with |x| < ``peak_window``,
    by default the distance of the farther bare-potential well minimum.
    """
    if exact.x.shape != approx.x.shape or not np.allclose(exact.x, approx.x, rtol=0, atol=1e-12):
        raise UsageError("curves must share the same x samples")
    common = exact.mask & approx.mask & np.isfinite(exact.total) & np.isfinite(approx.total)
    if not common.any():
        raise EmptyReportError("curves have no valid points in common")
    diff = exact.total[common] - approx.total[common]
    x = exact.x
    if peak_window is None:
        left, right = x < 0, x > 0
        peak_window = max(
            abs(x[left][np.argmin(exact.bare[left])]), abs(x[right][np.argmin(exact.bare[right])])
        )
    ie, xe, he = peak_location(x, exact.eph_kin, exact.mask, peak_window)
    ia, xa, ha = peak_location(x, approx.eph_kin, approx.mask, peak_window)
    return CurveComparison(
        n_common=int(common.sum()),
        max_abs_diff=float(np.max(np.abs(diff))),
        rms_diff=float(np.sqrt(np.mean(diff**2))),
        mean_diff=float(np.mean(diff)),
        step_exact=plateau_step(x, exact.eph, exact.mask),
        step_approx=plateau_step(x, approx.eph, approx.mask),
        peak_x_exact=xe,
        peak_x_approx=xa,
        peak_height_exact=he,
        peak_height_approx=ha,
        peak_offset_nodes=abs(ie - ia) if ie >= 0 and ia >= 0 else -1,
        curvature_left_exact=well_curvature(x, exact.total, exact.mask, LEFT),
        curvature_left_approx=well_curvature(x, approx.total, approx.mask, LEFT),
    )
