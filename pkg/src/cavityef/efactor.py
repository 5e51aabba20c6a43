"""Exact factorization of electron-photon eigenstates and potential inversion.

A full eigenstate Psi(x, q) is split into a marginal electronic amplitude
phi(x) >= 0 and a conditional photonic amplitude chi(q|x) that is normalized
over q at every x. The electron-photon correlation potential is then read off
from chi; no self-consistent solve is involved.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from math import factorial
from typing import Optional

import numpy as np

from .errors import DegenerateInputError, UsageError
from .model import (
    Grid2D,
    ModelParams,
    adw_potential,
    first_derivative_matrix,
    photon_potential,
    second_derivative_matrix,
)

DEFAULT_EPS_NODE = 1e-8
NORM_TOL = 1e-8
#: |x| range over which a masked node is reported as a partial result
DEFAULT_WARN_WINDOW = 6.0

REAL_POSITIVE_GAUGE = "real-positive-phi"


@dataclass
class FullState:
    """An eigenpair laid out on the grid, normalized as sum|psi|^2 dx dq = 1."""

    energy: float
    psi: np.ndarray

    @classmethod
    def from_pair(cls, pair, g: Grid2D) -> "FullState":
        psi = np.asarray(pair.vector).reshape(g.shape) / np.sqrt(g.dx * g.dq)
        return cls(float(pair.energy), psi)

    def norm(self, g: Grid2D) -> float:
        return float(np.sum(np.abs(self.psi) ** 2) * g.dx * g.dq)


@dataclass
class FactorizedState:
    phi: np.ndarray
    chi: np.ndarray
    mask: np.ndarray
    energy: float
    gauge: str = REAL_POSITIVE_GAUGE
    eps_node: float = DEFAULT_EPS_NODE

    @property
    def density(self) -> np.ndarray:
        return np.abs(self.phi) ** 2

    def reconstruct(self) -> np.ndarray:
        """phi*chi at valid nodes, zero elsewhere."""
        return np.where(self.mask[:, None], self.phi[:, None] * self.chi, 0.0)


@dataclass
class PotentialCurve:
    """Sampled electronic potential and its components; NaN where masked."""

    x: np.ndarray
    bare: np.ndarray
    eph_em: np.ndarray
    eph_kin: np.ndarray
    mask: np.ndarray
    density: Optional[np.ndarray] = None
    warnings: list = field(default_factory=list)

    @property
    def eph(self) -> np.ndarray:
        return self.eph_em + self.eph_kin

    @property
    def total(self) -> np.ndarray:
        return self.bare + self.eph_em + self.eph_kin


# ---------------------------------------------------------------------------
# finite differences restricted to a mask


@lru_cache(maxsize=64)
def _fd_weights(offsets: tuple, order: int) -> np.ndarray:
    """Weights w with sum_j w_j f(x0 + o_j h) ~ h**order f^(order)(x0)."""
    o = np.asarray(offsets, dtype=float)
    n = o.size
    vander = np.array([o**m / factorial(m) for m in range(n)])
    rhs = np.zeros(n)
    rhs[order] = 1.0
    return np.linalg.solve(vander, rhs)


def _runs(mask: np.ndarray):
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        return []
    breaks = np.flatnonzero(np.diff(idx) > 1)
    starts = np.r_[idx[0], idx[breaks + 1]]
    stops = np.r_[idx[breaks], idx[-1]] + 1
    return list(zip(starts, stops))


def masked_stencils(mask: np.ndarray, order: int = 1, width: int = 5):
    """Per valid node: (neighbour indices, weights) for a derivative of ``order``.

    Stencils never cross masked nodes: central 5-point inside a run of valid
    nodes, one-sided near its ends, and lower order for runs shorter than 5.
    Weights are for unit spacing.
    """
    stencils = {}
    for start, stop in _runs(np.asarray(mask, dtype=bool)):
        length = stop - start
        w = min(width, length)
        for i in range(start, stop):
            if w <= order:
                stencils[i] = (np.array([i]), np.zeros(1))
                continue
            lo = min(max(i - w // 2, start), stop - w)
            idx = np.arange(lo, lo + w)
            stencils[i] = (idx, _fd_weights(tuple(idx - i), order))
    return stencils


def masked_derivative(f: np.ndarray, mask: np.ndarray, h: float, order: int = 1) -> np.ndarray:
    """Derivative along axis 0 using only nodes where ``mask`` holds; NaN elsewhere."""
    f = np.asarray(f)
    out = np.full(f.shape, np.nan, dtype=np.result_type(f, float))
    for i, (idx, w) in masked_stencils(mask, order).items():
        out[i] = np.tensordot(w, f[idx], axes=(0, 0)) / h**order
    return out


# ---------------------------------------------------------------------------


def factorize(
    psi: FullState, g: Grid2D, eps_node: float = DEFAULT_EPS_NODE
) -> FactorizedState:
    """Split ``psi`` into marginal phi(x) >= 0 and conditional chi(q|x).

    Nodes with |phi|^2 below ``eps_node`` times its maximum are masked; chi is
    zero there.
    """
    norm = psi.norm(g)
    if abs(norm - 1.0) > NORM_TOL:
        raise UsageError(f"state is not normalized on the grid (norm = {norm:.12g})")
    density = np.sum(np.abs(psi.psi) ** 2, axis=1) * g.dq
    peak = density.max()
    if not peak > 0:
        raise DegenerateInputError("state has zero density everywhere")
    mask = density >= eps_node * peak
    phi = np.sqrt(density)
    chi = np.zeros_like(psi.psi)
    chi[mask] = psi.psi[mask] / phi[mask, None]
    return FactorizedState(phi, chi, mask, psi.energy, REAL_POSITIVE_GAUGE, eps_node)


def gauge_transform(f: FactorizedState, theta: np.ndarray) -> FactorizedState:
    """chi -> exp(i theta) chi, phi -> exp(-i theta) phi."""
    phase = np.exp(1j * np.asarray(theta, dtype=float))
    return FactorizedState(
        f.phi * np.conj(phase),
        f.chi * phase[:, None],
        f.mask.copy(),
        f.energy,
        gauge="custom",
        eps_node=f.eps_node,
    )


def stencil_interior(mask: np.ndarray, half_width: int = 2) -> np.ndarray:
    """Valid nodes whose full central stencil lies on valid nodes."""
    mask = np.asarray(mask, dtype=bool)
    out = mask.copy()
    for k in range(1, half_width + 1):
        out[k:] &= mask[:-k]
        out[:-k] &= mask[k:]
        out[:k] = False
        out[-k:] = False
    return out


def pnc_error(f: FactorizedState, g: Grid2D) -> float:
    """max over valid x of |int |chi|^2 dq - 1|."""
    norms = np.sum(np.abs(f.chi[f.mask]) ** 2, axis=1) * g.dq
    return float(np.max(np.abs(norms - 1.0)))


def _x_derivative_of_chi(f: FactorizedState, g: Grid2D) -> np.ndarray:
    """d chi / dx at valid nodes.

    For complex chi each neighbour is parallel-transported into the phase of
    the node being differentiated, which makes the result covariant under
    x-dependent gauge changes. For real chi this is plain differencing.
    """
    chi = f.chi
    if not np.iscomplexobj(chi):
        return masked_derivative(chi, f.mask, g.dx)
    out = np.full(chi.shape, np.nan, dtype=complex)
    for i, (idx, w) in masked_stencils(f.mask, 1).items():
        overlaps = chi[idx].conj() @ chi[i]
        phases = np.where(np.abs(overlaps) > 0, overlaps / np.abs(overlaps), 1.0)
        out[i] = np.tensordot(w * phases, chi[idx], axes=(0, 0)) / g.dx
    return out


def vector_potential(f: FactorizedState, g: Grid2D) -> np.ndarray:
    """S(x) = <chi_x| -i d/dx chi_x>_q from plain finite differences; NaN where masked."""
    dchi = masked_derivative(f.chi, f.mask, g.dx)
    s = np.full(g.nx, np.nan)
    m = f.mask
    s[m] = np.imag(np.sum(np.conj(f.chi[m]) * dchi[m], axis=1)) * g.dq
    return s


def eph_potential_exact(
    f: FactorizedState,
    g: Grid2D,
    p: ModelParams,
    warn_window: float = DEFAULT_WARN_WINDOW,
) -> PotentialCurve:
    """Exact e-ph correlation potential by inversion, split into its two terms.

    ``eph_em`` is <chi|H_EM|chi>_q with the q kinetic energy in the
    integrated-by-parts form; ``eph_kin`` is (1/2m)(<d_x chi|d_x chi> - S^2).
    """
    m = f.mask
    xx, qq = g.mesh()
    dq_mat = first_derivative_matrix(g.nq, g.dq)
    chi = f.chi
    dchi_q = (dq_mat @ chi.T).T
    em_density = 0.5 * np.abs(dchi_q) ** 2 + photon_potential(qq, xx, p) * np.abs(chi) ** 2
    eph_em = np.full(g.nx, np.nan)
    eph_em[m] = np.sum(em_density[m], axis=1) * g.dq

    dchi_x = _x_derivative_of_chi(f, g)
    eph_kin = np.full(g.nx, np.nan)
    grad2 = np.sum(np.abs(dchi_x[m]) ** 2, axis=1) * g.dq
    s = np.imag(np.sum(np.conj(chi[m]) * dchi_x[m], axis=1)) * g.dq
    eph_kin[m] = (grad2 - s**2) / (2.0 * p.mass)

    bare = adw_potential(g.x_nodes, p)
    warnings = []
    window = np.abs(g.x_nodes) <= warn_window
    n_masked = int(np.count_nonzero(window & ~m))
    if n_masked:
        warnings.append(f"{n_masked} masked nodes within |x| <= {warn_window}")
    return PotentialCurve(
        g.x_nodes.copy(), bare, eph_em, eph_kin, m.copy(), np.abs(f.phi) ** 2, warnings
    )


def inversion_residual(
    f: FactorizedState, curve: PotentialCurve, energy: float, g: Grid2D, p: ModelParams
) -> float:
    """max over valid x of |(-1/2m d^2/dx^2 + V_total - E) phi| / max|phi|."""
    if np.iscomplexobj(f.phi):
        raise UsageError("inversion residual is defined for the real-positive gauge only")
    d2 = second_derivative_matrix(g.nx, g.dx)
    phi = f.phi
    lhs = -0.5 / p.mass * (d2 @ phi) + (curve.total - energy) * phi
    valid = stencil_interior(f.mask & curve.mask)
    if not valid.any():
        raise DegenerateInputError("no valid node has a complete second-derivative stencil")
    return float(np.max(np.abs(lhs[valid])) / np.max(np.abs(phi)))
