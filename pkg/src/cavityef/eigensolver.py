"""Lowest eigenpairs of real symmetric operators.

Three routes: a dense LAPACK diagonalization for small operators (also used as
the brute-force oracle in tests), ARPACK's implicitly restarted Lanczos for the
tensor-product problem at default resolution, and shift-invert Lanczos (sparse
LU) for refined grids where the stencil's spectral range slows plain Lanczos.
All return the same :class:`SpectrumResult`, with eigenvectors brought to a
reproducible orientation.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np
import scipy.linalg
from scipy.sparse.linalg import ArpackError, ArpackNoConvergence, eigsh

from .errors import SolverError, UsageError
from .model import SymmetricOperator

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-9
DEFAULT_K = 6
MAX_RESTARTS = 10_000
DENSE_AUTO_LIMIT = 600
SHIFT_INVERT_AUTO_LIMIT = 40_000


@dataclass
class EigenPair:
    energy: float
    vector: np.ndarray
    residual: float


@dataclass
class SpectrumResult:
    pairs: list
    grid: Any = None
    params: Any = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def energies(self) -> np.ndarray:
        return np.array([p.energy for p in self.pairs])

    @property
    def vectors(self) -> np.ndarray:
        return np.column_stack([p.vector for p in self.pairs])

    def __len__(self):
        return len(self.pairs)

    def __getitem__(self, i) -> EigenPair:
        return self.pairs[i]


def orthonormality_check(res: SpectrumResult) -> float:
    """Largest |<v_i, v_j>| over i != j (0 for a single pair)."""
    if len(res.pairs) < 2:
        return 0.0
    v = res.vectors
    gram = v.T @ v
    np.fill_diagonal(gram, 0.0)
    return float(np.max(np.abs(gram)))


def _orient(energies, vectors, op: SymmetricOperator, cluster_gap: float):
    """Fix signs and, inside near-degenerate clusters, rotate to diagonalize <x>."""
    vectors = vectors.copy()
    energies = energies.copy()
    k = energies.size
    start = 0
    while start < k:
        stop = start + 1
        while stop < k and energies[stop] - energies[stop - 1] < cluster_gap:
            stop += 1
        if stop - start > 1 and op.position is not None:
            block = vectors[:, start:stop]
            xproj = block.T @ (op.position[:, None] * block)
            _, rot = np.linalg.eigh(0.5 * (xproj + xproj.T))
            block = block @ rot
            vectors[:, start:stop] = block
            hb = np.column_stack([op.apply(block[:, j]) for j in range(block.shape[1])])
            energies[start:stop] = np.einsum("ij,ij->j", block, hb)
        start = stop
    for j in range(k):
        v = vectors[:, j]
        i = int(np.argmax(np.abs(v)))
        if v[i] < 0:
            vectors[:, j] = -v
    return energies, vectors


def _residuals(op: SymmetricOperator, energies, vectors) -> np.ndarray:
    # independent application: the matrix-free path when the operator has one
    return np.array(
        [
            np.linalg.norm(op.apply_matrix_free(vectors[:, j]) - energies[j] * vectors[:, j])
            for j in range(energies.size)
        ]
    )


def _dense(op: SymmetricOperator, k: int):
    h = op.to_dense()
    h = 0.5 * (h + h.T)
    w, v = scipy.linalg.eigh(h, subset_by_index=(0, k - 1))
    return w, v, {"method": "dense", "iterations": 1}


def _start_vector(n: int) -> np.ndarray:
    # fixed seed keeps runs reproducible; a random vector (unlike a constant
    # one) overlaps states of either parity in mirror-symmetric problems
    v0 = np.random.default_rng(0).standard_normal(n)
    return v0 / np.linalg.norm(v0)


def _lanczos(op: SymmetricOperator, k: int, tol: float, ncv: Optional[int]):
    n = op.dimension
    v0 = _start_vector(n)
    if ncv is None:
        ncv = min(n, max(2 * k + 1, 40))
    diag = {"method": "lanczos", "ncv": ncv}
    arpack_tol = tol * 1e-3
    for attempt in range(2):
        try:
            w, v = eigsh(
                op.as_linear_operator(),
                k=k,
                which="SA",
                tol=arpack_tol,
                v0=v0,
                ncv=ncv,
                maxiter=MAX_RESTARTS,
            )
        except ArpackNoConvergence as exc:
            diag.update(converged=len(exc.eigenvalues), attempt=attempt)
            raise SolverError(f"Lanczos did not converge: {exc}", diag) from exc
        except ArpackError as exc:
            raise SolverError(f"ARPACK failure: {exc}", diag) from exc
        order = np.argsort(w)
        w, v = w[order], v[:, order]
        res = _residuals(op, w, v)
        diag["iterations"] = attempt + 1
        if np.all(res <= tol):
            break
        # tighten to machine precision once before giving up
        arpack_tol = 0.0
    return w, v, diag


def _shift(op: SymmetricOperator) -> float:
    """A shift strictly below the spectrum: the operator's own bound, else Gershgorin."""
    if op.lower_bound is not None:
        return float(op.lower_bound) - 1.0
    m = op.matrix.tocsr()
    diag = m.diagonal()
    offdiag = np.asarray(abs(m).sum(axis=1)).ravel() - np.abs(diag)
    return float(np.min(diag - offdiag)) - 1.0


def _shift_invert(op: SymmetricOperator, k: int, tol: float, ncv: Optional[int]):
    if op.matrix is None:
        raise UsageError("shift-invert needs a stored matrix")
    n = op.dimension
    sigma = _shift(op)
    if ncv is None:
        ncv = min(n, max(2 * k + 1, 20))
    diag = {"method": "shift-invert", "ncv": ncv, "sigma": sigma}
    try:
        w, v = eigsh(
            op.matrix.tocsc(),
            k=k,
            sigma=sigma,
            which="LM",
            tol=tol * 1e-4,
            v0=_start_vector(n),
            ncv=ncv,
            maxiter=MAX_RESTARTS,
        )
    except ArpackNoConvergence as exc:
        diag.update(converged=len(exc.eigenvalues))
        raise SolverError(f"shift-invert Lanczos did not converge: {exc}", diag) from exc
    except (ArpackError, RuntimeError) as exc:
        raise SolverError(f"shift-invert failure: {exc}", diag) from exc
    order = np.argsort(w)
    diag["iterations"] = 1
    return w[order], v[:, order], diag


def solve_lowest(
    op: SymmetricOperator,
    k: int = DEFAULT_K,
    tol: float = DEFAULT_TOL,
    method: str = "auto",
    ncv: Optional[int] = None,
    grid=None,
    params=None,
) -> SpectrumResult:
    """Lowest ``k`` eigenpairs of ``op`` with residual norm at most ``tol``.

    ``method`` is ``"dense"``, ``"lanczos"``, ``"shift-invert"`` or ``"auto"``
    (dense up to ``DENSE_AUTO_LIMIT``, shift-invert above
    ``SHIFT_INVERT_AUTO_LIMIT`` when a matrix is stored, Lanczos otherwise). Near-degenerate eigenvectors (gap < 10*tol) are
    rotated to diagonalize the electron position and ordered by ``<x>``; every
    vector is signed so its largest-magnitude entry is positive.
    """
    if not (1 <= k <= op.dimension):
        raise UsageError(f"k must lie in [1, {op.dimension}], got {k}")
    if not tol > 0:
        raise UsageError(f"tol must be positive, got {tol}")
    if method == "auto":
        if op.dimension <= DENSE_AUTO_LIMIT:
            method = "dense"
        elif op.dimension > SHIFT_INVERT_AUTO_LIMIT and op.matrix is not None:
            method = "shift-invert"
        else:
            method = "lanczos"
    if method in ("lanczos", "shift-invert") and k >= op.dimension - 1:
        method = "dense"
    if method == "dense":
        w, v, diag = _dense(op, k)
    elif method == "lanczos":
        w, v, diag = _lanczos(op, k, tol, ncv)
    elif method == "shift-invert":
        w, v, diag = _shift_invert(op, k, tol, ncv)
    else:
        raise UsageError(f"unknown method {method!r}")

    w, v = _orient(w, v, op, 10.0 * tol)
    v /= np.linalg.norm(v, axis=0)
    res = _residuals(op, w, v)
    diag.update(tol=tol, k=k, dimension=op.dimension, max_residual=float(res.max()))
    if np.any(res > tol):
        raise SolverError(
            f"residual {res.max():.3e} above tolerance {tol:.1e}", diag
        )
    log.debug("solved %d pairs (%s), max residual %.2e", k, diag["method"], res.max())
    pairs = [EigenPair(float(w[j]), v[:, j].copy(), float(res[j])) for j in range(k)]
    return SpectrumResult(pairs, grid=grid, params=params, diagnostics=diag)
