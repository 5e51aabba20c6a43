"""Model parameters, grids and the discrete Hamiltonians.

Everything is in Hartree atomic units. The electron lives on a uniform x grid,
the cavity mode on a uniform q grid; the coupled problem is the tensor product
with x as the slow (row) index, so a state vector reshapes to ``(nx, nq)``.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator

from .errors import ConfigurationError

#: 4th-order central stencils, offsets -2..2.
SECOND_DERIVATIVE_STENCIL = np.array([-1.0 / 12, 4.0 / 3, -5.0 / 2, 4.0 / 3, -1.0 / 12])
FIRST_DERIVATIVE_STENCIL = np.array([1.0 / 12, -2.0 / 3, 0.0, 2.0 / 3, -1.0 / 12])
STENCIL_WIDTH = 5

DEFAULT_X_MAX = 8.0
DEFAULT_NX = 161
DEFAULT_NQ = 101
DEFAULT_MAX_DIMENSION = 4_000_000


@dataclass(frozen=True)
class ModelParams:
    """Physical constants of the double-well + single-mode cavity model.

    Defaults reproduce the published model (omega_e=1.6, a=2.35, E=0.08, m=1)
    with the weakest coupling of the reference table.
    """

    omega_e: float = 1.6
    a: float = 2.35
    efield: float = 0.08
    lambda_c: float = 0.1
    omega_c: float = 0.37676260
    mass: float = 1.0

    def __post_init__(self):
        for name in ("omega_e", "a", "efield", "lambda_c", "omega_c", "mass"):
            value = getattr(self, name)
            if not np.isfinite(value):
                raise ConfigurationError(f"{name} must be finite, got {value!r}")
        if self.omega_e <= 0:
            raise ConfigurationError(f"omega_e must be > 0, got {self.omega_e}")
        if self.a <= 0:
            raise ConfigurationError(f"a must be > 0, got {self.a}")
        if self.omega_c <= 0:
            raise ConfigurationError(f"omega_c must be > 0, got {self.omega_c}")
        if self.mass <= 0:
            raise ConfigurationError(f"mass must be > 0, got {self.mass}")
        if self.lambda_c < 0:
            raise ConfigurationError(f"lambda_c must be >= 0, got {self.lambda_c}")

    @property
    def delta(self) -> float:
        """Half the static-field asymmetry, E*a."""
        return self.efield * self.a

    @property
    def displacement(self) -> float:
        """Photon-coordinate shift per unit electron coordinate, lambda_c/omega_c."""
        return self.lambda_c / self.omega_c

    def replace(self, **changes) -> "ModelParams":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class Grid2D:
    """Uniform tensor-product grid over electron (x) and photon (q) coordinates."""

    x_nodes: np.ndarray
    q_nodes: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x_nodes, dtype=float)
        q = np.asarray(self.q_nodes, dtype=float)
        object.__setattr__(self, "x_nodes", x)
        object.__setattr__(self, "q_nodes", q)
        for name, nodes in (("x", x), ("q", q)):
            if nodes.ndim != 1 or nodes.size < STENCIL_WIDTH:
                raise ConfigurationError(
                    f"{name} axis needs at least {STENCIL_WIDTH} nodes, got {nodes.size}"
                )
            steps = np.diff(nodes)
            h = (nodes[-1] - nodes[0]) / (nodes.size - 1)
            if h <= 0:
                raise ConfigurationError(f"{name} nodes must be increasing")
            if np.max(np.abs(steps - h)) > 1e-12 * h:
                raise ConfigurationError(f"{name} axis is not uniform")

    @property
    def nx(self) -> int:
        return self.x_nodes.size

    @property
    def nq(self) -> int:
        return self.q_nodes.size

    @property
    def dx(self) -> float:
        return (self.x_nodes[-1] - self.x_nodes[0]) / (self.nx - 1)

    @property
    def dq(self) -> float:
        return (self.q_nodes[-1] - self.q_nodes[0]) / (self.nq - 1)

    @property
    def shape(self) -> tuple:
        return (self.nx, self.nq)

    @property
    def size(self) -> int:
        return self.nx * self.nq

    def mesh(self):
        return np.meshgrid(self.x_nodes, self.q_nodes, indexing="ij")

    def refined(self) -> "Grid2D":
        """Same box, spacings halved on both axes."""
        return Grid2D(
            np.linspace(self.x_nodes[0], self.x_nodes[-1], 2 * self.nx - 1),
            np.linspace(self.q_nodes[0], self.q_nodes[-1], 2 * self.nq - 1),
        )


def default_q_max(p: ModelParams) -> float:
    # both displaced-oscillator centres plus 8 oscillator lengths
    return p.lambda_c * p.a / p.omega_c + 8.0 / np.sqrt(p.omega_c)


def make_grid(
    p: ModelParams,
    nx: int = DEFAULT_NX,
    nq: int = DEFAULT_NQ,
    x_max: float = DEFAULT_X_MAX,
    q_max: Optional[float] = None,
) -> Grid2D:
    if q_max is None:
        q_max = default_q_max(p)
    if x_max <= 0 or q_max <= 0:
        raise ConfigurationError("box half-widths must be positive")
    return Grid2D(np.linspace(-x_max, x_max, int(nx)), np.linspace(-q_max, q_max, int(nq)))


def adw_potential(x, p: ModelParams):
    """Asymmetric double well, 0.5*omega_e**2*(|x|-a)**2 + E*x."""
    x = np.asarray(x, dtype=float)
    return 0.5 * p.omega_e**2 * (np.abs(x) - p.a) ** 2 + p.efield * x


def photon_potential(q, x, p: ModelParams):
    """Length-gauge mode potential 0.5*omega_c**2*(q - lambda_c*x/omega_c)**2."""
    q = np.asarray(q, dtype=float)
    x = np.asarray(x, dtype=float)
    return 0.5 * p.omega_c**2 * (q - p.displacement * x) ** 2


def _banded(n: int, h: float, stencil: np.ndarray) -> sp.csr_matrix:
    if n < STENCIL_WIDTH:
        raise ConfigurationError(f"need at least {STENCIL_WIDTH} nodes, got {n}")
    offsets = np.arange(-2, 3)
    diagonals = [np.full(n - abs(k), c) for k, c in zip(offsets, stencil)]
    return sp.diags(diagonals, offsets, shape=(n, n), format="csr") / h


def second_derivative_matrix(n: int, h: float) -> sp.csr_matrix:
    """4th-order d^2/dx^2 with zero (Dirichlet) values outside the grid."""
    return _banded(n, h * h, SECOND_DERIVATIVE_STENCIL)


def first_derivative_matrix(n: int, h: float) -> sp.csr_matrix:
    """4th-order d/dx with zero values outside the grid (antisymmetric)."""
    return _banded(n, h, FIRST_DERIVATIVE_STENCIL)


def kinetic_matrix(n: int, h: float, mass: float = 1.0) -> sp.csr_matrix:
    return (-0.5 / mass) * second_derivative_matrix(n, h)


@dataclass(frozen=True)
class SymmetricOperator:
    """Real symmetric operator given by a stored sparse matrix and/or a matvec.

    ``position`` (optional) is the electron coordinate of every vector entry and
    is used by the eigensolver to orient near-degenerate eigenvectors.
    ``lower_bound`` (optional) is a known bound below the spectrum.
    """

    dimension: int
    matrix: Optional[sp.spmatrix] = None
    matvec: Optional[Callable[[np.ndarray], np.ndarray]] = None
    position: Optional[np.ndarray] = field(default=None, repr=False)
    shape2d: Optional[tuple] = None
    symmetric: bool = True
    lower_bound: Optional[float] = None

    def __post_init__(self):
        if self.matrix is None and self.matvec is None:
            raise ValueError("operator needs a matrix or a matvec")

    def apply(self, v: np.ndarray) -> np.ndarray:
        if self.matrix is not None:
            return self.matrix @ v
        return self.matvec(v)

    __matmul__ = apply

    def apply_matrix_free(self, v: np.ndarray) -> np.ndarray:
        """Application that avoids the stored matrix when an independent matvec exists."""
        if self.matvec is not None:
            return self.matvec(v)
        return self.matrix @ v

    def as_linear_operator(self) -> LinearOperator:
        if self.matrix is not None:
            return self.matrix
        return LinearOperator((self.dimension, self.dimension), matvec=self.matvec, dtype=float)

    def to_dense(self) -> np.ndarray:
        if self.matrix is not None:
            return self.matrix.toarray()
        eye = np.eye(self.dimension)
        return np.column_stack([self.matvec(e) for e in eye])

    def norm_estimate(self) -> float:
        """Cheap upper bound on the spectral norm (max absolute row sum)."""
        if self.matrix is not None:
            return float(abs(self.matrix).sum(axis=1).max())
        rng = np.random.default_rng(0)
        v = rng.standard_normal(self.dimension)
        for _ in range(30):
            v = self.matvec(v)
            v /= np.linalg.norm(v)
        return float(np.linalg.norm(self.matvec(v)))


def assemble_electron_hamiltonian(g: Grid2D, p: ModelParams) -> SymmetricOperator:
    """-1/(2m) d^2/dx^2 + V(x) on the x axis of ``g``."""
    x = g.x_nodes
    v = adw_potential(x, p)
    h = kinetic_matrix(x.size, g.dx, p.mass) + sp.diags(v)
    # the stencil kinetic matrix is positive semidefinite
    return SymmetricOperator(
        x.size, matrix=h.tocsr(), position=x.copy(), shape2d=(x.size,), lower_bound=float(v.min())
    )


def assemble_coupled_hamiltonian(
    g: Grid2D, p: ModelParams, max_dimension: int = DEFAULT_MAX_DIMENSION
) -> SymmetricOperator:
    """Electron + cavity Hamiltonian on the tensor-product grid.

    The stored matrix is assembled with Kronecker products; the operator also
    carries an independent matrix-free matvec built from the two 1D stencils.
    """
    nx, nq = g.shape
    if nx * nq > max_dimension:
        raise ConfigurationError(
            f"dimension {nx * nq} exceeds the configured cap {max_dimension}"
        )
    tx = kinetic_matrix(nx, g.dx, p.mass)
    tq = kinetic_matrix(nq, g.dq, 1.0)
    xx, qq = g.mesh()
    diag = adw_potential(xx, p) + photon_potential(qq, xx, p)
    matrix = (
        sp.kron(tx, sp.identity(nq, format="csr"))
        + sp.kron(sp.identity(nx, format="csr"), tq)
        + sp.diags(diag.ravel())
    ).tocsr()

    def matvec(v):
        grid_v = np.asarray(v).reshape(nx, nq)
        out = tx @ grid_v + (tq @ grid_v.T).T + diag * grid_v
        return out.ravel()

    return SymmetricOperator(
        nx * nq,
        matrix=matrix,
        matvec=matvec,
        position=xx.ravel().copy(),
        shape2d=(nx, nq),
        lower_bound=float(diag.min()),
    )
