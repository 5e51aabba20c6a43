"""Electron-photon eigenstates of a cavity-coupled double well and their
exact-factorization potentials, with an analytical orbital/oscillator model
for comparison."""

__version__ = "0.1.0"

from .efactor import (  # noqa: E402
    FactorizedState,
    FullState,
    PotentialCurve,
    eph_potential_exact,
    factorize,
    inversion_residual,
    vector_potential,
)
from .eigensolver import SpectrumResult, orthonormality_check, solve_lowest  # noqa: E402
from .errors import (  # noqa: E402
    BracketingError,
    CavityEFError,
    ConfigurationError,
    DegenerateInputError,
    EmptyReportError,
    NumericError,
    SolverError,
    UsageError,
)
from .model import (  # noqa: E402
    Grid2D,
    ModelParams,
    adw_potential,
    assemble_coupled_hamiltonian,
    assemble_electron_hamiltonian,
    make_grid,
    photon_potential,
)
from .resonance import ResonanceResult, delocalization_metric, find_resonance  # noqa: E402
