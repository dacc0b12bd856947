"""Variational Monte Carlo for transverse-field Ising and XXZ lattices.

An RBM wavefunction is optimised by gradient descent, natural gradient
descent or Rayleigh-Gauss-Newton updates, with estimators formed either by
Metropolis sampling (optionally parallel-tempered) or by exact summation.
"""

from .config import RunConfig
from .exceptions import VMCError
from .hamiltonian import HamiltonianSpec, tfi, xxz
from .lattice import LatticeSpec, build_lattice
from .optimizers import PenaltySchedule, PreconditionerKind, SamplingConfig, optimize
from .vmc import VMCGroundState
from .wavefunction import RbmParams, init_params

__all__ = [
    "HamiltonianSpec", "LatticeSpec", "PenaltySchedule", "PreconditionerKind", "RbmParams", "RunConfig",
    "SamplingConfig", "VMCError", "VMCGroundState", "build_lattice", "init_params", "optimize", "tfi", "xxz",
]

__version__ = "0.1.0"
