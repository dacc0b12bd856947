"""Transverse-field Ising and XXZ Hamiltonians in the z basis.

TFI:  H = -sum_{i~j} Z_i Z_j - h sum_i X_i
XXZ:  H = -Delta sum_{i~j} Z_i Z_j + sum_{i~j} (Y_i Y_j - X_i X_j)

Acting on z-basis states, ``Y_i Y_j - X_i X_j`` maps an aligned pair
``|s s>`` to ``-2 |-s -s>`` and annihilates anti-aligned pairs.  It flips
one spin on each sublattice of a bipartite lattice, so it conserves the
difference of sublattice magnetizations rather than the total.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError, ShapeError, ZeroAmplitudeError
from .lattice import LatticeSpec
from .wavefunction import RbmParams, log_psi, log_psi_and_derivatives

MODELS = ("tfi", "xxz")

# caps the (configs x connections x n x n) working set of one evaluation chunk
_CHUNK_ELEMENTS = 4_000_000


@dataclass(frozen=True)
class HamiltonianSpec:
    model: str
    coupling: float
    lattice: LatticeSpec

    def __post_init__(self):
        if self.model not in MODELS:
            raise ConfigError(f"unknown model {self.model!r}; expected one of {MODELS}")
        if not np.isfinite(self.coupling):
            raise ConfigError(f"coupling must be finite, got {self.coupling}")

    @property
    def n(self) -> int:
        return self.lattice.n

    @property
    def h(self) -> float:
        return float(self.coupling) if self.model == "tfi" else None

    @property
    def delta(self) -> float:
        return float(self.coupling) if self.model == "xxz" else None

    @property
    def max_connections(self) -> int:
        return self.n if self.model == "tfi" else len(self.lattice.bonds)


def tfi(lattice: LatticeSpec, h: float) -> HamiltonianSpec:
    return HamiltonianSpec("tfi", float(h), lattice)


def xxz(lattice: LatticeSpec, delta: float) -> HamiltonianSpec:
    return HamiltonianSpec("xxz", float(delta), lattice)


@dataclass
class Connections:
    """Nonzero matrix elements ``<sigma'|H|sigma>`` of one column."""

    diagonal: float
    configs: np.ndarray
    elements: np.ndarray


def _check(ham, configs):
    configs = np.asarray(configs)
    if configs.shape[-1] != ham.n:
        raise ShapeError(f"configuration length {configs.shape[-1]} != {ham.n}")
    return configs


def diagonal(ham: HamiltonianSpec, configs) -> np.ndarray:
    configs = _check(ham, configs)
    bonds = ham.lattice.bonds
    zz = (configs[..., bonds[:, 0]] * configs[..., bonds[:, 1]]).sum(axis=-1)
    scale = 1.0 if ham.model == "tfi" else float(ham.coupling)
    return -scale * zz.astype(float)


def connection_arrays(ham: HamiltonianSpec, configs):
    """Vectorised connections of a batch.

    Returns ``(diag, conn, elem)`` with shapes ``(B,)``, ``(B, c, n)`` and
    ``(B, c)``.  ``c`` is fixed per model; slots whose element is zero are
    padding and their configuration must be ignored.
    """
    configs = np.atleast_2d(_check(ham, configs))
    diag = diagonal(ham, configs)
    B, n = configs.shape
    if ham.model == "tfi":
        flips = np.ones((n, n), dtype=configs.dtype) - 2 * np.eye(n, dtype=configs.dtype)
        conn = configs[:, None, :] * flips[None]
        elem = np.full((B, n), -float(ham.coupling))
    else:
        bonds = ham.lattice.bonds
        flips = np.ones((len(bonds), n), dtype=configs.dtype)
        flips[np.arange(len(bonds)), bonds[:, 0]] = -1
        flips[np.arange(len(bonds)), bonds[:, 1]] = -1
        conn = configs[:, None, :] * flips[None]
        aligned = configs[:, bonds[:, 0]] == configs[:, bonds[:, 1]]
        elem = np.where(aligned, -2.0, 0.0)
    return diag, conn, elem


def connections(ham: HamiltonianSpec, config) -> Connections:
    config = _check(ham, config)
    if config.ndim != 1:
        raise ShapeError("connections() takes a single configuration")
    diag, conn, elem = connection_arrays(ham, config)
    keep = elem[0] != 0
    return Connections(float(diag[0]), conn[0][keep], elem[0][keep])


def _chunks(total, per_item):
    step = max(1, _CHUNK_ELEMENTS // max(per_item, 1))
    for start in range(0, total, step):
        yield slice(start, min(total, start + step))


def local_quantities(ham: HamiltonianSpec, params: RbmParams, configs, derivatives: bool = True):
    """Evaluate ``log psi``, ``nu``, ``E_loc`` and optionally ``E_loc,i`` on a batch.

    Returns a dict with keys ``log_psi``, ``nu``, ``eloc`` and, when
    ``derivatives`` is true, ``eloc_deriv``.  Amplitude ratios are formed as
    ``exp(log psi' - log psi)``.
    """
    configs = np.atleast_2d(_check(ham, configs))
    lattice = ham.lattice
    B, n = configs.shape
    c = ham.max_connections
    out_lp = np.empty(B, complex)
    out_nu = np.empty((B, params.size), complex)
    out_el = np.empty(B, complex)
    out_eld = np.empty((B, params.size), complex) if derivatives else None

    for sl in _chunks(B, (c + 1) * n * n):
        diag, conn, elem = connection_arrays(ham, configs[sl])
        b = len(diag)
        lp, nu = log_psi_and_derivatives(params, lattice, configs[sl])
        flat = conn.reshape(b * c, n)
        if derivatives:
            lp_c, nu_c = log_psi_and_derivatives(params, lattice, flat)
            nu_c = nu_c.reshape(b, c, -1)
        else:
            lp_c = log_psi(params, lattice, flat)
        with np.errstate(over="ignore", invalid="ignore"):
            ratio = np.exp(lp_c.reshape(b, c) - lp[:, None])
            ratio = np.where(elem != 0, ratio, 0.0)
            weighted = elem * ratio
        out_lp[sl] = lp
        out_nu[sl] = nu
        out_el[sl] = diag + weighted.sum(axis=1)
        if derivatives:
            out_eld[sl] = diag[:, None] * nu + np.einsum("bc,bcp->bp", weighted, nu_c)

    result = {"log_psi": out_lp, "nu": out_nu, "eloc": out_el}
    if derivatives:
        result["eloc_deriv"] = out_eld
    return result


def _single(ham, params, config, derivatives):
    config = _check(ham, config)
    if config.ndim != 1:
        raise ShapeError("expected a single configuration")
    q = local_quantities(ham, params, config[None], derivatives=derivatives)
    if not np.isfinite(q["log_psi"][0].real):
        raise ZeroAmplitudeError(f"psi vanishes at {config.tolist()}")
    return q


def local_energy(ham: HamiltonianSpec, params: RbmParams, config) -> complex:
    """``(H psi)(sigma) / psi(sigma)``."""
    return complex(_single(ham, params, config, False)["eloc"][0])


def local_energy_derivatives(ham: HamiltonianSpec, params: RbmParams, config) -> np.ndarray:
    """``(H d_k psi)(sigma) / psi(sigma)`` for every parameter ``k``."""
    return _single(ham, params, config, True)["eloc_deriv"][0]


def all_configs(n: int) -> np.ndarray:
    """Every configuration of ``n`` spins in basis order, shape ``(2**n, n)``.

    Basis index bit ``n-1-k`` is set when spin ``k`` is down, so index 0 is
    all-up and site 0 is the most significant bit (Kronecker-product order).
    """
    idx = np.arange(2 ** n)[:, None]
    bits = (idx >> np.arange(n - 1, -1, -1)[None, :]) & 1
    return (1 - 2 * bits).astype(np.int8)


def config_index(configs) -> np.ndarray:
    configs = np.asarray(configs)
    n = configs.shape[-1]
    bits = (configs < 0).astype(np.int64)
    return bits @ (1 << np.arange(n - 1, -1, -1, dtype=np.int64))
