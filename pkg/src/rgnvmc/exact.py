"""Brute-force reference computations over the full ``2**n`` basis."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from .exceptions import ConvergenceError, NotPositiveDefiniteError, SizeError
from .hamiltonian import HamiltonianSpec, all_configs, config_index, connection_arrays
from .wavefunction import RbmParams, log_psi, log_psi_and_derivatives, log_second_derivatives

MAX_SITES = 16
DENSE_MAX_SITES = 12
BLOCKS_MAX_SITES = 10
# full eigh below this size, Lanczos above
_EIGH_MAX_SITES = 10


@dataclass
class DenseSpectrum:
    ground_energy: float
    ground_vector: np.ndarray
    residual: float


@dataclass
class WirtingerBlocks:
    """Exact gradient and Hessian blocks at one parameter point.

    ``psi2_norm[i, j]`` is ``||psi_ij|| / ||psi||`` for the intermediate
    normalised second derivative and ``residual_norm`` is
    ``min_lambda ||(H - lambda) psi|| / ||psi||``.
    """

    energy: float
    g: np.ndarray
    S: np.ndarray
    H: np.ndarray
    J: np.ndarray
    psi2_norm: np.ndarray = None
    residual_norm: float = None


def _cap(n, cap):
    if n > cap:
        raise SizeError(f"n={n} exceeds the brute-force cap of {cap} sites")


def sparse_hamiltonian(ham: HamiltonianSpec) -> scipy.sparse.csr_matrix:
    """Hamiltonian in the z basis as a CSR matrix, assembled from the connections."""
    n = ham.n
    _cap(n, MAX_SITES)
    configs = all_configs(n)
    N = len(configs)
    diag, conn, elem = connection_arrays(ham, configs)
    cols = np.repeat(np.arange(N), conn.shape[1])
    rows = config_index(conn).ravel()
    vals = elem.ravel()
    keep = vals != 0
    off = scipy.sparse.csr_matrix((vals[keep], (rows[keep], cols[keep])), shape=(N, N))
    return (off + scipy.sparse.diags(diag)).tocsr()


def dense_hamiltonian(ham: HamiltonianSpec):
    """Full matrix for ``n <= 12``; a sparse matrix for ``12 < n <= 16``."""
    H = sparse_hamiltonian(ham)
    return H.toarray() if ham.n <= DENSE_MAX_SITES else H


def _canonical_sign(v):
    nz = np.flatnonzero(np.abs(v) > 1e-12 * np.abs(v).max())
    return v if v[nz[0]] > 0 else -v


def ground_state(ham: HamiltonianSpec, tol: float = 1e-8) -> DenseSpectrum:
    """Lowest eigenpair; dense ``eigh`` up to 10 sites, Lanczos beyond."""
    H = sparse_hamiltonian(ham)
    if ham.n <= _EIGH_MAX_SITES:
        w, V = np.linalg.eigh(H.toarray())
        lam, v = w[0], V[:, 0]
    else:
        v0 = np.ones(H.shape[0]) / np.sqrt(H.shape[0])
        try:
            w, V = scipy.sparse.linalg.eigsh(H, k=1, which="SA", v0=v0, tol=1e-12, maxiter=20000)
        except scipy.sparse.linalg.ArpackNoConvergence as exc:
            raise ConvergenceError(f"Lanczos did not converge: {exc}") from exc
        lam, v = w[0], V[:, 0]
    v = np.real(v) / np.linalg.norm(v)
    norm = scipy.sparse.linalg.norm(H, 1)
    residual = float(np.linalg.norm(H @ v - lam * v))
    if residual > tol * max(norm, 1.0):
        raise ConvergenceError(f"eigenpair residual {residual:.3e} above tolerance", residual=residual)
    return DenseSpectrum(float(lam), _canonical_sign(v), residual)


def tfi_chain_reference_energy(L: int, h: float) -> float:
    """Ground energy of the periodic chain ``-sum Z_i Z_{i+1} - h sum X_i``.

    Free-fermion result ``-sum_k sqrt(1 + h^2 - 2 h cos k)`` over the
    antiperiodic momenta ``k = (2m + 1) pi / L``.  For ``L = 2`` the lattice
    carries a single bond, and the two-site energy is ``-sqrt(1 + 4 h^2)``.
    """
    L = int(L)
    h = float(h)
    if L < 2 or h < 0:
        raise ValueError(f"need L >= 2 and h >= 0, got L={L}, h={h}")
    if L == 2:
        return -float(np.sqrt(1.0 + 4.0 * h * h))
    k = (2 * np.arange(L) + 1) * np.pi / L
    return -float(np.sum(np.sqrt(1.0 + h * h - 2.0 * h * np.cos(k))))


def psi_vector(ham: HamiltonianSpec, params: RbmParams) -> np.ndarray:
    """Wavefunction over the basis, scaled so the largest amplitude is 1."""
    _cap(ham.n, MAX_SITES)
    lp = log_psi(params, ham.lattice, all_configs(ham.n))
    return np.exp(lp - lp.real.max())


def exact_energy(ham: HamiltonianSpec, params: RbmParams, H=None) -> float:
    """Rayleigh quotient ``<psi, H psi> / <psi, psi>``."""
    psi = psi_vector(ham, params)
    H = sparse_hamiltonian(ham) if H is None else H
    return float(np.vdot(psi, H @ psi).real / np.vdot(psi, psi).real)


def exact_wirtinger_blocks(ham: HamiltonianSpec, params: RbmParams, H=None, second_order: bool = True) -> WirtingerBlocks:
    """``g``, ``S``, ``H``, ``J`` from exact inner products.

    First derivatives of the intermediate-normalised wavefunction are
    ``(nu_i - E nu_i) psi``; second derivatives are assembled from
    ``nu_i nu_j + d^2 log psi`` plus the normalisation terms.  The Hamiltonian
    is applied as a sparse matrix, independent of the local-energy route.
    """
    n = ham.n
    _cap(n, BLOCKS_MAX_SITES)
    configs = all_configs(n)
    Hs = sparse_hamiltonian(ham) if H is None else H
    lp, nu = log_psi_and_derivatives(params, ham.lattice, configs)
    psi = np.exp(lp - lp.real.max())
    Z = np.vdot(psi, psi).real
    rho = np.abs(psi) ** 2 / Z
    Hpsi = Hs @ psi
    E = np.vdot(psi, Hpsi).real / Z
    m = rho @ nu
    psi_i = (nu - m) * psi[:, None]
    r = Hpsi - E * psi
    g = psi_i.conj().T @ r / Z
    S = psi_i.conj().T @ psi_i / Z
    Hmat = psi_i.conj().T @ (Hs @ psi_i - E * psi_i) / Z
    blocks = WirtingerBlocks(energy=float(E), g=g, S=0.5 * (S + S.conj().T), H=Hmat, J=None)
    if not second_order:
        return blocks

    D = log_second_derivatives(params, ham.lattice, configs)
    Q = nu[:, :, None] * nu[:, None, :] + D
    Q -= m[None, :, None] * nu[:, None, :]
    Q -= nu[:, :, None] * m[None, None, :]
    m2 = np.einsum("b,bij->ij", rho, nu[:, :, None] * nu[:, None, :] + D)
    Q += (2.0 * np.outer(m, m) - m2)[None]
    # <psi_ij, (H - E) psi> / Z with psi_ij = Q_ij psi
    J = np.einsum("b,bij->ij", np.conj(psi) * r / Z, np.conj(Q))
    blocks.J = J
    blocks.psi2_norm = np.sqrt(np.einsum("b,bij->ij", rho, np.abs(Q) ** 2))
    blocks.residual_norm = float(np.sqrt(np.vdot(r, r).real / Z))
    return blocks


def wirtinger_hessian(blocks: WirtingerBlocks) -> np.ndarray:
    H, J = blocks.H, blocks.J
    return np.block([[H, J], [np.conj(J), np.conj(H)]])


def hessian_j_ratio(blocks: WirtingerBlocks) -> float:
    """Frobenius ratio ``|(0 J; J* 0)| / |(H J; J* H*)|``."""
    j = np.linalg.norm(blocks.J)
    h = np.linalg.norm(blocks.H)
    return float(j / np.sqrt(h * h + j * j))


def rate_bound(P, blocks: WirtingerBlocks, rtol: float = 1e-12) -> float:
    """``|| I - M^(1/2) diag(P, conj P)^(-1) M^(1/2) ||_2^2`` with ``M`` the Wirtinger Hessian."""
    M = wirtinger_hessian(blocks)
    M = 0.5 * (M + M.conj().T)
    w, V = np.linalg.eigh(M)
    if w[0] <= rtol * max(abs(w[-1]), 1e-300):
        raise NotPositiveDefiniteError(f"Wirtinger Hessian is not positive definite (min eigenvalue {w[0]:.3e})")
    root = (V * np.sqrt(w)) @ V.conj().T
    P = np.asarray(P)
    Pt = scipy.linalg.block_diag(P, np.conj(P))
    K = np.eye(len(M)) - root @ np.linalg.solve(Pt, root)
    return float(np.linalg.norm(K, 2) ** 2)
