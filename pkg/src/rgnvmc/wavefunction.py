"""Translation-invariant RBM wavefunction.

The log-amplitude of a spin configuration is

    log psi(sigma) = sum_i sum_T log cosh( sum_j w_ij (T sigma)_j + b_i )

with ``i`` running over ``alpha`` hidden channels and ``T`` over the lattice
translations.  Configurations are mapped to their "mostly negative"
representative before every evaluation, which makes ``psi(sigma) == psi(-sigma)``.

All evaluation functions accept either one configuration of shape ``(n,)``
or a batch of shape ``(B, n)`` and return matching scalar or batched output.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import ConfigError, ShapeError
from .lattice import LatticeSpec

LOG2 = np.log(2.0)


@dataclass
class RbmParams:
    """Weights ``(alpha, n)`` and biases ``(alpha,)``, both complex.

    The flat parameter vector lists the weights row-major, then the biases.
    """

    weights: np.ndarray
    biases: np.ndarray

    def __post_init__(self):
        self.weights = np.array(self.weights, dtype=complex, ndmin=2)
        self.biases = np.array(self.biases, dtype=complex, ndmin=1)
        if self.weights.ndim != 2 or self.biases.shape != (self.weights.shape[0],):
            raise ShapeError(f"weights {self.weights.shape} and biases {self.biases.shape} are inconsistent")

    @property
    def alpha(self) -> int:
        return self.weights.shape[0]

    @property
    def n(self) -> int:
        return self.weights.shape[1]

    @property
    def size(self) -> int:
        return self.alpha * (self.n + 1)

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.weights.ravel(), self.biases])

    @classmethod
    def from_vector(cls, vector, alpha: int, n: int) -> "RbmParams":
        vector = np.asarray(vector, dtype=complex)
        if vector.shape != (alpha * (n + 1),):
            raise ShapeError(f"expected {alpha * (n + 1)} parameters, got {vector.shape}")
        return cls(vector[: alpha * n].reshape(alpha, n).copy(), vector[alpha * n:].copy())

    @classmethod
    def zeros(cls, alpha: int, n: int) -> "RbmParams":
        return cls(np.zeros((alpha, n), complex), np.zeros(alpha, complex))

    def update(self, delta) -> "RbmParams":
        """Return new parameters shifted by the flat vector ``delta``."""
        return RbmParams.from_vector(self.to_vector() + delta, self.alpha, self.n)

    def copy(self) -> "RbmParams":
        return RbmParams(self.weights.copy(), self.biases.copy())

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.biases)))


def init_params(alpha: int = 5, n: int | None = None, scale: float = 1e-3, seed: int = 123) -> RbmParams:
    """Draw i.i.d. complex Gaussian parameters with complex variance ``scale``.

    Real and imaginary parts are independent with variance ``scale / 2`` each.
    """
    if n is None or int(n) <= 0 or int(alpha) <= 0:
        raise ConfigError(f"alpha and n must be positive, got alpha={alpha}, n={n}")
    if not scale > 0:
        raise ConfigError(f"scale must be positive, got {scale}")
    rng = np.random.default_rng(seed)
    size = int(alpha) * (int(n) + 1)
    parts = rng.normal(0.0, np.sqrt(scale / 2.0), size=(size, 2))
    return RbmParams.from_vector(parts[:, 0] + 1j * parts[:, 1], int(alpha), int(n))


def logcosh(z):
    """Overflow-free ``log(cosh(z))`` for complex ``z``.

    With ``s = sign(Re z)`` (``s = 1`` at ``Re z = 0``) this evaluates
    ``s*z + log1p(exp(-2*s*z)) - log 2``.  ``|exp(-2*s*z)| <= 1``, so nothing
    overflows.  The imaginary part is ``s*Im z + arg(1 + exp(-2*s*z))`` with
    the second term in ``[-pi/2, pi/2]``; it is not wrapped into ``(-pi, pi]``
    and agrees with the principal ``log(cosh(z))`` only modulo ``2*pi``.
    A zero of ``cosh`` gives ``-inf`` real part.
    """
    z = np.asarray(z, dtype=complex)
    s = np.where(z.real < 0, -1.0, 1.0)
    zs = s * z
    with np.errstate(divide="ignore", invalid="ignore"):
        return zs + np.log1p(np.exp(-2.0 * zs)) - LOG2


def canonical_sign(config) -> np.ndarray:
    """+1 where ``config`` is already mostly negative, -1 where it must be flipped."""
    config = np.asarray(config)
    crit = 2 * config.sum(axis=-1) + config[..., 0]
    return np.where(crit < 0, 1, -1).astype(config.dtype if config.dtype.kind in "if" else np.int8)


def canonicalize(config) -> np.ndarray:
    """Map ``sigma`` to ``-sigma`` unless ``2*sum(sigma) + sigma[0] < 0``."""
    config = np.asarray(config)
    return config * canonical_sign(config)[..., None]


def _as_batch(params: RbmParams, lattice: LatticeSpec, config):
    config = np.asarray(config)
    single = config.ndim == 1
    batch = np.atleast_2d(config)
    if batch.ndim != 2 or batch.shape[1] != lattice.n:
        raise ShapeError(f"configuration shape {config.shape} does not match n={lattice.n}")
    if params.n != lattice.n:
        raise ShapeError(f"parameters are for n={params.n}, lattice has n={lattice.n}")
    return canonicalize(batch).astype(np.float64), single


def _translated(lattice, configs):
    # (B, T, n): row t is T_t sigma
    return configs[:, lattice.translations]


def _correlate_fft(lattice, kernel, configs):
    """``out[b, i, a] = sum_x kernel[b?, i, x] * configs[b, x + a]`` on the periodic grid."""
    dims = lattice.dims
    axes = tuple(range(-len(dims), 0))
    sig = np.fft.fftn(configs.reshape((configs.shape[0], 1) + dims), axes=axes)
    ker = kernel.reshape(kernel.shape[:-1] + dims)
    ker_hat = np.conj(np.fft.fftn(np.conj(ker), axes=axes))
    out = np.fft.ifftn(ker_hat * sig, axes=axes)
    return out.reshape(out.shape[: -len(dims)] + (lattice.n,))


def _theta(params, lattice, configs, method):
    """Hidden-unit angles of shape ``(B, alpha, T)``."""
    if method == "direct":
        tr = _translated(lattice, configs)
        theta = tr @ params.weights.real.T + 1j * (tr @ params.weights.imag.T)
        return np.swapaxes(theta, 1, 2) + params.biases[None, :, None], tr
    if method == "fft":
        return _correlate_fft(lattice, params.weights[None], configs) + params.biases[None, :, None], None
    raise ConfigError(f"unknown evaluation method {method!r}")


def log_psi(params: RbmParams, lattice: LatticeSpec, config, method: str = "direct"):
    """Complex log-amplitude.  ``method`` is ``"direct"`` or ``"fft"``."""
    configs, single = _as_batch(params, lattice, config)
    theta, _ = _theta(params, lattice, configs, method)
    out = logcosh(theta).sum(axis=(1, 2))
    return out[0] if single else out


def log_psi_and_derivatives(params: RbmParams, lattice: LatticeSpec, config, method: str = "direct"):
    """Return ``(log_psi, nu)`` where ``nu`` has shape ``(B, alpha*(n+1))``."""
    configs, single = _as_batch(params, lattice, config)
    theta, tr = _theta(params, lattice, configs, method)
    lp = logcosh(theta).sum(axis=(1, 2))
    tanh = np.tanh(theta)
    if method == "direct":
        dw = tanh @ tr
    else:
        dw = _correlate_fft(lattice, tanh, configs)
    nu = np.concatenate([dw.reshape(len(configs), -1), tanh.sum(axis=2)], axis=1)
    if single:
        return lp[0], nu[0]
    return lp, nu


def log_derivatives(params: RbmParams, lattice: LatticeSpec, config, method: str = "direct"):
    """Holomorphic logarithmic derivatives ``d psi / d theta_k / psi``."""
    return log_psi_and_derivatives(params, lattice, config, method)[1]


def log_second_derivatives(params: RbmParams, lattice: LatticeSpec, config):
    """Matrix of ``d^2 log psi / d theta_k d theta_l``, shape ``(B, p, p)`` or ``(p, p)``.

    Channels are additive in ``log psi`` so only same-channel blocks are
    nonzero.  Memory grows as ``B * p**2``; intended for small lattices.
    """
    configs, single = _as_batch(params, lattice, config)
    theta, tr = _theta(params, lattice, configs, "direct")
    alpha, n = params.alpha, params.n
    sech2 = 1.0 - np.tanh(theta) ** 2
    feats = np.concatenate([tr, np.ones(tr.shape[:2] + (1,))], axis=2)  # (B, T, n+1)
    blocks = np.einsum("bit,btk,btl->bikl", sech2, feats, feats, optimize=True)
    out = np.zeros((len(configs), params.size, params.size), dtype=complex)
    for i in range(alpha):
        idx = np.r_[i * n: (i + 1) * n, alpha * n + i]
        out[:, idx[:, None], idx[None, :]] = blocks[:, i]
    return out[0] if single else out


def save_params(path, params: RbmParams) -> None:
    """Write a text checkpoint: header ``alpha n`` then one ``re im`` pair per line.

    ``repr`` of a Python float round-trips exactly, so the format is lossless.
    """
    lines = [f"{params.alpha} {params.n}"]
    lines += [f"{float(z.real)!r} {float(z.imag)!r}" for z in params.to_vector()]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_params(path) -> RbmParams:
    text = Path(path).read_text(encoding="utf-8").split("\n")
    try:
        alpha, n = (int(tok) for tok in text[0].split())
        rows = [line.split() for line in text[1:] if line.strip()]
        vec = np.array([complex(float(re), float(im)) for re, im in rows])
    except ValueError as exc:
        raise ConfigError(f"malformed checkpoint {path}: {exc}") from exc
    return RbmParams.from_vector(vec, alpha, n)
