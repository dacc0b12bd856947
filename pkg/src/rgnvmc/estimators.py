"""Stochastic and exact estimators of energy, gradient, metric and Hessian.

Covariances conjugate their first argument::

    Cov[a, b] = E[conj(a) b] - conj(E[a]) E[b]

so that the gradient estimate is the sample mean of
``conj(nu - E nu) * (E_loc - E)``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import InsufficientSamplesError, MissingFieldError, ShapeError, SizeError
from .hamiltonian import HamiltonianSpec, all_configs, config_index, connection_arrays
from .wavefunction import RbmParams, log_psi_and_derivatives

EXACT_MAX_SITES = 16


@dataclass
class SampleBatch:
    """Per-sample quantities feeding the estimators.

    ``chain_shape = (C, R)`` marks a chain-major MCMC batch of ``C`` chains
    with ``R`` records each; it is used for the batch-means variance.
    ``weights`` are unnormalised probabilities (exact summation); ``None``
    means uniform.
    """

    configs: np.ndarray
    nu: np.ndarray
    eloc: np.ndarray
    eloc_deriv: np.ndarray | None = None
    weights: np.ndarray | None = None
    chain_shape: tuple | None = None

    def __post_init__(self):
        T = len(self.eloc)
        shapes = [len(self.configs), len(self.nu)]
        if self.eloc_deriv is not None:
            shapes.append(len(self.eloc_deriv))
        if self.weights is not None:
            shapes.append(len(self.weights))
        if any(s != T for s in shapes):
            raise ShapeError(f"inconsistent row counts {shapes} vs {T}")
        if self.chain_shape is not None and int(np.prod(self.chain_shape)) != T:
            raise ShapeError(f"chain_shape {self.chain_shape} does not cover {T} rows")

    def __len__(self):
        return len(self.eloc)

    @classmethod
    def concatenate(cls, batches) -> "SampleBatch":
        batches = list(batches)
        derivs = [b.eloc_deriv for b in batches]
        weights = [b.weights for b in batches]
        if any(w is not None for w in weights):
            weights = [np.ones(len(b)) if w is None else w for b, w in zip(batches, weights)]
            weights = np.concatenate(weights)
        else:
            weights = None
        return cls(
            configs=np.concatenate([b.configs for b in batches]),
            nu=np.concatenate([b.nu for b in batches]),
            eloc=np.concatenate([b.eloc for b in batches]),
            eloc_deriv=None if any(d is None for d in derivs) else np.concatenate(derivs),
            weights=weights,
        )


@dataclass
class EstimatorSet:
    energy: complex
    grad: np.ndarray
    metric: np.ndarray
    hess: np.ndarray | None
    energy_variance: float
    sample_count: int
    nu_mean: np.ndarray = field(repr=False, default=None)


def _normalised_weights(batch):
    T = len(batch)
    if batch.weights is None:
        return np.full(T, 1.0 / T)
    w = np.asarray(batch.weights, dtype=float)
    return w / w.sum()


def estimate(batch: SampleBatch, hessian: bool = True) -> EstimatorSet:
    """Estimate ``(E, g, S, H)`` from a batch.

    ``S`` is symmetrised as ``(S + S^*) / 2``; ``H`` is left as computed.
    """
    T = len(batch)
    if T < 2:
        raise InsufficientSamplesError(f"need at least 2 samples, got {T}")
    if hessian and batch.eloc_deriv is None:
        raise MissingFieldError("eloc_deriv is required for the Hessian estimate")
    w = _normalised_weights(batch)

    # shifting by the first row makes constant columns centre to exactly zero
    e0, nu0 = batch.eloc[0], batch.nu[0]
    energy = e0 + w @ (batch.eloc - e0)
    nu_mean = nu0 + w @ (batch.nu - nu0)
    dnu = batch.nu - nu_mean
    de = batch.eloc - energy
    wdnu_c = np.conj(dnu) * w[:, None]
    grad = wdnu_c.T @ de
    metric = wdnu_c.T @ dnu
    metric = 0.5 * (metric + metric.conj().T)
    hess = None
    if hessian:
        # Cov[nu_i, E_loc,j] with the same centring
        cov_ed = wdnu_c.T @ batch.eloc_deriv
        hess = cov_ed - np.outer(grad, nu_mean) - energy * metric
    return EstimatorSet(
        energy=complex(energy),
        grad=grad,
        metric=metric,
        hess=hess,
        energy_variance=energy_variance(batch, energy),
        sample_count=T,
        nu_mean=nu_mean,
    )


def energy_variance(batch: SampleBatch, energy=None) -> float:
    """Asymptotic variance ``v^2`` of the energy estimator.

    Exact batches report ``Var_rho[E_loc]``; MCMC batches with a chain layout
    use batch means; other batches fall back to single-series batch means
    or, when shorter than 100 rows, the plain sample variance.
    """
    if batch.weights is not None:
        w = _normalised_weights(batch)
        if energy is None:
            energy = w @ batch.eloc
        return float(w @ np.abs(batch.eloc - energy) ** 2)
    if batch.chain_shape is not None:
        return multichain_variance(np.asarray(batch.eloc).reshape(batch.chain_shape))
    if len(batch) >= 100:
        return asymptotic_variance(batch.eloc)
    return float(np.var(batch.eloc))


def asymptotic_variance(series) -> float:
    """Batch-means estimate of ``sum_t Cov[x_0, x_t]`` for one chain.

    Batch length is ``floor(sqrt(T))``; complex series use ``|.|^2``.
    """
    x = np.asarray(series)
    T = len(x)
    if T < 100:
        raise InsufficientSamplesError(f"batch means needs at least 100 samples, got {T}")
    b = int(np.floor(np.sqrt(T)))
    a = T // b
    means = x[: a * b].reshape(a, b).mean(axis=1)
    return float(b * np.sum(np.abs(means - means.mean()) ** 2) / (a - 1))


def multichain_variance(series) -> float:
    """Asymptotic variance from ``C`` independent chains of ``R`` records.

    Chains of at least 100 records are each handled by :func:`asymptotic_variance`
    and averaged.  Shorter chains are used as the batches themselves:
    ``v^2 = R * sum_c |mean_c - mean|^2 / (C - 1)``.
    """
    x = np.asarray(series)
    if x.ndim == 1:
        return asymptotic_variance(x)
    C, R = x.shape
    if R >= 100:
        return float(np.mean([asymptotic_variance(row) for row in x]))
    if C < 2:
        raise InsufficientSamplesError("need two or more chains when chains are shorter than 100 records")
    means = x.mean(axis=1)
    return float(R * np.sum(np.abs(means - means.mean()) ** 2) / (C - 1))


# --- associative reduction -------------------------------------------------

@dataclass
class PartialSums:
    """Raw weighted moments of a batch; ``merge`` is associative."""

    weight: float
    count: int
    eloc: complex
    eloc_sq: float
    nu: np.ndarray
    nu_eloc: np.ndarray
    nu_nu: np.ndarray
    eloc_deriv: np.ndarray | None
    nu_eloc_deriv: np.ndarray | None

    def merge(self, other: "PartialSums") -> "PartialSums":
        add = lambda a, b: None if a is None or b is None else a + b
        return PartialSums(
            self.weight + other.weight,
            self.count + other.count,
            self.eloc + other.eloc,
            self.eloc_sq + other.eloc_sq,
            self.nu + other.nu,
            self.nu_eloc + other.nu_eloc,
            self.nu_nu + other.nu_nu,
            add(self.eloc_deriv, other.eloc_deriv),
            add(self.nu_eloc_deriv, other.nu_eloc_deriv),
        )

    def finalize(self) -> EstimatorSet:
        if self.count < 2:
            raise InsufficientSamplesError(f"need at least 2 samples, got {self.count}")
        W = self.weight
        energy = self.eloc / W
        m = self.nu / W
        grad = self.nu_eloc / W - np.conj(m) * energy
        metric = self.nu_nu / W - np.outer(np.conj(m), m)
        metric = 0.5 * (metric + metric.conj().T)
        hess = None
        if self.nu_eloc_deriv is not None:
            cov_ed = self.nu_eloc_deriv / W - np.outer(np.conj(m), self.eloc_deriv / W)
            hess = cov_ed - np.outer(grad, m) - energy * metric
        return EstimatorSet(
            energy=complex(energy),
            grad=grad,
            metric=metric,
            hess=hess,
            energy_variance=float(self.eloc_sq / W - abs(energy) ** 2),
            sample_count=self.count,
            nu_mean=m,
        )


def accumulate(batch: SampleBatch, hessian: bool = True) -> PartialSums:
    w = np.ones(len(batch)) if batch.weights is None else np.asarray(batch.weights, float)
    nuc = np.conj(batch.nu) * w[:, None]
    has_d = hessian and batch.eloc_deriv is not None
    return PartialSums(
        weight=float(w.sum()),
        count=len(batch),
        eloc=complex(w @ batch.eloc),
        eloc_sq=float(w @ np.abs(batch.eloc) ** 2),
        nu=w @ batch.nu,
        nu_eloc=nuc.T @ batch.eloc,
        nu_nu=nuc.T @ batch.nu,
        eloc_deriv=(w @ batch.eloc_deriv) if has_d else None,
        nu_eloc_deriv=(nuc.T @ batch.eloc_deriv) if has_d else None,
    )


# --- exact summation ---------------------------------------------------------

def exact_batch(ham: HamiltonianSpec, params: RbmParams, hessian: bool = True) -> SampleBatch:
    """Enumerate all ``2**n`` configurations with weights ``|psi|^2``.

    Weights are scaled so the largest is 1; :func:`estimate` normalises.
    """
    n = ham.n
    if n > EXACT_MAX_SITES:
        raise SizeError(f"exact summation is capped at n={EXACT_MAX_SITES}, got n={n}")
    configs = all_configs(n)
    lp, nu = log_psi_and_derivatives(params, ham.lattice, configs)
    diag, conn, elem = connection_arrays(ham, configs)
    idx = config_index(conn)
    with np.errstate(over="ignore", invalid="ignore"):
        ratio = np.exp(lp[idx] - lp[:, None])
    weighted = np.where(elem != 0, elem * ratio, 0.0)
    logw = 2.0 * lp.real
    weights = np.exp(logw - np.max(logw))
    alive = weights > 0
    eloc = np.where(alive, diag + weighted.sum(axis=1), 0.0)
    eloc_deriv = None
    if hessian:
        eloc_deriv = diag[:, None] * nu
        step = max(1, 2_000_000 // (idx.shape[1] * params.size))
        for start in range(0, len(configs), step):
            sl = slice(start, start + step)
            eloc_deriv[sl] += np.einsum("bc,bcp->bp", weighted[sl], nu[idx[sl]])
        eloc_deriv[~alive] = 0.0
    return SampleBatch(configs=configs, nu=nu, eloc=eloc, eloc_deriv=eloc_deriv, weights=weights)


def write_eloc_csv(path, eloc, step: int = 0, append: bool = False) -> None:
    """Dump local energies as ``step,eloc_re,eloc_im`` rows."""
    path = Path(path)
    new = not (append and path.exists())
    with path.open("a" if append else "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        if new:
            writer.writerow(["step", "eloc_re", "eloc_im"])
        for e in np.asarray(eloc):
            writer.writerow([step, repr(float(e.real)), repr(float(e.imag))])
