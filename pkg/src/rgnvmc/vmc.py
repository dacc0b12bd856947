"""Estimator-style front end for a ground-state VMC run.

:class:`VMCGroundState` follows the scikit-learn conventions: hyperparameters
are constructor arguments, ``fit`` optimises the wavefunction and learned
state carries a trailing underscore.  There is no training data, so ``fit``
ignores ``X``.  Spin configurations play the role of samples for
``transform`` (log-derivative features) and ``score_samples``
(unnormalised log density).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .config import RunConfig
from .estimators import multichain_variance
from .exceptions import ConfigError
from .hamiltonian import HamiltonianSpec, local_quantities, tfi, xxz
from .lattice import build_lattice
from .optimizers import PenaltySchedule, SamplingConfig, optimize
from .validation import check_configs, check_dims
from .wavefunction import RbmParams, init_params, log_psi, log_derivatives


@dataclass
class FinalEstimate:
    energy: float
    stderr: float
    samples: int


def build_hamiltonian(model: str, dims, coupling: float) -> HamiltonianSpec:
    lattice = build_lattice(check_dims(dims))
    if model == "tfi":
        return tfi(lattice, coupling)
    if model == "xxz":
        return xxz(lattice, coupling)
    raise ConfigError(f"unknown model {model!r}")


def final_estimate(ham: HamiltonianSpec, params: RbmParams, ensemble, steps: int, stride: int) -> FinalEstimate:
    """Energy and batch-means standard error from a long continuation run."""
    rec = ensemble.advance(params, steps, stride)
    C, R, n = rec.shape
    eloc = local_quantities(ham, params, rec.reshape(-1, n), derivatives=False)["eloc"].real.reshape(C, R)
    v2 = multichain_variance(eloc)
    return FinalEstimate(float(eloc.mean()), float(np.sqrt(v2 / eloc.size)), int(eloc.size))


class VMCGroundState(TransformerMixin, BaseEstimator):
    """Variational ground state of a TFI or XXZ lattice with an RBM ansatz.

    Parameters
    ----------
    model : {"tfi", "xxz"}
    coupling : float
        Transverse field ``h`` (TFI) or anisotropy ``Delta`` (XXZ).
    dims : int, str or tuple
        Lattice extents, e.g. ``10`` or ``(4, 4)``.
    alpha : int
        Hidden-unit density.
    init_scale : float
        Complex variance of the initial parameters.
    seed : int
        Seeds both the initial parameters and the chains.
    optimizer : {"gd", "ngd", "rgn"}
    eps_min, eps_max, eta_min, eta_max : float, optional
        Schedule overrides; ``None`` uses the optimizer defaults.
    ramp_length : int
    sampling : {"exact", "mcmc", "tempered"}
    levels : int
        Ladder size for ``"tempered"`` sampling.
    chain_count, steps_multiplier, record_stride
        Chains, steps per iteration (times ``n``) and recording stride
        (``None`` means ``n``).
    iterations : int
    final_multiplier : int
        Length of the closing energy run in units of ``n`` steps; ignored
        in exact mode.
    trace_path, checkpoint_dir, checkpoint_stride, timing
        Output options forwarded to :func:`rgnvmc.optimizers.optimize`.

    Attributes
    ----------
    params_ : RbmParams
    trace_ : list of TraceRecord
    energy_ : float
        Total energy estimate (exact mode: last trace energy).
    energy_stderr_ : float
    energy_per_site_ : float
    guard_triggers_ : int
    ensemble_ : ChainEnsemble or None
    """

    def __init__(self, model="tfi", coupling=1.0, dims=(10,), alpha=5, init_scale=1e-3, seed=123, optimizer="rgn",
                 eps_min=None, eps_max=None, eta_min=None, eta_max=None, ramp_length=500, sampling="exact",
                 levels=50, chain_count=100, steps_multiplier=20, record_stride=None, iterations=1000,
                 final_multiplier=2000, trace_path=None, checkpoint_dir=None, checkpoint_stride=0, timing=True):
        self.model = model
        self.coupling = coupling
        self.dims = dims
        self.alpha = alpha
        self.init_scale = init_scale
        self.seed = seed
        self.optimizer = optimizer
        self.eps_min = eps_min
        self.eps_max = eps_max
        self.eta_min = eta_min
        self.eta_max = eta_max
        self.ramp_length = ramp_length
        self.sampling = sampling
        self.levels = levels
        self.chain_count = chain_count
        self.steps_multiplier = steps_multiplier
        self.record_stride = record_stride
        self.iterations = iterations
        self.final_multiplier = final_multiplier
        self.trace_path = trace_path
        self.checkpoint_dir = checkpoint_dir
        self.checkpoint_stride = checkpoint_stride
        self.timing = timing

    @classmethod
    def from_config(cls, config: RunConfig, **outputs) -> "VMCGroundState":
        cfg = config.resolved()
        return cls(model=cfg.model, coupling=cfg.coupling, dims=cfg.dims, alpha=cfg.alpha,
                   init_scale=cfg.init_scale, seed=cfg.seed, optimizer=cfg.optimizer, eps_min=cfg.eps_min,
                   eps_max=cfg.eps_max, eta_min=cfg.eta_min, eta_max=cfg.eta_max, ramp_length=cfg.ramp_length,
                   sampling=cfg.sampling, levels=cfg.levels, chain_count=cfg.chain_count,
                   steps_multiplier=cfg.steps_multiplier, record_stride=cfg.record_stride,
                   iterations=cfg.iterations, final_multiplier=cfg.final_multiplier,
                   checkpoint_stride=cfg.checkpoint_stride, timing=cfg.timing, **outputs)

    def _hamiltonian(self) -> HamiltonianSpec:
        if self.coupling is None:
            raise ConfigError("coupling is required")
        return build_hamiltonian(self.model, self.dims, float(self.coupling))

    def _sampling(self) -> SamplingConfig:
        return SamplingConfig(mode=self.sampling, chain_count=int(self.chain_count), levels=int(self.levels),
                              steps_multiplier=int(self.steps_multiplier), record_stride=self.record_stride,
                              seed=int(self.seed))

    def fit(self, X=None, y=None, initial_params: RbmParams | None = None):
        """Optimise the wavefunction.  ``X`` and ``y`` are ignored."""
        ham = self._hamiltonian()
        n = ham.n
        params = initial_params
        if params is None:
            params = init_params(int(self.alpha), n, float(self.init_scale), int(self.seed))
        elif params.n != n:
            raise ConfigError(f"initial parameters are for n={params.n}, lattice has n={n}")
        schedule = PenaltySchedule.defaults(self.optimizer, eps_min=self.eps_min, eps_max=self.eps_max,
                                            eta_min=self.eta_min, eta_max=self.eta_max,
                                            ramp_length=int(self.ramp_length))
        sampling = self._sampling()
        result = optimize(ham, params, self.optimizer, schedule, sampling, int(self.iterations),
                          trace_path=self.trace_path, checkpoint_dir=self.checkpoint_dir,
                          checkpoint_stride=int(self.checkpoint_stride), timing=bool(self.timing))
        self.hamiltonian_ = ham
        self.params_ = result.params
        self.trace_ = result.trace
        self.guard_triggers_ = result.guard.trigger_count
        self.ensemble_ = result.ensemble
        if sampling.mode == "exact":
            if result.trace:
                self.energy_ = float(result.trace[-1].energy.real)
            else:
                from .exact import exact_energy
                self.energy_ = exact_energy(ham, result.params)
            self.energy_stderr_ = 0.0
        else:
            stride = int(self.record_stride or n)
            steps = int(self.final_multiplier) * n
            if steps:
                steps = max(stride, steps - steps % stride)
                fin = final_estimate(ham, result.params, result.ensemble, steps, stride)
                self.energy_, self.energy_stderr_ = fin.energy, fin.stderr
            else:
                self.energy_ = float(result.trace[-1].energy.real) if result.trace else float("nan")
                self.energy_stderr_ = float("nan")
        self.energy_per_site_ = self.energy_ / n
        self.n_features_in_ = n
        return self

    def transform(self, X):
        """Log-derivative features ``nu`` of shape ``(B, alpha * (n + 1))``."""
        check_is_fitted(self, "params_")
        X = check_configs(X, self.hamiltonian_.n)
        return log_derivatives(self.params_, self.hamiltonian_.lattice, X)

    def score_samples(self, X):
        """Unnormalised log density ``2 Re log psi``."""
        check_is_fitted(self, "params_")
        X = check_configs(X, self.hamiltonian_.n)
        return 2.0 * np.real(log_psi(self.params_, self.hamiltonian_.lattice, X))

    def score(self, X=None, y=None) -> float:
        """Negative energy per site (larger is better)."""
        check_is_fitted(self, "params_")
        return -float(self.energy_per_site_)

    def summary(self) -> dict:
        check_is_fitted(self, "params_")
        return {
            "model": self.model,
            "dims": list(check_dims(self.dims)),
            "coupling": float(self.coupling),
            "optimizer": str(self.optimizer),
            "final_energy_per_site": float(self.energy_per_site_),
            "stderr": float(self.energy_stderr_ / self.hamiltonian_.n),
            "iterations": int(self.iterations),
            "guard_triggers": int(self.guard_triggers_),
        }
