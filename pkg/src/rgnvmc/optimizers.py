"""Preconditioned parameter updates: gradient descent, natural gradient and RGN.

Every variant solves ``P delta = -g`` for the holomorphic update ``delta``:

=========  =================================
``gd``     ``P = I / eps``
``ngd``    ``P = (S + eta I) / eps``
``rgn``    ``P = H + (S + eta I) / eps``
=========  =================================

``eps`` and ``eta`` ramp geometrically from their minima to their maxima over
``ramp_length`` iterations.  An update more than twice as long as the previous
one is shrunk by dividing ``eps`` by 10 (up to 10 times) and the ramp
restarts from its minima.
"""

from __future__ import annotations

import csv
import time
import warnings
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.linalg

from .estimators import EXACT_MAX_SITES, EstimatorSet, estimate, exact_batch
from .exceptions import ConfigError, DataError, SingularPreconditionerError, SizeError
from .hamiltonian import HamiltonianSpec
from .samplers import ChainEnsemble
from .wavefunction import RbmParams, save_params

TRACE_COLUMNS = ("iter", "energy_re", "energy_im", "variance", "eps", "eta",
                 "update_norm", "guard", "residual", "seconds")


class PreconditionerKind(str, Enum):
    GD = "gd"
    NGD = "ngd"
    RGN = "rgn"

    @classmethod
    def parse(cls, value) -> "PreconditionerKind":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("_", "").replace("-", "")
        aliases = {"gd": cls.GD, "ngd": cls.NGD, "naturalgd": cls.NGD, "natural": cls.NGD, "sr": cls.NGD, "rgn": cls.RGN}
        if key not in aliases:
            raise ConfigError(f"unknown optimizer {value!r}; expected gd, ngd or rgn")
        return aliases[key]


# (eps_min, eps_max, eta_min, eta_max); eta is unused by gd
_DEFAULTS = {
    PreconditionerKind.GD: (1e-3, 1e-2, 1e-3, 1e-3),
    PreconditionerKind.NGD: (1e-3, 1e-2, 1e-3, 1e-3),
    PreconditionerKind.RGN: (1e-3, 1e3, 1e-3, 1e-1),
}


@dataclass
class PenaltySchedule:
    eps_min: float
    eps_max: float
    eta_min: float
    eta_max: float
    ramp_length: int = 500
    position: int = 0

    def __post_init__(self):
        vals = (self.eps_min, self.eps_max, self.eta_min, self.eta_max)
        if not all(np.isfinite(v) and v > 0 for v in vals):
            raise ConfigError(f"schedule values must be positive and finite, got {vals}")
        if self.eps_min > self.eps_max or self.eta_min > self.eta_max:
            raise ConfigError("schedule minima must not exceed maxima")
        if int(self.ramp_length) < 1:
            raise ConfigError(f"ramp_length must be positive, got {self.ramp_length}")

    @classmethod
    def defaults(cls, kind, **overrides) -> "PenaltySchedule":
        e0, e1, h0, h1 = _DEFAULTS[PreconditionerKind.parse(kind)]
        base = dict(eps_min=e0, eps_max=e1, eta_min=h0, eta_max=h1)
        base.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**base)

    def values(self, k: int | None = None):
        return schedule_values(self, self.position if k is None else k)


def schedule_values(sched: PenaltySchedule, k: int):
    """Geometric ramp ``min * (max / min) ** (min(k, ramp) / ramp)``; returns ``(eps, eta)``."""
    if k < 0:
        raise ConfigError(f"schedule position must be non-negative, got {k}")
    t = min(int(k), sched.ramp_length) / sched.ramp_length
    if t == 0:
        return float(sched.eps_min), float(sched.eta_min)
    if t == 1:
        return float(sched.eps_max), float(sched.eta_max)
    eps = sched.eps_min * (sched.eps_max / sched.eps_min) ** t
    eta = sched.eta_min * (sched.eta_max / sched.eta_min) ** t
    return float(eps), float(eta)


def preconditioner(kind, est: EstimatorSet, eps: float, eta: float) -> np.ndarray:
    """Dense ``P`` for the given variant."""
    kind = PreconditionerKind.parse(kind)
    p = len(est.grad)
    if kind is PreconditionerKind.GD:
        return np.eye(p, dtype=complex) / eps
    P = (est.metric + eta * np.eye(p)) / eps
    if kind is PreconditionerKind.RGN:
        if est.hess is None:
            raise DataError("the RGN update needs a Hessian estimate")
        P = est.hess + P
    return P


def _solve(P, rhs):
    try:
        with warnings.catch_warnings(), np.errstate(divide="ignore", invalid="ignore"):
            warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
            x = scipy.linalg.solve(P, rhs, check_finite=False)
        if np.all(np.isfinite(x)):
            return x
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgWarning, ValueError):
        pass
    try:
        x = scipy.linalg.lstsq(P, rhs, check_finite=False)[0]
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SingularPreconditionerError(f"both solve paths failed: {exc}") from exc
    if not np.all(np.isfinite(x)):
        raise SingularPreconditionerError("least-squares fallback returned non-finite values")
    return x


def compute_update(kind, est: EstimatorSet, eps: float, eta: float):
    """Solve ``P delta = -g``; return ``(delta, relative_residual)``.

    The residual is ``||P delta + g|| / ||g||`` (0 when ``g`` is 0).  GD is
    evaluated in closed form as ``-eps * g``.
    """
    kind = PreconditionerKind.parse(kind)
    if not (eps > 0 and eta > 0):
        raise ConfigError(f"eps and eta must be positive, got {eps}, {eta}")
    g = np.asarray(est.grad)
    parts = [g] if kind is PreconditionerKind.GD else [g, est.metric]
    if kind is PreconditionerKind.RGN and est.hess is not None:
        parts.append(est.hess)
    if not all(np.all(np.isfinite(a)) for a in parts):
        raise DataError("non-finite gradient, metric or Hessian estimate")
    if kind is PreconditionerKind.GD:
        return -eps * g, 0.0
    P = preconditioner(kind, est, eps, eta)
    delta = _solve(P, -g)
    gnorm = np.linalg.norm(g)
    residual = float(np.linalg.norm(P @ delta + g) / gnorm) if gnorm > 0 else 0.0
    return delta, residual


@dataclass
class GuardState:
    """Tracks the previous accepted update norm for the factor-of-two test."""

    prev_update_norm: float | None = None
    trigger_count: int = 0
    factor: float = 2.0
    backoff: float = 10.0
    max_attempts: int = 10
    last_attempts: int = 0
    last_forced: bool = False


def apply_guard(guard: GuardState, sched: PenaltySchedule, recompute: Callable, delta, eps: float):
    """Enforce ``|delta| <= factor * prev``.

    ``recompute(eps)`` must return ``(delta, residual)``.  On a trigger, ``eps``
    is divided by ``backoff`` and the update recomputed until the bound holds
    or ``max_attempts`` is reached (the last attempt is then accepted and
    flagged).  The schedule position is reset to 0.

    Returns ``(delta, sched, guard, eps, residual)`` where ``residual`` is
    ``None`` unless a recompute happened.
    """
    norm = float(np.linalg.norm(delta))
    guard = replace(guard, last_attempts=0, last_forced=False)
    prev = guard.prev_update_norm
    residual = None
    if prev is None or norm <= guard.factor * prev:
        guard.prev_update_norm = norm
        return delta, sched, guard, eps, residual
    attempts = 0
    while attempts < guard.max_attempts and norm > guard.factor * prev:
        eps = eps / guard.backoff
        delta, residual = recompute(eps)
        norm = float(np.linalg.norm(delta))
        attempts += 1
    guard.last_attempts = attempts
    guard.last_forced = norm > guard.factor * prev
    guard.trigger_count += 1
    guard.prev_update_norm = norm
    return delta, replace(sched, position=0), guard, eps, residual


# --- optimization loop -------------------------------------------------------

SAMPLING_MODES = ("exact", "mcmc", "tempered")


@dataclass
class SamplingConfig:
    """How estimators are formed each iteration.

    ``exact`` sums over all ``2**n`` configurations.  ``mcmc`` and
    ``tempered`` run ``chain_count`` persistent chains for
    ``steps_multiplier * n`` steps per iteration, recording every
    ``record_stride`` steps (default ``n``).
    """

    mode: str = "exact"
    chain_count: int = 100
    levels: int = 50
    steps_multiplier: int = 20
    record_stride: int | None = None
    seed: int = 123

    def __post_init__(self):
        if self.mode not in SAMPLING_MODES:
            raise ConfigError(f"unknown sampling mode {self.mode!r}; expected one of {SAMPLING_MODES}")

    def ladder_levels(self) -> int:
        return self.levels if self.mode == "tempered" else 1

    def make_ensemble(self, ham: HamiltonianSpec) -> ChainEnsemble:
        return ChainEnsemble(ham, self.chain_count, self.ladder_levels(), self.seed)


@dataclass
class TraceRecord:
    iter: int
    energy: complex
    variance: float
    eps: float
    eta: float
    update_norm: float
    guard: int
    residual: float
    seconds: float
    forced: bool = False

    def row(self):
        return [self.iter, repr(float(self.energy.real)), repr(float(self.energy.imag)), repr(float(self.variance)),
                repr(self.eps), repr(self.eta), repr(self.update_norm), self.guard, repr(self.residual),
                repr(float(self.seconds))]


@dataclass
class OptimizationResult:
    params: RbmParams
    trace: list = field(default_factory=list)
    guard: GuardState = None
    schedule: PenaltySchedule = None
    ensemble: ChainEnsemble | None = None

    @property
    def energies(self) -> np.ndarray:
        return np.array([r.energy.real for r in self.trace])


def write_trace(path, records, append: bool = False) -> None:
    path = Path(path)
    new = not (append and path.exists())
    with path.open("a" if append else "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        if new:
            w.writerow(TRACE_COLUMNS)
        for r in records:
            w.writerow(r.row())


def read_trace(path) -> dict:
    """Load a trace CSV into a dict of column arrays."""
    with Path(path).open(encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return {c: np.array([float(r[c]) for r in rows]) for c in TRACE_COLUMNS}


def iteration_estimates(ham, params, kind, sampling: SamplingConfig, ensemble=None) -> EstimatorSet:
    """One round of estimation under the chosen sampling mode."""
    need_h = PreconditionerKind.parse(kind) is PreconditionerKind.RGN
    if sampling.mode == "exact":
        return estimate(exact_batch(ham, params, hessian=need_h), hessian=need_h)
    n = ham.n
    stride = sampling.record_stride or n
    batch = ensemble.sample(params, sampling.steps_multiplier * n, stride, derivatives=need_h)
    return estimate(batch, hessian=need_h)


def optimize(ham: HamiltonianSpec, params: RbmParams, kind="rgn", schedule: PenaltySchedule | None = None,
             sampling: SamplingConfig | None = None, iterations: int = 1000, guard: GuardState | None = None,
             callback: Callable | None = None, trace_path=None, checkpoint_dir=None, checkpoint_stride: int = 0,
             timing: bool = True, ensemble: ChainEnsemble | None = None) -> OptimizationResult:
    """Run the VMC loop.

    Parameters
    ----------
    ham : HamiltonianSpec
    params : RbmParams
        Starting point; not modified.
    kind : {"gd", "ngd", "rgn"}
    schedule : PenaltySchedule, optional
        Defaults for ``kind`` if omitted.
    sampling : SamplingConfig, optional
        Exact summation if omitted.
    iterations : int
    callback : callable, optional
        Called as ``callback(k, params_k, est, record)`` after each update is
        chosen and before it is applied.
    trace_path : path, optional
        Trace CSV written row by row, so an aborted run leaves a partial trace.
    checkpoint_dir, checkpoint_stride
        Write ``params_<k>.txt`` every ``checkpoint_stride`` iterations.
    timing : bool
        Record wall time per iteration; ``False`` writes 0.0 for
        byte-reproducible traces.

    Returns
    -------
    OptimizationResult
    """
    kind = PreconditionerKind.parse(kind)
    sampling = sampling or SamplingConfig()
    schedule = replace(schedule) if schedule is not None else PenaltySchedule.defaults(kind)
    guard = replace(guard) if guard is not None else GuardState()
    if iterations < 0:
        raise ConfigError(f"iterations must be non-negative, got {iterations}")
    if sampling.mode == "exact" and ham.n > EXACT_MAX_SITES:
        raise SizeError(f"exact mode is capped at n={EXACT_MAX_SITES}")
    if sampling.mode != "exact" and ensemble is None:
        ensemble = sampling.make_ensemble(ham)
    if trace_path is not None:
        write_trace(trace_path, [])
    if checkpoint_dir is not None and checkpoint_stride:
        Path(checkpoint_dir).mkdir(parents=True, exist_ok=True)

    result = OptimizationResult(params=params.copy(), guard=guard, schedule=schedule, ensemble=ensemble)
    for k in range(iterations):
        t0 = time.perf_counter()
        est = iteration_estimates(ham, result.params, kind, sampling, ensemble)
        eps, eta = schedule_values(schedule, schedule.position)
        delta, residual = compute_update(kind, est, eps, eta)
        schedule = replace(schedule, position=schedule.position + 1)
        delta, schedule, guard, eps_used, res2 = apply_guard(
            guard, schedule, lambda e: compute_update(kind, est, e, eta), delta, eps)
        if res2 is not None:
            residual = res2
        record = TraceRecord(
            iter=k, energy=est.energy, variance=est.energy_variance, eps=eps_used, eta=eta,
            update_norm=float(np.linalg.norm(delta)), guard=guard.last_attempts, residual=residual,
            seconds=time.perf_counter() - t0 if timing else 0.0, forced=guard.last_forced,
        )
        if callback is not None:
            callback(k, result.params, est, record)
        new_params = result.params.update(delta)
        if not new_params.is_finite():
            raise DataError(f"non-finite parameters after iteration {k}")
        result.params = new_params
        result.trace.append(record)
        if trace_path is not None:
            write_trace(trace_path, [record], append=True)
        if checkpoint_dir is not None and checkpoint_stride and (k + 1) % checkpoint_stride == 0:
            save_params(Path(checkpoint_dir) / f"params_{k + 1:06d}.txt", result.params)
    result.guard, result.schedule = guard, schedule
    return result
