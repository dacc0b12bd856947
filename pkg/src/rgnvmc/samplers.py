"""Metropolis samplers over spin configurations, with optional parallel tempering.

Proposals
---------
TFI chains flip one uniformly chosen spin.  XXZ chains live on the balanced
sector (equal magnetization on both sublattices) and flip one A-site and one
B-site that carry the *same* spin, which keeps the chain balanced.  The pair
is drawn uniformly from the eligible pairs, whose number depends on the
state, so the acceptance ratio carries the Hastings factor
``n_pairs(sigma) / n_pairs(sigma')``.

Randomness
----------
Chain ``c`` owns ``Generator(PCG64(SeedSequence(seed, spawn_key=(c,))))``.
Each step consumes a fixed-width row of uniforms from that stream, so results
do not depend on how many chains are advanced together, and running ``2k``
steps equals running ``k`` steps twice.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from math import comb
from pathlib import Path

import numpy as np

from .estimators import SampleBatch
from .exceptions import ConfigError, UnsupportedModelError
from .hamiltonian import HamiltonianSpec, local_quantities
from .wavefunction import RbmParams, log_psi


def chain_rng(seed: int, chain: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(int(chain),))))


def log_weight(params: RbmParams, ham: HamiltonianSpec, configs) -> np.ndarray:
    """Unnormalised log density ``2 Re log psi``."""
    return 2.0 * np.real(log_psi(params, ham.lattice, configs))


class _Geometry:
    """Sublattice bookkeeping for the balanced XXZ moves."""

    def __init__(self, ham: HamiltonianSpec):
        self.model = ham.model
        self.n = ham.n
        if ham.model == "xxz":
            sub = ham.lattice.sublattice
            if sub is None:
                raise UnsupportedModelError("XXZ sampling needs a bipartite lattice (even extents)")
            self.A = sub == 0
            self.B = sub == 1
            self.nA, self.nB = int(self.A.sum()), int(self.B.sum())
            if self.nA != self.nB:
                raise UnsupportedModelError(f"sublattices differ in size ({self.nA} vs {self.nB})")
            w = np.array([comb(self.nA, k) * comb(self.nB, k) for k in range(self.nA + 1)], float)
            self.up_cdf = np.cumsum(w) / w.sum()

    def fresh(self, u) -> np.ndarray:
        """Uniform configurations from rows of ``1 + n`` uniforms."""
        u = np.atleast_2d(u)
        if self.model == "tfi":
            return np.where(u[:, 1:] < 0.5, 1, -1).astype(np.int8)
        k_up = np.searchsorted(self.up_cdf, u[:, 0], side="right")
        k_up = np.minimum(k_up, self.nA)
        out = np.empty((len(u), self.n), dtype=np.int8)
        for mask in (self.A, self.B):
            sites = np.flatnonzero(mask)
            ranks = np.argsort(np.argsort(u[:, 1:][:, sites], axis=1), axis=1)
            out[:, sites] = np.where(ranks < k_up[:, None], 1, -1)
        return out

    def _pair_count(self, uA, uB):
        return uA * uB + (self.nA - uA) * (self.nB - uB)

    def propose(self, configs, u):
        """Return ``(proposals, log_hastings)`` for rows of ``configs``."""
        K = len(configs)
        rows = np.arange(K)
        prop = configs.copy()
        if self.model == "tfi":
            site = np.minimum((u * self.n).astype(np.intp), self.n - 1)
            prop[rows, site] *= -1
            return prop, np.zeros(K)
        up = configs > 0
        uA = (up & self.A).sum(axis=1)
        uB = (up & self.B).sum(axis=1)
        n_fwd = self._pair_count(uA, uB)
        idx = np.minimum((u * n_fwd).astype(np.intp), n_fwd - 1)
        upup = uA * uB
        s = np.where(idx < upup, 1, -1)
        rem = np.where(s > 0, idx, idx - upup)
        nb = np.where(s > 0, uB, self.nB - uB)
        ra, rb = rem // nb, rem % nb
        for mask, rank in ((self.A, ra), (self.B, rb)):
            eligible = mask[None, :] & (configs == s[:, None])
            pos = np.cumsum(eligible, axis=1)
            site = np.argmax(eligible & (pos == rank[:, None] + 1), axis=1)
            prop[rows, site] *= -1
        n_rev = self._pair_count(uA - s, uB - s)
        return prop, np.log(n_fwd) - np.log(n_rev)


def init_config(ham: HamiltonianSpec, lattice=None, rng=None) -> np.ndarray:
    """Uniform starting configuration (uniform over the balanced sector for XXZ)."""
    rng = np.random.default_rng() if rng is None else rng
    geo = _Geometry(ham)
    return geo.fresh(rng.random(1 + ham.n))[0]


def _draw_width(n, levels):
    return 2 if levels == 1 else (1 + n) + 3 * (levels - 1)


def _sweep(geo, params, ham, configs, lw, u, sweep_index, stats):
    """Advance ``C`` chains of ``L`` levels by one step, in place.

    ``configs`` is ``(C, L, n)``, ``lw`` is ``(C, L)`` and ``u`` is ``(C, k)``.
    A flat chain (``L == 1``) runs Metropolis at exponent 1.  In a ladder,
    level 0 is an independence sampler on the uniform law and levels
    ``1..m`` run Metropolis at exponents ``i/m``; adjacent levels then swap,
    even pairs on even sweeps and odd pairs on odd sweeps.
    """
    C, L, n = configs.shape
    if L == 1:
        sel, acc = u[:, 0:1], u[:, 1:2]
        lev = slice(0, 1)
        beta = np.ones(1)
    else:
        m = L - 1
        sel = u[:, 1 + n: 1 + n + 2 * m: 2]
        acc = u[:, 2 + n: 2 + n + 2 * m: 2]
        lev = slice(1, L)
        beta = np.arange(1, L) / m

    cur = configs[:, lev]
    Lm = cur.shape[1]
    prop, log_q = geo.propose(cur.reshape(-1, n), sel.reshape(-1))
    to_eval = prop
    if L > 1:
        fresh = geo.fresh(u[:, : 1 + n])
        to_eval = np.concatenate([prop, fresh])
    lw_eval = log_weight(params, ham, to_eval)
    lw_prop = lw_eval[: C * Lm].reshape(C, Lm)
    log_q = log_q.reshape(C, Lm)

    with np.errstate(invalid="ignore", divide="ignore"):
        log_acc = beta[None, :] * (lw_prop - lw[:, lev]) + log_q
        log_acc = np.where(np.isnan(log_acc), -np.inf, log_acc)
        accept = np.log(acc) < log_acc
    dead = ~np.isfinite(lw_prop)
    stats.zero_amplitude += int(dead.sum())
    accept &= ~dead
    configs[:, lev] = np.where(accept[..., None], prop.reshape(C, Lm, n), cur)
    lw[:, lev] = np.where(accept, lw_prop, lw[:, lev])
    stats.attempts[:, lev] += 1
    stats.accepts[:, lev] += accept

    if L > 1:
        configs[:, 0] = fresh
        lw[:, 0] = lw_eval[C * Lm:]
        stats.attempts[:, 0] += 1
        stats.accepts[:, 0] += 1
        m = L - 1
        swap_u = u[:, 1 + n + 2 * m:]
        for i in range(sweep_index % 2, m, 2):
            with np.errstate(invalid="ignore", divide="ignore"):
                log_s = (lw[:, i] - lw[:, i + 1]) / m
                log_s = np.where(np.isnan(log_s), -np.inf, log_s)
                ok = np.log(swap_u[:, i]) < log_s
            stats.swap_attempts[i] += C
            stats.swap_accepts[i] += int(ok.sum())
            lo, hi = configs[ok, i].copy(), configs[ok, i + 1].copy()
            configs[ok, i], configs[ok, i + 1] = hi, lo
            lwlo, lwhi = lw[ok, i].copy(), lw[ok, i + 1].copy()
            lw[ok, i], lw[ok, i + 1] = lwhi, lwlo


@dataclass
class _Stats:
    attempts: np.ndarray
    accepts: np.ndarray
    swap_attempts: np.ndarray
    swap_accepts: np.ndarray
    zero_amplitude: int = 0

    @classmethod
    def empty(cls, C, L):
        z = lambda *s: np.zeros(s, dtype=np.int64)
        return cls(z(C, L), z(C, L), z(max(L - 1, 0)), z(max(L - 1, 0)))


# --- single-chain API --------------------------------------------------------

@dataclass
class ChainState:
    """One Metropolis chain.  ``level``/``m`` give the exponent ``level / m``."""

    config: np.ndarray
    log_weight: float
    rng: np.random.Generator = field(repr=False)
    level: int = 1
    m: int = 1
    accepted: int = 0
    attempted: int = 0
    zero_amplitude: int = 0


def new_chain(ham: HamiltonianSpec, params: RbmParams, rng) -> ChainState:
    config = init_config(ham, rng=rng)
    return ChainState(config, float(log_weight(params, ham, config)), rng)


def metropolis_step(chain: ChainState, params: RbmParams, ham: HamiltonianSpec, beta_exponent: float = 1.0) -> ChainState:
    """One Metropolis step at the tempered density ``rho ** beta_exponent``."""
    if not 0 < beta_exponent <= 1:
        raise ConfigError(f"beta_exponent must lie in (0, 1], got {beta_exponent}")
    geo = _Geometry(ham)
    sel, acc = chain.rng.random(2)
    prop, log_q = geo.propose(chain.config[None], np.array([sel]))
    lw_new = float(log_weight(params, ham, prop[0]))
    chain.attempted += 1
    if not np.isfinite(lw_new):
        chain.zero_amplitude += 1
        return chain
    with np.errstate(invalid="ignore", divide="ignore"):
        log_acc = beta_exponent * (lw_new - chain.log_weight) + log_q[0]
        take = np.log(acc) < log_acc
    if take:
        chain.config = prop[0]
        chain.log_weight = lw_new
        chain.accepted += 1
    return chain


@dataclass
class TemperLadder:
    """``m + 1`` chains targeting ``rho ** (i / m)``; level ``m`` is physical."""

    m: int
    configs: np.ndarray
    log_weights: np.ndarray
    rng: np.random.Generator = field(repr=False)
    swap_interval: int = 1
    sweeps: int = 0
    swap_attempts: np.ndarray = None
    swap_accepts: np.ndarray = None
    level_attempts: np.ndarray = None
    level_accepts: np.ndarray = None

    @property
    def exponents(self) -> np.ndarray:
        return np.arange(self.m + 1) / self.m

    @classmethod
    def create(cls, ham: HamiltonianSpec, params: RbmParams, m: int, rng, swap_interval: int = 1) -> "TemperLadder":
        if m < 1:
            raise ConfigError(f"a ladder needs m >= 1, got {m}")
        geo = _Geometry(ham)
        configs = geo.fresh(rng.random((m + 1, 1 + ham.n)))
        lw = log_weight(params, ham, configs)
        z = lambda k: np.zeros(k, dtype=np.int64)
        return cls(m, configs, lw, rng, swap_interval, 0, z(m), z(m), z(m + 1), z(m + 1))

    @property
    def physical(self) -> np.ndarray:
        return self.configs[self.m]


def pt_sweep(ladder: TemperLadder, params: RbmParams, ham: HamiltonianSpec) -> TemperLadder:
    """Advance every level once, then attempt the alternating adjacent swaps."""
    geo = _Geometry(ham)
    L = ladder.m + 1
    u = ladder.rng.random((1, _draw_width(ham.n, L)))
    stats = _Stats.empty(1, L)
    configs = ladder.configs[None].copy()
    lw = ladder.log_weights[None].copy()
    if ladder.sweeps % ladder.swap_interval == 0:
        _sweep(geo, params, ham, configs, lw, u, ladder.sweeps // ladder.swap_interval, stats)
    else:
        u[:, 1 + ham.n + 2 * ladder.m:] = 0.0  # log(0) = -inf: no swap accepted
        _sweep(geo, params, ham, configs, lw, u, 0, stats)
        stats.swap_attempts[:] = 0
    ladder.configs, ladder.log_weights = configs[0], lw[0]
    ladder.sweeps += 1
    ladder.swap_attempts += stats.swap_attempts
    ladder.swap_accepts += stats.swap_accepts
    ladder.level_attempts += stats.attempts[0]
    ladder.level_accepts += stats.accepts[0]
    return ladder


# --- multi-chain ensemble ----------------------------------------------------

class ChainEnsemble:
    """``chain_count`` persistent chains (or ladders) advanced in lockstep.

    Parameters
    ----------
    ham : HamiltonianSpec
    chain_count : int
    levels : int
        1 for plain Metropolis, ``m + 1`` for a tempering ladder.
    seed : int
        Master seed; chain ``c`` uses :func:`chain_rng` ``(seed, c)``.
    """

    def __init__(self, ham: HamiltonianSpec, chain_count: int = 100, levels: int = 1, seed: int = 123):
        if chain_count < 1 or levels < 1:
            raise ConfigError("chain_count and levels must be positive")
        self.ham = ham
        self.chain_count = int(chain_count)
        self.levels = int(levels)
        self.seed = int(seed)
        self._geo = _Geometry(ham)
        self.rngs = [chain_rng(seed, c) for c in range(self.chain_count)]
        starts = [self._geo.fresh(r.random((self.levels, 1 + ham.n))) for r in self.rngs]
        self.configs = np.stack(starts)
        self.log_weights = None
        self._params_vec = None
        self.sweeps = 0
        self.stats = _Stats.empty(self.chain_count, self.levels)

    def _sync(self, params):
        vec = params.to_vector()
        if self._params_vec is None or not np.array_equal(vec, self._params_vec):
            C, L, n = self.configs.shape
            self.log_weights = log_weight(params, self.ham, self.configs.reshape(-1, n)).reshape(C, L)
            self._params_vec = vec.copy()

    def advance(self, params: RbmParams, steps: int, record_stride: int | None = None):
        """Run ``steps`` sweeps; return physical-level records ``(C, R, n)``."""
        self._sync(params)
        C, L, n = self.configs.shape
        width = _draw_width(n, L)
        u = np.stack([r.random((steps, width)) for r in self.rngs], axis=1)
        records = []
        for s in range(steps):
            _sweep(self._geo, params, self.ham, self.configs, self.log_weights, u[s], self.sweeps, self.stats)
            self.sweeps += 1
            if record_stride and (s + 1) % record_stride == 0:
                records.append(self.configs[:, -1].copy())
        if not records:
            return np.empty((C, 0, n), dtype=self.configs.dtype)
        return np.stack(records, axis=1)

    def sample(self, params: RbmParams, steps: int, record_stride: int, derivatives: bool = True) -> SampleBatch:
        """Advance and evaluate the records, chain-major then stride-major."""
        if record_stride < 1 or steps % record_stride:
            raise ConfigError(f"steps ({steps}) must be a positive multiple of record_stride ({record_stride})")
        rec = self.advance(params, steps, record_stride)
        C, R, n = rec.shape
        flat = rec.reshape(C * R, n)
        q = local_quantities(self.ham, params, flat, derivatives=derivatives)
        return SampleBatch(
            configs=flat,
            nu=q["nu"],
            eloc=q["eloc"],
            eloc_deriv=q.get("eloc_deriv"),
            chain_shape=(C, R),
        )

    def acceptance_rates(self) -> np.ndarray:
        """Per-chain acceptance rate of the physical level."""
        att = self.stats.attempts[:, -1]
        return np.where(att > 0, self.stats.accepts[:, -1] / np.maximum(att, 1), np.nan)

    def swap_rates(self) -> np.ndarray:
        att = self.stats.swap_attempts
        return np.where(att > 0, self.stats.swap_accepts / np.maximum(att, 1), np.nan)

    def write_diagnostics(self, path) -> None:
        """CSV of swap statistics for ladders, per-chain acceptance otherwise."""
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            if self.levels > 1:
                w.writerow(["level", "swap_pair", "attempts", "accepts"])
                for i in range(self.levels - 1):
                    w.writerow([i, f"{i}-{i + 1}", int(self.stats.swap_attempts[i]), int(self.stats.swap_accepts[i])])
            else:
                w.writerow(["chain", "acceptance_rate"])
                for c, rate in enumerate(self.acceptance_rates()):
                    w.writerow([c, repr(float(rate))])


def run_chains(ham: HamiltonianSpec, params: RbmParams, chain_count: int = 100, steps_per_iter: int | None = None,
               record_stride: int | None = None, levels: int = 1, seed: int = 123,
               ensemble: ChainEnsemble | None = None, derivatives: bool = True):
    """Advance (or create) an ensemble and return ``(batch, ensemble)``.

    Defaults are ``20 * n`` steps per call recorded every ``n`` steps.
    Passing the returned ensemble back in continues the same chains.
    """
    n = ham.n
    steps_per_iter = 20 * n if steps_per_iter is None else int(steps_per_iter)
    record_stride = n if record_stride is None else int(record_stride)
    if ensemble is None:
        ensemble = ChainEnsemble(ham, chain_count, levels, seed)
    return ensemble.sample(params, steps_per_iter, record_stride, derivatives=derivatives), ensemble
