import numpy as np
import pytest

import rgnvmc.optimizers as opt
from rgnvmc.estimators import EstimatorSet, estimate, exact_batch
from rgnvmc.exact import ground_state
from rgnvmc.exceptions import ConfigError, DataError, SizeError
from rgnvmc.hamiltonian import tfi, xxz
from rgnvmc.lattice import build_lattice
from rgnvmc.optimizers import (
    TRACE_COLUMNS, GuardState, PenaltySchedule, PreconditionerKind, SamplingConfig, apply_guard, compute_update,
    optimize, preconditioner, read_trace, schedule_values,
)
from rgnvmc.wavefunction import RbmParams, init_params, load_params

from conftest import random_params


def synthetic_est(p=5, seed=0, grad_scale=1.0):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(2 * p, p)) + 1j * rng.normal(size=(2 * p, p))
    S = A.conj().T @ A / (2 * p)
    H = rng.normal(size=(p, p)) + 1j * rng.normal(size=(p, p))
    g = grad_scale * (rng.normal(size=p) + 1j * rng.normal(size=p))
    return EstimatorSet(energy=-1.0, grad=g, metric=S, hess=H, energy_variance=0.1, sample_count=10)


def test_kind_parsing():
    assert PreconditionerKind.parse("RGN") is PreconditionerKind.RGN
    assert PreconditionerKind.parse("natural-gd") is PreconditionerKind.NGD
    with pytest.raises(ConfigError):
        PreconditionerKind.parse("adam")


def test_gd_update_is_scaled_gradient():
    est = synthetic_est()
    delta, res = compute_update("gd", est, 0.01, 1.0)
    np.testing.assert_array_equal(delta, -0.01 * est.grad)
    assert res == 0.0


def test_ngd_with_zero_metric():
    est = synthetic_est()
    est.metric = np.zeros_like(est.metric)
    delta, res = compute_update("ngd", est, 0.1, 0.5)
    np.testing.assert_allclose(delta, -(0.1 / 0.5) * est.grad, rtol=1e-12)
    assert res <= 1e-8


def test_rgn_without_hessian_equals_ngd():
    est = synthetic_est()
    est.hess = np.zeros_like(est.hess)
    d_rgn, _ = compute_update("rgn", est, 0.3, 0.02)
    d_ngd, _ = compute_update("ngd", est, 0.3, 0.02)
    np.testing.assert_allclose(d_rgn, d_ngd, rtol=1e-12)


def test_rgn_tends_to_ngd_for_small_eps():
    ham = tfi(build_lattice([6]), 1.0)
    est = estimate(exact_batch(ham, random_params(2, 6, scale=0.2, seed=4)))
    d_rgn, r1 = compute_update("rgn", est, 1e-6, 1e-3)
    d_ngd, r2 = compute_update("ngd", est, 1e-6, 1e-3)
    assert np.linalg.norm(d_rgn - d_ngd) <= 1e-3 * np.linalg.norm(d_ngd)
    assert max(r1, r2) <= 1e-8


def test_residual_is_small_for_well_posed_solve():
    est = synthetic_est(p=12, seed=3)
    for kind in ("ngd", "rgn"):
        delta, res = compute_update(kind, est, 0.5, 0.1)
        P = preconditioner(kind, est, 0.5, 0.1)
        assert res <= 1e-8
        assert np.linalg.norm(P @ delta + est.grad) <= 1e-8 * np.linalg.norm(est.grad)


def test_singular_preconditioner_falls_back_to_least_squares():
    est = synthetic_est(p=4)
    est.hess = -(est.metric + 0.1 * np.eye(4)) / 0.5
    delta, res = compute_update("rgn", est, 0.5, 0.1)
    assert np.all(np.isfinite(delta))


def test_update_rejects_non_finite_input():
    est = synthetic_est()
    est.grad[0] = np.nan
    with pytest.raises(DataError):
        compute_update("ngd", est, 0.1, 0.1)
    with pytest.raises(ConfigError):
        compute_update("ngd", synthetic_est(), 0.0, 0.1)


def test_schedule_examples():
    s = PenaltySchedule.defaults("rgn")
    assert schedule_values(s, 0) == (1e-3, 1e-3)
    eps, eta = schedule_values(s, 250)
    assert eps == pytest.approx(1.0, rel=1e-12)
    assert eta == pytest.approx(0.01, rel=1e-12)
    assert schedule_values(s, 500) == (1e3, 0.1)
    assert schedule_values(s, 10_000) == (1e3, 0.1)
    g = PenaltySchedule.defaults("gd")
    assert schedule_values(g, 500)[0] == 1e-2


def test_schedule_is_monotone_and_validated():
    s = PenaltySchedule.defaults("ngd", ramp_length=50)
    eps = [schedule_values(s, k)[0] for k in range(60)]
    assert np.all(np.diff(eps) >= 0)
    with pytest.raises(ConfigError):
        PenaltySchedule(1.0, 0.5, 1e-3, 1e-3)
    with pytest.raises(ConfigError):
        PenaltySchedule(-1.0, 1.0, 1e-3, 1e-3)
    with pytest.raises(ConfigError):
        schedule_values(s, -1)


def gd_recompute(g):
    return lambda e: (-e * g, 0.0)


def test_guard_first_iteration_passes():
    g = np.full(3, 1e6)
    sched = PenaltySchedule.defaults("gd", ramp_length=10)
    sched.position = 7
    delta, sched2, guard, eps, res = apply_guard(GuardState(), sched, gd_recompute(g), -0.1 * g, 0.1)
    assert guard.trigger_count == 0 and sched2.position == 7 and eps == 0.1 and res is None
    assert guard.prev_update_norm == pytest.approx(np.linalg.norm(0.1 * g))


def test_guard_boundary_is_inclusive():
    sched = PenaltySchedule.defaults("gd")
    guard = GuardState(prev_update_norm=1.0)
    delta = np.array([2.0, 0.0])
    out, _, g2, eps, _ = apply_guard(guard, sched, gd_recompute(delta), delta, 1.0)
    assert g2.trigger_count == 0 and np.array_equal(out, delta)
    out, s3, g3, eps, _ = apply_guard(guard, sched, gd_recompute(delta * 1.000001), delta * 1.000001, 1.0)
    assert g3.trigger_count == 1 and s3.position == 0 and eps == pytest.approx(0.1)


def test_guard_blow_up():
    g = np.array([100.0, 0.0])
    sched = PenaltySchedule.defaults("gd")
    sched.position = 40
    guard = GuardState(prev_update_norm=1.0)
    delta, sched2, guard2, eps, res = apply_guard(guard, sched, gd_recompute(g), -g, 1.0)
    assert guard2.last_attempts == 2 and not guard2.last_forced
    assert eps == pytest.approx(0.01)
    assert np.linalg.norm(delta) <= 2.0
    assert sched2.position == 0 and guard2.trigger_count == 1
    assert guard.trigger_count == 0  # input state untouched


def test_guard_gives_up_after_max_attempts():
    g = np.array([1e30])
    guard = GuardState(prev_update_norm=1.0)
    _, _, g2, eps, _ = apply_guard(guard, PenaltySchedule.defaults("gd"), gd_recompute(g), -g, 1.0)
    assert g2.last_attempts == 10 and g2.last_forced
    assert eps == pytest.approx(1e-10)


def test_guard_inside_optimizer(monkeypatch):
    # gradient grows a hundredfold for the second iteration only
    scales = iter([1.0, 100.0, 1.0, 1.0])

    def fake(ham, params, kind, sampling, ensemble=None):
        return synthetic_est(p=params.size, seed=0, grad_scale=next(scales))

    monkeypatch.setattr(opt, "iteration_estimates", fake)
    ham = tfi(build_lattice([4]), 1.0)
    res = optimize(ham, RbmParams.zeros(1, 4), "gd", iterations=4)
    guards = [r.guard for r in res.trace]
    assert guards[0] == 0 and guards[1] == 2
    # the ramp restarted, so the following iteration uses eps_min again
    assert res.trace[2].eps == 1e-3 and res.trace[2].guard == 0
    assert res.guard.trigger_count == 1


def test_zero_iterations_returns_start():
    ham = tfi(build_lattice([4]), 1.0)
    p = random_params(1, 4, seed=1)
    res = optimize(ham, p, "rgn", iterations=0)
    np.testing.assert_array_equal(res.params.to_vector(), p.to_vector())
    assert res.trace == []


def test_optimize_does_not_mutate_input():
    ham = tfi(build_lattice([4]), 1.0)
    p = random_params(1, 4, seed=1)
    before = p.to_vector().copy()
    optimize(ham, p, "ngd", iterations=3)
    np.testing.assert_array_equal(p.to_vector(), before)


def test_rgn_beats_gd_on_short_chain():
    ham = tfi(build_lattice([8]), 1.0)
    e0 = ground_state(ham).ground_energy
    p0 = init_params(2, 8, seed=1)
    err = {}
    for kind in ("gd", "rgn"):
        res = optimize(ham, p0, kind, iterations=200)
        err[kind] = abs(res.energies[-1] - e0) / abs(e0)
    assert err["rgn"] < err["gd"]
    assert err["rgn"] < 1e-4


def test_rgn_energy_decreases_from_small_init():
    ham = xxz(build_lattice([6]), 1.0)
    res = optimize(ham, init_params(1, 6, seed=2), "rgn", iterations=60)
    e = res.energies
    assert e[-1] < e[0]
    assert np.all(np.abs(np.array([r.energy.imag for r in res.trace])) < 1e-10)


def test_trace_and_checkpoints(tmp_path):
    ham = tfi(build_lattice([4]), 0.7)
    trace = tmp_path / "trace.csv"
    res = optimize(ham, init_params(1, 4), "rgn", iterations=6, trace_path=trace,
                   checkpoint_dir=tmp_path / "ck", checkpoint_stride=3, timing=False)
    header = trace.read_text().splitlines()[0].split(",")
    assert tuple(header) == TRACE_COLUMNS
    cols = read_trace(trace)
    assert len(cols["iter"]) == 6
    np.testing.assert_array_equal(cols["energy_re"], res.energies)
    assert np.all(cols["seconds"] == 0)
    ck = sorted(p.name for p in (tmp_path / "ck").iterdir())
    assert ck == ["params_000003.txt", "params_000006.txt"]
    np.testing.assert_allclose(load_params(tmp_path / "ck" / ck[-1]).to_vector(), res.params.to_vector())


def test_traces_are_deterministic(tmp_path):
    ham = tfi(build_lattice([4]), 1.0)
    sampling = SamplingConfig(mode="mcmc", chain_count=4, steps_multiplier=4)
    for name in ("a.csv", "b.csv"):
        optimize(ham, init_params(1, 4, seed=3), "rgn", sampling=sampling, iterations=5,
                 trace_path=tmp_path / name, timing=False)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_partial_trace_survives_abort(tmp_path, monkeypatch):
    ham = tfi(build_lattice([4]), 1.0)
    trace = tmp_path / "trace.csv"

    def stop(k, params, est, record):
        if k == 3:
            raise KeyboardInterrupt

    with pytest.raises(KeyboardInterrupt):
        optimize(ham, init_params(1, 4), "ngd", iterations=10, trace_path=trace, callback=stop)
    assert len(read_trace(trace)["iter"]) == 3


def test_non_finite_update_aborts(monkeypatch):
    monkeypatch.setattr(opt, "compute_update", lambda kind, est, eps, eta: (np.full(len(est.grad), np.inf), 0.0))
    with pytest.raises(DataError):
        optimize(tfi(build_lattice([4]), 1.0), init_params(1, 4), "gd", iterations=2)


def test_option_validation():
    ham = tfi(build_lattice([17]), 1.0)
    with pytest.raises(SizeError):
        optimize(ham, RbmParams.zeros(1, 17), iterations=1)
    with pytest.raises(ConfigError):
        SamplingConfig(mode="gibbs")
    with pytest.raises(ConfigError):
        optimize(tfi(build_lattice([4]), 1.0), RbmParams.zeros(1, 4), iterations=-1)


def test_tempered_sampling_runs():
    ham = xxz(build_lattice([4]), 1.0)
    sampling = SamplingConfig(mode="tempered", chain_count=3, levels=4, steps_multiplier=4)
    res = optimize(ham, init_params(1, 4, seed=5), "rgn", sampling=sampling, iterations=3)
    assert len(res.trace) == 3
    assert res.ensemble.configs.shape == (3, 4, 4)
