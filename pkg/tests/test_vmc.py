import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from rgnvmc import VMCGroundState
from rgnvmc.config import RunConfig
from rgnvmc.exact import exact_energy, ground_state
from rgnvmc.exceptions import ConfigError, UnsupportedModelError
from rgnvmc.hamiltonian import all_configs
from rgnvmc.wavefunction import log_derivatives, log_psi

from conftest import random_params


def small(**kw):
    base = dict(model="tfi", coupling=1.0, dims=4, alpha=1, iterations=20)
    base.update(kw)
    return VMCGroundState(**base)


def test_get_params_and_clone():
    est = small(eps_max=5.0)
    params = est.get_params()
    assert params["eps_max"] == 5.0 and params["dims"] == 4
    twin = clone(est)
    assert twin.get_params() == params
    est.set_params(alpha=3)
    assert est.alpha == 3 and twin.alpha == 1


def test_fit_exact_mode():
    est = small().fit()
    assert est.energy_ == pytest.approx(est.trace_[-1].energy.real)
    assert est.energy_stderr_ == 0.0
    assert est.energy_per_site_ == pytest.approx(est.energy_ / 4)
    assert est.score() == pytest.approx(-est.energy_per_site_)
    e0 = ground_state(est.hamiltonian_).ground_energy
    assert est.energy_ >= e0 - 1e-10
    summary = est.summary()
    assert summary["final_energy_per_site"] == est.energy_per_site_
    assert summary["guard_triggers"] == 0


def test_fit_zero_iterations_reports_initial_energy():
    est = small(iterations=0).fit()
    assert est.energy_ == pytest.approx(exact_energy(est.hamiltonian_, est.params_))


def test_fit_mcmc_mode():
    # a nearly uniform psi accepts every flip, and stride-n records then share one parity class
    est = small(sampling="mcmc", chain_count=4, steps_multiplier=2, iterations=3, final_multiplier=10,
                init_scale=0.3).fit()
    assert est.ensemble_ is not None
    assert np.isfinite(est.energy_) and est.energy_stderr_ > 0


def test_warm_start_from_given_params():
    p = random_params(1, 4, seed=2)
    est = small(iterations=0).fit(initial_params=p)
    np.testing.assert_array_equal(est.params_.to_vector(), p.to_vector())
    with pytest.raises(ConfigError):
        small().fit(initial_params=random_params(1, 6))


def test_transform_and_score_samples():
    est = small(iterations=5).fit()
    X = all_configs(4)
    nu = est.transform(X)
    assert nu.shape == (16, est.params_.size)
    np.testing.assert_allclose(nu, log_derivatives(est.params_, est.hamiltonian_.lattice, X))
    np.testing.assert_allclose(est.score_samples(X), 2 * log_psi(est.params_, est.hamiltonian_.lattice, X).real)


@pytest.mark.parametrize("bad", [np.ones((2, 5)), np.full((2, 4), 2), np.array([[1, -1, np.nan, 1]])])
def test_sample_validation(bad):
    est = small(iterations=1).fit()
    with pytest.raises(ValueError):
        est.transform(bad)


def test_unfitted():
    with pytest.raises(NotFittedError):
        small().transform(np.ones((1, 4)))


def test_from_config_matches_direct():
    cfg = RunConfig(model="xxz", coupling=0.8, dims=(4,), alpha=1, iterations=4, timing=False)
    a = VMCGroundState.from_config(cfg).fit()
    b = VMCGroundState(model="xxz", coupling=0.8, dims=(4,), alpha=1, iterations=4, timing=False).fit()
    assert a.energy_ == b.energy_


def test_invalid_model_and_lattice():
    with pytest.raises(ConfigError):
        small(model="ising").fit()
    with pytest.raises(UnsupportedModelError):
        small(model="xxz", dims=5, sampling="mcmc", iterations=1).fit()
