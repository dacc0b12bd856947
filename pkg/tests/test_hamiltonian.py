import numpy as np
import pytest

from rgnvmc.exceptions import ConfigError, ShapeError, ZeroAmplitudeError
from rgnvmc.hamiltonian import (
    all_configs, config_index, connections, connection_arrays, local_energy, local_energy_derivatives,
    local_quantities, tfi, xxz,
)
from rgnvmc.lattice import build_lattice
from rgnvmc.wavefunction import RbmParams, log_derivatives, log_psi

from conftest import basis_configs, pauli_hamiltonian, random_params


def matrix_from_connections(ham):
    n = ham.n
    configs = all_configs(n)
    M = np.zeros((2 ** n, 2 ** n))
    for col, cfg in enumerate(configs):
        c = connections(ham, cfg)
        M[col, col] += c.diagonal
        for other, el in zip(c.configs, c.elements):
            M[config_index(other), col] += el
    return M


def test_basis_order_matches_kronecker_order():
    assert np.array_equal(all_configs(3), basis_configs(3))
    assert np.array_equal(config_index(all_configs(5)), np.arange(32))


@pytest.mark.parametrize("model, dims, coupling", [
    ("tfi", (4,), 1.5), ("tfi", (5,), 0.7), ("tfi", (2, 3), 1.0), ("tfi", (2,), 0.3),
    ("xxz", (4,), 1.0), ("xxz", (6,), 0.5), ("xxz", (2, 2), -0.8), ("xxz", (5,), 2.0), ("xxz", (3, 2), 1.3),
])
def test_connections_match_pauli_oracle(model, dims, coupling):
    lat = build_lattice(dims)
    ham = tfi(lat, coupling) if model == "tfi" else xxz(lat, coupling)
    M = matrix_from_connections(ham)
    ref = pauli_hamiltonian(model, dims, coupling)
    assert np.abs(ref.imag).max() == 0
    np.testing.assert_allclose(M, ref.real, atol=1e-14)
    np.testing.assert_array_equal(M, M.T)


def test_tfi_example():
    ham = tfi(build_lattice([4]), 1.5)
    c = connections(ham, np.ones(4, dtype=np.int8))
    assert c.diagonal == -4
    assert len(c.elements) == 4 and np.all(c.elements == -1.5)
    assert sorted((c.configs == -1).argmax(axis=1).tolist()) == [0, 1, 2, 3]


def test_xxz_all_up_example():
    ham = xxz(build_lattice([4]), 1.0)
    c = connections(ham, np.ones(4, dtype=np.int8))
    assert c.diagonal == -4
    # aligned pairs map to the doubly flipped pair with element -2
    assert np.all(c.elements == -2) and len(c.elements) == 4
    assert np.all((c.configs == -1).sum(axis=1) == 2)


def test_xxz_conserves_staggered_magnetization(rng):
    lat = build_lattice([4, 4])
    ham = xxz(lat, 0.7)
    stag = np.where(lat.sublattice == 0, 1, -1)
    for cfg in rng.choice([-1, 1], size=(50, lat.n)).astype(np.int8):
        c = connections(ham, cfg)
        assert np.all(c.configs @ stag == cfg @ stag)


def test_xxz_does_not_conserve_total_magnetization():
    ham = xxz(build_lattice([4]), 1.0)
    c = connections(ham, np.ones(4, dtype=np.int8))
    assert np.all(c.configs.sum(axis=1) == 0)


def test_xxz_antialigned_pairs_have_no_connections():
    ham = xxz(build_lattice([4]), 1.0)
    c = connections(ham, np.array([1, -1, 1, -1], dtype=np.int8))
    assert len(c.elements) == 0
    assert c.diagonal == 4


def test_local_energy_zero_params_tfi(rng):
    lat = build_lattice([6])
    ham = tfi(lat, 0.8)
    p = RbmParams.zeros(2, 6)
    for cfg in rng.choice([-1, 1], size=(10, 6)):
        zz = sum(cfg[i] * cfg[j] for i, j in lat.bonds)
        assert np.isclose(local_energy(ham, p, cfg), -zz - 0.8 * 6)
    assert np.all(local_energy_derivatives(ham, p, cfg) == 0)


def test_local_energy_zero_params_xxz():
    lat = build_lattice([4])
    ham = xxz(lat, 1.0)
    H = pauli_hamiltonian("xxz", (4,), 1.0).real
    e = local_energy(ham, RbmParams.zeros(1, 4), np.ones(4, dtype=np.int8))
    assert np.isclose(e, (H @ np.ones(16))[0])
    assert np.isclose(e, -4 - 8)


@pytest.mark.parametrize("model, coupling", [("tfi", 1.2), ("xxz", 0.6)])
def test_local_energy_against_dense_oracle(model, coupling):
    dims = (8,)
    lat = build_lattice(dims)
    ham = tfi(lat, coupling) if model == "tfi" else xxz(lat, coupling)
    p = random_params(2, 8, scale=0.2, seed=3)
    configs = basis_configs(8)
    psi = np.exp(log_psi(p, lat, configs))
    H = pauli_hamiltonian(model, dims, coupling)
    q = local_quantities(ham, p, configs)
    np.testing.assert_allclose(q["eloc"], (H @ psi) / psi, rtol=1e-10)
    rq = np.vdot(psi, H @ psi).real / np.vdot(psi, psi).real
    w = np.abs(psi) ** 2
    assert abs(w @ q["eloc"] / w.sum() - rq) < 1e-10 * abs(rq)


@pytest.mark.parametrize("model", ["tfi", "xxz"])
def test_local_energy_derivatives_against_dense_oracle(model):
    dims = (4,)
    lat = build_lattice(dims)
    ham = tfi(lat, 0.9) if model == "tfi" else xxz(lat, 1.4)
    p = random_params(2, 4, scale=0.3, seed=8)
    configs = basis_configs(4)
    psi = np.exp(log_psi(p, lat, configs))
    nu = log_derivatives(p, lat, configs)
    H = pauli_hamiltonian(model, dims, ham.coupling).real
    # psi_k = d psi / d theta_k via holomorphic central differences
    vec = p.to_vector()
    h = 1e-5
    for k in [0, 3, 5, p.size - 1]:
        e = np.zeros_like(vec)
        e[k] = h
        amp = lambda v: np.exp(log_psi(RbmParams.from_vector(v, 2, 4), lat, configs))
        dk = 0.5 * ((amp(vec + e) - amp(vec - e)) - 1j * (amp(vec + 1j * e) - amp(vec - 1j * e))) / (2 * h)
        np.testing.assert_allclose(dk, nu[:, k] * psi, rtol=1e-8, atol=1e-10)
        ref = (H @ dk) / psi
        got = np.array([local_energy_derivatives(ham, p, c)[k] for c in configs])
        np.testing.assert_allclose(got, ref, rtol=1e-6, atol=1e-8)


def test_zero_variance_at_h_zero():
    # psi uniform over the mostly-negative sector; at h = 0 the all-down state is an eigenstate
    lat = build_lattice([6])
    ham = tfi(lat, 0.0)
    q = local_quantities(ham, RbmParams.zeros(1, 6), np.array([[-1] * 6, [1] * 6]), derivatives=False)
    assert np.all(q["eloc"] == -6)


def test_batched_and_single_agree(rng):
    lat = build_lattice([3, 2])
    ham = xxz(lat, 0.4)
    p = random_params(2, 6, seed=1)
    cfgs = rng.choice([-1, 1], size=(7, 6))
    q = local_quantities(ham, p, cfgs)
    for i, c in enumerate(cfgs):
        assert np.isclose(local_energy(ham, p, c), q["eloc"][i], rtol=1e-13)
        np.testing.assert_allclose(local_energy_derivatives(ham, p, c), q["eloc_deriv"][i], rtol=1e-12)


def test_padding_slots_are_zero():
    ham = xxz(build_lattice([4]), 1.0)
    diag, conn, elem = connection_arrays(ham, np.array([[1, -1, 1, -1]]))
    assert conn.shape == (1, 4, 4)
    assert np.all(elem == 0)


def test_zero_amplitude_raises(monkeypatch):
    import rgnvmc.hamiltonian as hmod

    lat = build_lattice([2])
    real = hmod.log_psi_and_derivatives

    def vanishing(params, lattice, configs):
        lp, nu = real(params, lattice, configs)
        return np.full_like(lp, -np.inf), nu

    monkeypatch.setattr(hmod, "log_psi_and_derivatives", vanishing)
    with pytest.raises(ZeroAmplitudeError):
        local_energy(tfi(lat, 1.0), RbmParams.zeros(1, 2), np.array([-1, -1]))


def test_errors():
    lat = build_lattice([4])
    with pytest.raises(ConfigError):
        tfi(lat, np.nan)
    with pytest.raises(ShapeError):
        connections(tfi(lat, 1.0), np.ones(5))
