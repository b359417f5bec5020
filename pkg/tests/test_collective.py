import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import all_to_all_pair, brute_force_hamiltonian, brute_force_moments, dicke_matrices, site_operator
from tatdyn import collective
from tatdyn.collective import (DickeState, EvolutionError, Propagator, build_tat_hamiltonian, coherent_x, evolve,
                               moments, tat_series)
from tatdyn.observables import squeezing_from_moments


def _random_state(n, seed, basis="z"):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=n + 1) + 1j * rng.normal(size=n + 1)
    return DickeState(n, v / np.linalg.norm(v), basis)


def _dense_moments(state):
    jx, jy, jz = dicke_matrices(state.n_spins)
    psi = state.to_z().amplitudes
    ops = [jx, jy, jz]
    mean = np.array([np.vdot(psi, J @ psi).real for J in ops])
    cov = np.array([[0.5 * np.vdot(psi, (A @ B + B @ A) @ psi).real - mean[a] * mean[b]
                     for b, B in enumerate(ops)] for a, A in enumerate(ops)])
    return mean, cov


def test_two_spin_matrix_matches_triplet_projection():
    H = build_tat_hamiltonian(2, 0.5).dense()
    full = brute_force_hamiltonian(all_to_all_pair(2), 0.5).toarray()
    # triplet states m = -1, 0, 1 in the basis ordering |s1 s2> with 0 = up
    up, dn = np.array([1, 0]), np.array([0, 1])
    trip = np.array([np.kron(dn, dn), (np.kron(up, dn) + np.kron(dn, up)) / np.sqrt(2), np.kron(up, up)]).T
    proj = trip.T @ full @ trip
    diff = proj - H
    assert np.allclose(diff, diff[0, 0] * np.eye(3), atol=1e-14)


def test_oat_limit_is_diagonal():
    h = build_tat_hamiltonian(10, 0.0)
    assert np.all(h.off_diagonal == 0)
    np.testing.assert_allclose(h.diagonal, h.diagonal[::-1])
    psi = _random_state(10, 1)
    out = evolve(psi, h, [0.0, 0.7, 3.1])
    for s in out:
        np.testing.assert_allclose(np.abs(s.amplitudes) ** 2, np.abs(psi.amplitudes) ** 2, atol=1e-13)


def test_hamiltonian_preconditions():
    with pytest.raises(ValueError):
        build_tat_hamiltonian(1, 0.1)
    with pytest.raises(ValueError):
        build_tat_hamiltonian(4, 0.1, coupling=0.0)


def test_evolve_identity_at_zero_and_grid_checks():
    psi = coherent_x(12)
    h = build_tat_hamiltonian(12, 0.3)
    out = evolve(psi, h, [0.0])
    np.testing.assert_allclose(out[0].amplitudes, psi.amplitudes, atol=1e-13)
    with pytest.raises(ValueError):
        evolve(psi, h, [1.0, 0.5])
    with pytest.raises(EvolutionError):
        evolve(DickeState(12, 2 * psi.amplitudes), h, [0.0, 1.0])


def test_oat_variance_vs_full_hilbert_space():
    t = np.linspace(0, 6, 13)
    ser = tat_series(4, 0.0, t)
    _, cov = brute_force_moments(all_to_all_pair(4), 0.0, t)
    np.testing.assert_allclose(ser.covariance[:, 1, 1], cov[:, 1, 1], atol=1e-10)


def test_moments_vs_full_hilbert_space_n6():
    ser = tat_series(6, 0.3, [1.0])
    mean, cov = brute_force_moments(all_to_all_pair(6), 0.3, [1.0])
    np.testing.assert_allclose(ser.mean, mean, atol=1e-10)
    np.testing.assert_allclose(ser.covariance, cov, atol=1e-10)


def test_oat_magnetization_closed_form():
    # H = (J/N) Jz^2 from |+x>: <Jx> = (N/2) cos^{N-1}(J t / N)
    N = 100
    t = np.linspace(0, 40, 81)
    ser = tat_series(N, 0.0, t)
    np.testing.assert_allclose(ser.mean[:, 0], N / 2 * np.cos(t / N) ** (N - 1), atol=1e-9)


def test_coherent_state_moments():
    for basis in ("x", "z"):
        m = moments(coherent_x(40, basis))
        np.testing.assert_allclose(m.mean_J, [20, 0, 0], atol=1e-12)
        np.testing.assert_allclose(m.covariance, np.diag([0, 10, 10]), atol=1e-10)
    assert collective.odd_parity_weight(coherent_x(40)) < 1e-12


def test_basis_round_trip():
    psi = _random_state(9, 3)
    np.testing.assert_allclose(psi.to_x().to_z().amplitudes, psi.amplitudes, atol=1e-12)
    # |m = N/2>_x is the x coherent state
    np.testing.assert_allclose(np.abs(coherent_x(9, "x").to_z().amplitudes), np.abs(coherent_x(9).amplitudes),
                               atol=1e-12)


@given(st.integers(2, 30), st.integers(0, 10**6), st.sampled_from(["x", "z"]))
def test_moments_match_dense_operators(n, seed, basis):
    state = _random_state(n, seed, basis)
    m = moments(state)
    mean, cov = _dense_moments(state)
    np.testing.assert_allclose(m.mean_J, mean, atol=1e-10 * n)
    np.testing.assert_allclose(m.covariance, cov, atol=1e-9 * n * n)


@given(st.integers(2, 60), st.integers(0, 10**6))
def test_total_spin_sum_rule(n, seed):
    state = _random_state(n, seed)
    j = n / 2
    assert collective.total_spin_squared(state) == pytest.approx(j * (j + 1), rel=1e-12)


@given(st.integers(4, 200), st.floats(0.0, 1.5), st.floats(0.0, 20.0))
def test_evolution_invariants(n, omega, t_end):
    h = build_tat_hamiltonian(n, omega)
    states = evolve(coherent_x(n), h, np.linspace(0, t_end, 5))
    e0 = collective.energy(states[0], h)
    j = n / 2
    for s in states:
        assert s.norm == pytest.approx(1.0, abs=1e-10)
        assert collective.energy(s, h) == pytest.approx(e0, rel=1e-9, abs=1e-9)
        m = moments(s)
        assert abs(m.mean_J[1]) < 1e-9 * n and abs(m.mean_J[2]) < 1e-9 * n
        assert np.linalg.eigvalsh(m.covariance).min() > -1e-9 * n * n
        assert np.trace(m.covariance) + m.mean_J @ m.mean_J == pytest.approx(j * (j + 1), rel=1e-10)
        assert collective.odd_parity_weight(s) < 1e-10


def test_short_time_min_variance_exponential():
    N, omega = 512, 0.5
    lam = 0.5
    t = np.linspace(0.2, 2.0, 10)
    ser = tat_series(N, omega, t)
    _, _, vmin = squeezing_from_moments(ser.mean, ser.covariance, N)
    np.testing.assert_allclose(vmin, N / 4 * np.exp(-2 * lam * t), rtol=0.02)


def test_reflected_field_angle_shift_under_time_reversal():
    N = 256
    psi0 = coherent_x(N).amplitudes
    t = np.linspace(0.01, 0.6, 25)  # below 0.2 t_opt for these fields
    for omega in (0.2, 0.35):
        fwd = Propagator(build_tat_hamiltonian(N, omega)).amplitudes(psi0, t)
        bwd = Propagator(build_tat_hamiltonian(N, 1 - omega)).amplitudes(psi0, -t)
        a1 = squeezing_from_moments(*collective.moment_arrays(fwd, N), N)[1]
        a2 = squeezing_from_moments(*collective.moment_arrays(bwd, N), N)[1]
        shift = np.mod(a2 - a1, np.pi)
        np.testing.assert_allclose(shift, np.pi / 2, rtol=0.05)


def test_series_matches_per_state_moments():
    t = np.linspace(0, 3, 4)
    ser = tat_series(30, 0.4, t, chunk=2)
    states = evolve(coherent_x(30), build_tat_hamiltonian(30, 0.4), t)
    for i, s in enumerate(states):
        m = moments(s, t[i])
        np.testing.assert_allclose(ser.mean[i], m.mean_J, atol=1e-11)
        np.testing.assert_allclose(ser.covariance[i], m.covariance, atol=1e-10)


def test_site_operator_oracle_sanity():
    # the oracle's single-site operators obey [Sx, Sy] = i Sz
    sx, sy, sz = (site_operator(a, 1, 3).toarray() for a in "xyz")
    np.testing.assert_allclose(sx @ sy - sy @ sx, 1j * sz, atol=1e-15)
