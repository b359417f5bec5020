import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import bosonic_flow, gaussian_covariance
from tatdyn import bosonic
from tatdyn.bosonic import BosonicParams, BosonicParamsError
from tatdyn.collective import tat_series
from tatdyn.observables import squeezing_from_moments

fields = st.floats(0.0, 1.0)


def test_parameters_at_optimal_field():
    p = BosonicParams.from_field(0.5)
    assert (p.chi, p.delta, p.lam) == (0.5, 0.0, 0.5)
    assert p.u == pytest.approx(1.0) and p.v == 0.0


def test_field_window_is_enforced():
    with pytest.raises(BosonicParamsError):
        BosonicParams.from_field(1.2)
    with pytest.raises(BosonicParamsError):
        BosonicParams.from_field(-0.1)
    with pytest.raises(BosonicParamsError):
        BosonicParams.from_field(0.5, coupling=0.0)


def test_pure_squeezing_at_optimal_field():
    p = BosonicParams.from_field(0.5)
    t = np.linspace(0, 4, 9)
    np.testing.assert_allclose(bosonic.quadrature_variance(p, np.pi / 4, t), 0.5 * np.exp(2 * 0.5 * t), rtol=1e-12)
    np.testing.assert_allclose(bosonic.quadrature_variance(p, 3 * np.pi / 4, t), 0.5 * np.exp(-2 * 0.5 * t),
                               rtol=1e-12)
    assert bosonic.min_variance_angle(p, 1.0).angle == pytest.approx(3 * np.pi / 4)


def test_vacuum_at_zero_time():
    for om in (0.0, 0.2, 0.5, 1.0):
        p = BosonicParams.from_field(om)
        for theta in np.linspace(0, np.pi, 7):
            assert bosonic.quadrature_variance(p, theta, 0.0) == pytest.approx(0.5, abs=1e-14)
        assert bosonic.boson_number(p, 0.0) == 0.0
        assert bosonic.min_variance_angle(p, 0.0).degenerate


@given(fields, st.floats(0.0, 8.0))
def test_quadratures_match_covariance_ode(omega, t_end):
    p = BosonicParams.from_field(omega)
    t = np.linspace(0, t_end, 6)
    sig = gaussian_covariance(bosonic_flow(p.chi, p.delta), t) if t_end > 0 else np.tile(0.5 * np.eye(2), (6, 1, 1))
    A, B, C = bosonic.quadrature_coefficients(p, t)
    scale = np.maximum(1.0, sig[:, 0, 0] + sig[:, 1, 1])
    np.testing.assert_allclose((A + B) / scale, sig[:, 0, 0] / scale, atol=1e-9)
    np.testing.assert_allclose((A - B) / scale, sig[:, 1, 1] / scale, atol=1e-9)
    np.testing.assert_allclose(C / scale, sig[:, 0, 1] / scale, atol=1e-9)


@given(fields, st.floats(0.0, 6.0))
def test_pure_state_uncertainty_product(omega, t):
    p = BosonicParams.from_field(omega)
    vmin, vmax = bosonic.extreme_variances(p, t)
    assert vmin * vmax == pytest.approx(0.25, rel=1e-9)


@given(st.floats(0.0, 1.0), st.floats(0.0, np.pi), st.floats(0.0, 5.0))
def test_reflection_symmetry(omega, theta, t):
    # (delta, theta, t) -> (-delta, theta + pi/2, -t)
    p = BosonicParams.from_field(omega)
    q = p.reflected()
    assert q.delta == pytest.approx(-p.delta, abs=1e-15)
    a = bosonic.quadrature_variance(p, theta, t)
    b = bosonic.quadrature_variance(q, theta + np.pi / 2, -t)
    assert b == pytest.approx(a, rel=1e-9, abs=1e-12)


def test_boson_number_closed_forms():
    t = np.linspace(0, 5, 11)
    p = BosonicParams.from_field(0.3)
    lam = math.sqrt(0.3 * 0.7)
    np.testing.assert_allclose(bosonic.boson_number(p, t), (0.5 / lam) ** 2 * np.sinh(lam * t) ** 2, rtol=1e-12)
    p0 = BosonicParams.from_field(0.0)
    np.testing.assert_allclose(bosonic.boson_number(p0, t), (0.5 * t) ** 2, rtol=1e-12)
    # boson number is the vacuum-subtracted trace
    A, _, _ = bosonic.quadrature_coefficients(p, t)
    np.testing.assert_allclose(A - 0.5, bosonic.boson_number(p, t), rtol=1e-9, atol=1e-14)


@given(st.floats(0.001, 0.999))
def test_bogolyubov_normalization(omega):
    p = BosonicParams.from_field(omega)
    assert p.u**2 - p.v**2 == pytest.approx(1.0, rel=1e-9)


def test_edges_of_window_are_degenerate():
    for om in (0.0, 1.0):
        p = BosonicParams.from_field(om)
        assert p.lam == 0.0 and math.isinf(p.u)
        vmin, vmax = bosonic.extreme_variances(p, [0.0, 3.0])
        np.testing.assert_allclose(vmin * vmax, 0.25, rtol=1e-12)


def test_small_lambda_branch_is_continuous():
    # fields straddling the switch between closed form and linear flow
    lam_switch = bosonic._SMALL_LAMBDA * 0.5
    t = np.linspace(0, 10, 5)
    om_lo = 0.5 * (1 - math.sqrt(1 - 4 * (lam_switch * 0.999) ** 2))
    om_hi = 0.5 * (1 - math.sqrt(1 - 4 * (lam_switch * 1.001) ** 2))
    a = np.array(bosonic.quadrature_coefficients(BosonicParams.from_field(om_lo), t))
    b = np.array(bosonic.quadrature_coefficients(BosonicParams.from_field(om_hi), t))
    np.testing.assert_allclose(a, b, rtol=1e-3, atol=1e-12)


@pytest.mark.parametrize("omega", [0.2, 0.5, 0.8])
def test_anti_squeezing_rate(omega):
    p = BosonicParams.from_field(omega)
    t = np.linspace(2, 5, 31) / p.lam
    _, vmax = bosonic.extreme_variances(p, t)
    slope = np.polyfit(t, np.log(vmax), 1)[0]
    assert slope == pytest.approx(2 * p.lam, rel=0.01)


def _antisqueezed_ratio(N, omega, t):
    p = BosonicParams.from_field(omega)
    ser = tat_series(N, omega, t)
    exact = np.linalg.eigvalsh(ser.covariance[:, 1:, 1:])[:, 1]
    return N / 2 * bosonic.extreme_variances(p, t)[1] / exact


@pytest.mark.parametrize("omega", [0.2, 0.5, 0.8])
def test_antisqueezed_variance_while_depletion_below_n_over_20(omega):
    # stated cross-check regime; the linear model loses Bloch-sphere curvature
    # well before n reaches N/20, so this is expected to fail
    N = 1024
    p = BosonicParams.from_field(omega)
    t = np.linspace(0.01, 12, 600)
    t = t[bosonic.boson_number(p, t) < N / 20]
    np.testing.assert_allclose(_antisqueezed_ratio(N, omega, t), 1.0, rtol=0.05)


@pytest.mark.parametrize("omega", [0.2, 0.5, 0.8])
def test_antisqueezed_variance_at_low_depletion(omega):
    N = 1024
    p = BosonicParams.from_field(omega)
    t = np.linspace(0.01, 12, 600)
    t = t[bosonic.boson_number(p, t) < N / 200]
    np.testing.assert_allclose(_antisqueezed_ratio(N, omega, t), 1.0, rtol=0.05)


@pytest.mark.parametrize("omega", [0.1, 0.3, 0.5, 0.7, 0.9])
def test_squeezing_matches_exact_before_half_optimal_time(omega):
    N = 512
    t = np.linspace(0.01, 20, 2000)
    ser = tat_series(N, omega, t)
    xi2 = squeezing_from_moments(ser.mean, ser.covariance, N)[0]
    keep = t <= 0.5 * t[np.argmin(xi2)]
    xi2_b, valid = bosonic.squeezing_curve(BosonicParams.from_field(omega), N, t[keep])
    assert valid.all()
    np.testing.assert_allclose(xi2_b, xi2[keep], rtol=0.05)


def test_validity_flag_tracks_depletion():
    p = BosonicParams.from_field(0.5)
    N = 64
    t_cross = math.asinh(math.sqrt(N / 2)) / p.lam  # n = N/2 at lambda = chi
    assert bosonic.squeezing_estimate(p, N, 0.99 * t_cross).valid
    assert not bosonic.squeezing_estimate(p, N, 1.01 * t_cross).valid
    est = bosonic.squeezing_estimate(p, N, 1.0)
    assert est.xi2 == pytest.approx(2 * bosonic.extreme_variances(p, 1.0)[0] / (1 - 2 * est.boson_number / N) ** 2)
