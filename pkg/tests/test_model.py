import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from spatialdct.errors import DimensionError, InvalidCovarianceError, InvalidParameterError
from spatialdct.model import (
    AngularSpreadParams, ChannelRealization, CovarianceMatrix, LinkGains, TrainingSequence,
    UlaGeometry, angular_kernel, assemble_received, correlate, covariance_sqrt, draw_channel,
    exponential_correlation, multipath_channel, practical_correlation, ula_response,
)


# ---------------------------------------------------------------- exponential model

def test_exponential_two_by_two():
    np.testing.assert_allclose(np.asarray(exponential_correlation(2, 0.5)), [[1, 0.5], [0.5, 1]])


def test_exponential_rho_zero_is_identity():
    np.testing.assert_allclose(np.asarray(exponential_correlation(3, 0)), np.eye(3))


def test_exponential_eigenvalues_by_hand():
    w = np.linalg.eigvalsh(np.asarray(exponential_correlation(2, 0.9)))
    np.testing.assert_allclose(sorted(w), [0.1, 1.9])


def test_exponential_complex_rho_is_hermitian():
    r = np.asarray(exponential_correlation(5, 0.6 * np.exp(0.4j)))
    np.testing.assert_allclose(r, r.conj().T)
    assert r[2, 0] == pytest.approx((0.6 * np.exp(0.4j)) ** 2)


def test_exponential_rejects_bad_arguments():
    with pytest.raises(InvalidParameterError):
        exponential_correlation(0, 0.5)
    with pytest.raises(InvalidParameterError):
        exponential_correlation(3, 1.2)


@given(M=st.integers(1, 24), rho=st.floats(0, 0.99))
def test_exponential_is_psd(M, rho):
    w = np.linalg.eigvalsh(np.asarray(exponential_correlation(M, rho)))
    assert w.min() > -1e-10


# ---------------------------------------------------------------- ULA and practical model

def test_ula_broadside_is_all_ones():
    np.testing.assert_allclose(ula_response(UlaGeometry(6), 0.0), np.ones(6))


def test_ula_endfire_alternates():
    np.testing.assert_allclose(ula_response(UlaGeometry(2), np.pi / 2), [1, -1], atol=1e-12)


def test_ula_thirty_degrees_quarter_turn_ramp():
    a = ula_response(UlaGeometry(4), np.deg2rad(30))
    np.testing.assert_allclose(a, np.exp(-1j * np.pi / 2 * np.arange(4)), atol=1e-12)


def test_geometry_validation():
    with pytest.raises(InvalidParameterError):
        UlaGeometry(0)
    with pytest.raises(InvalidParameterError):
        UlaGeometry(4, spacing=0)
    with pytest.raises(InvalidParameterError):
        AngularSpreadParams(np.pi / 2, 0.1)
    with pytest.raises(InvalidParameterError):
        AngularSpreadParams(0.1, -0.1)
    with pytest.raises(InvalidParameterError):
        AngularSpreadParams(0.1, 0.1, "laplace")


def test_zero_spread_collapses_to_rank_one():
    geom = UlaGeometry(6)
    theta = np.deg2rad(25)
    r = np.asarray(practical_correlation(geom, AngularSpreadParams(theta, 0.0)))
    a = ula_response(geom, theta)
    np.testing.assert_allclose(r, np.outer(a, a.conj()), atol=1e-12)
    assert np.linalg.matrix_rank(r, tol=1e-9) == 1


@pytest.mark.parametrize("law", ["uniform", "gaussian"])
def test_practical_unit_diagonal(law):
    r = np.asarray(practical_correlation(UlaGeometry(8), AngularSpreadParams(0.3, 0.4, law)))
    np.testing.assert_allclose(np.diag(r), 1.0)


def test_uniform_kernel_diagonal_is_one():
    np.testing.assert_allclose(np.diag(angular_kernel(5, 0.7, "uniform")), 1.0)


def _uniform_omega_spread(delta_omega, mean_deg, spacing=0.5):
    # span whose equivalent uniform half-width in omega equals delta_omega
    theta = np.deg2rad(mean_deg)
    span = 2 * delta_omega / (2 * np.pi * spacing * np.cos(theta))
    return AngularSpreadParams(theta - span / 2, span, "uniform")


@pytest.mark.parametrize("M", [4, 8])
@pytest.mark.parametrize("delta_omega", [0.1, 0.3, 0.5])
@pytest.mark.parametrize("mean_deg", [20, 40])
def test_practical_matches_angle_quadrature_samples(M, delta_omega, mean_deg):
    geom = UlaGeometry(M)
    spread = _uniform_omega_spread(delta_omega, mean_deg)
    r = np.asarray(practical_correlation(geom, spread))
    # midpoint rule over 10^4 angles uniform on the spread
    n = 10_000
    theta = spread.theta_start + (np.arange(n) + 0.5) / n * spread.span
    a = np.exp(-1j * np.outer(np.arange(M), geom.spatial_frequency(theta)))
    ref = a @ a.conj().T / n
    assert np.linalg.norm(r - ref) / np.linalg.norm(ref) < 0.05


def test_practical_matches_scipy_quadrature():
    geom = UlaGeometry(4)
    spread = _uniform_omega_spread(0.3, 20)
    r = np.asarray(practical_correlation(geom, spread))
    n = np.arange(4)

    def outer(theta):
        a = np.exp(-1j * n * geom.spatial_frequency(theta))
        return np.outer(a, a.conj()).ravel().view(float)

    lo, hi = spread.theta_start, spread.theta_start + spread.span
    val, _ = integrate.quad_vec(outer, lo, hi)
    ref = val.view(complex).reshape(4, 4) / spread.span
    assert np.linalg.norm(r - ref) / np.linalg.norm(ref) < 0.05


def test_uniform_kernel_is_exact_omega_average():
    # uniform omega on [w0 - d, w0 + d] gives exactly D_a sinc D_a^H
    M, w0, d = 6, 0.8, 0.35
    grid = w0 + d * (2 * (np.arange(20_000) + 0.5) / 20_000 - 1)
    a = np.exp(-1j * np.outer(np.arange(M), grid))
    ref = a @ a.conj().T / grid.size
    b = angular_kernel(M, d, "uniform")
    a0 = np.exp(-1j * np.arange(M) * w0)
    np.testing.assert_allclose((a0[:, None] * b) * a0.conj()[None, :], ref, atol=1e-6)


@given(M=st.integers(1, 16), start=st.floats(0, 1.5), span=st.floats(0, 0.6),
       law=st.sampled_from(["uniform", "gaussian"]))
def test_practical_is_hermitian_psd(M, start, span, law):
    r = np.asarray(practical_correlation(UlaGeometry(M), AngularSpreadParams(start, span, law)))
    np.testing.assert_allclose(r, r.conj().T, atol=1e-12)
    assert np.linalg.eigvalsh(r).min() > -1e-9 * M


def test_multipath_single_path_is_steering():
    geom = UlaGeometry(5)
    np.testing.assert_allclose(multipath_channel(geom, [0.4], [2.0]), 2 * ula_response(geom, 0.4))
    with pytest.raises(DimensionError):
        multipath_channel(geom, [0.1, 0.2], [1.0])


# ---------------------------------------------------------------- covariance container

def test_covariance_rejects_non_hermitian_and_non_psd():
    with pytest.raises(InvalidCovarianceError):
        CovarianceMatrix([[1, 2], [0, 1]])
    with pytest.raises(InvalidCovarianceError):
        CovarianceMatrix([[1, 2], [2, 1]])
    with pytest.raises(DimensionError):
        CovarianceMatrix(np.ones(3))


def test_covariance_eig_descending_and_trace():
    c = exponential_correlation(4, 0.5)
    w, v = c.eig
    assert np.all(np.diff(w) <= 0)
    assert c.trace() == pytest.approx(4)
    np.testing.assert_allclose((v * w) @ v.conj().T, np.asarray(c), atol=1e-12)


def test_covariance_sqrt_squares_back(rng):
    from conftest import random_psd

    r = random_psd(rng, 6, 3)
    s = covariance_sqrt(r)
    np.testing.assert_allclose(s @ s, r, atol=1e-10)


def test_link_gains_from_beta():
    g = LinkGains.from_beta(3, 1.0)
    np.testing.assert_allclose(g.alpha, np.ones((3, 3)))
    g = LinkGains.from_beta(2, 4.0)
    np.testing.assert_allclose(g.alpha, [[1, 0.25], [0.25, 1]])
    np.testing.assert_allclose(g.beta, [[1, 4], [4, 1]])
    with pytest.raises(InvalidParameterError):
        LinkGains.from_beta(2, 0)


# ---------------------------------------------------------------- channel draws

def test_zero_covariance_draws_zero():
    h = draw_channel(np.zeros((4, 4)), np.random.default_rng(0))
    assert isinstance(h, ChannelRealization)
    np.testing.assert_array_equal(h.h, 0)


def test_identity_covariance_unit_variance():
    n = 100_000
    h = draw_channel(np.eye(3), np.random.default_rng(1), size=n)
    var = np.mean(np.abs(h) ** 2, axis=0)
    # |h|^2 is Exp(1): standard deviation 1, so the mean has sd 1/sqrt(n)
    assert np.all(np.abs(var - 1) < 3 / np.sqrt(n))


def test_rank_one_draws_are_parallel():
    u = np.array([1, 1j, -1, 0.5]) / np.linalg.norm([1, 1j, -1, 0.5])
    h = draw_channel(np.outer(u, u.conj()), np.random.default_rng(2), size=50)
    resid = h - np.outer(h @ u.conj(), u)
    assert np.abs(resid).max() < 1e-10


def test_empirical_covariance_within_two_percent():
    r = np.asarray(exponential_correlation(8, 0.7 + 0.2j))
    h = draw_channel(r, np.random.default_rng(3), size=100_000)
    emp = h.T @ h.conj() / h.shape[0]
    assert np.linalg.norm(emp - r) / np.linalg.norm(r) < 0.02


# ---------------------------------------------------------------- training and reception

def test_training_sequence_power_and_orthogonality():
    seqs = TrainingSequence.orthogonal_set(3, 4, power=2.0)
    for s in seqs:
        assert s.energy == pytest.approx(2.0)
        np.testing.assert_allclose(np.abs(s.symbols) ** 2, 0.5)
    assert abs(np.vdot(seqs[0].symbols, seqs[2].symbols)) < 1e-12
    with pytest.raises(InvalidParameterError):
        TrainingSequence.orthogonal_set(3, 2)
    with pytest.raises(InvalidParameterError):
        TrainingSequence(np.array([1, 2]), 2.0)


def test_single_user_noiseless_received():
    rng = np.random.default_rng(4)
    s = TrainingSequence.orthogonal_set(1, 3)[0]
    h = ChannelRealization(rng.standard_normal(4) + 1j * rng.standard_normal(4))
    rx = assemble_received([[h]], [s], 0.0)
    np.testing.assert_allclose(rx.y, s.matrix(4) @ h.h)
    assert rx.tau == 3


def test_shared_sequence_sums_channels():
    rng = np.random.default_rng(5)
    s = TrainingSequence.orthogonal_set(1, 4, power=3.0)[0]
    hs = [ChannelRealization(rng.standard_normal(3) + 1j * rng.standard_normal(3)) for _ in range(2)]
    rx = assemble_received([hs], [s], 0.0)
    np.testing.assert_allclose(correlate(s, rx), hs[0].h + hs[1].h, atol=1e-12)


def test_orthogonal_sequences_separate_users():
    rng = np.random.default_rng(6)
    s1, s2 = TrainingSequence.orthogonal_set(2, 2)
    h1, h2 = (ChannelRealization(rng.standard_normal(5) + 0j) for _ in range(2))
    rx = assemble_received([[h1], [h2]], [s1, s2], 0.0)
    np.testing.assert_allclose(correlate(s1, rx), h1.h, atol=1e-12)
    np.testing.assert_allclose(correlate(s2, rx), h2.h, atol=1e-12)


def test_received_noise_variance_after_correlation():
    s = TrainingSequence.orthogonal_set(1, 4, power=2.0)[0]
    h = ChannelRealization(np.zeros(2, dtype=complex))
    rng = np.random.default_rng(7)
    out = np.array([correlate(s, assemble_received([[h]], [s], 0.5, rng)) for _ in range(20_000)])
    # sigma2 / (s^H s) per antenna
    assert np.mean(np.abs(out) ** 2) == pytest.approx(0.5 / 2.0, rel=0.03)


def test_received_validation():
    s1 = TrainingSequence.orthogonal_set(1, 2)[0]
    h = ChannelRealization(np.ones(2, dtype=complex))
    with pytest.raises(InvalidParameterError):
        assemble_received([[h]], [s1], 1.0)  # noise without an rng
    with pytest.raises(InvalidParameterError):
        assemble_received([[h], [h]], [s1, s1], 0.0)
    with pytest.raises(DimensionError):
        assemble_received([[h]], [s1, s1], 0.0)
