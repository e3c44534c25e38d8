"""Geometry core: rotors, covariance assembly, conditioning, marginals."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from splat4d.errors import (
    DegenerateCovarianceError,
    DegenerateRotorError,
    DegenerateTimeExtentError,
)
from splat4d.gaussians import (
    build_covariance,
    condition_at_time,
    eval_density,
    marginal_at_time,
    matrix_to_rotor,
    normalize_quaternion,
    rotor_to_matrix,
)


def random_rotors(rng, n):
    ql = rng.normal(size=(n, 4))
    qr = rng.normal(size=(n, 4))
    return (ql / np.linalg.norm(ql, axis=-1, keepdims=True),
            qr / np.linalg.norm(qr, axis=-1, keepdims=True))


def random_gaussians(rng, n, scale_lo=0.1, scale_hi=2.0):
    ql, qr = random_rotors(rng, n)
    scales = rng.uniform(scale_lo, scale_hi, (n, 4))
    means = rng.uniform(-2.0, 2.0, (n, 4))
    return means, build_covariance(scales, ql, qr), scales


class TestRotorToMatrix:
    def test_identity_pair(self):
        r = rotor_to_matrix([1, 0, 0, 0], [1, 0, 0, 0])
        np.testing.assert_allclose(r, np.eye(4), atol=1e-15)

    def test_xy_plane_half_turn(self):
        r = rotor_to_matrix([0, 1, 0, 0], [0, 1, 0, 0])
        np.testing.assert_allclose(r, np.diag([-1.0, -1.0, 1.0, 1.0]),
                                   atol=1e-15)

    def test_orthonormal_and_special(self):
        rng = np.random.default_rng(7)
        ql, qr = random_rotors(rng, 500)
        r = rotor_to_matrix(ql, qr)
        eye_err = np.abs(r @ r.transpose(0, 2, 1) - np.eye(4)).max()
        assert eye_err < 1e-10
        np.testing.assert_allclose(np.linalg.det(r), 1.0, atol=1e-10)

    def test_sign_pair_equivalence(self):
        rng = np.random.default_rng(11)
        ql, qr = random_rotors(rng, 32)
        a = rotor_to_matrix(ql, qr)
        b = rotor_to_matrix(-ql, -qr)
        np.testing.assert_array_equal(a, b)

    def test_unnormalized_input_matches_normalized(self):
        r1 = rotor_to_matrix([2, 0, 0, 0], [0, 3, 0, 0])
        r2 = rotor_to_matrix([1, 0, 0, 0], [0, 1, 0, 0])
        np.testing.assert_allclose(r1, r2, atol=1e-15)

    def test_degenerate_rotor_rejected(self):
        with pytest.raises(DegenerateRotorError):
            rotor_to_matrix([0, 0, 0, 0], [1, 0, 0, 0])
        with pytest.raises(DegenerateRotorError):
            rotor_to_matrix([1, 0, 0, 0], [1e-13, 0, 0, 0])

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_orthonormality_property(self, seed):
        rng = np.random.default_rng(seed)
        ql, qr = random_rotors(rng, 4)
        r = rotor_to_matrix(ql, qr)
        assert np.abs(r @ r.transpose(0, 2, 1) - np.eye(4)).max() < 1e-10


class TestMatrixToRotor:
    def test_round_trip(self):
        rng = np.random.default_rng(3)
        ql, qr = random_rotors(rng, 200)
        r = rotor_to_matrix(ql, qr)
        ql2, qr2 = matrix_to_rotor(r)
        r2 = rotor_to_matrix(ql2, qr2)
        np.testing.assert_allclose(r2, r, atol=1e-10)

    def test_identity(self):
        ql, qr = matrix_to_rotor(np.eye(4))
        r = rotor_to_matrix(ql, qr)
        np.testing.assert_allclose(r, np.eye(4), atol=1e-12)


class TestBuildCovariance:
    def test_identity_rotor_squares_scales(self):
        cov = build_covariance([1, 2, 3, 4], [1, 0, 0, 0], [1, 0, 0, 0])
        np.testing.assert_allclose(cov, np.diag([1.0, 4.0, 9.0, 16.0]),
                                   atol=1e-12)

    def test_sign_flips_square_away(self):
        # Rotor pair giving diag(-1,-1,1,1): signs vanish under R S S^T R^T.
        cov = build_covariance([1, 2, 1, 1], [0, 1, 0, 0], [0, 1, 0, 0])
        np.testing.assert_allclose(cov, np.diag([1.0, 4.0, 1.0, 1.0]),
                                   atol=1e-12)

    def test_determinant_identity(self):
        rng = np.random.default_rng(5)
        ql, qr = random_rotors(rng, 300)
        scales = rng.uniform(0.1, 3.0, (300, 4))
        cov = build_covariance(scales, ql, qr)
        det = np.linalg.det(cov)
        want = np.prod(scales, axis=-1) ** 2
        np.testing.assert_allclose(det, want, rtol=1e-9)

    def test_symmetric(self):
        rng = np.random.default_rng(6)
        ql, qr = random_rotors(rng, 50)
        cov = build_covariance(rng.uniform(0.1, 2, (50, 4)), ql, qr)
        np.testing.assert_allclose(cov, cov.transpose(0, 2, 1), atol=1e-14)


class TestConditionAtTime:
    def test_block_diagonal_is_identity_on_spatial(self):
        cov = np.diag([1.0, 2.0, 3.0, 4.0])
        mean = np.array([1.0, -2.0, 3.0, 0.25])
        for t in (-1.0, 0.25, 7.0):
            m3, c3 = condition_at_time(mean, cov, t)
            np.testing.assert_allclose(m3, mean[:3], atol=1e-15)
            np.testing.assert_allclose(c3, np.diag([1.0, 2.0, 3.0]),
                                       atol=1e-15)

    def test_worked_coupling_example(self):
        # mu = 0, cov_xt = (0.5, 0, 0), cov_tt = 1, t = 2:
        # mean = (1, 0, 0); spatial cov loses 0.25 from the xx entry.
        cov = np.eye(4)
        cov[0, 3] = cov[3, 0] = 0.5
        m3, c3 = condition_at_time(np.zeros(4), cov, 2.0)
        np.testing.assert_allclose(m3, [1.0, 0.0, 0.0], atol=1e-15)
        want = np.eye(3)
        want[0, 0] -= 0.25
        np.testing.assert_allclose(c3, want, atol=1e-15)

    def test_at_center_time_mean_is_spatial_mean(self):
        rng = np.random.default_rng(9)
        means, covs, _ = random_gaussians(rng, 20)
        m3, _ = condition_at_time(means, covs, 0.0)
        # evaluate each at its own mu_t instead
        for i in range(20):
            mi, _ = condition_at_time(means[i], covs[i], means[i, 3])
            np.testing.assert_allclose(mi, means[i, :3], atol=1e-12)

    def test_time_floor(self):
        cov = np.eye(4)
        cov[3, 3] = 1e-15
        with pytest.raises(DegenerateTimeExtentError):
            condition_at_time(np.zeros(4), cov, 0.5)
        with pytest.raises(DegenerateTimeExtentError):
            marginal_at_time(np.zeros(4), cov, 0.5)


class TestMarginalAtTime:
    def test_peak_is_one(self):
        cov = build_covariance([1, 1, 1, 0.7], [1, 0, 0, 0], [1, 0, 0, 0])
        mean = np.array([0.0, 0.0, 0.0, 0.3])
        assert marginal_at_time(mean, cov, 0.3) == pytest.approx(1.0)

    def test_one_sigma(self):
        cov = np.diag([1.0, 1.0, 1.0, 0.49])
        val = marginal_at_time(np.zeros(4), cov, 0.7)
        assert val == pytest.approx(np.exp(-0.5), rel=1e-12)
        assert val == pytest.approx(0.60653, abs=1e-5)

    def test_cull_boundary(self):
        # exp(-2.4477^2 / 2) hits the 0.05 visibility threshold.
        cov = np.diag([1.0, 1.0, 1.0, 1.0])
        val = marginal_at_time(np.zeros(4), cov, 2.4477)
        assert val == pytest.approx(0.05, abs=1e-4)


class TestEvalDensity:
    def test_at_mean(self):
        rng = np.random.default_rng(13)
        means, covs, _ = random_gaussians(rng, 10)
        for i in range(10):
            assert eval_density(means[i], means[i], covs[i]) == \
                pytest.approx(1.0)

    def test_unit_offset_identity_cov(self):
        val = eval_density([1.0, 0, 0, 0], np.zeros(4), np.eye(4))
        assert val == pytest.approx(np.exp(-0.5), rel=1e-13)

    def test_matches_explicit_inverse(self):
        rng = np.random.default_rng(17)
        means, covs, _ = random_gaussians(rng, 50)
        x = means + rng.normal(0, 0.7, means.shape)
        got = eval_density(x, means, covs)
        for i in range(50):
            d = x[i] - means[i]
            want = np.exp(-0.5 * d @ np.linalg.inv(covs[i]) @ d)
            assert got[i] == pytest.approx(want, rel=1e-9)

    def test_singular_covariance_rejected(self):
        cov = np.diag([1.0, 1.0, 1.0, 0.0])
        with pytest.raises(DegenerateCovarianceError):
            eval_density(np.zeros(4), np.zeros(4), cov)


class TestFactorization:
    """Joint density = temporal marginal x conditional spatial density."""

    def test_factorization_identity(self):
        rng = np.random.default_rng(23)
        means, covs, _ = random_gaussians(rng, 1000)
        # Probe within a couple sigma of the mean so densities stay finite.
        z = rng.uniform(-2.0, 2.0, (1000, 4))
        chol = np.linalg.cholesky(covs)
        x = means + np.einsum("nij,nj->ni", chol, z)
        joint = eval_density(x, means, covs)
        marg = marginal_at_time(means, covs, x[:, 3])
        m3, c3 = condition_at_time(means, covs, x[:, 3])
        cond = np.array([
            eval_density(x[i, :3], m3[i], c3[i]) for i in range(1000)
        ])
        np.testing.assert_allclose(joint, marg * cond, rtol=1e-9)

    def test_determinant_factorization(self):
        rng = np.random.default_rng(29)
        means, covs, _ = random_gaussians(rng, 300)
        _, c3 = condition_at_time(means, covs, 0.0)
        lhs = np.linalg.det(covs)
        rhs = covs[:, 3, 3] * np.linalg.det(c3)
        np.testing.assert_allclose(lhs, rhs, rtol=1e-9)


class TestNormalizeQuaternion:
    def test_floor(self):
        with pytest.raises(DegenerateRotorError):
            normalize_quaternion(np.zeros(4))

    def test_norms_returned(self):
        q, n = normalize_quaternion([3.0, 0.0, 4.0, 0.0])
        assert n == pytest.approx(5.0)
        np.testing.assert_allclose(q, [0.6, 0.0, 0.8, 0.0])
