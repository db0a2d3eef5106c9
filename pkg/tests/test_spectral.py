"""Basis, projections, norms, and the convolution quadrature."""

import numpy as np
import pytest

from stosh.spectral import (
    OperatorSpectrum,
    SpectralBasis,
    SpectralField,
    circulant_matrix,
    circular_convolve,
    eigenvalue,
    from_physical,
    l4_norm4,
    project_high,
    project_low,
    to_physical,
)

TWO_PI = 2.0 * np.pi


def random_field(basis, rng, scale=1.0):
    return SpectralField(scale * rng.standard_normal(basis.n_modes), basis)


class TestEigenvalue:
    def test_known_values(self):
        assert eigenvalue(1) == 0.0
        assert eigenvalue(0) == -1.0
        assert eigenvalue(3) == -64.0

    def test_table(self):
        for k, want in [(2, -9.0), (4, -225.0), (10, -9801.0)]:
            assert eigenvalue(k) == want

    def test_rejects_bad_wavenumbers(self):
        with pytest.raises(ValueError):
            eigenvalue(-1)
        with pytest.raises(ValueError):
            eigenvalue(1.5)

    def test_nonpositive_everywhere(self):
        assert all(eigenvalue(k) <= 0.0 for k in range(0, 50))
        assert eigenvalue(1) == max(eigenvalue(k) for k in range(0, 50))


class TestBasis:
    def test_mode_table_order(self):
        b = SpectralBasis(3)
        assert b.mode_table == (
            (0, "const"),
            (1, "cos"), (1, "sin"),
            (2, "cos"), (2, "sin"),
            (3, "cos"), (3, "sin"),
        )
        assert b.n_modes == 7

    def test_index_of_roundtrip(self):
        b = SpectralBasis(5)
        for m, (k, parity) in enumerate(b.mode_table):
            assert b.index_of(k, parity) == m

    def test_index_of_rejects(self):
        b = SpectralBasis(3)
        with pytest.raises(ValueError):
            b.index_of(0, "cos")
        with pytest.raises(ValueError):
            b.index_of(4, "cos")

    def test_low_mode_count(self):
        b = SpectralBasis(8)
        assert b.low_mode_count(1) == 3
        assert b.low_mode_count(3) == 7
        with pytest.raises(ValueError):
            b.low_mode_count(0)
        with pytest.raises(ValueError):
            b.low_mode_count(9)

    def test_default_grid_size(self):
        b = SpectralBasis(8)
        assert b.grid_size == 36
        assert b.grid_size >= 3 * b.max_wavenumber + 1

    def test_grid_size_floor_enforced(self):
        SpectralBasis(8, grid_size=25)
        with pytest.raises(ValueError):
            SpectralBasis(8, grid_size=24)

    def test_matrices_read_only(self):
        b = SpectralBasis(3)
        with pytest.raises(ValueError):
            b.synthesis_matrix()[0, 0] = 1.0

    def test_discrete_orthonormality(self):
        # analysis @ synthesis is the identity once M >= 2K+1
        for M in (10, 16, 33):
            b = SpectralBasis(3, grid_size=M)
            gram = b.analysis_matrix() @ b.synthesis_matrix()
            assert np.max(np.abs(gram - np.eye(b.n_modes))) < 1e-12


class TestField:
    def test_single_mode_grid_samples(self):
        b = SpectralBasis(4, grid_size=64)
        u = SpectralField.single_mode(b, 2, "cos")
        assert np.allclose(to_physical(u), np.cos(2 * b.x) / np.sqrt(np.pi),
                           rtol=0, atol=1e-14)
        v = SpectralField.single_mode(b, 0, "const", amplitude=3.0)
        assert np.allclose(to_physical(v), 3.0 / np.sqrt(TWO_PI), rtol=0, atol=1e-14)

    def test_roundtrip(self):
        rng = np.random.default_rng(7)
        for K in (1, 3, 8):
            b = SpectralBasis(K)
            u = random_field(b, rng)
            v = from_physical(to_physical(u), b)
            assert np.max(np.abs(v.coeffs - u.coeffs)) < 1e-12

    def test_parseval(self):
        # quadrature of u^2 equals the squared coefficient norm
        rng = np.random.default_rng(11)
        b = SpectralBasis(6)
        for _ in range(20):
            u = random_field(b, rng, scale=2.0)
            g = to_physical(u)
            quad = (TWO_PI / b.grid_size) * np.sum(g ** 2)
            assert abs(quad - u.normsq()) < 1e-10 * max(1.0, u.normsq())

    def test_arithmetic(self):
        b = SpectralBasis(2)
        u = SpectralField.single_mode(b, 1, "cos", 2.0)
        v = SpectralField.single_mode(b, 1, "sin", 1.0)
        w = 0.5 * (u + v) - v
        assert w.coeffs[b.index_of(1, "cos")] == 1.0
        assert w.coeffs[b.index_of(1, "sin")] == -0.5

    def test_basis_mismatch_rejected(self):
        u = SpectralField.zeros(SpectralBasis(2))
        v = SpectralField.zeros(SpectralBasis(3))
        with pytest.raises(ValueError):
            u + v

    def test_shape_checked(self):
        with pytest.raises(ValueError):
            SpectralField(np.zeros(4), SpectralBasis(2))

    def test_is_finite(self):
        b = SpectralBasis(2)
        assert SpectralField.zeros(b).is_finite()
        assert not SpectralField([1, np.nan, 0, 0, 0], b).is_finite()


class TestProjections:
    def test_split_is_exact(self):
        rng = np.random.default_rng(3)
        b = SpectralBasis(7)
        u = random_field(b, rng)
        for N in (1, 3, 7):
            lo, hi = project_low(u, N), project_high(u, N)
            assert np.array_equal(lo.coeffs + hi.coeffs, u.coeffs)
            # orthogonal pieces: Pythagoras holds to rounding
            assert abs(lo.normsq() + hi.normsq() - u.normsq()) < 1e-12
            assert np.all(lo.coeffs[b.low_mode_count(N):] == 0.0)
            assert np.all(hi.coeffs[:b.low_mode_count(N)] == 0.0)

    def test_idempotent(self):
        rng = np.random.default_rng(4)
        b = SpectralBasis(5)
        u = random_field(b, rng)
        lo = project_low(u, 2)
        assert np.array_equal(project_low(lo, 2).coeffs, lo.coeffs)
        hi = project_high(u, 2)
        assert np.array_equal(project_high(hi, 2).coeffs, hi.coeffs)
        assert project_low(hi, 2).normsq() == 0.0


class TestOperatorSpectrum:
    def test_diagonal_alignment(self):
        b = SpectralBasis(4)
        spec = OperatorSpectrum(b)
        assert spec.eigenvalues[b.index_of(1, "sin")] == 0.0
        assert spec.eigenvalues[b.index_of(3, "cos")] == -64.0
        assert spec.eigenvalues[0] == -1.0

    def test_quadratic_form_nonpositive(self):
        rng = np.random.default_rng(5)
        b = SpectralBasis(6)
        spec = OperatorSpectrum(b)
        for _ in range(50):
            u = random_field(b, rng, scale=3.0)
            assert spec.quadratic_form(u) <= 0.0

    def test_quadratic_form_value(self):
        b = SpectralBasis(3)
        u = SpectralField.single_mode(b, 2, "sin", 2.0)
        assert OperatorSpectrum(b).quadratic_form(u) == -36.0


class TestNorms:
    def test_l4_single_cosine(self):
        # integral of cos^4(kx)/pi^2 over the period is 3/(4*pi)
        b = SpectralBasis(3, grid_size=64)
        u = SpectralField.single_mode(b, 2, "cos")
        assert abs(l4_norm4(u) - 3.0 / (4.0 * np.pi)) < 1e-12

    def test_norm_dominated_by_l4(self):
        # |u|_{L2} <= (2 pi)^{1/4} |u|_{L4}, Hoelder on the circle
        rng = np.random.default_rng(6)
        b = SpectralBasis(5)
        for _ in range(50):
            u = random_field(b, rng, scale=2.0)
            assert u.normsq() <= np.sqrt(TWO_PI * l4_norm4(u)) * (1 + 1e-12)


class TestConvolution:
    def test_constant_kernel(self):
        # G == c integrates f against a constant: every output equals
        # c * (2 pi / M) * sum f
        rng = np.random.default_rng(8)
        M = 48
        f = rng.standard_normal(M)
        c = 1.7
        out = circular_convolve(np.full(M, c), f)
        want = c * (TWO_PI / M) * np.sum(f)
        assert np.allclose(out, want, rtol=0, atol=1e-12)

    def test_delta_kernel_is_identity(self):
        # discrete delta of mass one: G[0] = M/(2 pi)
        rng = np.random.default_rng(9)
        M = 32
        f = rng.standard_normal(M)
        kernel = np.zeros(M)
        kernel[0] = M / TWO_PI
        assert np.allclose(circular_convolve(kernel, f), f, rtol=0, atol=1e-12)

    def test_matches_double_sum(self):
        rng = np.random.default_rng(10)
        for M in (8, 27, 64):
            kernel = rng.standard_normal(M)
            f = rng.standard_normal(M)
            direct = np.empty(M)
            for j in range(M):
                direct[j] = (TWO_PI / M) * sum(
                    kernel[(j - i) % M] * f[i] for i in range(M))
            assert np.allclose(circular_convolve(kernel, f), direct,
                               rtol=0, atol=1e-12)

    def test_circulant_matrix_agrees(self):
        rng = np.random.default_rng(12)
        M = 40
        kernel = rng.standard_normal(M)
        C = circulant_matrix(kernel)
        for _ in range(5):
            f = rng.standard_normal(M)
            assert np.allclose(C @ f, circular_convolve(kernel, f),
                               rtol=0, atol=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            circular_convolve(np.zeros(8), np.zeros(9))


class TestCubicProjectionExactness:
    def test_default_grid_dealiases_cubics(self):
        # Galerkin projection of u^3 computed on the default M = 4(K+1) grid
        # agrees with a heavily oversampled reference
        rng = np.random.default_rng(13)
        for K in (2, 4, 7):
            b = SpectralBasis(K)
            fine = SpectralBasis(K, grid_size=4096)
            u = random_field(b, rng)
            cubed = from_physical(to_physical(u) ** 3, b)
            v = SpectralField(u.coeffs, fine)
            ref = from_physical(to_physical(v) ** 3, fine)
            assert np.max(np.abs(cubed.coeffs - ref.coeffs)) < 1e-11
