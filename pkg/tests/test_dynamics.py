"""Kernels, drift, the exponential integrator, and the slaved high-mode flow."""

import math

import numpy as np
import pytest
from scipy.integrate import quad

from stosh.dynamics import (
    KernelSpec,
    ModelParams,
    StepDiverged,
    Trajectory,
    bump_normalizer,
    evaluate_drift,
    integrate,
    linear_factors,
    load_kernel_table,
    mollifier_samples,
    nonlocal_term,
    slave_high_modes,
    step,
    trajectory_json_summary,
    trajectory_to_csv,
)
from stosh.forcing import NoiseSpec, sample_increment
from stosh.spectral import (
    SpectralBasis,
    SpectralField,
    eigenvalue,
    from_physical,
    to_physical,
)

TWO_PI = 2.0 * math.pi


def local_params(rho=1.0, K=4, N=2, dt=1e-3, nonlinearity="local", kernel=None,
                 grid_size=None):
    basis = SpectralBasis(K, grid_size=grid_size)
    return ModelParams(rho=rho, nonlinearity=nonlinearity, low_cutoff=N, dt=dt,
                       basis=basis, kernel=kernel)


def uniform_noise(basis, amplitude=1.0, cutoff=None, seed=0, stream=0):
    b = np.full(basis.n_modes, 0.0)
    n = basis.low_mode_count(cutoff or basis.max_wavenumber)
    b[:n] = amplitude
    return NoiseSpec(basis, tuple(b), cutoff or basis.max_wavenumber, seed,
                     stream_id=stream, strict=False)


class TestMollifier:
    def test_normalizer_value(self):
        c = bump_normalizer()
        val, _ = quad(lambda x: math.exp(-1.0 / (1.0 - x * x)), 0.0, 1.0)
        assert abs(c - 1.0 / val) < 1e-12
        assert abs(c - 4.504) < 1e-3

    def test_support(self):
        basis = SpectralBasis(4, grid_size=512)
        delta0 = 0.7
        g = mollifier_samples(delta0, basis)
        x = basis.x.copy()
        x[x > math.pi] -= TWO_PI
        assert np.all(g[np.abs(x) >= delta0] == 0.0)
        assert np.all(g[np.abs(x) < delta0 * 0.99] > 0.0)

    def test_mass_is_two_over_delta(self):
        basis = SpectralBasis(4, grid_size=4096)
        for delta0 in (0.2, 0.5, 1.5):
            g = mollifier_samples(delta0, basis)
            mass = (TWO_PI / basis.grid_size) * np.sum(g)
            assert abs(mass - 2.0 / delta0) < 1e-8

    def test_unit_mass_variant(self):
        basis = SpectralBasis(4, grid_size=4096)
        delta0 = 0.5
        g = mollifier_samples(delta0, basis, unit_mass=True)
        mass = (TWO_PI / basis.grid_size) * np.sum(g)
        assert abs(mass - 1.0) < 1e-8
        raw = mollifier_samples(delta0, basis)
        assert np.allclose(g, raw * delta0 / 2.0, rtol=0, atol=1e-15)

    def test_peak_bound(self):
        basis = SpectralBasis(4, grid_size=1024)
        delta0 = 0.3
        g = mollifier_samples(delta0, basis)
        assert np.max(g) <= bump_normalizer() / delta0 ** 2

    def test_rejects_bad_delta(self):
        basis = SpectralBasis(2)
        for bad in (0.0, -1.0, math.pi):
            with pytest.raises(ValueError):
                mollifier_samples(bad, basis)


class TestKernelSpec:
    def test_bounded_positive_validation(self):
        with pytest.raises(ValueError):
            KernelSpec.bounded_positive(np.full(8, 1.0), a=2.0, b=0.0)
        with pytest.raises(ValueError):
            KernelSpec.bounded_positive(np.full(8, 3.0), a=2.0, b=1.0)
        k = KernelSpec.bounded_positive(np.full(8, 1.5), a=2.0, b=1.0)
        assert (k.a, k.b) == (2.0, 1.0)

    def test_mollifier_factory(self):
        basis = SpectralBasis(3, grid_size=256)
        k = KernelSpec.mollifier(0.4, basis)
        assert k.family == "mollifier"
        assert abs(k.a - bump_normalizer() / 0.16) < 1e-12
        assert k.samples.shape == (256,)

    def test_custom_bounds(self):
        with pytest.raises(ValueError):
            KernelSpec.custom(np.zeros(4), a=1.0, b=2.0)

    def test_samples_immutable(self):
        k = KernelSpec.custom(np.ones(4), a=1.0)
        with pytest.raises(ValueError):
            k.samples[0] = 2.0


class TestNonlocalTerm:
    def test_constant_kernel_reduces_to_cubic_norm_term(self):
        # G == c makes G * u^2 the constant c|u|^2, so the projection is
        # c |u|^2 u exactly
        rng = np.random.default_rng(0)
        basis = SpectralBasis(4)
        u = SpectralField(rng.standard_normal(basis.n_modes), basis)
        c = 0.7
        kernel = KernelSpec.bounded_positive(np.full(basis.grid_size, c),
                                             a=c, b=c)
        out = nonlocal_term(u, kernel)
        assert np.allclose(out.coeffs, c * u.normsq() * u.coeffs,
                           rtol=1e-12, atol=1e-12)

    def test_matches_double_sum(self):
        rng = np.random.default_rng(1)
        basis = SpectralBasis(3, grid_size=16)
        u = SpectralField(rng.standard_normal(basis.n_modes), basis)
        samples = rng.uniform(0.5, 1.5, basis.grid_size)
        kernel = KernelSpec.bounded_positive(samples, a=1.5, b=0.5)
        g = to_physical(u)
        M = basis.grid_size
        conv = np.array([(TWO_PI / M) * sum(samples[(j - i) % M] * g[i] ** 2
                                            for i in range(M))
                         for j in range(M)])
        want = from_physical(g * conv, basis)
        out = nonlocal_term(u, kernel)
        assert np.allclose(out.coeffs, want.coeffs, rtol=0, atol=1e-12)

    def test_magnitude_bound(self):
        # |P(u G*u^2)| <= a |u|^3 for any 0 <= G <= a
        rng = np.random.default_rng(2)
        basis = SpectralBasis(5)
        samples = rng.uniform(0.0, 2.0, basis.grid_size)
        kernel = KernelSpec.custom(samples, a=2.0)
        for _ in range(50):
            u = SpectralField(rng.standard_normal(basis.n_modes), basis)
            out = nonlocal_term(u, kernel)
            assert out.norm() <= 2.0 * u.norm() ** 3 * (1 + 1e-9)

    def test_coercivity(self):
        # <P(u G*u^2), u> >= b |u|^4 when G >= b > 0
        rng = np.random.default_rng(3)
        basis = SpectralBasis(5)
        samples = rng.uniform(0.3, 1.0, basis.grid_size)
        kernel = KernelSpec.bounded_positive(samples, a=1.0, b=0.3)
        for _ in range(50):
            u = SpectralField(rng.standard_normal(basis.n_modes), basis)
            pairing = float(np.dot(nonlocal_term(u, kernel).coeffs, u.coeffs))
            assert pairing >= 0.3 * u.normsq() ** 2 * (1 - 1e-9)

    def test_grid_mismatch(self):
        basis = SpectralBasis(3)
        kernel = KernelSpec.custom(np.ones(99), a=1.0)
        with pytest.raises(ValueError):
            nonlocal_term(SpectralField.zeros(basis), kernel)


class TestDrift:
    def test_zero_state(self):
        params = local_params()
        out = evaluate_drift(SpectralField.zeros(params.basis), params)
        assert out.normsq() == 0.0

    def test_linear_part(self):
        params = local_params(rho=2.0, nonlinearity="linear")
        u = SpectralField.single_mode(params.basis, 1, "cos", 3.0)
        out = evaluate_drift(u, params)
        assert np.allclose(out.coeffs, 2.0 * u.coeffs, rtol=0, atol=1e-15)
        v = SpectralField.single_mode(params.basis, 2, "sin", 1.0)
        outv = evaluate_drift(v, params)
        assert outv.coeffs[params.basis.index_of(2, "sin")] == pytest.approx(-9.0 + 2.0)

    def test_cubic_of_single_cosine(self):
        # (A cos x / sqrt(pi))^3 projects onto cos x and cos 3x with weights
        # 3A^3/(4 pi) and A^3/(4 pi)
        params = local_params(rho=0.0, K=4)
        A = 1.3
        u = SpectralField.single_mode(params.basis, 1, "cos", A)
        out = evaluate_drift(u, params)
        cub = 0.0 * u.coeffs - out.coeffs  # alpha_1 = 0, rho = 0: drift = -P(u^3)
        assert cub[params.basis.index_of(1, "cos")] == pytest.approx(
            3 * A ** 3 / (4 * math.pi), rel=1e-12)
        assert cub[params.basis.index_of(3, "cos")] == pytest.approx(
            A ** 3 / (4 * math.pi), rel=1e-12)
        assert abs(cub[0]) < 1e-14

    def test_energy_sign(self):
        # <drift(u), u> <= rho |u|^2 for the local model: A is dissipative and
        # the cubic is coercive
        rng = np.random.default_rng(4)
        params = local_params(rho=1.5)
        for _ in range(50):
            u = SpectralField(rng.standard_normal(params.basis.n_modes), params.basis)
            pairing = float(np.dot(evaluate_drift(u, params).coeffs, u.coeffs))
            assert pairing <= 1.5 * u.normsq() + 1e-10

    def test_cubic_monotonicity(self):
        # <P(u^3) - P(v^3), u - v> >= 0, pointwise monotone under quadrature
        rng = np.random.default_rng(5)
        params = local_params(rho=0.0)
        lam = np.array([eigenvalue(k) for k in params.basis.wavenumbers])
        for _ in range(100):
            u = SpectralField(rng.standard_normal(params.basis.n_modes), params.basis)
            v = SpectralField(rng.standard_normal(params.basis.n_modes), params.basis)
            cu = lam * u.coeffs - evaluate_drift(u, params).coeffs
            cv = lam * v.coeffs - evaluate_drift(v, params).coeffs
            assert np.dot(cu - cv, u.coeffs - v.coeffs) >= -1e-10


class TestLinearFactors:
    def test_shapes_and_identity(self):
        params = local_params(rho=1.0, dt=2e-3)
        E, PhiD, PhiW = linear_factors(params)
        lam = np.array([eigenvalue(k) + 1.0 for k in params.basis.wavenumbers])
        assert np.allclose(E, np.exp(lam * 2e-3), rtol=1e-14, atol=0)
        # the drift and noise weights are locked together; this makes the
        # discrete Girsanov density an exact martingale
        assert np.array_equal(PhiD, 2e-3 * PhiW)

    def test_small_z_branch(self):
        # wavenumber 1 has lam = rho; rho=0 exercises the series branch
        params = local_params(rho=0.0)
        E, PhiD, PhiW = linear_factors(params)
        i = params.basis.index_of(1, "cos")
        assert E[i] == 1.0
        assert PhiW[i] == pytest.approx(1.0, abs=1e-12)


class TestStep:
    def test_zero_fixed_point(self):
        params = local_params(rho=0.7)
        z = SpectralField.zeros(params.basis)
        out = step(z, params, z)
        assert out.normsq() == 0.0

    def test_linear_mode_exact_exponential(self):
        # nonlinearity off: a single k=2 mode evolves by exp((rho - 9) t)
        rho, dt, n = 1.5, 1e-3, 200
        params = local_params(rho=rho, nonlinearity="linear", dt=dt)
        u = SpectralField.single_mode(params.basis, 2, "sin", 0.8)
        z = SpectralField.zeros(params.basis)
        for _ in range(n):
            u = step(u, params, z)
        want = 0.8 * math.exp((rho - 9.0) * dt * n)
        assert u.coeffs[params.basis.index_of(2, "sin")] == pytest.approx(
            want, rel=1e-12)

    def test_deterministic_energy_decay(self):
        # rho = 0, no noise: |u| strictly decreases for the local model
        params = local_params(rho=0.0, dt=1e-3)
        rng = np.random.default_rng(6)
        u = SpectralField(rng.standard_normal(params.basis.n_modes), params.basis)
        z = SpectralField.zeros(params.basis)
        norms = [u.norm()]
        for _ in range(50):
            u = step(u, params, z)
            norms.append(u.norm())
        assert all(b < a for a, b in zip(norms, norms[1:]))

    def test_noise_enters_through_phi_weight(self):
        params = local_params(rho=0.0, nonlinearity="linear", dt=1e-2)
        _, _, PhiW = linear_factors(params)
        z = SpectralField.zeros(params.basis)
        dW = SpectralField.single_mode(params.basis, 2, "cos", 0.25)
        out = step(z, params, dW)
        i = params.basis.index_of(2, "cos")
        assert out.coeffs[i] == pytest.approx(0.25 * PhiW[i], rel=1e-14)

    def test_divergence_detected(self):
        params = local_params(rho=0.0, dt=10.0)
        u = SpectralField.single_mode(params.basis, 1, "cos", 1e200)
        z = SpectralField.zeros(params.basis)
        with pytest.raises(StepDiverged), np.errstate(over="ignore", invalid="ignore"):
            v = u
            for _ in range(10):
                v = step(v, params, z)

    def test_basis_mismatch(self):
        params = local_params()
        with pytest.raises(ValueError):
            step(SpectralField.zeros(params.basis), params,
                 SpectralField.zeros(SpectralBasis(7)))


class TestIntegrate:
    def test_matches_manual_stepping(self):
        params = local_params(rho=1.0, K=3, dt=1e-3)
        spec = uniform_noise(params.basis, amplitude=0.5, seed=10)
        rng = np.random.default_rng(7)
        u0 = SpectralField(0.3 * rng.standard_normal(params.basis.n_modes),
                           params.basis)
        n = 50
        res = integrate(u0, params, spec, n, record_states=True)
        u = u0
        for k in range(n):
            u = step(u, params, sample_increment(spec, params.dt, step=k))
        assert np.max(np.abs(res.trajectory.coeffs[-1] - u.coeffs)) < 1e-10
        assert res.normsq[0] == u0.normsq()
        nsq = res.trajectory.normsq_series()
        assert np.max(np.abs(nsq - res.normsq)) < 1e-12

    def test_snapshots_align_with_states(self):
        params = local_params(rho=0.5, K=3, dt=1e-3)
        spec = uniform_noise(params.basis, seed=11)
        u0 = SpectralField.zeros(params.basis)
        res = integrate(u0, params, spec, 40, snapshot_steps=(0, 7, 40),
                        record_states=True)
        assert list(res.snap_steps) == [0, 7, 40]
        for row, s in zip(res.snaps, res.snap_steps):
            assert np.array_equal(row, res.trajectory.coeffs[s])

    def test_restart_is_bitwise(self):
        # splitting a run at any step reproduces the tail exactly
        params = local_params(rho=1.0, K=3, dt=2e-3)
        spec = uniform_noise(params.basis, seed=12, stream=4)
        u0 = SpectralField.zeros(params.basis)
        whole = integrate(u0, params, spec, 30, record_states=True)
        head = integrate(u0, params, spec, 13, record_states=True)
        mid = head.trajectory.state(13)
        tail = integrate(mid, params, spec, 17, record_states=True, start_step=13)
        assert np.array_equal(tail.trajectory.coeffs[-1], whole.trajectory.coeffs[-1])
        assert np.array_equal(tail.trajectory.coeffs[0], whole.trajectory.coeffs[13])

    def test_deterministic(self):
        params = local_params(rho=1.0, K=3)
        spec = uniform_noise(params.basis, seed=13)
        u0 = SpectralField.zeros(params.basis)
        a = integrate(u0, params, spec, 25)
        b = integrate(u0, params, spec, 25)
        assert np.array_equal(a.normsq, b.normsq)

    def test_divergence_raises_with_step_index(self):
        params = local_params(rho=0.0, dt=5.0)
        spec = uniform_noise(params.basis, seed=14)
        u0 = SpectralField.single_mode(params.basis, 1, "cos", 1e150)
        with np.errstate(over="ignore", invalid="ignore"):
            with pytest.raises(StepDiverged) as exc:
                integrate(u0, params, spec, 100)
        assert exc.value.step_index >= 1

    def test_nonlocal_model_runs(self):
        basis = SpectralBasis(4)
        kernel = KernelSpec.bounded_positive(np.full(basis.grid_size, 1.0),
                                             a=1.0, b=1.0)
        params = ModelParams(rho=0.5, nonlinearity="nonlocal", low_cutoff=2,
                             dt=1e-3, basis=basis, kernel=kernel)
        spec = uniform_noise(basis, seed=15)
        res = integrate(SpectralField.zeros(basis), params, spec, 100)
        assert np.all(np.isfinite(res.normsq))


class TestSlavedFlow:
    def make_master(self, rho=1.0, K=8, N=3, dt=1e-3, n=150, seed=20):
        basis = SpectralBasis(K)
        params = ModelParams(rho=rho, nonlinearity="local", low_cutoff=N,
                             dt=dt, basis=basis)
        spec = uniform_noise(basis, amplitude=1.0, cutoff=N, seed=seed)
        res = integrate(SpectralField.zeros(basis), params, spec, n,
                        record_states=True)
        return params, res.trajectory

    def test_rejects_low_content(self):
        params, traj = self.make_master(n=5)
        h0 = SpectralField.single_mode(params.basis, 1, "cos", 1.0)
        with pytest.raises(ValueError):
            slave_high_modes(traj, h0, params)

    def test_zero_initial_gap_stays_zero(self):
        params, traj = self.make_master(n=20)
        h0 = SpectralField.zeros(params.basis)
        out1 = slave_high_modes(traj, h0, params)
        out2 = slave_high_modes(traj, h0, params)
        assert np.array_equal(out1.coeffs, out2.coeffs)

    def test_high_gap_contracts_at_spectral_rate(self):
        # two slaved copies above cutoff N=3 merge like exp(-(|alpha_4| - rho) t);
        # fitted log-gap slope within 10 percent of 224
        rho, N = 1.0, 3
        params, traj = self.make_master(rho=rho, N=N, n=150)
        rng = np.random.default_rng(21)
        n_low = params.n_low
        h = []
        for _ in range(2):
            c = np.zeros(params.basis.n_modes)
            c[n_low:] = rng.standard_normal(params.basis.n_modes - n_low)
            c[n_low:] *= 1.0 / np.linalg.norm(c[n_low:])
            h.append(SpectralField(c, params.basis))
        s1 = slave_high_modes(traj, h[0], params)
        s2 = slave_high_modes(traj, h[1], params)
        gap = np.linalg.norm(s1.coeffs - s2.coeffs, axis=1)
        keep = gap > 1e-11
        t = s1.times[keep]
        slope = np.polyfit(t, np.log(gap[keep]), 1)[0]
        rate_floor = abs(eigenvalue(N + 1) + rho)  # 224
        assert -slope >= 0.9 * rate_floor

    def test_slaved_highs_track_master_highs(self):
        # feeding the master's own low path with the master's initial highs
        # reproduces the master's high modes when noise only drives low modes
        params, traj = self.make_master(n=100)
        h0 = SpectralField.zeros(params.basis)
        slaved = slave_high_modes(traj, h0, params)
        n_low = params.n_low
        gap = np.abs(slaved.coeffs[:, n_low:] - traj.coeffs[:, n_low:])
        assert np.max(gap) < 1e-10


class TestTrajectoryIO:
    def make_traj(self, n=6):
        params = local_params(rho=1.0, K=2, dt=1e-3)
        spec = uniform_noise(params.basis, seed=30)
        res = integrate(SpectralField.zeros(params.basis), params, spec, n,
                        record_states=True)
        return res.trajectory

    def test_csv_roundtrip(self, tmp_path):
        traj = self.make_traj()
        path = tmp_path / "traj.csv"
        trajectory_to_csv(traj, path)
        data = np.loadtxt(path, delimiter=",", skiprows=1)
        assert data.shape == (len(traj), traj.params.basis.n_modes + 1)
        assert np.array_equal(data[:, 0], traj.times)
        assert np.array_equal(data[:, 1:], traj.coeffs)

    def test_json_summary(self):
        traj = self.make_traj(n=4)
        out = trajectory_json_summary(traj)
        assert out["n_states"] == 5
        assert out["t_last"] == pytest.approx(4e-3)
        assert len(out["normsq"]) == 5

    def test_uniform_times_enforced(self):
        params = local_params(K=2)
        with pytest.raises(ValueError):
            Trajectory(np.array([0.0, 1.0, 3.0]),
                       np.zeros((3, params.basis.n_modes)), params)


class TestKernelTable:
    def test_constant_table(self, tmp_path):
        basis = SpectralBasis(3)
        path = tmp_path / "kernel.csv"
        xs = np.linspace(0, TWO_PI, 7, endpoint=False)
        with open(path, "w") as fh:
            for x in xs:
                fh.write(f"{x},2.5\n")
        k = load_kernel_table(path, basis)
        assert np.allclose(k.samples, 2.5, rtol=0, atol=1e-12)
        assert k.a == pytest.approx(2.5)

    def test_interpolation_and_bounds(self, tmp_path):
        basis = SpectralBasis(3, grid_size=64)
        path = tmp_path / "kernel.csv"
        xs = np.linspace(0, TWO_PI, 128, endpoint=False)
        gs = 1.5 + 0.5 * np.cos(xs)
        np.savetxt(path, np.column_stack([xs, gs]), delimiter=",")
        k = load_kernel_table(path, basis, family="bounded_positive")
        want = 1.5 + 0.5 * np.cos(basis.x)
        assert np.max(np.abs(k.samples - want)) < 1e-3
        assert k.family == "bounded_positive"
        assert k.b > 0.9

    def test_rejects_bad_shape(self, tmp_path):
        path = tmp_path / "kernel.csv"
        np.savetxt(path, np.ones((4, 3)), delimiter=",")
        with pytest.raises(ValueError):
            load_kernel_table(path, SpectralBasis(2))
