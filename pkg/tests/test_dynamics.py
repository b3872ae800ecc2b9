import numpy as np
import pytest

from burgerslab.covariance import DenseCovariance, DiagonalCovariance, kl_truncate
from burgerslab.dynamics import (
    SEMI_IMPLICIT_EULER,
    DeterministicInitial,
    DivergenceError,
    RandomSmoothInitial,
    SimConfig,
    Snapshots,
    SupPairDistance,
    TrapezoidIntegral,
    bilinear_fast,
    bilinear_reference,
    export_coefficient_csv,
    export_grid_csv,
    grad_norm_sq,
    nonlinearity_fast,
    nonlinearity_reference,
    run_coupled,
    run_galerkin,
    simulate_convolution,
    simulate_path,
    step,
)
from burgerslab.noise import NoiseStream, UnsupportedCovarianceError, convolution_variances
from burgerslab.spectral import SpectralField, eigenvalues, l2_norm


def smooth_field(m, amplitude=0.5, decay=2.0):
    k = np.arange(1, m + 1, dtype=float)
    return SpectralField(amplitude * k**-decay)


class TestNonlinearity:
    def test_h1_maps_to_h2(self):
        out = nonlinearity_fast(SpectralField([1.0, 0.0, 0.0]))
        assert out.coeffs[1] == pytest.approx(np.sqrt(2) * np.pi, abs=1e-12)
        assert out.coeffs[1] == pytest.approx(4.442883, abs=1e-6)
        assert abs(out.coeffs[0]) < 1e-12 and abs(out.coeffs[2]) < 1e-12

    def test_projection_kills_h2_output(self):
        out = nonlinearity_fast(SpectralField([1.0]))
        assert abs(out.coeffs[0]) < 1e-12

    def test_zero_field(self):
        out = nonlinearity_fast(SpectralField(np.zeros(5)))
        assert np.all(out.coeffs == 0)

    def test_reference_h1(self):
        out = nonlinearity_reference(SpectralField([1.0, 0.0, 0.0, 0.0]))
        assert out.coeffs[1] == pytest.approx(np.sqrt(2) * np.pi, abs=1e-12)

    @pytest.mark.parametrize("m", [8, 64, 256])
    def test_fast_matches_reference(self, rng, m):
        for _ in range(20):
            x = SpectralField(rng.standard_normal(m))
            fast = nonlinearity_fast(x)
            ref = nonlinearity_reference(x)
            assert np.abs(fast.coeffs - ref.coeffs).max() <= 1e-10

    @pytest.mark.parametrize("m", [8, 64, 256])
    def test_energy_cancellation(self, rng, m):
        for _ in range(20):
            x = SpectralField(rng.standard_normal(m))
            b = nonlinearity_fast(x)
            assert abs(b.coeffs @ x.coeffs) <= 1e-11 * l2_norm(x) ** 3

    def test_skew_identity(self, rng):
        for m in (8, 64):
            for _ in range(20):
                x = SpectralField(rng.standard_normal(m))
                y = SpectralField(rng.standard_normal(m))
                bxy = bilinear_fast(x, y)
                bx = nonlinearity_fast(x)
                lhs = x.coeffs @ bxy.coeffs
                rhs = -0.5 * (y.coeffs @ bx.coeffs)
                scale = max(l2_norm(bxy) * l2_norm(x), l2_norm(bx) * l2_norm(y))
                assert abs(lhs - rhs) <= 1e-11 * scale

    def test_bilinear_fast_matches_reference(self, rng):
        for m in (8, 32):
            x = SpectralField(rng.standard_normal(m))
            y = SpectralField(rng.standard_normal(m))
            fast = bilinear_fast(x, y)
            ref = bilinear_reference(x, y)
            assert np.abs(fast.coeffs - ref.coeffs).max() <= 1e-10

    def test_bilinear_diagonal_is_nonlinearity(self, rng):
        x = SpectralField(rng.standard_normal(16))
        assert np.allclose(bilinear_fast(x, x).coeffs,
                           nonlinearity_fast(x).coeffs, atol=1e-12)


class TestSimConfig:
    def test_step_count(self):
        cfg = SimConfig(truncation=8, final_time=0.25, dt=2.5e-4)
        assert cfg.n_steps == 1000

    def test_non_integer_steps_rejected(self):
        with pytest.raises(ValueError):
            SimConfig(truncation=8, final_time=1.0, dt=0.3)

    def test_bad_values_rejected(self):
        with pytest.raises(ValueError):
            SimConfig(truncation=0, final_time=1.0, dt=0.1)
        with pytest.raises(ValueError):
            SimConfig(truncation=4, final_time=1.0, dt=-0.1)
        with pytest.raises(ValueError):
            SimConfig(truncation=4, final_time=1.0, dt=0.1, scheme="rk4")


class TestRandomSmoothInitial:
    def test_decay_constraint(self):
        with pytest.raises(ValueError):
            RandomSmoothInitial(amplitude=1.0, decay=1.6, delta0=0.25)
        RandomSmoothInitial(amplitude=1.0, decay=2.1, delta0=0.25)

    def test_sample_determinism_and_truncation_consistency(self):
        ic = RandomSmoothInitial(amplitude=1.0, decay=2.0, delta0=0.1)
        a = ic.sample(11, np.arange(4), 8)
        b = ic.sample(11, np.arange(4), 8)
        wide = ic.sample(11, np.arange(4), 16)
        assert np.array_equal(a, b)
        assert np.array_equal(a, wide[:, :8])

    def test_bounded_draws(self):
        ic = RandomSmoothInitial(amplitude=1.0, decay=2.0)
        x = ic.sample(3, np.arange(200), 32)
        k = np.arange(1, 33.0)
        assert np.all(np.abs(x) <= 10.0 * k**-2.0 + 1e-12)


class TestStep:
    def test_linear_mode_heat_step(self):
        # B off, Q=0: one exponential Euler step is exactly the heat factor
        cfg = SimConfig(truncation=4, final_time=0.1, dt=0.01, nonlinear=False)
        q = DiagonalCovariance(np.zeros(4))
        x = SpectralField([1.0, 0.0, 0.0, 0.0])
        out = step(x, cfg, NoiseStream(5, 0), q, 0)
        assert out.coeffs[0] == pytest.approx(np.exp(-np.pi**2 * 0.01), rel=1e-14)
        assert np.all(out.coeffs[1:] == 0)

    def test_blowup_guard(self):
        cfg = SimConfig(truncation=8, final_time=0.1, dt=0.01,
                        blowup_threshold=1e2)
        q = DiagonalCovariance(np.zeros(8))
        x = SpectralField(np.full(8, 60.0))
        with pytest.raises(DivergenceError) as err:
            step(x, cfg, NoiseStream(5, 0), q, 0)
        assert err.value.step_index == 0
        assert err.value.norm > 1e2

    def test_semi_implicit_solves_modewise(self):
        cfg = SimConfig(truncation=3, final_time=0.1, dt=0.01,
                        scheme=SEMI_IMPLICIT_EULER, nonlinear=False)
        q = DiagonalCovariance(np.zeros(3))
        x = SpectralField([1.0, 1.0, 1.0])
        out = step(x, cfg, NoiseStream(5, 0), q, 0)
        expected = 1.0 / (1.0 + 0.01 * eigenvalues(3))
        assert np.allclose(out.coeffs, expected, rtol=1e-14)


class TestEnergyDissipation:
    def test_norm_non_increasing_without_noise(self):
        # full transport term, Q=0, 100 random bounded starts at M=64
        m, n_paths = 64, 100
        ic = RandomSmoothInitial(amplitude=0.3, decay=2.0)
        cfg = SimConfig(truncation=m, final_time=0.05, dt=1e-3, initial=ic)
        q = DiagonalCovariance(np.zeros(m))

        class NormTrack:
            def __init__(self):
                self.monotone = None

            def start(self, states):
                self.prev = np.einsum("rk,rk->r", states[0], states[0])
                self.monotone = np.ones(len(self.prev), dtype=bool)

            def update(self, n, t, states):
                cur = np.einsum("rk,rk->r", states[0], states[0])
                self.monotone &= cur <= self.prev * (1 + 1e-12)
                self.prev = cur

        track = NormTrack()
        run = run_coupled(cfg, [q], 123, np.arange(n_paths), observers=[track])
        assert not run.any_divergence()
        assert np.all(track.monotone)


class TestSchemeAgreement:
    def test_two_schemes_agree_to_first_order(self):
        # deterministic smooth run at dt = 1e-4: discrepancy below 1e-2
        m = 64
        cfg_exp = SimConfig(truncation=m, final_time=0.1, dt=1e-4,
                            initial=DeterministicInitial(smooth_field(m, 0.9)))
        cfg_semi = cfg_exp.replace(scheme=SEMI_IMPLICIT_EULER)
        q = DiagonalCovariance(np.zeros(m))
        a = simulate_path(cfg_exp, q, NoiseStream(1, 0)).terminal
        b = simulate_path(cfg_semi, q, NoiseStream(1, 0)).terminal
        assert np.abs(a.coeffs - b.coeffs).max() < 1e-2


class TestTemporalSelfConvergence:
    def test_halving_ratio(self):
        # same underlying Brownian path via noise substeps; the step-size
        # error of exponential Euler with exact noise integrals is O(dt)
        m, n_seeds = 64, 20
        ic = RandomSmoothInitial(amplitude=0.4, decay=2.0)
        q = DiagonalCovariance(np.arange(1, m + 1.0) ** -3)
        levels = [
            SimConfig(truncation=m, final_time=0.05, dt=2e-3, noise_substeps=4, initial=ic),
            SimConfig(truncation=m, final_time=0.05, dt=1e-3, noise_substeps=2, initial=ic),
            SimConfig(truncation=m, final_time=0.05, dt=5e-4, noise_substeps=1, initial=ic),
        ]
        reps = np.arange(n_seeds)
        terminals = [run_coupled(cfg, [q], 2025, reps).terminal[0] for cfg in levels]
        d_coarse = np.linalg.norm(terminals[0] - terminals[1], axis=1).mean()
        d_fine = np.linalg.norm(terminals[1] - terminals[2], axis=1).mean()
        assert 1.5 <= d_coarse / d_fine <= 3.0


class TestSimulatePath:
    def test_zero_equilibrium(self):
        cfg = SimConfig(truncation=8, final_time=0.1, dt=0.01)
        q = DiagonalCovariance(np.zeros(8))
        out = simulate_path(cfg, q, NoiseStream(3, 0))
        assert np.all(out.terminal.coeffs == 0)

    def test_bitwise_reproducibility(self):
        m = 16
        cfg = SimConfig(truncation=m, final_time=0.05, dt=1e-3,
                        initial=DeterministicInitial(smooth_field(m)))
        q = DiagonalCovariance(np.arange(1, m + 1.0) ** -3)
        a = simulate_path(cfg, q, NoiseStream(9, 4)).terminal
        b = simulate_path(cfg, q, NoiseStream(9, 4)).terminal
        assert np.array_equal(a.coeffs, b.coeffs)

    def test_full_rank_truncation_identical(self):
        m = 16
        cfg = SimConfig(truncation=m, final_time=0.05, dt=1e-3,
                        initial=DeterministicInitial(smooth_field(m)))
        q = DiagonalCovariance(np.arange(1, m + 1.0) ** -3)
        a = simulate_path(cfg, q, NoiseStream(9, 4)).terminal
        b = simulate_path(cfg, kl_truncate(q, m), NoiseStream(9, 4)).terminal
        assert np.array_equal(a.coeffs, b.coeffs)

    def test_step_loop_matches_engine(self):
        m = 12
        cfg = SimConfig(truncation=m, final_time=0.01, dt=1e-3,
                        initial=DeterministicInitial(smooth_field(m)))
        q = DiagonalCovariance(np.arange(1, m + 1.0) ** -3)
        stream = NoiseStream(17, 2)
        x = smooth_field(m)
        for n in range(cfg.n_steps):
            x = step(x, cfg, stream, q, n)
        engine = simulate_path(cfg, q, stream).terminal
        assert np.abs(x.coeffs - engine.coeffs).max() <= 1e-13

    def test_snapshots_cadence(self):
        cfg = SimConfig(truncation=4, final_time=0.1, dt=0.01)
        q = DiagonalCovariance(np.ones(4) * 0.1)
        out = simulate_path(cfg, q, NoiseStream(3, 0), snapshot_stride=5)
        assert [t for t, _ in out.snapshots] == pytest.approx([0.0, 0.05, 0.1])


class TestSimulateConvolution:
    def test_zero_covariance_stays_zero(self):
        cfg = SimConfig(truncation=8, final_time=0.1, dt=0.01)
        q = DiagonalCovariance(np.zeros(8))
        out = simulate_convolution(cfg, q, NoiseStream(3, 0))
        assert np.all(out.terminal.coeffs == 0)

    def test_second_moment_matches_ito_isometry(self):
        m, n_paths = 32, 10_000
        q = DiagonalCovariance(np.arange(1, m + 1.0) ** -2)
        cfg = SimConfig(truncation=m, final_time=0.25, dt=0.25 / 16, nonlinear=False)
        run = run_coupled(cfg, [q], 99, np.arange(n_paths))
        vals = np.einsum("rk,rk->r", run.terminal[0], run.terminal[0])
        exact = convolution_variances(q, 0.25).sum()
        se = vals.std(ddof=1) / np.sqrt(n_paths)
        assert abs(vals.mean() - exact) <= 3 * se

    def test_mode_path_independent_of_truncation(self):
        q8 = DiagonalCovariance(np.arange(1, 9.0) ** -2)
        q16 = DiagonalCovariance(np.arange(1, 17.0) ** -2)
        cfg8 = SimConfig(truncation=8, final_time=0.1, dt=0.01)
        cfg16 = SimConfig(truncation=16, final_time=0.1, dt=0.01)
        small = simulate_convolution(cfg8, q8, NoiseStream(21, 3)).terminal
        large = simulate_convolution(cfg16, q16, NoiseStream(21, 3)).terminal
        assert np.array_equal(small.coeffs, large.coeffs[:8])

    def test_dense_rejected(self):
        cfg = SimConfig(truncation=2, final_time=0.1, dt=0.01)
        with pytest.raises(UnsupportedCovarianceError):
            simulate_convolution(cfg, DenseCovariance(np.eye(2)), NoiseStream(1, 0))


class TestGalerkinRefinement:
    def test_deterministic_spectral_decay(self):
        # Q=0, smooth start: ||X_M - X_2M|| decays monotonically in M
        q = DiagonalCovariance(np.zeros(256))
        diffs = []
        for m in (16, 32, 64, 128):
            ic = DeterministicInitial(smooth_field(2 * m, amplitude=1.0, decay=3.0))
            cfg = SimConfig(truncation=2 * m, final_time=0.05, dt=1e-3, initial=ic)
            obs = SupPairDistance(0, 1)
            run = run_galerkin(cfg, q, [m, 2 * m], 0, [0], observers=[obs])
            d = run.terminal[0] - run.terminal[1][:, :m]
            tail = run.terminal[1][:, m:]
            diffs.append(np.sqrt((d**2).sum() + (tail**2).sum()))
        for a, b in zip(diffs, diffs[1:]):
            assert b <= 1.2 * a
        assert diffs[-1] < diffs[0]
        # deterministic spectral convergence is steeper than the noisy rates
        slope = np.polyfit(np.log([16, 32, 64, 128]), np.log(diffs), 1)[0]
        assert slope <= -2.0

    def test_coupling_across_truncations(self):
        m_ref = 32
        q = DiagonalCovariance(np.arange(1, m_ref + 1.0) ** -2)
        cfg = SimConfig(truncation=m_ref, final_time=0.05, dt=1e-3, nonlinear=False)
        run = run_galerkin(cfg, q, [8, m_ref], 7, np.arange(3))
        # without the transport term the small system is literally the
        # projection of the large one
        assert np.allclose(run.terminal[0], run.terminal[1][:, :8], atol=1e-14)


class TestDivergenceHandling:
    def test_ensemble_flags_divergent_rows(self):
        m = 8
        ic = RandomSmoothInitial(amplitude=5.0, decay=2.0)
        samples = ic.sample(55, np.arange(64), m)
        norms = np.linalg.norm(samples, axis=1)
        thr = np.quantile(norms, 0.9)
        cfg = SimConfig(truncation=m, final_time=0.02, dt=1e-3, initial=ic,
                        blowup_threshold=thr)
        q = DiagonalCovariance(np.zeros(m))
        run = run_coupled(cfg, [q], 55, np.arange(64))
        assert run.diverged[0].sum() >= 6
        assert np.all(run.first_divergence[0][run.diverged[0]] >= 0)
        assert np.all(run.divergence_norm[0][run.diverged[0]] > thr)


class TestObservers:
    def test_trapezoid_integral_on_heat_decay(self):
        # d/dt of the grad-norm integral for pure decay of h_1 is explicit
        m, dt, t_final = 1, 1e-4, 0.1
        cfg = SimConfig(truncation=m, final_time=t_final, dt=dt, nonlinear=False,
                        initial=DeterministicInitial(SpectralField([1.0])))
        q = DiagonalCovariance(np.zeros(m))
        obs = TrapezoidIntegral(grad_norm_sq, dt, 0)
        run_coupled(cfg, [q], 0, [0], observers=[obs])
        lam = float(eigenvalues(1)[0])
        exact = (1 - np.exp(-2 * lam * t_final)) / 2.0
        assert obs.value[0] == pytest.approx(exact, rel=1e-4)

    def test_sup_pair_distance_padding(self):
        obs = SupPairDistance(0, 1)
        a = np.array([[1.0, 2.0]])
        b = np.array([[1.0, 2.0, 3.0]])
        obs.start([a, b])
        assert obs.sup()[0] == pytest.approx(3.0)


class TestSnapshotExport:
    def test_csv_files(self, tmp_path):
        cfg = SimConfig(truncation=3, final_time=0.02, dt=0.01)
        q = DiagonalCovariance([0.1, 0.1, 0.1])
        out = simulate_path(cfg, q, NoiseStream(3, 0), snapshot_stride=1)
        coeff_path = tmp_path / "coeffs.csv"
        grid_path = tmp_path / "grid.csv"
        export_coefficient_csv(coeff_path, out.snapshots)
        export_grid_csv(grid_path, out.snapshots, 5)
        lines = coeff_path.read_text().strip().splitlines()
        assert lines[0] == "t,k,coeff"
        assert len(lines) == 1 + 3 * 3
        glines = grid_path.read_text().strip().splitlines()
        assert glines[0] == "t,z,value"
        assert len(glines) == 1 + 3 * 5
