import math
import os
import unittest
from unittest.mock import patch

import numpy as np

from ranlase import rmt
from ranlase.densities import dual_density, rho_cavity_full, rho_cavity_weak, rho_waveguide_semiinf
from ranlase.errors import (
    ConditioningError,
    ConvergenceError,
    DomainError,
    MonteCarloError,
    SingularDualError,
    SkippedSamplesError,
    SupportMismatchError,
)
from ranlase.photostat import absorptivity, finite_waveguide_moments
from ranlase.medium import gamma_critical
from ranlase.rmt import (
    EnsembleConfig,
    ScatteringBlocks,
    SubunitaryS,
    Symmetry,
    as_samples,
    barrier,
    calibrate_reflector,
    check_absorbing,
    compare,
    compose_star,
    dual_amplifying,
    empirical_density,
    finite_waveguide_emission,
    pooled_strengths,
    sample_cavity_strengths,
    sample_from_density,
    sample_unitary,
    sample_waveguide_strengths,
    strengths_table,
)

SLOW = os.getenv("RANLASE_SLOW") == "1"


def assert_unitary(test, matrix, tol):
    eye = np.eye(matrix.shape[0])
    test.assertLess(np.max(np.abs(matrix @ matrix.conj().T - eye)), tol)


def diagonal_sample(values, index=0):
    matrix = np.diag(np.asarray(values, dtype=complex))
    return SubunitaryS(matrix=matrix, strengths=np.sort(np.abs(values) ** 2), index=index, provenance="diag")


class TestUnitaryEnsembles(unittest.TestCase):

    def test_cue_is_unitary(self):
        rng = np.random.default_rng(1)
        assert_unitary(self, sample_unitary(8, Symmetry.UNITARY, rng), 1e-12)

    def test_coe_is_symmetric_unitary(self):
        u = sample_unitary(6, Symmetry.ORTHOGONAL, np.random.default_rng(2))
        assert_unitary(self, u, 1e-12)
        np.testing.assert_allclose(u, u.T, atol=1e-13)

    def test_single_mode_phase_is_uniform(self):
        rng = np.random.default_rng(3)
        phases = np.array([sample_unitary(1, rng=rng)[0, 0] for _ in range(10000)])
        np.testing.assert_allclose(np.abs(phases), 1.0, atol=1e-12)
        self.assertLess(abs(phases.mean()), 0.05)

    def test_level_repulsion(self):
        rng = np.random.default_rng(4)
        dim = 20
        smallest = math.inf
        for _ in range(200):
            angles = np.sort(np.angle(np.linalg.eigvals(sample_unitary(dim, rng=rng))))
            spacings = np.diff(np.concatenate([angles, [angles[0] + 2.0 * math.pi]]))
            smallest = min(smallest, spacings.min())
        self.assertGreater(smallest, 1e-3 * 2.0 * math.pi / dim)

    def test_dimension(self):
        with self.assertRaises(DomainError):
            sample_unitary(0)


class TestStarProduct(unittest.TestCase):

    def test_transparent_is_identity(self):
        u = sample_unitary(6, rng=np.random.default_rng(5))
        blocks = ScatteringBlocks.from_matrix(u, 3)
        composed = compose_star(ScatteringBlocks.transparent(3), blocks)
        np.testing.assert_allclose(composed.as_matrix(), u, atol=1e-13)

    def test_unitary_composition_stays_unitary(self):
        rng = np.random.default_rng(6)
        first = ScatteringBlocks.from_matrix(sample_unitary(6, rng=rng), 3)
        second = ScatteringBlocks.from_matrix(sample_unitary(7, rng=rng), 3)
        composed = compose_star(first, second)
        self.assertEqual((composed.left, composed.right), (3, 4))
        assert_unitary(self, composed.as_matrix(), 1e-10)

    def test_phase_averaged_barriers(self):
        # two G = 1/2 barriers in series transmit 1/3 once the interference is averaged
        transmissions = []
        count = 128
        for k in range(count):
            phase = ScatteringBlocks.transmission_only(np.array([[np.exp(2j * math.pi * k / count)]]))
            chain = compose_star(compose_star(barrier(1, 0.5), phase), barrier(1, 0.5))
            transmissions.append(abs(chain.t[0, 0]) ** 2)
        self.assertAlmostEqual(float(np.mean(transmissions)), 1.0 / 3.0, delta=1e-12)

    def test_barrier_is_unitary(self):
        assert_unitary(self, barrier(3, 0.2).as_matrix(), 1e-14)
        with self.assertRaises(DomainError):
            barrier(1, 0.0)

    def test_singular_cascade(self):
        zero = np.zeros((1, 1), dtype=complex)
        one = np.ones((1, 1), dtype=complex)
        mirror_right = ScatteringBlocks(r=zero, t=zero, t_prime=zero, r_prime=one)
        mirror_left = ScatteringBlocks(r=one, t=zero, t_prime=zero, r_prime=zero)
        with self.assertRaises(ConditioningError):
            compose_star(mirror_right, mirror_left)

    def test_channel_mismatch(self):
        with self.assertRaises(DomainError):
            compose_star(ScatteringBlocks.transparent(2), ScatteringBlocks.transparent(3))


class TestDuality(unittest.TestCase):

    def test_reciprocal_strengths(self):
        sample = diagonal_sample([0.5, math.sqrt(0.5)])
        dual = dual_amplifying(sample)
        np.testing.assert_allclose(dual.strengths, [2.0, 4.0], rtol=1e-12)
        np.testing.assert_allclose(rmt.strengths_of(dual.matrix), [2.0, 4.0], rtol=1e-12)
        self.assertTrue(dual.provenance.startswith("dual("))

    def test_involution(self):
        sample = diagonal_sample([0.3, 0.9j])
        twice = dual_amplifying(dual_amplifying(sample))
        np.testing.assert_allclose(twice.strengths, sample.strengths, rtol=1e-10)
        np.testing.assert_allclose(twice.matrix, sample.matrix, atol=1e-12)
        self.assertEqual(twice.provenance, sample.provenance)

    def test_zero_strength_has_no_dual(self):
        with self.assertRaises(SingularDualError):
            dual_amplifying(diagonal_sample([0.0, 1.0]))


class TestCavityEnsemble(unittest.TestCase):

    def test_fictitious_channels(self):
        cfg = EnsembleConfig.create(modes=10, gamma=0.37, barrier=0.05)
        self.assertEqual(cfg.fictitious_modes, 74)
        self.assertAlmostEqual(cfg.fictitious_modes * cfg.barrier_transparency, 10 * 0.37, places=12)
        self.assertEqual(EnsembleConfig.create(modes=3, gamma=0.0).fictitious_modes, 0)

    def test_config_validation(self):
        with self.assertRaises(DomainError):
            EnsembleConfig.create(modes=3, gamma=1.0, barrier=0.1)
        with self.assertRaises(DomainError):
            EnsembleConfig.create(modes=0, gamma=1.0)
        with self.assertRaises(DomainError):
            EnsembleConfig.create(modes=3, gamma=-1.0)

    def test_lossless_cavity(self):
        samples = sample_cavity_strengths(EnsembleConfig.create(modes=4, gamma=0.0, samples=20), workers=1)
        np.testing.assert_allclose(pooled_strengths(samples), 1.0, atol=1e-10)

    def test_absorbing_cavity(self):
        cfg = EnsembleConfig.create(modes=10, gamma=1.0, barrier=0.05, samples=200, seed=11)
        samples = sample_cavity_strengths(cfg, workers=2)
        self.assertEqual(len(samples), 200)
        check_absorbing(samples)
        self.assertAlmostEqual(absorptivity(pooled_strengths(samples)), 0.5, delta=0.03)

    def test_worker_count_does_not_change_results(self):
        cfg = EnsembleConfig.create(modes=3, gamma=0.5, barrier=0.05, samples=16, seed=5)
        serial = sample_cavity_strengths(cfg, workers=1)
        parallel = sample_cavity_strengths(cfg, workers=4)
        for a, b in zip(serial, parallel):
            self.assertEqual(a.index, b.index)
            np.testing.assert_array_equal(a.strengths, b.strengths)

    def test_seed_changes_results(self):
        first = sample_cavity_strengths(EnsembleConfig.create(modes=3, gamma=0.5, samples=2, seed=1), workers=1)
        second = sample_cavity_strengths(EnsembleConfig.create(modes=3, gamma=0.5, samples=2, seed=2), workers=1)
        self.assertFalse(np.array_equal(first[0].strengths, second[0].strengths))

    def test_skipped_samples(self):
        def draw(index):
            if index % 10 == 0:
                raise ConditioningError("singular")
            return diagonal_sample([0.5], index)

        with self.assertRaises(SkippedSamplesError):
            rmt._run_samples(draw, 100, 1, "test")
        self.assertEqual(len(rmt._run_samples(lambda i: diagonal_sample([0.5], i), 5, 1, "test")), 5)


class TestWaveguideEnsemble(unittest.TestCase):

    def test_lossless_ohm_law(self):
        result = calibrate_reflector(10, lengths=(2.0,), samples=100, seed=3, workers=2)
        self.assertTrue(result.passed, msg=f"deviations {result.deviations}")
        self.assertAlmostEqual(result.target[0], 1.0 / 3.0)

    def test_absorbing_strengths_in_range(self):
        run = sample_waveguide_strengths(4, 1.0, 1.0, samples=10, seed=1, workers=1)
        check_absorbing(run.samples)
        for sample in run.samples:
            emission = finite_waveguide_emission(sample.blocks)
            self.assertTrue(np.all(emission >= -1e-10))
            self.assertTrue(np.all(emission <= 1.0 + 1e-10))

    def test_lossless_emission_is_complete(self):
        run = sample_waveguide_strengths(4, 1.0, 0.0, samples=3, seed=2, workers=1)
        for sample in run.samples:
            np.testing.assert_allclose(finite_waveguide_emission(sample.blocks), 1.0, atol=1e-10)

    def test_absorption_coefficient(self):
        self.assertAlmostEqual(rmt.absorption_amplitude(1.0, 0.05), math.exp(-0.25 * 0.05))
        self.assertAlmostEqual(rmt.absorption_amplitude(1.0, 0.05, 3.0 / 32.0), math.exp(-3.0 * 0.05 / 32.0))
        blocks = rmt.reflector(3, 0.05, 2.0, 0.5, coefficient=3.0 / 32.0)
        expected = math.exp(-3.0 * 2.0 * 0.05 / 32.0) * math.sqrt(1.0 - 0.025)
        np.testing.assert_allclose(blocks.t, expected * np.eye(3))
        with self.assertRaises(DomainError):
            rmt.absorption_amplitude(1.0, 0.05, -0.1)

    def test_absorption_coefficient_rescales_gamma(self):
        # only the product coefficient * gamma enters a slice
        slow = sample_waveguide_strengths(3, 1.0, 1.0, samples=4, seed=8, workers=1,
                                          absorption_coefficient=3.0 / 32.0)
        fast = sample_waveguide_strengths(3, 1.0, 3.0 / 8.0, samples=4, seed=8, workers=1)
        for a, b in zip(slow.samples, fast.samples):
            np.testing.assert_allclose(a.strengths, b.strengths, atol=1e-12)
        self.assertIn("a=0.09375", slow.samples[0].provenance)

    def test_semi_infinite(self):
        run = sample_waveguide_strengths(8, 1.0, 1.0, samples=150, seed=7, semi_infinite=True,
                                         ks_tol=0.1, workers=2)
        self.assertGreaterEqual(run.length_ratio, 2.0)
        self.assertTrue(run.ks_history)
        self.assertLess(run.ks_history[-1][1], 0.1)
        expected = 0.5 * (math.sqrt(5.0) - 1.0)
        self.assertAlmostEqual(absorptivity(pooled_strengths(run.samples)) / expected, 1.0, delta=0.08)

    def singular_fifth_cascade(self):
        extend = rmt.extend_waveguide
        calls = []

        def flaky(*args, **kwargs):
            calls.append(1)
            if len(calls) == 5:
                raise ConditioningError("singular")
            return extend(*args, **kwargs)

        return patch("ranlase.rmt.extend_waveguide", side_effect=flaky)

    def test_semi_infinite_drops_ill_conditioned_cascade(self):
        with self.singular_fifth_cascade(), patch.object(rmt, "SKIP_FRACTION_LIMIT", 0.05):
            with self.assertLogs("ranlase.rmt", level="WARNING"):
                run = sample_waveguide_strengths(4, 1.0, 1.0, samples=100, seed=3, semi_infinite=True,
                                                 ks_tol=0.2, workers=1)
        self.assertEqual(len(run.samples), 99)
        self.assertNotIn(4, [s.index for s in run.samples])
        check_absorbing(run.samples)

    def test_semi_infinite_skip_limit(self):
        with self.singular_fifth_cascade():
            with self.assertRaises(SkippedSamplesError):
                sample_waveguide_strengths(4, 1.0, 1.0, samples=100, seed=3, semi_infinite=True,
                                           ks_tol=0.2, workers=1)

    def test_semi_infinite_needs_absorption(self):
        with self.assertRaises(DomainError):
            sample_waveguide_strengths(4, 1.0, 0.0, samples=2, semi_infinite=True)

    def test_not_stationary(self):
        with self.assertRaises(ConvergenceError):
            sample_waveguide_strengths(2, 1.0, 1000.0, samples=4, seed=1, semi_infinite=True,
                                       ks_tol=0.0, workers=1)

    def test_input_validation(self):
        with self.assertRaises(DomainError):
            sample_waveguide_strengths(4, 1.0, 1.0, delta=0.1, samples=2)
        with self.assertRaises(DomainError):
            sample_waveguide_strengths(4, 0.5, 1.0, samples=2)


class TestComparison(unittest.TestCase):

    def test_sampler_passes_its_own_density(self):
        rho = rho_cavity_full(1, 1.0)
        values = sample_from_density(rho, 20000, np.random.default_rng(8))
        empirical = empirical_density(as_samples(values, 1, "sampled"), 30, rho.support)
        report = compare(empirical, rho)
        self.assertGreater(report.p_value, 1e-3)
        self.assertLess(abs(report.moment_deltas[1]), 0.02)
        self.assertEqual(report.outside_fraction, 0.0)

    def test_dual_sampler(self):
        rho = dual_density(rho_cavity_full(1, 0.5))
        values = sample_from_density(rho, 2000, np.random.default_rng(9))
        self.assertGreaterEqual(values.min(), rho.sigma_min - 1e-12)
        self.assertLessEqual(values.max(), rho.sigma_max + 1e-9)

    def test_strong_cavity_resembles_waveguide(self):
        values = sample_from_density(rho_cavity_full(1, 4.0), 20000, np.random.default_rng(10))
        empirical = empirical_density(as_samples(values, 1, "cavity"), 30, (0.0, 0.55))
        report = compare(empirical, rho_waveguide_semiinf(1, 4.0))
        self.assertLess(abs(report.moment_deltas[1]), 0.1)

    def test_support_mismatch(self):
        values = sample_from_density(rho_waveguide_semiinf(1, 1.0), 2000, np.random.default_rng(11))
        empirical = empirical_density(as_samples(values, 1, "waveguide"), 20, (0.0, 1.0))
        with self.assertRaises(SupportMismatchError):
            compare(empirical, rho_cavity_weak(1, 0.05))

    def test_histogram_needs_enough_samples(self):
        with self.assertRaises(DomainError):
            empirical_density([diagonal_sample([0.5], i) for i in range(10)])

    def test_histogram_density_integrates_to_modes(self):
        samples = [diagonal_sample([0.3, 0.6], i) for i in range(1000)]
        empirical = empirical_density(samples, 10, (0.0, 1.0))
        self.assertAlmostEqual(float(np.sum(empirical.density * np.diff(empirical.edges))), 2.0)

    def test_strengths_table(self):
        frame = strengths_table([diagonal_sample([0.3, 0.6], 4)])
        self.assertEqual(list(frame.columns), ["sample", "sigma_1", "sigma_2"])
        self.assertEqual(frame.iloc[0]["sample"], 4)

    def test_check_absorbing(self):
        with self.assertRaises(MonteCarloError):
            check_absorbing([diagonal_sample([1.5])])


@unittest.skipUnless(SLOW, "set RANLASE_SLOW=1 to run the full Monte Carlo validation")
class TestFullValidation(unittest.TestCase):
    # N = 10 and 10^3 samples keep the (N + N')-dimensional Haar draws to a few minutes in total

    def assertMoments(self, samples, rho, tolerance=0.03):
        report = compare(empirical_density(samples, 30, rho.support), rho)
        for p, delta in report.moment_deltas.items():
            self.assertLess(abs(delta), tolerance, msg=f"m{p} of {rho.provenance}, p-value {report.p_value:.3g}")
        return report

    def test_cavity_mean_absorptivity(self):
        for gamma in (0.5, 1.0, 2.0):
            cfg = EnsembleConfig.create(modes=10, gamma=gamma, barrier=0.05, samples=1000, seed=1)
            per_sample = np.array([absorptivity(s.strengths) for s in sample_cavity_strengths(cfg)])
            error = per_sample.std(ddof=1) / math.sqrt(per_sample.size)
            self.assertLess(abs(per_sample.mean() - gamma / (1.0 + gamma)), 3.0 * error + 0.01, msg=f"gamma={gamma}")

    def test_cavity_histogram(self):
        cfg = EnsembleConfig.create(modes=10, gamma=1.0, barrier=0.05, samples=1000, seed=2)
        self.assertMoments(sample_cavity_strengths(cfg), rho_cavity_full(10, 1.0))

    def test_weak_cavity_histogram(self):
        cfg = EnsembleConfig.create(modes=10, gamma=0.05, barrier=0.01, samples=1000, seed=3)
        self.assertMoments(sample_cavity_strengths(cfg), rho_cavity_weak(10, 0.05), tolerance=0.05)

    def test_amplifying_duals(self):
        cfg = EnsembleConfig.create(modes=10, gamma=0.5, barrier=0.05, samples=1000, seed=4)
        duals = [dual_amplifying(s) for s in sample_cavity_strengths(cfg)]
        self.assertMoments(duals, dual_density(rho_cavity_full(10, 0.5)))

    def test_semi_infinite_waveguide(self):
        run = sample_waveguide_strengths(10, 2.0, 1.0, samples=200, seed=5, semi_infinite=True, ks_tol=0.05)
        expected = 0.5 * (math.sqrt(5.0) - 1.0)
        self.assertAlmostEqual(absorptivity(pooled_strengths(run.samples)) / expected, 1.0, delta=0.05)

    def test_finite_waveguide_emission(self):
        length_ratio, gamma = 15.0, 0.01
        run = sample_waveguide_strengths(10, length_ratio, gamma, samples=100, seed=6)
        emitted = np.concatenate([finite_waveguide_emission(s.blocks) for s in run.samples])
        m1, _, _ = finite_waveguide_moments(gamma, gamma_critical(length_ratio), amplifying=False)
        self.assertAlmostEqual(float(np.mean(1.0 - emitted)) / m1, 1.0, delta=0.1)


if __name__ == "__main__":
    unittest.main()
