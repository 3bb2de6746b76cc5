import math
import unittest

import numpy as np

from ranlase.densities import (
    StrengthDensity,
    WEAK_CAVITY_MAX_GAMMA,
    cavity_edges,
    cavity_edges_weak,
    density_for,
    dual_density,
    rho_cavity_full,
    rho_cavity_weak,
    rho_waveguide_semiinf,
    spectral_moment,
    spectral_moments,
)
from ranlase.errors import DomainError, InfiniteMomentError, RanlaseWarning, ValidityError
from ranlase.photostat import cavity_moments, waveguide_moments

GAMMAS = (0.01, 0.1, 0.5, 1.0, 4.0, 20.0)


class TestNormalization(unittest.TestCase):

    def assertWeight(self, rho, modes):
        total, _ = rho.integrate()
        self.assertAlmostEqual(total / modes, 1.0, delta=1e-8, msg=rho.provenance)

    def test_waveguide(self):
        for gamma in GAMMAS:
            self.assertWeight(rho_waveguide_semiinf(3, gamma), 3)

    def test_cavity_full(self):
        for gamma in GAMMAS:
            self.assertWeight(rho_cavity_full(2, gamma), 2)

    def test_cavity_weak(self):
        for gamma in (0.001, 0.01, 0.1):
            self.assertWeight(rho_cavity_weak(1, gamma), 1)

    def test_amplifying_duals(self):
        for gamma in (0.1, 0.5, 0.9):
            self.assertWeight(dual_density(rho_cavity_full(1, gamma)), 1)
        self.assertWeight(dual_density(rho_waveguide_semiinf(1, 4.0)), 1)


class TestSupport(unittest.TestCase):

    def test_waveguide_upper_edge(self):
        rho = rho_waveguide_semiinf(1, 4.0)
        self.assertEqual(rho.support, (0.0, 0.5))
        self.assertEqual(rho(0.6), 0.0)
        self.assertGreater(rho(0.25), 0.0)

    def test_zero_outside_support(self):
        rho = rho_cavity_full(1, 0.5)
        values = rho(np.array([-0.5, rho.sigma_min * 0.5, 1.5]))
        np.testing.assert_array_equal(values, 0.0)

    def test_cavity_edges_cross_zero_at_unit_gamma(self):
        self.assertAlmostEqual(cavity_edges(1.0)[0], 0.0, places=14)
        self.assertGreater(cavity_edges(0.5)[0], 0.0)
        self.assertLess(cavity_edges(2.0)[0], 0.0)
        self.assertEqual(rho_cavity_full(1, 2.0).sigma_min, 0.0)

    def test_weak_edges_approach_exact_edges(self):
        gamma = 0.001
        weak_lo, weak_hi = cavity_edges_weak(gamma)
        lo, hi = cavity_edges(gamma)
        width = weak_hi - weak_lo
        self.assertLess(abs(lo - weak_lo) / width, 0.01)
        self.assertLess(abs(hi - weak_hi) / width, 0.01)

    def test_dual_support(self):
        rho = rho_cavity_full(1, 0.5)
        dual = dual_density(rho)
        self.assertAlmostEqual(dual.sigma_min, 1.0 / rho.sigma_max)
        self.assertAlmostEqual(dual.sigma_max, 1.0 / rho.sigma_min)
        self.assertTrue(dual.is_amplifying)
        self.assertGreaterEqual(dual.sigma_min, 1.0)

    def test_dual_is_involution(self):
        rho = rho_cavity_full(1, 0.5)
        self.assertIs(dual_density(dual_density(rho)), rho)

    def test_dual_pointwise(self):
        rho = rho_cavity_full(1, 0.5)
        dual = dual_density(rho)
        for sigma in np.linspace(dual.sigma_min, min(dual.sigma_max, 50.0), 12)[1:-1]:
            self.assertAlmostEqual(sigma ** 2 * dual(sigma), rho(1.0 / sigma), places=12)

    def test_dual_needs_absorbing_input(self):
        with self.assertRaises(DomainError):
            dual_density(StrengthDensity(support=(1.5, 2.0), evaluate=np.ones_like, total_weight=1.0,
                                         edge_exponents=(0.0, 0.0), provenance="gain"))

    def test_mass_between_splits(self):
        rho = rho_cavity_full(1, 1.0)
        middle = 0.5 * (rho.sigma_min + rho.sigma_max)
        total = rho.mass_between(rho.sigma_min, middle) + rho.mass_between(middle, rho.sigma_max)
        self.assertAlmostEqual(total, 1.0, places=8)

    def test_dual_mass_between(self):
        rho = rho_cavity_full(1, 0.5)
        dual = dual_density(rho)
        self.assertAlmostEqual(dual.mass_between(2.0, 5.0), rho.mass_between(0.2, 0.5), places=10)


class TestValidity(unittest.TestCase):

    def test_weak_guard_warns(self):
        with self.assertWarns(RanlaseWarning):
            rho = rho_cavity_weak(1, 0.15)
        self.assertTrue(rho.notes)

    def test_weak_beyond_zero_edge(self):
        with self.assertRaisesRegex(ValidityError, r"lower edge .* is negative"):
            rho_cavity_weak(1, WEAK_CAVITY_MAX_GAMMA + 0.01)
        with self.assertRaisesRegex(ValidityError, "rho_cavity_full"):
            rho_cavity_weak(1, 0.5)

    def test_invalid_gamma(self):
        for bad in (0.0, -1.0, float("nan"), float("inf")):
            with self.assertRaises(DomainError):
                rho_waveguide_semiinf(1, bad)
        with self.assertRaises(DomainError):
            rho_cavity_full(0, 0.5)

    def test_density_for_unknown_geometry(self):
        with self.assertRaises(DomainError):
            density_for("finite-waveguide", 1, 0.1)


class TestMoments(unittest.TestCase):

    def test_waveguide_first_moment(self):
        for gamma in GAMMAS:
            m1 = spectral_moment(rho_waveguide_semiinf(1, gamma), 1)
            self.assertAlmostEqual(m1, 0.5 * gamma * (math.sqrt(1.0 + 4.0 / gamma) - 1.0), delta=1e-6 * m1)

    def test_cavity_first_moment(self):
        for gamma in GAMMAS:
            m1 = spectral_moment(rho_cavity_full(1, gamma), 1)
            self.assertAlmostEqual(m1, gamma / (1.0 + gamma), delta=1e-6 * m1)

    def test_second_moments(self):
        for gamma in (0.1, 1.0, 4.0):
            m2 = spectral_moment(rho_waveguide_semiinf(1, gamma), 2)
            self.assertAlmostEqual(m2, waveguide_moments(gamma)[1], delta=1e-6 * m2)
            m2 = spectral_moment(rho_cavity_full(1, gamma), 2)
            self.assertAlmostEqual(m2, cavity_moments(gamma)[1], delta=1e-6 * m2)

    def test_amplifying_cavity_moments(self):
        for gamma in (0.1, 0.5, 0.9):
            m1, m2 = spectral_moments(dual_density(rho_cavity_full(1, gamma)), 2)
            e1, e2 = cavity_moments(gamma, amplifying=True)
            self.assertLess(m1, 0.0)
            self.assertAlmostEqual(m1, e1, delta=1e-6 * abs(e1))
            self.assertAlmostEqual(m2, e2, delta=1e-6 * abs(e2))

    def test_divergent_dual(self):
        dual = dual_density(rho_waveguide_semiinf(1, 1.0))
        self.assertTrue(dual.divergent)
        with self.assertRaises(InfiniteMomentError):
            spectral_moment(dual, 1)

    def test_moment_order(self):
        with self.assertRaises(DomainError):
            spectral_moment(rho_cavity_full(1, 0.5), 0)


class TestCrossover(unittest.TestCase):

    def test_weak_cavity_matches_full_density(self):
        gamma = 0.001
        weak = rho_cavity_weak(1, gamma)
        full = rho_cavity_full(1, gamma)
        lo, hi = weak.support
        sigma = np.linspace(lo + 0.25 * (hi - lo), hi - 0.25 * (hi - lo), 25)
        np.testing.assert_allclose(full(sigma), weak(sigma), rtol=0.02)

    def test_strong_absorption_cavity_approaches_waveguide(self):
        gamma = 20.0
        cavity = spectral_moments(rho_cavity_full(1, gamma), 2)
        waveguide = spectral_moments(rho_waveguide_semiinf(1, gamma), 2)
        for c, w in zip(cavity, waveguide):
            self.assertAlmostEqual(c / w, 1.0, delta=0.01)


if __name__ == "__main__":
    unittest.main()
