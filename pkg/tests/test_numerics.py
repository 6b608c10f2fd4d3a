# Copyright 2024 The FermiStability Authors. All rights reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

# tests for quadrature, Legendre polynomials, root finding, the sharp transform and Monte Carlo
import math
import unittest

import numpy as np
from scipy.special import eval_legendre
from scipy.stats import norm

from fermistability.errors import DomainError, InvalidRange, NoSignChange, NonConvergence, ZeroDensity
from fermistability.numerics import (
    FormBreakdown,
    LogGrid,
    QuadratureConfig,
    RadialFunction,
    find_root,
    gauss_legendre,
    gregory_weights,
    integrate_adaptive,
    legendre_p,
    mc_integrate,
    mc_integrate_log,
    mellin_sharp,
)


class GaussianProposal:
    """One-dimensional normal proposal."""

    def __init__(self, sigma=1.0):
        self.sigma = sigma

    def sample(self, rng, size):
        return rng.normal(0.0, self.sigma, size=(size, 1))

    def density(self, points):
        return norm.pdf(points[:, 0], scale=self.sigma)

    def log_density(self, points):
        return norm.logpdf(points[:, 0], scale=self.sigma)


class VanishingProposal(GaussianProposal):
    def density(self, points):
        return np.zeros(points.shape[0])

    def log_density(self, points):
        return np.full(points.shape[0], -np.inf)


class IntegrateAdaptiveTest(unittest.TestCase):
    def test_constant(self):
        self.assertAlmostEqual(integrate_adaptive(lambda x: 1.0, 0.0, 1.0), 1.0, places=13)

    def test_semi_infinite_exponential(self):
        self.assertAlmostEqual(integrate_adaptive(lambda x: np.exp(-x), 0.0, np.inf), 1.0, places=9)

    def test_logarithm(self):
        value = integrate_adaptive(lambda y: 1.0 / (2.0 + y), -1.0, 1.0)
        self.assertAlmostEqual(value, math.log(3.0), places=12)
        coarse = integrate_adaptive(lambda y: 1.0 / (2.0 + y), -1.0, 1.0, QuadratureConfig(base_order=7))
        self.assertAlmostEqual(coarse, math.log(3.0), places=10)

    def test_polynomial_exact(self):
        cfg = QuadratureConfig()
        degree = 2 * cfg.base_order - 1
        coefficients = np.random.default_rng(3).normal(size=degree + 1)
        poly = np.polynomial.Polynomial(coefficients)
        exact = poly.integ()(2.0) - poly.integ()(-1.0)
        self.assertLess(abs(integrate_adaptive(poly, -1.0, 2.0, cfg) - exact), 1e-13 * max(1.0, abs(exact)))

    def test_invalid_range(self):
        with self.assertRaises(InvalidRange):
            integrate_adaptive(lambda x: x, 1.0, 1.0)
        with self.assertRaises(InvalidRange):
            integrate_adaptive(lambda x: x, 2.0, 1.0)

    def test_non_convergence(self):
        with self.assertRaises(NonConvergence):
            integrate_adaptive(lambda x: 1.0 / x, 0.0, 1.0, QuadratureConfig(max_subdivisions=5))


class LegendreTest(unittest.TestCase):
    def test_examples(self):
        self.assertEqual(legendre_p(0, 0.3), 1.0)
        self.assertEqual(legendre_p(1, 0.5), 0.5)
        self.assertAlmostEqual(legendre_p(2, 0.5), -0.125, places=15)

    def test_out_of_range(self):
        with self.assertRaises(DomainError):
            legendre_p(2, 1.5)

    def test_recurrence_and_oracle(self):
        y = np.linspace(-1.0, 1.0, 101)
        for l in range(1, 40):
            residual = (l + 1) * legendre_p(l + 1, y) - (2 * l + 1) * y * legendre_p(l, y) + l * legendre_p(l - 1, y)
            self.assertLess(np.max(np.abs(residual)), 1e-12)
            self.assertLess(np.max(np.abs(legendre_p(l, y) - eval_legendre(l, y))), 1e-12)
            self.assertLessEqual(np.max(np.abs(legendre_p(l, y))), 1.0 + 1e-14)

    def test_orthogonality(self):
        y, w = gauss_legendre(40)
        for l in range(13):
            for k in range(13):
                value = float(np.dot(w, legendre_p(l, y) * legendre_p(k, y)))
                expected = 2.0 / (2 * l + 1) if l == k else 0.0
                self.assertAlmostEqual(value, expected, delta=1e-10)


class FindRootTest(unittest.TestCase):
    def test_examples(self):
        self.assertAlmostEqual(find_root(lambda x: x - 1.0, 0.0, 2.0), 1.0, delta=1e-12)
        self.assertAlmostEqual(find_root(lambda x: x * x - 2.0, 1.0, 2.0), math.sqrt(2.0), delta=1e-12)
        self.assertAlmostEqual(find_root(math.cos, 1.0, 2.0), math.pi / 2, delta=1e-12)

    def test_no_sign_change(self):
        with self.assertRaises(NoSignChange):
            find_root(lambda x: x * x + 1.0, -1.0, 1.0)


class LogGridTest(unittest.TestCase):
    def test_gregory_weights_exact_on_cubics(self):
        grid = LogGrid(-1.0, 2.0, 31)
        x = grid.nodes
        value = float(np.dot(grid.weights, x**3 - 2.0 * x**2 + 1.0))
        exact = (2.0**4 - 1.0) / 4.0 - 2.0 * (2.0**3 + 1.0) / 3.0 + 3.0
        self.assertAlmostEqual(value, exact, places=12)
        self.assertAlmostEqual(float(gregory_weights(31, 0.1).sum()), 3.0, places=13)

    def test_invariants(self):
        with self.assertRaises(DomainError):
            LogGrid(0.0, 1.0, 8)
        with self.assertRaises(InvalidRange):
            LogGrid(1.0, 0.0, 32)
        grid = LogGrid.with_spacing(0.0, 1.0, 0.01)
        self.assertLessEqual(grid.spacing, 0.01 + 1e-15)
        self.assertTrue(np.all(np.diff(grid.nodes) > 0))


def _gauss_l1(x):
    # h(x) for g(p) = p exp(-p^2)
    return np.exp(3.0 * x - np.exp(2.0 * x))


class RadialFunctionTest(unittest.TestCase):
    def test_norm(self):
        g = RadialFunction.from_log_profile(_gauss_l1)
        # int p^4 exp(-2 p^2) dp = 3 sqrt(pi) / (8 * 2^{5/2})
        expected = 3.0 * math.sqrt(math.pi) / (8.0 * 2.0**2.5)
        self.assertAlmostEqual(g.norm_squared() / expected, 1.0, places=10)
        self.assertAlmostEqual(g.normalized().norm_squared(), 1.0, places=12)

    def test_values_and_call(self):
        g = RadialFunction.from_profile(lambda p: p * np.exp(-(p**2)))
        self.assertAlmostEqual(g(1.3), 1.3 * math.exp(-1.69), places=12)
        with self.assertRaises(DomainError):
            g(0.0)

    def test_dilate_shifts_profile(self):
        g = RadialFunction.from_log_profile(_gauss_l1)
        moved = g.dilate(0.5, 2.0)
        self.assertAlmostEqual(float(moved.weighted_at(0.7)[0]), 2.0 * float(_gauss_l1(0.2)), places=14)
        self.assertAlmostEqual(moved.grid.x_min, g.grid.x_min + 0.5, places=14)

    def test_non_finite_rejected(self):
        grid = LogGrid(0.0, 1.0, 16)
        with self.assertRaises(DomainError):
            RadialFunction(grid, np.full(16, np.nan))


class MellinSharpTest(unittest.TestCase):
    def test_zero(self):
        g = RadialFunction.zeros()
        self.assertEqual(np.max(np.abs(mellin_sharp(g, np.linspace(-5, 5, 11)))), 0.0)

    def test_conjugate_symmetry(self):
        g = RadialFunction.from_log_profile(_gauss_l1)
        k = np.array([0.3, 1.0, 4.5])
        np.testing.assert_allclose(mellin_sharp(g, -k), np.conj(mellin_sharp(g, k)), rtol=1e-13, atol=1e-15)

    def test_known_transform(self):
        # int dx e^{-ikx} exp(3x - e^{2x}) = Gamma((3 - ik)/2) / 2
        from scipy.special import gamma

        g = RadialFunction.from_log_profile(_gauss_l1)
        for k in (0.0, 0.7, 3.0):
            expected = gamma((3.0 - 1j * k) / 2.0) / 2.0 / math.sqrt(2.0 * math.pi)
            self.assertLess(abs(mellin_sharp(g, k) - expected), 1e-9)

    def test_plancherel(self):
        g = RadialFunction.from_log_profile(_gauss_l1)
        cfg = QuadratureConfig(rel_tol=1e-8)
        lhs = 2.0 * integrate_adaptive(lambda k: np.abs(mellin_sharp(g, k)) ** 2, 0.0, 40.0, cfg)
        # int p^3 |g|^2 dp = int p^5 exp(-2 p^2) dp = 1/8
        self.assertLess(abs(lhs / 0.125 - 1.0), 1e-4)


class MonteCarloTest(unittest.TestCase):
    def test_self_normalized(self):
        proposal = GaussianProposal()
        estimate = mc_integrate(1, proposal, proposal.density, 10_000, seed=7, n_batches=10)
        self.assertEqual(estimate.mean, 1.0)
        self.assertEqual(estimate.std_err, 0.0)
        self.assertEqual(estimate.n_samples, 10_000)

    def test_gaussian_integral(self):
        estimate = mc_integrate(
            1, GaussianProposal(1.0), lambda x: np.exp(-x[:, 0] ** 2), 200_000, seed=11, n_batches=20
        )
        self.assertLess(abs(estimate.mean - math.sqrt(math.pi)), 3.0 * estimate.std_err)
        self.assertGreater(estimate.std_err, 0.0)

    def test_deterministic_and_thread_independent(self):
        args = (1, GaussianProposal(1.0), lambda x: np.exp(-x[:, 0] ** 2), 50_000)
        first = mc_integrate(*args, seed=5, n_batches=16, workers=1)
        second = mc_integrate(*args, seed=5, n_batches=16, workers=1)
        parallel = mc_integrate(*args, seed=5, n_batches=16, workers=4)
        self.assertEqual(first, second)
        self.assertEqual(first.mean, parallel.mean)
        self.assertEqual(first.std_err, parallel.std_err)

    def test_zero_density(self):
        with self.assertRaises(ZeroDensity):
            mc_integrate(1, VanishingProposal(), lambda x: np.ones(x.shape[0]), 100, seed=0)

    def test_log_integrand_beyond_float_range(self):
        # f(x) = -e^{700} e^{-x^2}: the weights f/p square past the float range unless rescaled
        def log_integrand(points):
            return 700.0 - points[:, 0] ** 2, -np.ones(points.shape[0])

        estimate = mc_integrate_log(1, GaussianProposal(1.0), log_integrand, 200_000, seed=11, log_scale=700.0)
        scale = math.exp(700.0)
        self.assertTrue(math.isfinite(estimate.std_err))
        self.assertLess(abs(estimate.mean / scale + math.sqrt(math.pi)), 3.0 * estimate.std_err / scale)

    def test_log_integrand_matches_linear(self):
        proposal = GaussianProposal(1.0)
        linear = mc_integrate(1, proposal, lambda x: np.exp(-x[:, 0] ** 2), 50_000, seed=5, n_batches=16)
        logged = mc_integrate_log(
            1, proposal, lambda x: (-x[:, 0] ** 2, np.ones(x.shape[0])), 50_000, seed=5, log_scale=2.0, n_batches=16
        )
        self.assertAlmostEqual(logged.mean / linear.mean, 1.0, places=12)
        self.assertAlmostEqual(logged.std_err / linear.std_err, 1.0, places=12)

    def test_log_zero_density_and_overflow(self):
        def constant(value):
            return lambda x: (np.full(x.shape[0], value), np.ones(x.shape[0]))

        with self.assertRaises(ZeroDensity):
            mc_integrate_log(1, VanishingProposal(), constant(0.0), 100, seed=0)
        with self.assertRaises(NonConvergence):
            mc_integrate_log(1, GaussianProposal(), constant(800.0), 100, seed=0)
        with self.assertRaises(DomainError):
            mc_integrate_log(1, GaussianProposal(), constant(0.0), 100, seed=0, log_scale=800.0)


class FormBreakdownTest(unittest.TestCase):
    def test_total_and_keys(self):
        form = FormBreakdown(diagonal=2.0, off_diagonal=-0.5, alpha_term=0.25)
        self.assertEqual(form.total, 1.75)
        self.assertEqual(
            sorted(form.to_dict()),
            sorted(["alpha_term", "diagonal", "off_diagonal", "total", "std_err", "n_samples", "seed"]),
        )
        with self.assertRaises(DomainError):
            FormBreakdown(diagonal=1.0, off_diagonal=0.0, std_err=-1.0)
