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

# tests for the N-body kernels, the charge form at N=2 and N=3 and the cutoff residual
import math
import unittest

import numpy as np

from fermistability.errors import DomainError, UnsupportedN, WrongN
from fermistability.nbody_forms import (
    MomentumConfig,
    cutoff_renorm_residual,
    d_of_k,
    green_g,
    l_lambda,
    phi_envelope,
    phi_slater_diag_reduced,
    phi_slater_mc,
    phi_two_body,
    slater_mc_trend,
    slater_norm_mc,
)
from fermistability.numerics import RadialFunction, gauss_legendre
from fermistability.partial_wave import PartialWaveCharge, builtin_charge, f_form
from fermistability.stability import SystemParams, gamma_param, lambda_param, spectral_threshold
from fermistability.trials import (
    TrialParams,
    Verdict,
    analytic_bound,
    f1_trial_energy,
    fit_bound_constant,
    slater_charge,
)


def _random_charges(rng, count):
    charges = []
    for _ in range(count):
        l = int(rng.integers(0, 3))
        a, b = rng.normal(size=3), rng.uniform(0.3, 3.0, size=3)
        radial = RadialFunction.from_profile(
            lambda p, a=a, b=b: sum(a_j * p * np.exp(-b_j * p**2) for a_j, b_j in zip(a, b))
        )
        charges.append(PartialWaveCharge(l, 0, radial))
    return charges


class KernelTest(unittest.TestCase):
    def test_green_examples(self):
        self.assertEqual(green_g([[0.0, 0.0, 0.0]], 1.0, 1.0), 1.0)
        self.assertEqual(green_g([[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]], 1.0, 1.0), 0.5)
        self.assertEqual(green_g(MomentumConfig([0.0, 0.0, 0.0]), 2.0, 1.0), 0.5)
        with self.assertRaises(DomainError):
            green_g([[0.0, 0.0, 0.0]], 0.0, 1.0)
        with self.assertRaises(DomainError):
            green_g([0.0, 0.0, 0.0], 1.0, 1.0)

    def test_green_positive_and_bounded(self):
        rng = np.random.default_rng(11)
        vectors = rng.normal(scale=3.0, size=(100_000, 3, 3))
        for m in (0.01, 1.0, 50.0):
            values = green_g(vectors, 0.5, m)
            self.assertTrue(np.all(values > 0))
            self.assertTrue(np.all(values <= 2.0))

    def test_permutation_invariance(self):
        rng = np.random.default_rng(12)
        vectors = rng.normal(size=(1000, 4, 3))
        for order in ([1, 0, 2, 3], [3, 2, 1, 0], [2, 3, 0, 1]):
            permuted = vectors[:, order]
            np.testing.assert_array_equal(green_g(permuted, 1.0, 0.7), green_g(vectors, 1.0, 0.7))
            np.testing.assert_array_equal(l_lambda(permuted, 1.0, 0.7), l_lambda(vectors, 1.0, 0.7))

    def test_l_lambda_examples(self):
        self.assertAlmostEqual(l_lambda([[0.0, 0.0, 0.0]], 4.0, 1.0), 4.0 * math.pi**2, places=12)
        self.assertAlmostEqual(l_lambda([[1.0, 0.0, 0.0]], 1e-14, 1.0), math.pi**2 * math.sqrt(3.0), places=10)

    def test_l_lambda_sandwich(self):
        rng = np.random.default_rng(13)
        n = 4
        vectors = rng.normal(scale=2.0, size=(10_000, n - 1, 3))
        squares = np.sum(vectors**2, axis=(-1, -2))
        for m in (0.1, 1.0, 10.0):
            values = l_lambda(vectors, 0.3, m)
            lower = 2.0 * math.pi**2 * np.sqrt(m / (m + 1.0) * squares + 0.3)
            upper = 2.0 * math.pi**2 * np.sqrt(m * (m + n) / (m + 1.0) ** 2 * squares + 0.3)
            self.assertTrue(np.all(values >= lower * (1.0 - 1e-12)))
            self.assertTrue(np.all(values <= upper * (1.0 + 1e-12)))

    def test_l_lambda_completes_the_square(self):
        rng = np.random.default_rng(14)
        vectors = rng.normal(size=(500, 2, 3))
        m = 0.6
        total = np.sum(vectors.sum(axis=1) ** 2, axis=-1)
        expected = 2.0 * math.pi**2 * np.sqrt(1.0 / green_g(vectors, 1.5, m) - total / (m + 1.0) ** 2)
        np.testing.assert_allclose(l_lambda(vectors, 1.5, m), expected, rtol=1e-12)

    def test_d_of_k(self):
        self.assertAlmostEqual(d_of_k([[1.0, 0.0, 0.0]], 1.0, 3), 2.0 / 3.0, places=15)
        self.assertEqual(d_of_k([[0.0, 0.0, 0.0]], 1.0, 3), 0.0)
        with self.assertRaises(DomainError):
            d_of_k([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], 1.0, 3)
        with self.assertRaises(DomainError):
            d_of_k([[1.0, 0.0, 0.0]], 1.0, 2)

    def test_d_of_k_four_fermions(self):
        rng = np.random.default_rng(15)
        vectors = rng.normal(size=(2000, 2, 3))
        m = 2.0
        squares = np.sum(vectors**2, axis=(-1, -2))
        total = np.sum(vectors.sum(axis=1) ** 2, axis=-1)
        values = d_of_k(vectors, m, 4)
        self.assertTrue(np.all(values >= 0))
        np.testing.assert_allclose(values, m / ((m + 1.0) * (m + 2.0)) * ((m + 2.0) * squares + total), rtol=1e-12)


class TwoBodyFormTest(unittest.TestCase):
    def test_wrong_fermion_count(self):
        with self.assertRaises(WrongN):
            phi_two_body(builtin_charge("gauss-l1"), SystemParams(m=1.0, n_fermions=3))

    def test_scaling_in_lambda(self):
        charge = builtin_charge("gauss-l1")
        reference = f_form([charge], 1.0, 1.0, 2).total
        for lam in (0.25, 4.0):
            dilated = PartialWaveCharge(1, 0, charge.radial.dilate(0.5 * math.log(lam), lam**0.25))
            form = phi_two_body(dilated, SystemParams(m=1.0, alpha=0.3, lam=lam))
            self.assertLess(abs((form.total - form.alpha_term) / math.sqrt(lam) / reference - 1.0), 1e-8)
            self.assertAlmostEqual(form.alpha_term, 0.3, places=10)

    def test_sandwich(self):
        rng = np.random.default_rng(21)
        for m, count in ((1.0, 50), (0.2, 5), (5.0, 5)):
            lower, upper = lambda_param(m, 2), gamma_param(m, 2)
            for charge in _random_charges(rng, count):
                form = phi_two_body(charge, SystemParams(m=m))
                slack = 1e-8 * form.diagonal
                self.assertGreaterEqual(form.total, (1.0 - lower) * form.diagonal - slack)
                self.assertLessEqual(form.total, (1.0 + upper) * form.diagonal + slack)
                if m == 1.0:
                    self.assertGreater(form.total, 0.0)

    def test_methods_agree(self):
        charge = builtin_charge("gauss-l1")
        params = SystemParams(m=1.0)
        direct = phi_two_body(charge, params).total
        series = phi_two_body(charge, params, "series").total
        self.assertLess(abs(series / direct - 1.0), 1e-4)

    def test_envelope(self):
        for name in ("gauss-l1", "exp-p2", "q-gamma:0.5"):
            for alpha in (0.0, -2.0, 3.0):
                params = SystemParams(m=1.0, alpha=alpha, lam=2.0)
                charge = builtin_charge(name)
                form = phi_two_body(charge, params)
                envelope = phi_envelope(charge, params)
                slack = 1e-8 * abs(form.diagonal)
                self.assertLessEqual(envelope.lower, form.total + slack, name)
                self.assertLessEqual(form.total, envelope.upper + slack, name)

    def test_threshold_makes_form_nonnegative(self):
        params = SystemParams(m=1.0, alpha=-50.0)
        shift = spectral_threshold(params).lambda_min
        for name in ("gauss-l1", "exp-p2"):
            form = phi_two_body(builtin_charge(name), SystemParams(m=1.0, alpha=-50.0, lam=shift))
            self.assertGreaterEqual(form.total, 0.0)


class SlaterFormTest(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.xi = slater_charge(TrialParams(n=1.0, gamma=0.5), 3)
        cls.params = SystemParams(m=1.0, n_fermions=3)

    def test_norm(self):
        estimate = slater_norm_mc(self.xi, n_samples=100_000, seed=1)
        self.assertLess(abs(estimate.mean - 1.0), 4.0 * estimate.std_err + 1e-12)

    def test_alpha_enters_linearly(self):
        base = phi_slater_mc(self.xi, self.params, n_samples=20_000, seed=5, n_batches=10)
        shifted = phi_slater_mc(
            self.xi, SystemParams(m=1.0, n_fermions=3, alpha=2.0), n_samples=20_000, seed=5, n_batches=10
        )
        self.assertAlmostEqual(shifted.total - base.total, 2.0, places=10)
        self.assertEqual(base.n_samples, 40_000)
        self.assertEqual(base.seed, 5)
        self.assertGreater(base.std_err, 0.0)

    def test_deterministic(self):
        first = phi_slater_mc(self.xi, self.params, n_samples=20_000, seed=9, n_batches=10, workers=1)
        second = phi_slater_mc(self.xi, self.params, n_samples=20_000, seed=9, n_batches=10, workers=3)
        self.assertEqual(first.to_dict(), second.to_dict())

    def test_diagonal_matches_reduced_form(self):
        full = phi_slater_mc(self.xi, self.params, n_samples=100_000, seed=2, n_batches=20)
        reduced = phi_slater_diag_reduced(self.xi, self.params, n_samples=100_000, seed=3, n_batches=20)
        bound = 4.0 * math.hypot(full.std_err, reduced.std_err)
        self.assertLess(abs(full.diagonal - reduced.mean), bound)
        self.assertGreater(full.diagonal, 0.0)

    def test_fermion_counts(self):
        with self.assertRaises(WrongN):
            phi_slater_mc(self.xi, SystemParams(m=1.0, n_fermions=2), n_samples=100)
        four = slater_charge(TrialParams(n=1.0, gamma=0.5), 4)
        with self.assertRaises(UnsupportedN):
            phi_slater_mc(four, SystemParams(m=1.0, n_fermions=4), n_samples=100)
        with self.assertRaises(UnsupportedN):
            slater_norm_mc(four, n_samples=100)


def _leading(n, gamma, m):
    return 2.0 * math.pi**2 * n * math.sqrt(m * (m + 2.0)) / (m + 1.0) * math.exp(0.75 / gamma**2)


class SlaterUnstableMassTest(unittest.TestCase):
    """
    At N = 3 the charge Q_{n,gamma} (x) Xi_beta reduces, up to corrections of relative size beta/e^{1/gamma^2},
    to the two-body form of Q_{n,gamma} at lambda = 1, which the quadrature route evaluates independently.
    """

    m = 0.05

    def _compare(self, gamma, seed):
        trial = TrialParams(n=1.0, gamma=gamma)
        reference = f1_trial_energy(trial, self.m, 2, verify=False)
        form = phi_slater_mc(slater_charge(trial, 3), SystemParams(m=self.m, n_fermions=3), 200_000, seed=seed)
        for part in ("diagonal", "off_diagonal"):
            expected, value = getattr(reference, part), getattr(form, part)
            self.assertLess(abs(value - expected), 4.0 * form.std_err + 1e-3 * abs(expected), part)
        # the errors are meaningful: a few percent of the off-diagonal part at this sample count
        self.assertLess(form.std_err, 0.05 * abs(reference.off_diagonal))
        self.assertLess(form.total + 3.0 * form.std_err, 0.0)

    def test_matches_two_body_quadrature(self):
        self._compare(0.3, seed=21)

    def test_matches_two_body_quadrature_at_small_width(self):
        self._compare(0.1, seed=22)

    def test_very_narrow_charge(self):
        params = SystemParams(m=self.m, n_fermions=3)
        for n in (1.0, 16.0):
            xi = slater_charge(TrialParams(n=n, gamma=0.05), 3)
            estimate = slater_norm_mc(xi, n_samples=100_000, seed=3)
            self.assertLess(abs(estimate.mean - 1.0), 4.0 * estimate.std_err + 1e-12)
            self.assertLess(estimate.std_err, 0.05)

            form = phi_slater_mc(xi, params, n_samples=100_000, seed=4)
            scale = _leading(n, 0.05, self.m)
            self.assertTrue(math.isfinite(form.total) and math.isfinite(form.std_err))
            self.assertLess(abs(form.diagonal / scale - 1.0), 0.02 + 4.0 * form.std_err / scale)
            self.assertLess(form.total + 3.0 * form.std_err, 0.0)


class SlaterTrendTest(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.m = 0.05
        cls.trend = slater_mc_trend(cls.m, 0.3, [1.0, 4.0, 16.0], n_samples=100_000, seed=11)

    def test_diverges_with_dilation(self):
        self.assertIs(self.trend.verdict, Verdict.DIVERGING)
        totals, errors = self.trend.totals, np.array([form.std_err for _, form in self.trend.records])
        self.assertTrue(np.all(totals + 3.0 * errors < 0))
        self.assertTrue(np.all(np.diff(totals) + 3.0 * np.hypot(errors[1:], errors[:-1]) < 0))
        seeds = [form.seed for _, form in self.trend.records]
        self.assertEqual(len(set(seeds)), 3)
        frame = self.trend.to_frame()
        self.assertEqual(list(frame["n"]), [1.0, 4.0, 16.0])
        self.assertEqual(set(frame["verdict"]), {"Diverging"})

    def test_stays_below_fitted_bound(self):
        c_n = fit_bound_constant(self.trend.records, self.m, 3, 0.0)
        self.assertTrue(math.isfinite(c_n) and c_n >= 0.0)
        for trial, form in self.trend.records:
            bound = analytic_bound(trial, self.m, 3, 0.0, c_n)
            self.assertLessEqual(form.total, bound + 3.0 * form.std_err)

    def test_reproducible(self):
        serial = slater_mc_trend(self.m, 0.3, [1.0, 4.0], n_samples=2_000, seed=11, n_batches=4, workers=1)
        parallel = slater_mc_trend(self.m, 0.3, [1.0, 4.0], n_samples=2_000, seed=11, n_batches=4, workers=2)
        self.assertEqual(serial.to_frame().to_dict(), parallel.to_frame().to_dict())
        with self.assertRaises(DomainError):
            slater_mc_trend(self.m, 0.3, [4.0, 1.0], n_samples=100)


class CutoffResidualTest(unittest.TestCase):
    no_spectators = np.zeros((0, 3))

    def test_coupling(self):
        mu = cutoff_renorm_residual(self.no_spectators, 10.0, 1.0, 1.0).mu
        self.assertAlmostEqual(mu, -(math.pi**2) / 5.0, places=12)
        mu = cutoff_renorm_residual(self.no_spectators, 1e8, 1.0, 1.0).mu
        self.assertAlmostEqual(mu / -1.974e-7, 1.0, places=3)
        with self.assertRaises(DomainError):
            cutoff_renorm_residual(self.no_spectators, 1.0, 1.0, 1.0, alpha=-4.0 * math.pi)
        with self.assertRaises(DomainError):
            cutoff_renorm_residual(self.no_spectators, 0.0, 1.0, 1.0)

    def test_no_spectators_closed_form(self):
        for cutoff in (1.0, 10.0, 1e3):
            for lam in (0.5, 2.0):
                result = cutoff_renorm_residual(self.no_spectators, cutoff, lam, 1.0)
                expected = 4.0 * math.pi * math.sqrt(lam) * math.atan(math.sqrt(lam) / cutoff)
                self.assertAlmostEqual(result.residual, expected, delta=1e-8)

    def test_residual_vanishes(self):
        spectators = np.array([[0.3, 0.1, 0.2], [-0.2, 0.4, 0.1]])
        residuals = [abs(cutoff_renorm_residual(spectators, r, 1.0, 1.0).residual) for r in (1e2, 1e3, 1e4)]
        self.assertTrue(residuals[0] > residuals[1] > residuals[2])
        self.assertLess(residuals[2], residuals[0] / 10.0)

    def test_integral_against_cubature(self):
        spectators = np.array([[0.3, 0.1, 0.2], [-0.2, 0.4, 0.1]])
        cutoff, lam, m = 5.0, 1.0, 1.0
        result = cutoff_renorm_residual(spectators, cutoff, lam, m)
        s_nodes, s_weights = gauss_legendre(120)
        s, ws = 0.5 * cutoff * (s_nodes + 1.0), 0.5 * cutoff * s_weights
        cos_theta, wc = gauss_legendre(64)
        phi = 2.0 * np.pi * np.arange(64) / 64
        S, C, P = np.meshgrid(s, cos_theta, phi, indexing="ij")
        sin_theta = np.sqrt(1.0 - C**2)
        points = np.stack([S * sin_theta * np.cos(P), S * sin_theta * np.sin(P), S * C], axis=-1)
        fixed = np.broadcast_to(spectators, points.shape[:-1] + (2, 3))
        vectors = np.concatenate([fixed, points[..., None, :]], axis=-2)
        values = green_g(vectors, lam, m) * S**2
        weights = ws[:, None, None] * wc[None, :, None] * (2.0 * np.pi / 64)
        self.assertLess(abs(np.sum(values * weights) / result.integral - 1.0), 1e-8)
