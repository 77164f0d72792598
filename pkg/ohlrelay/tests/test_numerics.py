import math
import pickle
import unittest

import numpy as np
from scipy.special import gamma as gamma_function
from scipy.special import gammainc, lambertw

from ohlrelay.errors import (DomainError, NoRealSolutionError,
                             QuadratureAccuracyError)
from ohlrelay.numerics import (INV_E, QuadratureSpec, RngStream, integrate,
                               lambert_w, log_integrate,
                               log_lower_incomplete_gamma,
                               lower_incomplete_gamma, q_approx3,
                               q_approx3_relative_error, q_exact)


class TestGaussianTail(unittest.TestCase):
    def test_q_exact_known_values(self):
        self.assertAlmostEqual(q_exact(0.0), 0.5, places=15)
        self.assertAlmostEqual(q_exact(3.0), 1.349898031630e-3, delta=1e-15)
        self.assertAlmostEqual(q_exact(-1.0), 1.0 - q_exact(1.0), places=15)

    def test_q_exact_vectorized(self):
        values = q_exact(np.array([0.0, 1.0, 2.0]))
        self.assertEqual(values.shape, (3, ))
        self.assertTrue(np.all(np.diff(values) < 0))

    def test_q_approx3_at_three(self):
        self.assertAlmostEqual(q_approx3(3.0), 1.64345e-3, delta=2e-7)
        self.assertAlmostEqual(q_approx3(0.0), 10.0 / 24.0, places=15)

    def test_q_approx3_rejects_negative(self):
        with self.assertRaises(DomainError):
            q_approx3(-0.1)

    def test_relative_error_envelope(self):
        errors = [q_approx3_relative_error(x) for x in np.linspace(0.5, 5.0, 91)]
        self.assertLess(max(errors), 0.25)
        self.assertAlmostEqual(q_approx3_relative_error(3.0), 0.2175, delta=2e-3)


class TestIncompleteGamma(unittest.TestCase):
    def test_matches_scipy(self):
        for s, x in ((0.5, 0.1), (1.7778, 1.0), (3.0, 7.5), (12.0, 4.0), (2.0, 40.0)):
            with self.subTest(s=s, x=x):
                reference = gammainc(s, x) * gamma_function(s)
                self.assertAlmostEqual(lower_incomplete_gamma(s, x) / reference, 1.0, places=10)

    def test_exponential_case(self):
        self.assertAlmostEqual(lower_incomplete_gamma(1.0, 0.7), 1.0 - math.exp(-0.7), places=14)

    def test_recurrence(self):
        s, x = 2.5, 3.0
        left = lower_incomplete_gamma(s + 1.0, x)
        right = s * lower_incomplete_gamma(s, x) - x**s * math.exp(-x)
        self.assertAlmostEqual(left / right, 1.0, places=12)

    def test_log_survives_underflow(self):
        with self.assertLogs("ohlrelay.numerics", level="DEBUG") as logs:
            value = log_lower_incomplete_gamma(50.0, 1e-10)
        self.assertAlmostEqual(value, 50.0 * math.log(1e-10) - math.log(50.0), places=8)
        self.assertIn("series", logs.output[0])

    def test_log_domain_at_zero(self):
        self.assertEqual(log_lower_incomplete_gamma(2.0, 0.0), -math.inf)
        self.assertEqual(lower_incomplete_gamma(2.0, 0.0), 0.0)

    def test_domain_errors(self):
        with self.assertRaises(DomainError):
            lower_incomplete_gamma(0.0, 1.0)
        with self.assertRaises(DomainError):
            lower_incomplete_gamma(1.0, -1.0)


class TestLambertW(unittest.TestCase):
    def test_residuals(self):
        for x in (-0.3, -0.1, 1e-6, 0.5, 1.0, 10.0, 1e3, 1e8):
            with self.subTest(x=x):
                w = lambert_w(x)
                self.assertLess(abs(w * math.exp(w) - x) / abs(x), 1e-12)
                self.assertAlmostEqual(w, lambertw(x).real, places=12)

    def test_minus_one_branch(self):
        for x in (-0.3, -0.1, -1e-3):
            with self.subTest(x=x):
                w = lambert_w(x, "minus_one")
                self.assertLess(w, -1.0)
                self.assertAlmostEqual(w, lambertw(x, -1).real, places=10)

    def test_branch_point(self):
        self.assertEqual(lambert_w(-INV_E), -1.0)
        self.assertEqual(lambert_w(-INV_E, "minus_one"), -1.0)
        self.assertEqual(lambert_w(0.0), 0.0)

    def test_errors(self):
        with self.assertRaises(NoRealSolutionError):
            lambert_w(-0.5)
        with self.assertRaises(DomainError):
            lambert_w(0.5, "minus_one")
        with self.assertRaises(DomainError):
            lambert_w(1.0, "plus_one")
        # NoRealSolutionError is a DomainError
        with self.assertRaises(DomainError):
            lambert_w(-1.0)


class TestIntegrate(unittest.TestCase):
    def test_polynomial(self):
        self.assertAlmostEqual(integrate(lambda x: x * x, 0.0, 3.0), 9.0, places=10)

    def test_empty_interval(self):
        self.assertEqual(integrate(lambda x: 1.0, 2.0, 2.0), 0.0)

    def test_reversed_limits(self):
        with self.assertRaises(DomainError):
            integrate(lambda x: 1.0, 1.0, 0.0)

    def test_endpoint_singularity(self):
        # integral of g x**(g-1) on [0, 1] is one for any g > 0
        for g in (0.05, 0.3, 1.7778):
            with self.subTest(g=g):
                value = integrate(lambda x: g * x**(g - 1.0), 0.0, 1.0, singular_power=g)
                self.assertAlmostEqual(value, 1.0, places=9)

    def test_infinite_interval(self):
        self.assertAlmostEqual(integrate(lambda x: math.exp(-x), 0.0, math.inf), 1.0, places=9)

    def test_singular_needs_finite_interval(self):
        with self.assertRaises(DomainError):
            integrate(lambda x: 1.0, 0.0, math.inf, singular_power=0.5)

    def test_accuracy_error_carries_estimate(self):
        spec = QuadratureSpec(abs_tol=1e-300, rel_tol=1e-300, max_subdivisions=1)
        with self.assertRaises(QuadratureAccuracyError) as ctx:
            integrate(lambda x: math.sin(50.0 * x)**2, 0.0, 10.0, spec)
        self.assertTrue(math.isfinite(ctx.exception.estimate))

    def test_log_integrate_deep_underflow(self):
        # exp(-2000 - x) underflows in linear arithmetic
        value = log_integrate(lambda x: -2000.0 - x, 0.0, 1.0)
        self.assertAlmostEqual(value, -2000.0 + math.log(1.0 - math.exp(-1.0)), places=10)

    def test_spec_validation(self):
        with self.assertRaises(DomainError):
            QuadratureSpec(abs_tol=0.0)
        with self.assertRaises(DomainError):
            QuadratureSpec(max_subdivisions=0)


class TestRngStream(unittest.TestCase):
    def test_reproducible(self):
        a = RngStream(7, 2).child(3).generator.normal(size=5)
        b = RngStream(7, 2).child(3).generator.normal(size=5)
        np.testing.assert_array_equal(a, b)

    def test_children_differ(self):
        parent = RngStream(7, 2)
        a = parent.child(0).generator.normal(size=5)
        b = parent.child(1).generator.normal(size=5)
        self.assertFalse(np.array_equal(a, b))
        c = RngStream(7, 3).child(0).generator.normal(size=5)
        self.assertFalse(np.array_equal(a, c))

    def test_pickle_restarts_stream(self):
        stream = RngStream(11, 1, (4, ))
        first = stream.generator.uniform(size=3)
        clone = pickle.loads(pickle.dumps(stream))
        self.assertEqual(clone, stream)
        np.testing.assert_array_equal(clone.generator.uniform(size=3), first)

    def test_negative_inputs(self):
        with self.assertRaises(DomainError):
            RngStream(-1)
        with self.assertRaises(DomainError):
            RngStream(1).child(-2)
