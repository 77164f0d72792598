import math
import unittest

import numpy as np
from scipy import stats

import ohlrelay
from ohlrelay.channel import (LINK_CLASSES, BeamConfig, FadingModel,
                              LinkGeometry, PointingError, beam_radius_at,
                              channel_gain_exact, channel_gain_exact_batch,
                              channel_gain_farfield, fading_pdf,
                              gaussian_beam_radius, sample_pointing,
                              sample_pointing_batch, waist_for_receiver_radius)
from ohlrelay.errors import DomainError
from ohlrelay.numerics import RngStream, integrate


def default_link(**overrides):
    values = dict(length_L=1000e3, jitter_sigma_theta=150e-6, aperture_radius_ra=0.1)
    values.update(overrides)
    return LinkGeometry(**values)


class TestLinkGeometry(unittest.TestCase):
    def test_alpha(self):
        geom = default_link()
        self.assertAlmostEqual(geom.alpha, 1.0 / (4.0 * 1e12 * 2.25e-8), delta=1e-20)

    def test_rejects_non_positive(self):
        with self.assertRaises(DomainError):
            default_link(length_L=0.0)
        with self.assertRaises(DomainError):
            default_link(jitter_sigma_theta=-1e-6)

    def test_rejects_unknown_class(self):
        with self.assertRaises(DomainError):
            default_link(link_class="ground")

    def test_package_reexports_link_classes(self):
        self.assertIs(ohlrelay.LINK_CLASSES, LINK_CLASSES)
        for link_class in ohlrelay.LINK_CLASSES:
            self.assertEqual(default_link(link_class=link_class).link_class, link_class)


class TestFadingModel(unittest.TestCase):
    def setUp(self):
        self.geom = default_link()
        self.fm = FadingModel.from_beam(self.geom, 400.0)

    def test_reference_operating_point(self):
        self.assertAlmostEqual(self.fm.gamma_shape, 1.777778, places=5)
        self.assertAlmostEqual(self.fm.h_max, 6.25e-8, delta=1e-18)
        self.assertAlmostEqual(4.0 * self.fm.h_max, 250e-9, delta=1e-18)

    def test_beam_must_exceed_aperture(self):
        with self.assertRaises(DomainError):
            FadingModel.from_beam(self.geom, 0.05)

    def test_pdf_support(self):
        self.assertEqual(fading_pdf(self.fm, 0.0), 0.0)
        self.assertEqual(fading_pdf(self.fm, 2.0 * self.fm.h_max), 0.0)
        self.assertGreater(fading_pdf(self.fm, 0.5 * self.fm.h_max), 0.0)

    def test_pdf_normalization(self):
        for wi in (200.0, 400.0, 1000.0):
            with self.subTest(wi=wi):
                fm = FadingModel.from_beam(self.geom, wi)
                mass = integrate(lambda h: float(fading_pdf(fm, h)), 0.0, fm.h_max, singular_power=fm.gamma_shape)
                self.assertAlmostEqual(mass, 1.0, places=9)

    def test_cdf_and_mean(self):
        self.assertEqual(self.fm.cdf(self.fm.h_max), 1.0)
        self.assertEqual(self.fm.cdf(0.0), 0.0)
        self.assertAlmostEqual(self.fm.cdf(0.5 * self.fm.h_max), 0.5**self.fm.gamma_shape, places=14)
        g = self.fm.gamma_shape
        self.assertAlmostEqual(self.fm.mean() / self.fm.h_max, g / (g + 1.0), places=14)

    def test_invalid_parameters(self):
        with self.assertRaises(DomainError):
            FadingModel(gamma_shape=0.0, h_max=1e-8)
        with self.assertRaises(DomainError):
            FadingModel(gamma_shape=1.0, h_max=1.5)


class TestBeam(unittest.TestCase):
    def test_gaussian_beam_radius(self):
        self.assertEqual(gaussian_beam_radius(2e-3, 1550e-9, 0.0), 2e-3)
        zr = math.pi * 4e-6 / 1550e-9
        self.assertAlmostEqual(gaussian_beam_radius(2e-3, 1550e-9, zr), 2e-3 * math.sqrt(2.0), places=15)

    def test_waist_round_trip(self):
        geom = default_link()
        w0 = waist_for_receiver_radius(geom, 400.0)
        self.assertAlmostEqual(beam_radius_at(geom, w0) / 400.0, 1.0, places=9)
        beam = BeamConfig.from_receiver_radius(geom, 400.0)
        self.assertAlmostEqual(beam.receiver_beam_radius_wi / 400.0, 1.0, places=9)
        self.assertAlmostEqual(beam.divergence_theta_d, 1550e-9 / (math.pi * w0), places=15)

    def test_unreachable_radius(self):
        with self.assertRaises(DomainError):
            waist_for_receiver_radius(default_link(), 0.5)


class TestChannelGain(unittest.TestCase):
    def setUp(self):
        self.geom = default_link()
        self.wi = 400.0
        self.fm = FadingModel.from_beam(self.geom, self.wi)

    def test_farfield_peak(self):
        self.assertAlmostEqual(channel_gain_farfield(self.fm, self.geom, self.wi, PointingError(0.0, 0.0)),
                               self.fm.h_max,
                               delta=1e-20)

    def test_farfield_vectorized(self):
        err = PointingError(np.array([0.0, 100e-6]), np.array([0.0, 0.0]))
        gains = channel_gain_farfield(self.fm, self.geom, self.wi, err)
        self.assertEqual(gains.shape, (2, ))
        self.assertAlmostEqual(gains[1] / gains[0], math.exp(-2.0 * 100.0**2 / 400.0**2), places=12)

    def test_farfield_guard_warns(self):
        fm = FadingModel.from_beam(self.geom, 0.5)
        with self.assertWarns(RuntimeWarning):
            channel_gain_farfield(fm, self.geom, 0.5, PointingError(0.0, 0.0))

    def test_exact_matches_farfield(self):
        for theta in (0.0, 150e-6, 300e-6):
            with self.subTest(theta=theta):
                err = PointingError(theta, 0.0)
                exact = channel_gain_exact(self.geom, self.wi, err)
                farfield = channel_gain_farfield(self.fm, self.geom, self.wi, err)
                self.assertLess(abs(exact - farfield) / exact, 1e-3)

    def test_collected_normalization(self):
        err = PointingError(100e-6, 50e-6)
        farfield = channel_gain_exact(self.geom, self.wi, err)
        collected = channel_gain_exact(self.geom, self.wi, err, normalization="collected")
        self.assertAlmostEqual(collected / farfield, 2.0, places=12)
        with self.assertRaises(DomainError):
            channel_gain_exact(self.geom, self.wi, err, normalization="peak")

    def test_narrow_beam_collects_everything(self):
        gain = channel_gain_exact(self.geom, 0.01, PointingError(0.0, 0.0), normalization="collected")
        self.assertAlmostEqual(gain, 1.0, places=7)

    def test_batch_matches_scalar(self):
        theta_x = np.array([0.0, 120e-6, 400e-6])
        theta_y = np.array([0.0, -60e-6, 10e-6])
        batch = channel_gain_exact_batch(self.geom, self.wi, theta_x, theta_y)
        for k in range(3):
            scalar = channel_gain_exact(self.geom, self.wi, PointingError(theta_x[k], theta_y[k]))
            self.assertAlmostEqual(batch[k] / scalar, 1.0, places=8)


class TestPointingSampling(unittest.TestCase):
    def test_scalar_draw(self):
        err = sample_pointing(default_link(), RngStream(1))
        self.assertIsInstance(err.theta_x, float)

    def test_radial_distribution(self):
        geom = default_link()
        theta_x, theta_y = sample_pointing_batch(geom, RngStream(3), 1_000_000)
        radial = theta_x**2 + theta_y**2
        law = stats.expon(scale=2.0 * geom.jitter_sigma_theta**2)
        self.assertLess(stats.kstest(radial, law.cdf).statistic, 0.002)

    def test_fading_distribution(self):
        geom = default_link()
        fm = FadingModel.from_beam(geom, 400.0)
        theta_x, theta_y = sample_pointing_batch(geom, RngStream(5), 200_000)
        gains = channel_gain_farfield(fm, geom, 400.0, PointingError(theta_x, theta_y))
        self.assertLess(stats.kstest(gains, fm.cdf).statistic, 0.005)
