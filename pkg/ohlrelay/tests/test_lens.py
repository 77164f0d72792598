import math
import unittest

from ohlrelay.errors import (DomainError, FocalRangeError,
                             InfeasibleTargetError)
from ohlrelay.lens import (IDENTITY_CALIBRATION, LensSystem,
                           VoltageCalibration, achievable_radii,
                           divergence_for_target, lens_for_link, propagate_q,
                           solve_focal_length, waist_for_divergence)
from ohlrelay.numerics import RngStream


class TestTargets(unittest.TestCase):
    def test_divergence(self):
        self.assertAlmostEqual(divergence_for_target(400.0, 1000e3), 4e-4, places=15)
        with self.assertRaises(DomainError):
            divergence_for_target(0.0, 1000e3)

    def test_wide_angle_warns(self):
        with self.assertWarns(RuntimeWarning):
            divergence_for_target(200.0, 1000.0)

    def test_waist(self):
        self.assertAlmostEqual(waist_for_divergence(4e-4), 1.2335e-3, delta=1e-7)
        with self.assertRaises(DomainError):
            waist_for_divergence(0.0)


class TestPropagation(unittest.TestCase):
    def setUp(self):
        self.system = LensSystem()

    def test_rayleigh_range(self):
        self.assertAlmostEqual(self.system.rayleigh_zR, math.pi * 4e-6 / 1550e-9, places=12)

    def test_no_lens(self):
        radius, _ = propagate_q(self.system, math.inf)
        self.assertAlmostEqual(radius / self.system.free_space_radius, 1.0, places=12)

    def test_matches_textbook_radius(self):
        lp, zr, w0 = self.system.spacing_Lprime, self.system.rayleigh_zR, self.system.input_waist_w0
        for focal in (15e-3, 30e-3, 60e-3):
            with self.subTest(focal=focal):
                expected = w0 * math.sqrt((lp / zr)**2 + (1.0 - lp / focal)**2)
                self.assertAlmostEqual(propagate_q(self.system, focal)[0] / expected, 1.0, places=9)

    def test_weak_lens_approaches_free_space(self):
        for focal in (1e14, -1e14):
            with self.subTest(focal=focal):
                radius, _ = propagate_q(self.system, focal)
                self.assertLess(abs(radius / self.system.free_space_radius - 1.0), 1e-12)

    def test_zero_focal_length(self):
        with self.assertRaises(DomainError):
            propagate_q(self.system, 0.0)

    def test_achievable_radii(self):
        smallest, largest = achievable_radii(self.system)
        self.assertLess(smallest, 2e-5)
        self.assertAlmostEqual(largest, 2e-3 * 5.0 / 3.0, delta=1e-6)

    def test_invalid_system(self):
        with self.assertRaises(DomainError):
            LensSystem(focal_range=(60e-3, 15e-3))
        with self.assertRaises(DomainError):
            LensSystem(input_waist_w0=0.0)


class TestFocalLength(unittest.TestCase):
    def setUp(self):
        self.system = LensSystem()

    def test_reference_target_on_converging_branch(self):
        solution = solve_focal_length(self.system, 1.2335e-3)
        self.assertEqual(solution.branch, "converging")
        self.assertAlmostEqual(solution.focal_length_F, 24.74e-3, delta=0.02e-3)
        self.assertLess(solution.forward_residual, 1e-9)

    def test_auto_prefers_diverging(self):
        solution = solve_focal_length(self.system, 0.5e-3)
        self.assertEqual(solution.branch, "diverging")
        self.assertAlmostEqual(solution.focal_length_F, 40e-3 / 0.75, delta=1e-5)
        forced = solve_focal_length(self.system, 0.5e-3, branch="converging")
        self.assertAlmostEqual(forced.focal_length_F, 40e-3 / 1.25, delta=1e-5)

    def test_forward_round_trip(self):
        smallest, largest = achievable_radii(self.system)
        targets = RngStream(17).generator.uniform(smallest, largest, size=1000)
        worst = 0.0
        for target in targets:
            solution = solve_focal_length(self.system, float(target))
            radius, _ = propagate_q(self.system, solution.focal_length_F)
            worst = max(worst, abs(radius - target) / target, solution.forward_residual)
        self.assertLess(worst, 1e-9)

    def test_infeasible_target(self):
        with self.assertRaises(InfeasibleTargetError) as ctx:
            solve_focal_length(self.system, 1e-6)
        smallest, _ = ctx.exception.achievable
        self.assertGreater(smallest, 1e-6)

    def test_out_of_range(self):
        with self.assertRaises(FocalRangeError):
            solve_focal_length(self.system, 5e-3)
        with self.assertRaises(FocalRangeError):
            solve_focal_length(self.system, 1.2335e-3, branch="diverging")

    def test_unknown_branch(self):
        with self.assertRaises(DomainError):
            solve_focal_length(self.system, 1e-3, branch="both")

    def test_closed_form_reported(self):
        solution = solve_focal_length(self.system, 1.2335e-3)
        self.assertTrue(math.isnan(solution.closed_form_F) or solution.closed_form_F > 0)

    def test_lens_for_link(self):
        solution = lens_for_link(self.system, 400.0, 1000e3)
        self.assertAlmostEqual(solution.target_wLprime, 1.2335e-3, delta=1e-7)
        self.assertAlmostEqual(solution.focal_length_F, 24.74e-3, delta=0.02e-3)
        self.assertAlmostEqual(solution.target_divergence, 4e-4, delta=1e-9)


class TestVoltageCalibration(unittest.TestCase):
    def test_identity_file(self):
        cal = VoltageCalibration.from_file(IDENTITY_CALIBRATION)
        self.assertAlmostEqual(cal.voltage(24.74e-3), 24.74e-3, places=12)
        self.assertAlmostEqual(cal.focal_length(0.05), 0.05, places=12)

    def test_outside_table(self):
        cal = VoltageCalibration.identity()
        with self.assertRaises(FocalRangeError):
            cal.voltage(0.1)
        with self.assertRaises(FocalRangeError):
            cal.focal_length(0.0)

    def test_decreasing_table(self):
        cal = VoltageCalibration([10.0, 20.0, 30.0], [0.06, 0.04, 0.02])
        self.assertAlmostEqual(cal.voltage(0.04), 20.0, places=9)
        self.assertAlmostEqual(cal.focal_length(cal.voltage(0.03)), 0.03, places=9)

    def test_rejects_non_monotone(self):
        with self.assertRaises(DomainError):
            VoltageCalibration([1.0, 2.0, 3.0], [0.02, 0.05, 0.03])
        with self.assertRaises(DomainError):
            VoltageCalibration([2.0, 1.0], [0.02, 0.03])
