import math
import unittest
from dataclasses import replace
from unittest import mock

import numpy as np

from ohlrelay import (BEAM_OPTIMUM_HEADER, BEAM_SWEEP_HEADER,
                      RELAY_SWEEP_HEADER, THRESHOLD_SWEEP_HEADER,
                      TRACE_HEADER)
from ohlrelay.config import ExperimentConfig, config_hash
from ohlrelay.error_analysis import HopErrorInputs, pe_df_hop_quadrature
from ohlrelay.errors import DomainError
from ohlrelay.optimizer import JointOptimum
from ohlrelay.pipeline import (LENS_REPORT_KEYS, hop_length_for, lens_report,
                               path_end_to_end, run_validation,
                               compare_beam_optimum, sweep_beam, sweep_relays,
                               sweep_threshold, tolerance_check,
                               trace_threshold)


def small_config(**overrides):
    values = dict(threshold_points=5, beam_points=4, grid_widths=32)
    values.update(overrides)
    return ExperimentConfig(**values)


class TestThresholdSweep(unittest.TestCase):
    def setUp(self):
        self.table = sweep_threshold(small_config())

    def test_layout(self):
        self.assertEqual(self.table.header, THRESHOLD_SWEEP_HEADER)
        self.assertEqual(len(self.table.rows), 5)
        self.assertEqual(self.table.provenance["command"], "sweep-threshold")
        self.assertEqual(self.table.provenance["config_sha256"], config_hash(small_config()))

    def test_ohl_curve_has_interior_minimum(self):
        pe = self.table.column("pe_ohl")
        self.assertEqual(int(np.argmin(pe)), 1)

    def test_threshold_free_columns(self):
        self.assertEqual(len(set(self.table.column("pe_df"))), 1)
        self.assertTrue(all(math.isnan(v) for v in self.table.column("pe_af_mc")))


class TestRelaySweep(unittest.TestCase):
    def test_hop_length(self):
        cfg = ExperimentConfig()
        self.assertEqual(hop_length_for(cfg, 4, "fixed-total"), 1000e3)
        self.assertEqual(hop_length_for(cfg, 4, "fixed-hop"), 1000e3)
        self.assertEqual(hop_length_for(cfg, 1, "fixed-total"), 2500e3)
        with self.assertRaises(DomainError):
            hop_length_for(cfg, 1, "fixed-angle")

    def test_fixed_hop_errors_accumulate(self):
        table = sweep_relays(small_config(), "fixed-hop", (1, 3), with_af=False)
        self.assertEqual(table.header, RELAY_SWEEP_HEADER)
        self.assertEqual(table.column("n_relays"), [1, 2, 3])
        for column in ("pe_ohl_e2e", "pe_df_e2e"):
            values = table.column(column)
            self.assertTrue(values[0] < values[1] < values[2], column)

    def test_fixed_total_ordering(self):
        table = sweep_relays(small_config(), "fixed-total", (1, 3), with_af=True)
        ohl, df = table.column("pe_ohl_e2e"), table.column("pe_df_e2e")
        af, stderr = table.column("pe_af_e2e_mc"), table.column("pe_af_stderr")
        for n, row in enumerate(zip(ohl, df, af, stderr), start=1):
            with self.subTest(n_relays=n):
                pe_ohl, pe_df, pe_af, se = row
                self.assertLessEqual(pe_df, pe_ohl)
                self.assertLessEqual(pe_ohl, pe_af + 3.0 * se)
        # shorter hops help the regenerating chains, noise piles up in AF
        self.assertTrue(ohl[0] > ohl[1] > ohl[2])
        self.assertGreater(af[2] / ohl[2], af[0] / ohl[0])

    def test_invalid_range(self):
        with self.assertRaises(DomainError):
            sweep_relays(small_config(), "fixed-hop", (0, 2), with_af=False)
        with self.assertRaises(DomainError):
            sweep_relays(small_config(), "fixed-hop", (3, 2), with_af=False)


class TestThresholdTrace(unittest.TestCase):
    def test_iterates(self):
        table = trace_threshold(small_config(), (400.0, 600.0), 10e-9)
        self.assertEqual(table.header, TRACE_HEADER)
        widths = table.column("beam_width_m")
        self.assertEqual(set(widths), {400.0, 600.0})
        first = table.rows[0]
        self.assertEqual(first[:3], [400.0, 0, 10e-9])


class TestBeamSweeps(unittest.TestCase):
    def test_sweep_beam(self):
        table = sweep_beam(small_config(), thresholds=(10e-9, 20e-9))
        self.assertEqual(table.header, BEAM_SWEEP_HEADER)
        self.assertEqual(len(table.rows), 8)
        self.assertEqual(table.column("beam_width_m")[:4], [100.0, 400.0, 700.0, 1000.0])
        self.assertTrue(all(0.0 <= v <= 1.0 for v in table.column("pe_ohl")))

    def test_compare_beam_optimum(self):
        table = compare_beam_optimum(small_config(), thresholds=(20e-9, 100e-9), lengths=(1000e3, ))
        self.assertEqual(table.header, BEAM_OPTIMUM_HEADER)
        closed = table.column("w_star_closed_m")
        self.assertGreater(closed[0], 700.0)
        self.assertLess(closed[0], 900.0)
        # no stationary width once the threshold is too high
        self.assertTrue(math.isnan(closed[1]))
        self.assertTrue(100.0 <= table.column("w_star_exact_m")[0] <= 2000.0)


class TestLensReport(unittest.TestCase):
    def test_default_link(self):
        report = lens_report(ExperimentConfig())
        self.assertEqual(tuple(report), LENS_REPORT_KEYS)
        self.assertAlmostEqual(report["divergence_rad"], 4e-4, places=12)
        self.assertAlmostEqual(report["focal_length_m"], 24.74e-3, delta=0.02e-3)
        self.assertEqual(report["branch"], "converging")
        self.assertAlmostEqual(report["voltage_v"], report["focal_length_m"], places=9)


class TestValidation(unittest.TestCase):
    def test_tolerance_check(self):
        check = tolerance_check("x", 1.0, 1.05, 0.1)
        self.assertTrue(check.passed)
        self.assertAlmostEqual(check.z_margin, 0.5, places=12)
        self.assertFalse(tolerance_check("x", 1.0, 1.2, 0.1).passed)

    def test_deterministic_suites_pass(self):
        checks = run_validation(ExperimentConfig(), ("numerics", "channel"))
        self.assertEqual(len(checks), 6)
        self.assertTrue(all(check.passed for check in checks), [c for c in checks if not c.passed])

    def test_unknown_suite(self):
        with self.assertRaises(DomainError):
            run_validation(ExperimentConfig(), ("numerics", "routing"))

    def test_detects_broken_closed_form(self):
        broken = (10.0 / 24.0, 8.0 / 24.0, 2.0 / 24.0)
        with mock.patch("ohlrelay.error_analysis.Q_APPROX_A", broken):
            checks = run_validation(replace(ExperimentConfig(), mc_trials=10000), ("hop", ))
        verdicts = {check.name: check.passed for check in checks}
        self.assertFalse(verdicts["df_closed_vs_approx_quadrature"])

    def test_threshold_within_one_grid_cell(self):
        cfg = ExperimentConfig()
        stub = JointOptimum(20e-9, 800.0, 1e-3, 1, 1, True)
        with mock.patch("ohlrelay.pipeline.joint_optimize", return_value=stub), \
                mock.patch("ohlrelay.pipeline.exhaustive_joint_search", return_value=stub):
            checks = {check.name: check for check in run_validation(cfg, ("optimizer", ))}
        check = checks["threshold_vs_grid_argmin"]
        geom = cfg.link_geometry()
        noise = cfg.noise_budget()
        wi = cfg.beam_width_for(geom.length_L)
        peak = HopErrorInputs.from_link(geom, wi, cfg.tx_power_w, 20e-9, noise).peak_power
        self.assertTrue(check.passed, check)
        self.assertAlmostEqual(check.std_error, (0.99 * peak - noise.background_sigma) / 9999,
                               delta=1e-6 * check.std_error)


class TestPathEndToEnd(unittest.TestCase):
    def setUp(self):
        self.cfg = ExperimentConfig()
        self.geoms = [self.cfg.link_geometry()] * 2
        self.optima = [JointOptimum(20e-9, 800.0, pe, 3, 10, True) for pe in (1e-3, 2e-3)]

    def test_last_link_scored_at_destination(self):
        geom = self.geoms[-1]
        inputs = HopErrorInputs.from_link(geom, 800.0, self.cfg.tx_power_w, 20e-9, self.cfg.noise_budget())
        pe_df = pe_df_hop_quadrature(inputs, self.cfg.quadrature_spec())
        result = path_end_to_end(self.cfg, self.geoms, self.optima)
        self.assertEqual(result.composition, "ohl_chain")
        self.assertEqual(result.per_hop_pe[0], 1e-3)
        self.assertAlmostEqual(result.per_hop_pe[1], pe_df, places=15)
        self.assertNotEqual(result.per_hop_pe[1], 2e-3)
        self.assertAlmostEqual(result.e2e_pe, 1.0 - 0.999 * (1.0 - pe_df), places=15)

    def test_mismatched_lengths(self):
        with self.assertRaises(DomainError):
            path_end_to_end(self.cfg, self.geoms[:1], self.optima)
        with self.assertRaises(DomainError):
            path_end_to_end(self.cfg, [], [])
