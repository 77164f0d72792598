import json
import math
import unittest

from ohlrelay.channel import LinkGeometry
from ohlrelay.error_analysis import (HopErrorInputs, pe_chain_markov,
                                     pe_df_hop_quadrature,
                                     pe_ohl_hop_components)
from ohlrelay.errors import DomainError
from ohlrelay.montecarlo import (McPlan, McResult, count_chain_errors,
                                 draw_batch, format_report, mean_eye_threshold,
                                 simulate_af_ber, simulate_chain_ber,
                                 validate_report)
from ohlrelay.numerics import RngStream
from ohlrelay.relay_chain import NoiseBudget, RelayChainConfig

GEOM = LinkGeometry(1000e3, 150e-6, 0.1)
NOISE = NoiseBudget()


def plan(trials=40_000, batch_size=10_000, seed=11, **kwargs):
    return McPlan(trials=trials, batch_size=batch_size, rng=RngStream(seed, 2), **kwargs)


class TestMcPlan(unittest.TestCase):
    def test_batches(self):
        self.assertEqual(plan().n_batches, 4)

    def test_invalid(self):
        with self.assertRaises(DomainError):
            plan(trials=9_999, batch_size=9_999)
        with self.assertRaises(DomainError):
            plan(trials=20_000, batch_size=3_000)
        with self.assertRaises(DomainError):
            plan(channel_mode="raytrace")
        with self.assertRaises(DomainError):
            plan(confidence_z=0.0)


class TestMcResult(unittest.TestCase):
    def test_from_counts(self):
        result = McResult.from_counts(25, 10_000, [10, 15], "x")
        self.assertEqual(result.ber_estimate, 2.5e-3)
        self.assertAlmostEqual(result.std_error, math.sqrt(2.5e-3 * 0.9975 / 1e4), places=15)
        self.assertEqual(result.per_hop_flip_counts, [10, 15])


class TestDraws(unittest.TestCase):
    def test_shapes_and_reproducibility(self):
        cfg = RelayChainConfig.uniform([GEOM, GEOM], [400.0, 400.0], "DF")
        first = draw_batch(cfg, NOISE, RngStream(5), 100)
        second = draw_batch(cfg, NOISE, RngStream(5), 100)
        self.assertEqual(first.h.shape, (2, 100))
        self.assertEqual(first.bg.shape, (2, 100))
        self.assertTrue((first.h == second.h).all())
        self.assertTrue((first.h <= cfg.fadings[0].h_max).all())

    def test_af_relays_have_no_decisions(self):
        cfg = RelayChainConfig.uniform([GEOM, GEOM], [400.0, 400.0], "AF")
        draws = draw_batch(cfg, NOISE, RngStream(5), 100)
        with self.assertRaises(DomainError):
            count_chain_errors(cfg, NOISE, draws)


class TestChainSimulation(unittest.TestCase):
    def test_single_hop_matches_quadrature(self):
        cfg = RelayChainConfig.uniform([GEOM], [400.0], "DF")
        result = simulate_chain_ber(cfg, NOISE, plan())
        analytic = pe_df_hop_quadrature(HopErrorInputs.from_link(GEOM, 400.0, 4.0, 18e-9, NOISE))
        check = validate_report(analytic, result, confidence_z=4.0)
        self.assertTrue(check.passed, check)
        self.assertEqual(result.label, "single_hop")

    def test_ohl_relay_matches_markov_model(self):
        cfg = RelayChainConfig.uniform([GEOM, GEOM], [400.0, 400.0], "OHL", thresholds=[18e-9])
        result = simulate_chain_ber(cfg, NOISE, plan())
        inputs = HopErrorInputs.from_link(GEOM, 400.0, 4.0, 18e-9, NOISE)
        analytic = pe_chain_markov([pe_ohl_hop_components(inputs)], pe_df_hop_quadrature(inputs))
        check = validate_report(analytic, result, confidence_z=4.0)
        self.assertTrue(check.passed, check)
        self.assertEqual(len(result.per_hop_flip_counts), 2)

    def test_reproducible(self):
        cfg = RelayChainConfig.uniform([GEOM, GEOM], [400.0, 400.0], "DF")
        first = simulate_chain_ber(cfg, NOISE, plan(trials=10_000, batch_size=5_000))
        second = simulate_chain_ber(cfg, NOISE, plan(trials=10_000, batch_size=5_000))
        self.assertEqual(first.error_count, second.error_count)
        self.assertEqual(first.per_hop_flip_counts, second.per_hop_flip_counts)

    def test_independent_of_threads(self):
        cfg = RelayChainConfig.uniform([GEOM, GEOM], [400.0, 400.0], "DF")
        serial = simulate_chain_ber(cfg, NOISE, plan(trials=20_000, batch_size=5_000))
        parallel = simulate_chain_ber(cfg, NOISE, plan(trials=20_000, batch_size=5_000, threads=2))
        self.assertEqual(serial.error_count, parallel.error_count)

    def test_flip_counts_add_up(self):
        cfg = RelayChainConfig.uniform([GEOM, GEOM], [400.0, 400.0], "DF")
        result = simulate_chain_ber(cfg, NOISE, plan(trials=10_000, batch_size=10_000))
        # every end-to-end error needs an odd number of hop flips
        self.assertLessEqual(result.error_count, sum(result.per_hop_flip_counts))


class TestAmplifyForwardSimulation(unittest.TestCase):
    def test_single_hop_genie_equals_df(self):
        af = simulate_af_ber(RelayChainConfig.uniform([GEOM], [400.0], "AF"), NOISE, plan(trials=20_000),
                             threshold_rule="genie_midpoint")
        df = simulate_chain_ber(RelayChainConfig.uniform([GEOM], [400.0], "DF"), NOISE, plan(trials=20_000))
        self.assertLessEqual(abs(af.error_count - df.error_count), 2)
        self.assertEqual(af.label, "AF/average/genie_midpoint")

    def test_mean_eye_threshold_single_hop(self):
        cfg = RelayChainConfig.uniform([GEOM], [400.0], "AF")
        expected = 0.5 * cfg.source_power * cfg.fadings[0].mean()
        self.assertAlmostEqual(mean_eye_threshold(cfg, NOISE) / expected, 1.0, places=12)

    def test_mean_eye_is_a_fixed_threshold(self):
        cfg = RelayChainConfig.uniform([GEOM, GEOM], [400.0, 400.0], "AF")
        default = simulate_af_ber(cfg, NOISE, plan(trials=20_000))
        fixed = simulate_af_ber(cfg, NOISE, plan(trials=20_000), dest_threshold=mean_eye_threshold(cfg, NOISE))
        self.assertEqual(default.label, "AF/average/mean_eye")
        self.assertEqual(default.error_count, fixed.error_count)

    def test_relay_ordering_on_common_draws(self):
        geoms, widths = [GEOM, GEOM], [400.0, 400.0]
        df = simulate_chain_ber(RelayChainConfig.uniform(geoms, widths, "DF"), NOISE, plan())
        ohl = simulate_chain_ber(RelayChainConfig.uniform(geoms, widths, "OHL", thresholds=[18e-9]), NOISE, plan())
        af = simulate_af_ber(RelayChainConfig.uniform(geoms, widths, "AF"), NOISE, plan())
        self.assertLessEqual(df.ber_estimate, ohl.ber_estimate + 3.0 * ohl.std_error)
        self.assertLessEqual(ohl.ber_estimate, af.ber_estimate + 3.0 * af.std_error)
        self.assertGreater(af.ber_estimate, 2.0 * ohl.ber_estimate)

    def test_two_hop_chain(self):
        cfg = RelayChainConfig.uniform([GEOM, GEOM], [400.0, 400.0], "AF")
        result = simulate_af_ber(cfg, NOISE, plan(trials=20_000), gain_mode="instantaneous")
        self.assertGreater(result.ber_estimate, 0.0)
        self.assertLess(result.ber_estimate, 0.5)
        self.assertEqual(result.per_hop_flip_counts[0], 0)

    def test_invalid(self):
        af = RelayChainConfig.uniform([GEOM, GEOM], [400.0, 400.0], "AF")
        df = RelayChainConfig.uniform([GEOM, GEOM], [400.0, 400.0], "DF")
        with self.assertRaises(DomainError):
            simulate_af_ber(df, NOISE, plan())
        with self.assertRaises(DomainError):
            simulate_af_ber(af, NOISE, plan(), gain_mode="peak")
        with self.assertRaises(DomainError):
            simulate_af_ber(af, NOISE, plan(), dest_threshold=0.0)
        with self.assertRaises(DomainError):
            simulate_af_ber(af, NOISE, plan(), threshold_rule="oracle")


class TestValidationReport(unittest.TestCase):
    def setUp(self):
        self.mc = McResult.from_counts(100, 100_000, [100], "DF")

    def test_pass_and_fail(self):
        self.assertTrue(validate_report(1.05e-3, self.mc).passed)
        failed = validate_report(2e-3, self.mc)
        self.assertFalse(failed.passed)
        self.assertGreater(failed.z_margin, 3.0)
        self.assertLess(validate_report(0.5e-3, self.mc).z_margin, -3.0)

    def test_approximate_model_widens_band(self):
        self.assertFalse(validate_report(1.4e-3, self.mc).passed)
        self.assertTrue(validate_report(1.4e-3, self.mc, approximate_model=True).passed)

    def test_zero_variance(self):
        zero = McResult.from_counts(0, 10_000, [0])
        self.assertTrue(validate_report(0.0, zero).passed)
        self.assertEqual(validate_report(1e-6, zero).z_margin, math.inf)

    def test_format_report(self):
        checks = [validate_report(1e-3, self.mc, name="a"), validate_report(2e-3, self.mc, name="b")]
        document = json.loads(format_report(checks))
        self.assertEqual([c["name"] for c in document], ["a", "b"])
        self.assertEqual(document[1]["verdict"], "fail")
        self.assertEqual(format_report(checks), format_report(checks))
