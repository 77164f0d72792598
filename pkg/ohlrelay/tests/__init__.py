from . import (test_channel, test_cli, test_config, test_constellation,
               test_error_analysis, test_lens, test_montecarlo, test_numerics,
               test_optimizer, test_pipeline, test_relay_chain, test_utils)


def load_tests(loader, suite, pattern):
    suite.addTests(loader.loadTestsFromModule(test_numerics))
    suite.addTests(loader.loadTestsFromModule(test_channel))
    suite.addTests(loader.loadTestsFromModule(test_relay_chain))
    suite.addTests(loader.loadTestsFromModule(test_error_analysis))
    suite.addTests(loader.loadTestsFromModule(test_optimizer))
    suite.addTests(loader.loadTestsFromModule(test_lens))
    suite.addTests(loader.loadTestsFromModule(test_constellation))
    suite.addTests(loader.loadTestsFromModule(test_montecarlo))
    suite.addTests(loader.loadTestsFromModule(test_config))
    suite.addTests(loader.loadTestsFromModule(test_utils))
    suite.addTests(loader.loadTestsFromModule(test_pipeline))
    suite.addTests(loader.loadTestsFromModule(test_cli))
    return suite
