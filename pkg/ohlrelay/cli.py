import logging
import sys
import warnings
from dataclasses import replace

import click
from click._compat import get_text_stderr
from click.exceptions import UsageError
from click.utils import echo

from ohlrelay import LINK_CLASSES, __version__
from ohlrelay.config import HOP_MODES, load_config, write_config
from ohlrelay.constellation import OBJECTIVES
from ohlrelay.errors import OHLRelayError, ValidationFailure
from ohlrelay.lens import BRANCHES
from ohlrelay.montecarlo import format_report
from ohlrelay.pipeline import (LENS_REPORT_KEYS, VALIDATION_SUITES,
                               compare_beam_optimum, lens_report,
                               optimize_path, route_scenario, run_validation,
                               snapshot_study, sweep_beam, sweep_relays,
                               sweep_threshold, trace_threshold)
from ohlrelay.utils import stdout_warn, write_csv, write_json

logger = logging.getLogger(__name__)
handler = logging.StreamHandler(sys.stdout)
formatter = logging.Formatter(
    '[%(asctime)s] %(module)s.%(funcName)s %(levelname)s: %(message)s',
    datefmt='%Y-%m-%d %H:%M:%S')
handler.setFormatter(formatter)
logger.addHandler(handler)
logger.setLevel(logging.INFO)

warnings.showwarning = stdout_warn


def _show_usage_error(self, file=None):
    if file is None:
        file = get_text_stderr()
    color = None

    if self.ctx is not None:
        color = self.ctx.color
        echo(self.ctx.get_help() + "\n", file=file, color=color)
    echo("Error: %s" % self.format_message(), file=file, color=color)


UsageError.show = _show_usage_error


class OHLRelayGroup(click.Group):
    """Command group mapping package errors to their exit codes."""
    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except OHLRelayError as err:
            logger.error("%s: %s", type(err).__name__, err)
            ctx.exit(err.exit_code)


def _log_parameters(**parameters):
    logger.info("Command parameters:")
    for name, value in parameters.items():
        logger.info("%-30s%s", f"{name.replace('_', ' ').capitalize()}:", value)


@click.group(cls=OHLRelayGroup)
@click.option("--debug/--no-debug", default=False, help="Log debug messages.")
@click.option("-c",
              "--config",
              required=False,
              default=None,
              type=click.Path(exists=True, dir_okay=False),
              help="JSON file overriding any of the default parameters.")
@click.option("--seed", required=False, default=None, type=int, help="Override the configured random seed.")
@click.option("-t", "--threads", required=False, default=1, type=int, help="Number of worker processes.")
@click.version_option(version=__version__)
@click.pass_context
def main(ctx, debug, config, seed, threads):
    """ohlrelay: analysis and optimization of all-optical satellite relay chains."""
    if debug:
        for logger_name in logging.root.manager.loggerDict:
            logging.getLogger(logger_name).setLevel(logging.DEBUG)
    cfg = load_config(config)
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    if threads < 1:
        raise click.BadParameter(f"threads must be >= 1, got {threads}.", param_hint="--threads")
    ctx.obj = {"config": cfg, "threads": threads}


@main.command()
@click.option("-o", "--output", required=True, type=click.Path(exists=False), help="Path to the config file.")
@click.pass_obj
def dump_config(obj, output):
    """Write the effective configuration as JSON."""
    write_config(obj["config"], output)
    logger.info("Configuration written to %s.", output)


@main.command("sweep-threshold")
@click.option("-o", "--output", required=True, type=click.Path(exists=False), help="Path to the output CSV.")
@click.option("--length-m", required=False, default=None, type=float, help="Hop length in meters.")
@click.option("--sigma-theta-rad", required=False, default=None, type=float, help="Pointing jitter in radians.")
@click.option("--link-class", required=False, default=None, type=click.Choice(LINK_CLASSES), help="Link class.")
@click.option("--with-af", is_flag=True, default=False, help="Add Monte-Carlo amplify-and-forward columns.")
@click.pass_obj
def sweep_threshold_cmd(obj, output, length_m, sigma_theta_rad, link_class, with_af):
    """Error probability of a single-relay system against the OHL threshold."""
    if length_m is not None and not length_m > 0:
        raise click.BadParameter(f"must be positive, got {length_m}.", param_hint="--length-m")
    if sigma_theta_rad is not None and not sigma_theta_rad > 0:
        raise click.BadParameter(f"must be positive, got {sigma_theta_rad}.", param_hint="--sigma-theta-rad")
    _log_parameters(output=output, length_m=length_m, sigma_theta_rad=sigma_theta_rad, link_class=link_class,
                    with_af=with_af, threads=obj["threads"])
    table = sweep_threshold(obj["config"], length_m, sigma_theta_rad, link_class, with_af, obj["threads"])
    write_csv(table, output)


@main.command("sweep-relays")
@click.option("-o", "--output", required=True, type=click.Path(exists=False), help="Path to the output CSV.")
@click.option("--hop-mode", required=False, default=None, type=click.Choice(HOP_MODES), help="How hop lengths scale.")
@click.option("--min-relays", required=False, default=None, type=int, help="Smallest relay count.")
@click.option("--max-relays", required=False, default=None, type=int, help="Largest relay count.")
@click.option("--af/--no-af", default=True, help="Run the Monte-Carlo amplify-and-forward column.")
@click.pass_obj
def sweep_relays_cmd(obj, output, hop_mode, min_relays, max_relays, af):
    """End-to-end error of OHL, DF and AF chains against the number of relays."""
    cfg = obj["config"]
    relay_range = (min_relays or cfg.relays_min, max_relays or cfg.relays_max)
    _log_parameters(output=output, hop_mode=hop_mode or cfg.hop_mode, relays=relay_range, af=af,
                    threads=obj["threads"])
    write_csv(sweep_relays(cfg, hop_mode, relay_range, af, obj["threads"]), output)


@main.command("trace-threshold")
@click.option("-o", "--output", required=True, type=click.Path(exists=False), help="Path to the output CSV.")
@click.option("-w",
              "--beam-width",
              "beam_widths",
              multiple=True,
              default=(400.0, 600.0),
              type=float,
              help="Receiver beam width in meters; repeatable.")
@click.option("--initial-threshold", default=10e-9, type=float, help="Starting threshold in watts.")
@click.pass_obj
def trace_threshold_cmd(obj, output, beam_widths, initial_threshold):
    """Fixed-point iterates of the OHL threshold."""
    _log_parameters(output=output, beam_widths=beam_widths, initial_threshold=initial_threshold)
    write_csv(trace_threshold(obj["config"], beam_widths, initial_threshold), output)


@main.command("sweep-beam")
@click.option("-o", "--output", required=True, type=click.Path(exists=False), help="Path to the output CSV.")
@click.option("-p",
              "--threshold",
              "thresholds",
              multiple=True,
              default=(10e-9, ),
              type=float,
              help="OHL threshold in watts; repeatable.")
@click.pass_obj
def sweep_beam_cmd(obj, output, thresholds):
    """OHL hop error and its surrogate against the receiver beam width."""
    _log_parameters(output=output, thresholds=thresholds, threads=obj["threads"])
    write_csv(sweep_beam(obj["config"], thresholds, threads=obj["threads"]), output)


@main.command("compare-beam-optimum")
@click.option("-o", "--output", required=True, type=click.Path(exists=False), help="Path to the output CSV.")
@click.option("-p",
              "--threshold",
              "thresholds",
              multiple=True,
              default=(10e-9, 20e-9, 40e-9),
              type=float,
              help="OHL threshold in watts; repeatable.")
@click.option("-l",
              "--length-m",
              "lengths",
              multiple=True,
              default=(500e3, 1000e3, 1500e3),
              type=float,
              help="Link length in meters; repeatable.")
@click.pass_obj
def compare_beam_optimum_cmd(obj, output, thresholds, lengths):
    """Lambert closed-form beam width against the exact-error argmin."""
    _log_parameters(output=output, thresholds=thresholds, lengths=lengths, threads=obj["threads"])
    write_csv(compare_beam_optimum(obj["config"], thresholds, lengths, obj["threads"]), output)


@main.command()
@click.option("-o",
              "--output",
              required=True,
              type=click.Path(exists=False, file_okay=False),
              help="Folder receiving snapshot.json and route.json.")
@click.option("-s", "--snapshot-index", default=0, type=click.IntRange(min=0), help="Snapshot to generate.")
@click.option("--objective", default="min_total_length", type=click.Choice(OBJECTIVES), help="Routing objective.")
@click.pass_obj
def route(obj, output, snapshot_index, objective):
    """Route the ground scenario over one constellation snapshot."""
    _log_parameters(output=output, snapshot_index=snapshot_index, objective=objective)
    route_scenario(obj["config"], output, snapshot_index, objective)


@main.command("optimize-path")
@click.option("-s",
              "--snapshot",
              required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Snapshot document written by `route`.")
@click.option("-r",
              "--route",
              "route_file",
              required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Route document written by `route`.")
@click.option("-o", "--output", required=True, type=click.Path(exists=False), help="Path to the output CSV.")
@click.option("--grid-size", default=None, type=click.IntRange(min=32), help="Exhaustive grid points per axis.")
@click.pass_obj
def optimize_path_cmd(obj, snapshot, route_file, output, grid_size):
    """Per-link optimum of a routed path, with exhaustive-search reference."""
    _log_parameters(snapshot=snapshot, route=route_file, output=output, grid_size=grid_size, threads=obj["threads"])
    write_csv(optimize_path(obj["config"], snapshot, route_file, obj["threads"], grid_size), output)


@main.command("snapshot-study")
@click.option("-o", "--output", required=True, type=click.Path(exists=False), help="Path to the output CSV.")
@click.option("-n", "--num-snapshots", default=None, type=click.IntRange(min=1), help="Number of snapshots.")
@click.option("--timing/--no-timing", default=True, help="Record runtimes; `--no-timing` writes nan.")
@click.option("--grid-size", default=None, type=click.IntRange(min=32), help="Exhaustive grid points per axis.")
@click.pass_obj
def snapshot_study_cmd(obj, output, num_snapshots, timing, grid_size):
    """End-to-end error over several snapshots, proposed against exhaustive."""
    _log_parameters(output=output, num_snapshots=num_snapshots, timing=timing, grid_size=grid_size,
                    threads=obj["threads"])
    write_csv(snapshot_study(obj["config"], num_snapshots, timing, obj["threads"], grid_size), output)


@main.command()
@click.option("-w", "--target-width", default=None, type=float, help="Receiver beam width in meters.")
@click.option("-l", "--length-m", default=None, type=float, help="Link length in meters.")
@click.option("--branch", default="auto", type=click.Choice(BRANCHES), help="Focal-length branch.")
@click.option("-o", "--output", required=False, default=None, type=click.Path(exists=False), help="JSON report.")
@click.pass_obj
def lens(obj, target_width, length_m, branch, output):
    """Liquid-lens focal length for a requested receiver beam width."""
    report = lens_report(obj["config"], target_width, length_m, branch)
    for key in LENS_REPORT_KEYS:
        echo(f"{key:<30}{report[key]}")
    if output:
        write_json(report, output)


@main.command()
@click.option("-s",
              "--suite",
              "suites",
              multiple=True,
              default=VALIDATION_SUITES,
              type=click.Choice(VALIDATION_SUITES),
              help="Suite to run; repeatable.")
@click.option("--trials", default=None, type=click.IntRange(min=10_000), help="Monte-Carlo trials per check.")
@click.option("-o", "--output", required=False, default=None, type=click.Path(exists=False), help="JSON report.")
@click.pass_obj
def validate(obj, suites, trials, output):
    """Run the analytic, closed-form and Monte-Carlo consistency checks."""
    _log_parameters(suites=suites, trials=trials, output=output, threads=obj["threads"])
    checks = run_validation(obj["config"], suites, obj["threads"], trials)
    report = format_report(checks)
    if output:
        with open(output, "w", encoding="utf-8") as f:
            f.write(report)
    else:
        echo(report)
    failed = [check.name for check in checks if not check.passed]
    if failed:
        raise ValidationFailure(f"{len(failed)} of {len(checks)} checks failed: {', '.join(failed)}.")
    logger.info("All %i checks passed.", len(checks))
