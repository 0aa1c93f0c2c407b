"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 infeasible model, 3 solver limit.
"""
from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click
import numpy as np

from . import __version__
from .lp import dump_lp
from .market import (ClearingConfig, InfeasibleMarketError, build_ed_milp,
                     clear_market_pc, social_welfare, solution_summary,
                     solution_to_csv, storage_profit)
from .model import derate_local_lines, instance_from_json
from .mpec import BigMConfig, MpecConfig, solve_strategic
from .reporting import emit_reports
from .rts24 import DEFAULT_STORAGE_BUS, build_rts24
from .simulation import (CampaignSpec, load_campaign, run_congestion_sweep,
                         run_siting_sweep, run_year, save_campaign)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INFEASIBLE = 2
EXIT_LIMIT = 3


class LimitReached(RuntimeError):
    """Solve finished on a gap/time/node limit rather than optimality."""


def _instance_options(f):
    f = click.option("--instance", "instance_path", type=click.Path(exists=True),
                     default=None, help="instance JSON (default: bundled "
                     "24-bus system)")(f)
    f = click.option("--line-scale", default=1.5, show_default=True,
                     help="multiplier on every line rating")(f)
    f = click.option("--derate", "derate_spec", default="",
                     help="derate factor(s) for lines at the storage bus, "
                     "comma separated")(f)
    f = click.option("--storage-bus", default=DEFAULT_STORAGE_BUS,
                     show_default=True)(f)
    f = click.option("--seed", default=0, show_default=True,
                     help="wind/load trace seed")(f)
    return f


def _solver_options(f):
    f = click.option("--gap", default=5e-5, show_default=True,
                     help="relative MILP gap")(f)
    f = click.option("--big-m", default=2000.0, show_default=True,
                     help="dual big-M for complementarity")(f)
    f = click.option("--price-cap", default=2000.0, show_default=True,
                     help="bid price cap for the strategic agent")(f)
    return f


def _parse_derates(text: str) -> tuple[float, ...]:
    if not text:
        return ()
    try:
        values = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise click.UsageError(f"bad --derate value {text!r}")
    for v in values:
        if not 0.0 < v <= 1.0:
            raise click.UsageError("--derate factors must lie in (0, 1]")
    return values


def _build_instance(instance_path, line_scale, derate_spec, storage_bus,
                    seed, day):
    derates = _parse_derates(derate_spec)
    if len(derates) > 1:
        raise click.UsageError("single-day commands take one --derate factor")
    if instance_path:
        instance = instance_from_json(Path(instance_path).read_text())
    else:
        instance = build_rts24(line_scale=line_scale, wind_seed=seed,
                               day=day, storage_bus=storage_bus)
    if derates and derates[0] < 1.0:
        instance = derate_local_lines(instance, storage_bus, derates[0])
    return instance


@click.group()
@click.version_option(__version__)
@click.option("-v", "--verbose", is_flag=True, help="log solver progress")
def cli(verbose):
    """Storage arbitrage in a transmission-constrained market."""
    logging.basicConfig(
        level=logging.INFO if verbose else logging.WARNING,
        format="%(levelname)s %(name)s %(message)s")


@cli.command("clear-day")
@_instance_options
@_solver_options
@click.option("--day", default=0, show_default=True)
@click.option("--out", "out_path", type=click.Path(), default=None,
              help="write dispatch CSV here")
@click.option("--force", is_flag=True)
@click.option("--dump-lp", "dump_path", type=click.Path(), default=None,
              help="write the assembled model in debug text form")
def clear_day(instance_path, line_scale, derate_spec, storage_bus, seed,
              gap, big_m, price_cap, day, out_path, force, dump_path):
    """Competitive clearing of one day; prints a JSON summary."""
    instance = _build_instance(instance_path, line_scale, derate_spec,
                               storage_bus, seed, day)
    if dump_path:
        Path(dump_path).write_text(dump_lp(build_ed_milp(instance).lp))
    sol = clear_market_pc(instance, ClearingConfig(rel_gap=gap))
    if out_path:
        path = Path(out_path)
        if path.exists() and not force:
            raise click.UsageError(f"{path} exists; pass --force")
        path.write_text(solution_to_csv(sol, instance))
    click.echo(solution_summary(sol, instance))
    if sol.gap > gap + 1e-12:
        raise LimitReached(f"gap {sol.gap:.2e} above requested {gap:.2e}")


@cli.command("solve-strategic")
@_instance_options
@_solver_options
@click.option("--day", default=0, show_default=True)
@click.option("--out", "out_path", type=click.Path(), default=None,
              help="write cleared dispatch CSV here")
@click.option("--force", is_flag=True)
@click.option("--dump-lp", "dump_path", type=click.Path(), default=None,
              help="write the lower-level model in debug text form")
def strategic(instance_path, line_scale, derate_spec, storage_bus, seed,
              gap, big_m, price_cap, day, out_path, force, dump_path):
    """Strategic storage bidding for one day; prints a JSON summary."""
    instance = _build_instance(instance_path, line_scale, derate_spec,
                               storage_bus, seed, day)
    if dump_path:
        from .mpec import build_lower_level_lp, truthful_bid
        Path(dump_path).write_text(
            dump_lp(build_lower_level_lp(instance, truthful_bid(instance))))
    ss = solve_strategic(instance, MpecConfig(
        rel_gap=gap, big_m=BigMConfig(dual_default=big_m,
                                      price_cap=price_cap)))
    if out_path:
        path = Path(out_path)
        if path.exists() and not force:
            raise click.UsageError(f"{path} exists; pass --force")
        path.write_text(solution_to_csv(ss.cleared, instance))
    summary = {
        "profit": ss.profit,
        "profit_expost": ss.profit_expost,
        "welfare": social_welfare(instance, ss.cleared),
        "gap": ss.gap,
        "diagnostics": ss.diagnostics,
    }
    click.echo(json.dumps(summary, indent=2, sort_keys=True))
    if ss.gap > gap + 1e-12:
        raise LimitReached(f"gap {ss.gap:.2e} above requested {gap:.2e}")


def _campaign_spec(mode, days, line_scale, derate_spec, storage_bus, seed,
                   gap, big_m, price_cap, workers, buses=()):
    derates = _parse_derates(derate_spec) or (1.0, 0.9, 0.8, 0.7, 0.6, 0.5)
    try:
        spec = CampaignSpec(mode=mode, days=days, line_scale=line_scale,
                            derate_levels=derates,
                            candidate_buses=tuple(buses),
                            storage_bus=storage_bus, wind_seed=seed,
                            rel_gap=gap, big_m=big_m, price_cap=price_cap,
                            workers=workers)
        spec.check()
    except ValueError as exc:
        raise click.UsageError(str(exc))
    return spec


def _finish_campaign(result, out_dir, force):
    save_campaign(result, out_dir, force=force)
    emit_reports(result, out_dir, force=force)
    agg = result.aggregates()
    click.echo(json.dumps({"outdir": str(out_dir), "aggregates": agg,
                           "failed_days": len(result.failures())},
                          indent=2, sort_keys=True))
    if result.failures():
        raise LimitReached(f"{len(result.failures())} day(s) failed")
    if any(r.flagged for r in result.records):
        raise LimitReached("some days exceeded the requested gap")


_campaign_options = [
    click.option("--mode", type=click.Choice(["pc", "mpec", "both"]),
                 default="both", show_default=True),
    click.option("--days", default=365, show_default=True),
    click.option("--workers", default=1, show_default=True),
    click.option("--out", "out_dir", type=click.Path(), required=True),
    click.option("--force", is_flag=True),
]


def _add_campaign_options(f):
    for opt in reversed(_campaign_options):
        f = opt(f)
    return f


@cli.command("run-year")
@_instance_options
@_solver_options
@_add_campaign_options
def run_year_cmd(instance_path, line_scale, derate_spec, storage_bus, seed,
                 gap, big_m, price_cap, mode, days, workers, out_dir, force):
    """Day-by-day campaign at the baseline line scale."""
    spec = _campaign_spec(mode, days, line_scale, derate_spec, storage_bus,
                          seed, gap, big_m, price_cap, workers)
    _finish_campaign(run_year(spec), out_dir, force)


@cli.command("sweep-congestion")
@_instance_options
@_solver_options
@_add_campaign_options
def sweep_congestion(instance_path, line_scale, derate_spec, storage_bus,
                     seed, gap, big_m, price_cap, mode, days, workers,
                     out_dir, force):
    """Campaign over derate levels of the lines at the storage bus."""
    spec = _campaign_spec(mode, days, line_scale, derate_spec, storage_bus,
                          seed, gap, big_m, price_cap, workers)
    _finish_campaign(run_congestion_sweep(spec), out_dir, force)


@cli.command("sweep-siting")
@_instance_options
@_solver_options
@_add_campaign_options
@click.option("--buses", default="", help="candidate storage buses, comma "
              "separated", required=True)
def sweep_siting(instance_path, line_scale, derate_spec, storage_bus, seed,
                 gap, big_m, price_cap, mode, days, workers, out_dir, force,
                 buses):
    """Relocate storage across candidate buses under 50% local derating."""
    try:
        bus_list = tuple(int(v) for v in buses.split(",") if v)
    except ValueError:
        raise click.UsageError(f"bad --buses value {buses!r}")
    if not bus_list:
        raise click.UsageError("--buses must list at least one bus")
    spec = _campaign_spec(mode, days, line_scale, derate_spec, storage_bus,
                          seed, gap, big_m, price_cap, workers, bus_list)
    _finish_campaign(run_siting_sweep(spec), out_dir, force)


@cli.command("report")
@click.option("--campaign", "campaign_dir", type=click.Path(exists=True),
              required=True, help="directory written by a campaign command")
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--force", is_flag=True)
def report(campaign_dir, out_dir, force):
    """Regenerate plots and CSV reports from a saved campaign."""
    result = load_campaign(campaign_dir)
    written = emit_reports(result, out_dir, force=force)
    click.echo(json.dumps({"written": [str(p) for p in written]}, indent=2))


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.UsageError as exc:
        click.echo(f"error: {exc.format_message()}", err=True)
        return EXIT_USAGE
    except click.exceptions.Abort:
        return EXIT_USAGE
    except click.ClickException as exc:
        exc.show()
        return EXIT_USAGE
    except InfeasibleMarketError as exc:
        click.echo(f"infeasible: {exc}", err=True)
        return EXIT_INFEASIBLE
    except LimitReached as exc:
        click.echo(f"limit: {exc}", err=True)
        return EXIT_LIMIT
    except FileExistsError as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
