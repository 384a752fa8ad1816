import argparse
import json
import os
import sys

from rich.console import Console
from rich.table import Table

# Append the parent directory to the system path
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from ProtectionHub.config.config import get_output_dir  # noqa: E402
from ProtectionHub.scenarios.builtin_cases import case_config, print_cases  # noqa: E402
from ProtectionHub.scenarios.plotting import PlotError, emit_plot  # noqa: E402
from ProtectionHub.scenarios.scenario_config import ConfigError, load_scenario, parse_scenario  # noqa: E402
from ProtectionHub.scenarios.scenario_runner import (  # noqa: E402
    EXIT_CONFIG_ERROR, EXIT_FAILURE, EXIT_OK, batch_exit_code, run_batch, run_scenario,
)
from ProtectionHub.utils.logging_utils import log_critical_error, log_error  # noqa: E402

console = Console()


def print_summary(report):
    table = Table(title=f"Scenario {report.name}")
    table.add_column("Event", style="bold")
    table.add_column("Expected")
    table.add_column("Status")
    table.add_column("Latency (ms)", justify="right")
    table.add_column("Mean c", justify="right")
    for row in report.latency:
        status = "[green]DETECTED[/green]" if row.status == "DETECTED" else "[red]MISSED[/red]"
        latency = f"{row.latency * 1000:.2f}" if row.latency is not None else "-"
        mean_c = f"{row.mean_confidence:.3f}" if row.mean_confidence is not None else "-"
        table.add_row(row.event, row.expected, status, latency, mean_c)
    console.print(table)

    timeline = Table(title="Verdict timeline")
    for column in ("From (s)", "To (s)", "Verdict", "Suspects", "Zone"):
        timeline.add_column(column)
    for segment in report.timeline:
        timeline.add_row(f"{segment['start_s']:.4f}", f"{segment['end_s']:.4f}", segment["verdict"],
                         ",".join(segment["suspects"]), segment["zone"] or "")
    console.print(timeline)

    summary = report.summary
    console.print(
        f"[bold]{summary['windows']}[/bold] windows, mean confidence "
        f"[bold]{summary['mean_confidence']:.4f}[/bold], decisions {summary['decision_counts'] or 'none'}"
    )
    for name, check in report.expectations.items():
        mark = "[green]PASS[/green]" if check["passed"] else "[red]FAIL[/red]"
        console.print(f"  {mark} {name} ({check['detail']})")
    console.print(f"Artifacts in [cyan]{report.output_dir}[/cyan]")


def command_run(args):
    if bool(args.config) == bool(args.case):
        raise ConfigError("give either a scenario file or --case", "run")
    config = parse_scenario(case_config(args.case), default_name=args.case) if args.case else load_scenario(args.config)
    report = run_scenario(config, output_dir=args.out, seed=args.seed, strict=args.strict or None,
                          decimation=args.decimation)
    print_summary(report)
    if args.plot:
        emit_plot(report.files["trace"], c_min=config.thresholds.c_min, title=report.name)
    return report.exit_code


def command_batch(args):
    outcomes = run_batch(args.scenarios, output_root=args.out or get_output_dir(), seed=args.seed,
                         strict=args.strict or None, decimation=args.decimation, max_workers=args.workers)
    table = Table(title="Batch results")
    table.add_column("Scenario", style="bold")
    table.add_column("Exit code", justify="right")
    table.add_column("Windows / error")
    for source, (code, summary) in sorted(outcomes.items()):
        table.add_row(source, str(code), str(summary.get("error", summary.get("windows"))))
    console.print(table)
    return batch_exit_code(outcomes)


def command_list_cases(args):
    print_cases(console)
    return EXIT_OK


def command_show_case(args):
    print(json.dumps(case_config(args.name), indent=2))
    return EXIT_OK


def command_plot(args):
    path = emit_plot(args.trace, svg_path=args.output, c_min=args.c_min)
    console.print(f"[bold green]Plot written to {path}[/bold green]")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(description="GridSentry microgrid protection scenarios")
    subparsers = parser.add_subparsers(dest="command", required=True)

    def add_run_options(sub):
        sub.add_argument("--out", help="Output directory (default: GRIDSENTRY_OUTPUT_DIR/<scenario>)")
        sub.add_argument("--seed", type=int, help="Noise seed, overrides the scenario file")
        sub.add_argument("--strict", action="store_true", help="Exit with code 3 when anomalies stay unresolved")
        sub.add_argument("--decimation", type=int, help="Window stride in samples")

    run = subparsers.add_parser("run", help="Run one scenario file or built-in case")
    run.add_argument("config", nargs="?", help="Scenario JSON file")
    run.add_argument("--case", help="Built-in case name (see list-cases)")
    run.add_argument("--plot", action="store_true", help="Also render the confidence plot")
    add_run_options(run)
    run.set_defaults(handler=command_run)

    batch = subparsers.add_parser("batch", help="Run several scenarios concurrently")
    batch.add_argument("scenarios", nargs="+", help="Scenario JSON files or built-in case names")
    batch.add_argument("--workers", type=int, help="Process pool size (default: DSE_MAX_WORKERS)")
    add_run_options(batch)
    batch.set_defaults(handler=command_batch)

    subparsers.add_parser("list-cases", help="List the built-in case studies").set_defaults(
        handler=command_list_cases)

    show = subparsers.add_parser("show-case", help="Print a built-in case as scenario JSON")
    show.add_argument("name")
    show.set_defaults(handler=command_show_case)

    plot = subparsers.add_parser("plot", help="Render a trace CSV as an SVG confidence plot")
    plot.add_argument("trace", help="trace.csv written by run")
    plot.add_argument("--output", help="SVG path (default: next to the trace)")
    plot.add_argument("--c-min", type=float, default=0.8, help="Threshold line")
    plot.set_defaults(handler=command_plot)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except ConfigError as e:
        log_error(f"Invalid scenario: {e}")
        return EXIT_CONFIG_ERROR
    except PlotError as e:
        log_error(str(e))
        return EXIT_FAILURE
    except Exception as e:
        log_critical_error(f"{type(e).__name__}: {e}")
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
