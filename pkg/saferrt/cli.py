"""Command line entry point: run, verify, render and sweep scenarios."""

# Licensed under the MIT license.

import argparse
import logging
import os
import sys
from typing import Sequence

from saferrt import SafeRRTClient
from saferrt.derived_component import SafeRRTException
from saferrt.harness import load_artifact
from saferrt.render import RENDER_KINDS, render_svg
from saferrt.scenario import load_scenario


def _parse_seeds(value: str) -> list[int]:
    try:
        return [int(item) for item in value.split(",") if item.strip()]
    except ValueError as ex:
        raise argparse.ArgumentTypeError(f"Seeds must be comma separated integers: {value}") from ex


def build_parser() -> argparse.ArgumentParser:
    """The argument parser with one subcommand per harness operation."""

    parser = argparse.ArgumentParser(prog="saferrt", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="Log debug detail")

    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="Plan and execute a scenario")
    run.add_argument("scenario", help="Scenario YAML file")
    run.add_argument("-o", "--out", required=True, help="Artifact directory")

    verify = commands.add_parser("verify", help="Re-check every certificate of an artifact")
    verify.add_argument("artifact", help="Artifact directory")

    render = commands.add_parser("render", help="Draw one figure of an artifact")
    render.add_argument("artifact", help="Artifact directory")
    render.add_argument("--kind", choices=RENDER_KINDS, required=True)
    render.add_argument("-o", "--out", help="SVG file (defaults to the artifact's figures folder)")

    sweep = commands.add_parser("sweep", help="Compare certified and LQR execution over seeds")
    sweep.add_argument("scenario", help="Scenario YAML file")
    sweep.add_argument("--seeds", type=_parse_seeds, required=True, help="For example 0,1,2")
    sweep.add_argument("-o", "--out", help="CSV file for the comparison table")

    return parser


def _run(client: SafeRRTClient, args: argparse.Namespace) -> int:
    scenario = load_scenario(args.scenario)
    artifact = client.harness.run_scenario(scenario, args.out)
    execution = artifact.summary["execution"]

    for agent in artifact.summary["agents"]:
        stats = agent["certified"]["violation_stats"]
        line = f"{agent['name']}: {agent['certified']['outcome']}, {stats['percent']}% violating"
        if agent["lqr"] is not None:
            line += f", LQR {agent['lqr']['violation_stats']['percent']}% violating"
        print(line)

    return 1 if execution["aborted"] else 0


def _verify(client: SafeRRTClient, args: argparse.Namespace) -> int:
    results = client.harness.verify_artifact(load_artifact(args.artifact))
    failed = [(name, segment) for name, segment, report in results if not report.passed]

    for name, segment in failed:
        print(f"{name}: certificate of segment {segment} failed")

    print(f"{len(results) - len(failed)} of {len(results)} certificates verified")
    return 1 if failed else 0


def _render(args: argparse.Namespace) -> int:
    artifact = load_artifact(args.artifact)
    out = args.out or os.path.join(args.artifact, "figures", f"{args.kind}.svg")
    os.makedirs(os.path.dirname(os.path.abspath(out)), exist_ok=True)

    with open(out, "w", encoding="utf-8") as figure_file:
        figure_file.write(render_svg(artifact, args.kind))

    print(out)
    return 0


def _sweep(client: SafeRRTClient, args: argparse.Namespace) -> int:
    table = client.harness.sweep(load_scenario(args.scenario), args.seeds)
    print(table.to_string(index=False))
    if args.out:
        table.to_csv(args.out, index=False)
    return 0


def main(argv: Sequence[str] | None = None) -> int:
    """Parse the command line and dispatch.

    :param argv: The arguments (defaults to sys.argv)

    :returns: The exit status
    """

    args = build_parser().parse_args(argv)

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )

    client = SafeRRTClient()

    try:
        if args.command == "run":
            return _run(client, args)
        if args.command == "verify":
            return _verify(client, args)
        if args.command == "render":
            return _render(args)
        return _sweep(client, args)
    except SafeRRTException as ex:
        client.log.error(f"{args.command} failed: {ex}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
