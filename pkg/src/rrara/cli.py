"""Command-line entry point: ``rrara run | suite | replay | report``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import yaml

from .agents import AGENT_NAMES
from .harness import (
    SuiteConfig,
    load_scenario,
    log_name,
    replay,
    report_csv,
    report_dir,
    run_episode,
    run_suite,
)
from .metrics import compute
from .reflector import REVIEW_LATENCY
from .tcm import LatencySource


def _on_off(value: str) -> bool:
    if value not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected on|off")
    return value == "on"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rrara", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a single episode")
    run.add_argument("--scenario", required=True, help="scenario file or bundled name")
    run.add_argument("--agent", required=True, choices=AGENT_NAMES)
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--tcm", type=_on_off, default=True, metavar="on|off")
    run.add_argument("--latency-mode", choices=("virtual", "wallclock"), default="virtual")
    lat = run.add_mutually_exclusive_group()
    lat.add_argument("--virtual-latency", type=float, metavar="SECONDS")
    lat.add_argument("--latency-schedule", metavar="FILE", help="one latency in seconds per line")
    run.add_argument("--reflector", choices=("mock", "oracle", "llm"), default="mock")
    run.add_argument("--mock-mode", choices=("keep", "value", "script"), default="keep")
    run.add_argument("--reflector-latency", type=float, default=REVIEW_LATENCY, metavar="SECONDS")
    run.add_argument("--endpoint", metavar="FILE", help="YAML with base_url, model, temperature, timeout, api_key_env")
    run.add_argument("--replay", metavar="FILE", help="recorded reflector fixture to replay")
    run.add_argument("--record", metavar="FILE", help="append live reflector traffic to this fixture")
    run.add_argument("--depth", type=int, default=3, help="deliberative search depth")
    run.add_argument("--out", default="runs", help="output directory")

    suite = sub.add_parser("suite", help="run a scenario x agent x seed grid")
    suite.add_argument("--config", required=True)

    rep = sub.add_parser("replay", help="recompute metrics from one episode log")
    rep.add_argument("--log", required=True)

    report = sub.add_parser("report", help="aggregate all episode logs in a directory")
    report.add_argument("--dir", required=True)
    return parser


def _reflector_spec(args) -> dict:
    if args.reflector == "mock":
        return {"kind": "mock", "mode": args.mock_mode, "latency": args.reflector_latency}
    if args.reflector == "oracle":
        return {"kind": "oracle", "latency": args.reflector_latency}
    spec: dict = {"kind": "llm"}
    if args.replay:
        spec["replay"] = args.replay
    else:
        if not args.endpoint:
            raise ValueError("--reflector llm needs --endpoint or --replay")
        spec["endpoint"] = yaml.safe_load(Path(args.endpoint).read_text()) or {}
        if args.record:
            spec["record"] = args.record
    return spec


def _cmd_run(args) -> int:
    config = load_scenario(args.scenario)
    if args.latency_mode == "wallclock":
        latency = LatencySource(mode="wallclock")
    elif args.latency_schedule:
        latency = LatencySource.from_schedule_file(args.latency_schedule)
    elif args.virtual_latency is not None:
        latency = LatencySource(seconds=args.virtual_latency)
    else:
        latency = None
    path = Path(args.out) / log_name(config.name, args.agent, args.seed)
    log = run_episode(
        config, args.agent, args.seed, tcm=args.tcm, latency=latency,
        reflector=_reflector_spec(args), depth=args.depth, log_path=path,
    )
    report = compute(log)
    print(json.dumps({"log": str(path), **report.row()}, sort_keys=True))
    return 0


def _cmd_suite(args) -> int:
    manifest, reports = run_suite(SuiteConfig.load(args.config))
    sys.stdout.write(report_csv(reports))
    for failure in manifest.failures:
        print(json.dumps({"failed": failure}), file=sys.stderr)
    return 1 if manifest.failures else 0


def _cmd_replay(args) -> int:
    print(json.dumps(replay(args.log).row(), sort_keys=True))
    return 0


def _cmd_report(args) -> int:
    text = report_csv(report_dir(args.dir))
    (Path(args.dir) / "report.csv").write_text(text)
    sys.stdout.write(text)
    return 0


COMMANDS = {"run": _cmd_run, "suite": _cmd_suite, "replay": _cmd_replay, "report": _cmd_report}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except Exception as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
