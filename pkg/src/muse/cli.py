"""Command-line entry points: run a story, score a run, inspect a trace."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import config as config_module
from . import orchestrator
from .errors import MuseError
from .model import GENRES, UserPrompt
from .store import TickClock, stable_hash, system_clock


def _default_run_id(prompt: str, seed: int) -> str:
    return f"run-{stable_hash('run', prompt, seed)[:12]}"


def _cmd_run(args: argparse.Namespace) -> int:
    cfg = config_module.load_config(args.config)
    seed = args.seed if args.seed is not None else cfg.mock.seed
    prompt = UserPrompt(text=args.prompt, genre=args.genre,
                        style_override=args.style)

    if args.mock:
        from .adapters.mocks import build_mock_registry

        registry = build_mock_registry(seed=seed, n_segments=cfg.mock.n_segments,
                                       stubborn=cfg.mock.stubborn,
                                       silent=cfg.mock.silent)
        clock = TickClock()
    else:
        from .adapters.remote import build_remote_registry

        registry = build_remote_registry(cfg.providers)
        missing = registry.missing()
        if missing:
            print(f"no endpoint configured for: {', '.join(missing)} "
                  f"(set providers in the config file or "
                  f"MUSE_PROVIDER_<ROLE>_ENDPOINT)", file=sys.stderr)
            return orchestrator.EXIT_ABORTED
        clock = system_clock

    run_id = args.run_id or _default_run_id(args.prompt, seed)
    try:
        bundle = orchestrator.run_story(prompt, registry,
                                        runs_dir=args.runs_dir, run_id=run_id,
                                        config=cfg.loop, base_seed=seed,
                                        clock=clock)
    except (MuseError, ValueError) as exc:
        print(f"run aborted: {exc}", file=sys.stderr)
        return orchestrator.EXIT_ABORTED

    print(f"run {bundle.run_id}: {len(bundle.results)} segment(s) "
          f"-> {bundle.run_dir}")
    for result in bundle.results:
        print(f"  segment {result.index}: "
              f"production={result.statuses['production']} "
              f"post={result.statuses['post']}")
    if bundle.exit_status == orchestrator.EXIT_DEGRADED:
        print("some loops exhausted their budget; "
              "best-scoring attempts were kept")
    return bundle.exit_status


def _format_cell(value) -> str:
    if isinstance(value, float):
        return f"{value:.2f}"
    return str(value)


def _cmd_eval(args: argparse.Namespace) -> int:
    from . import bench

    run_dir = Path(args.run_dir)
    manifest_path = run_dir / "manifest.json"
    if not manifest_path.exists():
        print(f"no manifest.json under {run_dir}", file=sys.stderr)
        return 1
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))

    if args.judge == "mock":
        from .adapters.mocks import build_mock_registry

        registry = build_mock_registry(seed=int(manifest.get("seed", 0)))
    else:
        from .adapters.remote import build_remote_registry

        cfg = config_module.load_config(args.config)
        registry = build_remote_registry(cfg.providers)
        for role in ("judge", "embedder"):
            if not registry.bound(role):
                print(f"live evaluation needs a {role} endpoint", file=sys.stderr)
                return 1

    try:
        metrics = bench.evaluate_run(run_dir, registry)
    except MuseError as exc:
        print(f"evaluation failed: {exc}", file=sys.stderr)
        return 1
    path = bench.write_scores(run_dir, metrics)

    widths = [max(len(c), len(_format_cell(metrics[c]))) for c in bench.COLUMNS]
    print("  ".join(c.rjust(w) for c, w in zip(bench.COLUMNS, widths)))
    print("  ".join(_format_cell(metrics[c]).rjust(w)
                    for c, w in zip(bench.COLUMNS, widths)))
    print(f"scores written to {path}")
    return 0


def _cmd_trace(args: argparse.Namespace) -> int:
    trace_path = Path(args.run_dir) / "trace.jsonl"
    if not trace_path.exists():
        print(f"no trace.jsonl under {args.run_dir}", file=sys.stderr)
        return 1
    for line in trace_path.read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        event = json.loads(line)
        if args.segment is not None and event.get("segment") != args.segment:
            continue
        kind = event.pop("kind", "?")
        timestamp = event.pop("t", 0.0)
        details = json.dumps(event, sort_keys=True)
        print(f"[{timestamp:9.3f}] {kind} {details}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="muse",
        description="Turn a short story prompt into verified shot-level "
                    "multimodal artifacts.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute the full pipeline for a prompt")
    run.add_argument("prompt", help="the story prompt")
    run.add_argument("--genre", choices=GENRES, default=None)
    run.add_argument("--style", default=None,
                     help="style id override from the built-in library")
    run.add_argument("--config", default=None, help="path to a TOML config")
    run.add_argument("--mock", action="store_true",
                     help="use deterministic in-process backends")
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--runs-dir", default="runs")
    run.add_argument("--run-id", default=None)
    run.set_defaults(func=_cmd_run)

    evaluate = sub.add_parser("eval", help="score a finished run directory")
    evaluate.add_argument("run_dir")
    evaluate.add_argument("--judge", choices=("mock", "live"), default="mock")
    evaluate.add_argument("--config", default=None)
    evaluate.set_defaults(func=_cmd_eval)

    trace = sub.add_parser("trace", help="print a run's decision trace")
    trace.add_argument("run_dir")
    trace.add_argument("--segment", type=int, default=None)
    trace.set_defaults(func=_cmd_trace)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
