"""Command-line entry point.

Subcommands:
    generate  --scenes DIR --out FILE [--levels L,..]
    stats     --prompts FILE --out FILE
    eval      --gt FILE --pred FILE --out FILE [--conf 0.25] [--dist 2.0]
    demo      --scenes DIR --seed N --out DIR

Exit codes: 0 success, 1 input/validation error, 2 internal error. The
NUGR_THREADS environment variable (positive int) caps worker parallelism;
outputs are canonically ordered regardless of the worker count, and every
file is written atomically (temp + rename), so failures never leave partial
output behind.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .demo import run_demo
from .errors import ToolkitError
from .evaluation import EvalConfig, evaluate
from .fileio import atomic_write_text, atomic_writer
from .hog import compute_stats, generate_dataset, iter_records
from .scene import Scene, load_scene


def _max_workers() -> int:
    raw = os.environ.get("NUGR_THREADS")
    if raw is None:
        return 1
    try:
        value = int(raw)
    except ValueError:
        raise ToolkitError(f"NUGR_THREADS must be a positive integer, got {raw!r}") from None
    if value < 1:
        raise ToolkitError(f"NUGR_THREADS must be a positive integer, got {raw!r}")
    return value


def _load_scene_dir(directory: str) -> list[Scene]:
    if not os.path.isdir(directory):
        raise ToolkitError(f"no scenes found: {directory!r} is not a directory")
    paths = sorted(
        os.path.join(directory, name)
        for name in os.listdir(directory)
        if name.endswith(".json")
    )
    if not paths:
        raise ToolkitError(f"no scenes found in {directory!r}")
    scenes = []
    seen_ids = set()
    for path in paths:
        scene = load_scene(path)
        if scene.scene_id in seen_ids:
            raise ToolkitError(f"duplicate scene_id {scene.scene_id!r} in {path}")
        seen_ids.add(scene.scene_id)
        scenes.append(scene)
    return scenes


def _parse_levels(raw: str) -> set[int]:
    try:
        levels = {int(part) for part in raw.split(",") if part.strip()}
    except ValueError:
        raise ToolkitError(f"invalid --levels value {raw!r}") from None
    if not levels or not levels <= {1, 2, 3, 4}:
        raise ToolkitError("--levels must be a comma list drawn from 1,2,3,4")
    return levels


def cmd_generate(args) -> int:
    scenes = _load_scene_dir(args.scenes)
    levels = _parse_levels(args.levels)
    with atomic_writer(args.out) as sink:
        count = generate_dataset(scenes, levels, sink, max_workers=_max_workers())
    print(count)
    return 0


def cmd_stats(args) -> int:
    with open(args.prompts, "r", encoding="utf-8") as handle:
        records = list(iter_records(handle, where=args.prompts))
    # Frame count is observable only through the records themselves.
    frames = {(r.scene_id, r.frame_id) for r in records}
    stats = compute_stats(records, frame_count=len(frames))
    atomic_write_text(args.out, json.dumps(stats.to_dict(), indent=2) + "\n")
    print(stats.prompt_count)
    return 0


def cmd_eval(args) -> int:
    config = EvalConfig(conf_threshold=args.conf, dist_threshold=args.dist)
    report = evaluate(args.gt, args.pred, config)
    atomic_write_text(args.out, json.dumps(report.to_dict(), indent=2) + "\n")
    print(
        f"P={report.precision:.4f} R={report.recall:.4f} "
        f"mAP={report.m_ap:.4f} NDS={report.nds:.4f}"
    )
    return 0


def cmd_demo(args) -> int:
    scenes = _load_scene_dir(args.scenes)
    summary = run_demo(scenes, args.seed, args.out)
    print(f"prompts={summary['prompts']} NDS={summary['nds']:.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bevground", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="generate grounding prompts from scene files")
    gen.add_argument("--scenes", required=True, help="directory of scene JSON files")
    gen.add_argument("--out", required=True, help="output prompt JSONL path")
    gen.add_argument("--levels", default="1,2,3,4", help="comma list of levels to emit")
    gen.set_defaults(func=cmd_generate)

    stats = sub.add_parser("stats", help="dataset statistics for a prompt file")
    stats.add_argument("--prompts", required=True)
    stats.add_argument("--out", required=True)
    stats.set_defaults(func=cmd_stats)

    ev = sub.add_parser("eval", help="evaluate predictions against prompts")
    ev.add_argument("--gt", required=True)
    ev.add_argument("--pred", required=True)
    ev.add_argument("--out", required=True)
    ev.add_argument("--conf", type=float, default=0.25)
    ev.add_argument("--dist", type=float, default=2.0)
    ev.set_defaults(func=cmd_eval)

    demo = sub.add_parser("demo", help="seeded end-to-end pipeline over a scene dir")
    demo.add_argument("--scenes", required=True)
    demo.add_argument("--seed", type=int, required=True)
    demo.add_argument("--out", required=True)
    demo.set_defaults(func=cmd_demo)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ToolkitError, FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # internal failure
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
