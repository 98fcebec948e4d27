"""Command line: build, render, generate, eval.

Exit codes: 0 success, 1 input parse error, 2 configuration or usage error,
3 I/O error, 4 --strict metric failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from PIL import Image

from . import __version__
from .coco import DocumentError, dump_json, parse_segmentation_document, serialize_segmentation
from .config import ConfigError, PipelineConfig, dump_config, load_config
from .document import parse_graph_document, serialize_graph
from .evaluation import EvalReport, evaluate
from .masks import MaskError
from .pipeline import run_pipeline
from .plant import GraphError
from .render import png_bytes, render_overlay
from .synthetic import (
    GenerationError,
    degrade,
    generate,
    parse_truth_document,
    spec_dict,
    truth_document,
)

log = logging.getLogger("vinegraph")

EXIT_OK, EXIT_PARSE, EXIT_CONFIG, EXIT_IO, EXIT_STRICT = 0, 1, 2, 3, 4


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _read(path: str) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read {path}: {exc.strerror or exc}") from None


def _write(path: str | Path, data: bytes) -> None:
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_bytes(data)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write {path}: {exc.strerror or exc}") from None


# -- build ---------------------------------------------------------------------

def cmd_build(args, config: PipelineConfig) -> int:
    try:
        image, items = parse_segmentation_document(_read(args.input), args.image_id)
        result = run_pipeline(items, config.connection, final_selection=config.pruning.final_selection)
    except (DocumentError, GraphError, MaskError) as exc:
        raise CliError(EXIT_PARSE, f"{args.input}: {exc}") from None
    output = args.output or config.io.output or str(Path(args.input).with_suffix("")) + ".graph.json"
    _write(output, serialize_graph(result, image, config.connection, final_selection=config.pruning.final_selection))
    print(f"{len(result.graphs)} graphs, {len(result.points)} points, {len(result.orphans)} orphans")
    return EXIT_OK


# -- render --------------------------------------------------------------------

def cmd_render(args, config: PipelineConfig) -> int:
    try:
        doc = parse_graph_document(_read(args.document))
    except DocumentError as exc:
        raise CliError(EXIT_PARSE, f"{args.document}: {exc}") from None
    background = None
    image_path = args.image or config.io.image
    if image_path:
        try:
            with Image.open(image_path) as img:
                background = img.convert("RGBA")
        except OSError as exc:
            raise CliError(EXIT_IO, f"cannot read image {image_path}: {exc}") from None
    size = (doc.image.width, doc.image.height)
    try:
        out = render_overlay(
            doc.result.graphs,
            doc.result.points,
            size=size,
            image=background,
            finals=doc.result.final_points(),
            options=config.render,
        )
    except MaskError as exc:
        raise CliError(EXIT_CONFIG, str(exc)) from None
    output = args.output or config.io.output or str(Path(args.document).with_suffix("")) + ".png"
    _write(output, png_bytes(out))
    return EXIT_OK


# -- generate ------------------------------------------------------------------

def _scene_name(seed: int) -> str:
    return f"scene_{seed:06d}"


def _make_scene(task) -> tuple[int, bytes, bytes]:
    seed, config = task
    spec = dataclasses.replace(config.generator, seed=seed)
    items, truth = generate(spec)
    items, report = degrade(items, config.degradation, seed, truth)
    truth.degradations = report
    seg = serialize_segmentation(items, spec.width, spec.height, image_id=seed, file_name=f"{_scene_name(seed)}.png")
    return seed, seg, dump_json(truth_document(truth))


def _parse_seeds(text: str) -> list[int]:
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise CliError(EXIT_CONFIG, f"--seeds must be a comma-separated list of integers, got {text!r}") from None


def cmd_generate(args, config: PipelineConfig) -> int:
    out = Path(args.output_dir)
    if out.exists() and not out.is_dir():
        raise CliError(EXIT_IO, f"{out} is not a directory")
    if out.is_dir() and any(out.iterdir()) and not args.force:
        raise CliError(EXIT_CONFIG, f"{out} is not empty; pass --force to overwrite")
    if args.seeds:
        seeds = _parse_seeds(args.seeds)
    else:
        if args.count is None or args.count < 0:
            raise CliError(EXIT_CONFIG, "pass --count N (N >= 0) or --seeds")
        start = args.seed if args.seed is not None else config.generator.seed
        seeds = list(range(start, start + args.count))
    tasks = [(s, config) for s in seeds]
    try:
        if args.jobs > 1 and len(tasks) > 1:
            with ProcessPoolExecutor(args.jobs) as pool:
                scenes = list(pool.map(_make_scene, tasks))
        else:
            scenes = [_make_scene(t) for t in tasks]
    except GenerationError as exc:
        raise CliError(EXIT_CONFIG, str(exc)) from None
    entries = []
    for seed, seg, truth in sorted(scenes):
        name = _scene_name(seed)
        _write(out / f"{name}.json", seg)
        _write(out / f"{name}.truth.json", truth)
        entries.append({"seed": seed, "segmentation": f"{name}.json", "truth": f"{name}.truth.json"})
    manifest = {
        "schema": "vinegraph.corpus",
        "version": 1,
        "generator": spec_dict(config.generator),
        "degradation": spec_dict(config.degradation),
        "scenes": entries,
    }
    _write(out / "manifest.json", dump_json(manifest))
    print(f"{len(entries)} scenes written to {out}")
    return EXIT_OK


# -- eval ----------------------------------------------------------------------

def _eval_scene(task) -> tuple[int, dict]:
    corpus, entry, config = task
    _, items = parse_segmentation_document((corpus / entry["segmentation"]).read_bytes())
    truth = parse_truth_document(json.loads((corpus / entry["truth"]).read_text(encoding="utf-8")))
    result = run_pipeline(items, config.connection, final_selection=config.pruning.final_selection)
    report = evaluate(result, truth, config.evaluation.match_threshold)
    return entry["seed"], report


def _table(rows: list[tuple[str, EvalReport]]) -> str:
    head = f"{'scene':<14}" + "".join(f"{k + ' P/R':>22}" for k in ("cordon_cane", "cane_cane", "cane_node", "points", "finals"))
    lines = [head + f"{'alpha_mae':>11}"]
    for name, r in rows:
        cells = [r.connections[k] for k in ("cordon_cane", "cane_cane", "cane_node")] + [r.points, r.finals]
        mae = r.alpha_mae
        lines.append(
            f"{name:<14}"
            + "".join(f"{c.precision:>11.3f}/{c.recall:<10.3f}" for c in cells)
            + (f"{mae:>11.4f}" if mae is not None else f"{'-':>11}")
        )
    return "\n".join(lines)


def cmd_eval(args, config: PipelineConfig) -> int:
    corpus = Path(args.corpus)
    try:
        manifest = json.loads((corpus / "manifest.json").read_text(encoding="utf-8"))
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read corpus manifest: {exc.strerror or exc}") from None
    except json.JSONDecodeError as exc:
        raise CliError(EXIT_PARSE, f"corpus manifest is not valid JSON: {exc}") from None
    tasks = [(corpus, e, config) for e in manifest.get("scenes", [])]
    try:
        if args.jobs > 1 and len(tasks) > 1:
            with ProcessPoolExecutor(args.jobs) as pool:
                results = list(pool.map(_eval_scene, tasks))
        else:
            results = [_eval_scene(t) for t in tasks]
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read scene: {exc}") from None
    except (DocumentError, GraphError, MaskError, KeyError, ValueError) as exc:
        raise CliError(EXIT_PARSE, f"bad scene in corpus: {exc}") from None
    results.sort(key=lambda r: r[0])

    total = EvalReport(scenes=0)
    for _, r in results:
        total += r
    doc = {
        "schema": "vinegraph.eval",
        "version": 1,
        "match_threshold": config.evaluation.match_threshold,
        "connection": dataclasses.asdict(config.connection),
        "aggregate": total.as_dict(),
        "scenes": [{"seed": s, **r.as_dict()} for s, r in results],
    }
    output = args.output or config.io.output or corpus / "eval_report.json"
    _write(output, dump_json(doc))
    print(_table([(_scene_name(s), r) for s, r in results] + [("TOTAL", total)]))

    if args.strict:
        ev = config.evaluation
        failures = [
            f"{name} {metric} {value:.3f}"
            for name, counts in [*total.connections.items(), ("points", total.points)]
            for metric, value, floor in (
                ("precision", counts.precision, ev.strict_min_precision),
                ("recall", counts.recall, ev.strict_min_recall),
            )
            if value < floor
        ]
        if failures:
            for f in failures:
                print(f"strict check failed: {f}", file=sys.stderr)
            return EXIT_STRICT
    return EXIT_OK


# -- entry point ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    # Shared flags are accepted before or after the verb; SUPPRESS keeps a
    # subparser from resetting a value given at the top level.
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", help="configuration file (YAML or JSON); default $VINEGRAPH_CONFIG")
    common.add_argument("--set", dest="overrides", action="append", metavar="SECTION.KEY=VALUE",
                        help="override a configuration key (repeatable)")
    common.add_argument("--seed", type=int, help="generator seed (generate: first seed)")
    common.add_argument("--strict", action="store_true", help="eval: exit 4 when a metric is below its floor")
    common.add_argument("--force", action="store_true", help="generate: write into a non-empty directory")
    common.add_argument("--dump-config", action="store_true", help="print the effective configuration and exit")
    common.add_argument("-v", "--verbose", action="count")

    parser = argparse.ArgumentParser(prog="vinegraph", description=__doc__.splitlines()[0], parents=[common])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("build", parents=[common], help="segmentation document -> graph document")
    p.add_argument("input")
    p.add_argument("-o", "--output")
    p.add_argument("--image-id", type=int)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("render", parents=[common], help="graph document -> overlay PNG")
    p.add_argument("document")
    p.add_argument("--image", help="background photo; a neutral background is used otherwise")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("generate", parents=[common], help="write a synthetic corpus")
    p.add_argument("output_dir")
    p.add_argument("--count", type=int)
    p.add_argument("--seeds", help="comma-separated seed list (overrides --count)")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("eval", parents=[common], help="evaluate the pipeline on a corpus")
    p.add_argument("corpus")
    p.add_argument("-o", "--output")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_eval)
    return parser


_COMMON_DEFAULTS = {
    "config": None,
    "overrides": [],
    "seed": None,
    "strict": False,
    "force": False,
    "dump_config": False,
    "verbose": 0,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    for name, default in _COMMON_DEFAULTS.items():
        if not hasattr(args, name):
            setattr(args, name, default)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        config = load_config(args.config, args.overrides)
        if args.seed is not None:
            config.generator = dataclasses.replace(config.generator, seed=args.seed)
    except ConfigError as exc:
        print(f"vinegraph: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"vinegraph: cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    except GenerationError as exc:
        print(f"vinegraph: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.dump_config:
        sys.stdout.write(dump_config(config))
        return EXIT_OK
    if not getattr(args, "func", None):
        parser.print_usage(sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args, config)
    except CliError as exc:
        print(f"vinegraph: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
