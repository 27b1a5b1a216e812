"""segrefine command line.

Subcommands write rasters as PNG and structured results as JSON (sorted keys,
two-space indent), so identical invocations produce identical files. Logs go
to stderr and to the logs directory.

Exit codes: 0 success, 1 domain error, 2 usage error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from segrefine.errors import MissingFile, SegRefineError
from segrefine.evaluation.dataset import evaluate_dataset
from segrefine.evaluation.harness import ablate, benchmark, rank
from segrefine.evaluation.metrics import evaluate_labels
from segrefine.geometry.masks import LabelImage
from segrefine.infrastructure.filesystem import open_directory
from segrefine.infrastructure.json_io import dumps, write_json
from segrefine.infrastructure.logging_config import initialize_logging, log_command_call
from segrefine.infrastructure.settings import get_settings, load_settings
from segrefine.models.config import (
    ALL_OPERATIONS,
    ADMISSION_MODES,
    BOUNDARY_PROVIDERS,
    DELETE_PROVIDERS,
    SCORERS,
    CorruptionConfig,
    EngineConfig,
    GeneratorConfig,
    load_config,
)
from segrefine.scene.corruption import corrupt_segmentation
from segrefine.scene.generator import generate_scene
from segrefine.scene.io import LABELS_FILE, Scene, load_scene, read_labels, save_scene, write_labels, write_uint16_png
from segrefine.scene.sequence import ObjectRemovalSequence
from segrefine.scoring.model_io import init_model, save_model
from segrefine.scoring.scorers import make_scorer
from segrefine.search.loop_sim import uncertainty_loop_sim
from segrefine.search.sample_tree import refine, root_graph

logger = logging.getLogger(__name__)

REFINED_LABELS_FILE = "refined_labels.png"
UNCERTAINTY_FILE = "uncertainty.png"
TREE_FILE = "tree.json"

# CLI flag dest -> EngineConfig field
_ENGINE_FLAGS = (
    "K",
    "B",
    "m_n",
    "m_e",
    "edge_threshold",
    "nu",
    "add_threshold",
    "proposal_threshold",
    "proposals_per_op",
    "boundary_provider",
    "boundary_map_path",
    "delete_provider",
    "scorer",
    "model_path",
    "operations",
    "admission",
    "seed",
)


def _emit(payload: Any, out: Path | None) -> None:
    if out is None:
        sys.stdout.write(dumps(payload).decode("utf-8"))
    else:
        write_json(out, payload)
        logger.info("Wrote %s", out)


def _read_label_file(path: Path) -> LabelImage:
    with open_directory(path.parent) as handle:
        return read_labels(handle, path.name)


def _scene_and_labels(args: argparse.Namespace) -> tuple[Scene, LabelImage]:
    scene = load_scene(args.scene)
    if args.labels is not None:
        return scene, _read_label_file(args.labels)
    if scene.labels is None:
        raise MissingFile(str(Path(args.scene) / LABELS_FILE))
    return scene, scene.labels


def engine_config_from_args(args: argparse.Namespace) -> EngineConfig:
    overrides = {name: getattr(args, name, None) for name in _ENGINE_FLAGS}
    if overrides.get("model_path") is None and get_settings().model_path is not None:
        overrides["model_path"] = str(get_settings().model_path)
    return load_config(args.config, overrides)


def _generator_config(args: argparse.Namespace) -> GeneratorConfig:
    overrides = {"num_objects": getattr(args, "num_objects", None)}
    return load_config(getattr(args, "generator_config", None), overrides, config_type=GeneratorConfig)


def _corruption_config(args: argparse.Namespace) -> CorruptionConfig:
    overrides = {"num_corruptions": getattr(args, "num_corruptions", None)}
    return load_config(getattr(args, "corruption_config", None), overrides, config_type=CorruptionConfig)


def _seed_range(args: argparse.Namespace) -> list[int]:
    return list(range(args.seed_start, args.seed_start + args.count))


@log_command_call("generate")
def cmd_generate(args: argparse.Namespace) -> int:
    out = args.out or get_settings().data_dir / f"scene_{args.seed:03d}"
    scene = generate_scene(args.seed, _generator_config(args))
    save_scene(scene, out)
    logger.info("Generated scene seed=%d with %d objects in %s", args.seed, len(scene.labels.ids()), out)
    return 0


@log_command_call("corrupt")
def cmd_corrupt(args: argparse.Namespace) -> int:
    scene, labels = _scene_and_labels(args)
    corrupted = corrupt_segmentation(labels, args.seed, _corruption_config(args))
    with open_directory(args.out.parent, create=True) as handle:
        write_labels(handle, corrupted, args.out.name)
    logger.info("Wrote corrupted labels with %d instances to %s", len(corrupted.ids()), args.out)
    return 0


@log_command_call("refine")
def cmd_refine(args: argparse.Namespace) -> int:
    config = engine_config_from_args(args)
    scene, initial = _scene_and_labels(args)
    result = refine(scene, initial, config, np.random.default_rng(config.seed), make_scorer(config, scene.labels))
    out = args.out or get_settings().output_dir / Path(args.scene).resolve().name
    with open_directory(out, create=True) as handle:
        write_labels(handle, result.best_labels, REFINED_LABELS_FILE)
        write_uint16_png(handle, UNCERTAINTY_FILE, result.uncertainty.to_uint16())
    tree = result.tree.to_dict()
    tree["config"] = config.to_dict()
    write_json(Path(out) / TREE_FILE, tree)
    logger.info("Refined score %.4f -> %.4f; outputs in %s", result.initial_score, result.best_score, out)
    return 0


@log_command_call("evaluate")
def cmd_evaluate(args: argparse.Namespace) -> int:
    report = evaluate_dataset(args.pred_dir, args.gt_dir, args.tol, jobs=args.jobs)
    _emit(report.to_dict(), args.out)
    return 0


@log_command_call("score")
def cmd_score(args: argparse.Namespace) -> int:
    config = engine_config_from_args(args)
    scene, labels = _scene_and_labels(args)
    scorer = make_scorer(config, scene.labels)
    value = scorer(root_graph(scene, labels, config))
    payload: dict[str, Any] = {"scorer": config.scorer, "score": value}
    if scene.labels is not None and args.labels is not None:
        payload["metrics"] = evaluate_labels(labels, scene.labels, tol=config.boundary_tolerance).to_dict()
    _emit(payload, args.out)
    return 0


@log_command_call("rank")
def cmd_rank(args: argparse.Namespace) -> int:
    table = rank(
        _seed_range(args),
        engine_config_from_args(args),
        _generator_config(args),
        _corruption_config(args),
        steps=args.steps,
        jobs=args.jobs,
    )
    _emit(table, args.out)
    return 0


@log_command_call("ablate")
def cmd_ablate(args: argparse.Namespace) -> int:
    config = engine_config_from_args(args)
    table = ablate(
        _seed_range(args),
        config,
        _generator_config(args),
        _corruption_config(args),
        tol=config.boundary_tolerance,
        jobs=args.jobs,
    )
    _emit(table, args.out)
    return 0


@log_command_call("benchmark")
def cmd_benchmark(args: argparse.Namespace) -> int:
    config = engine_config_from_args(args)
    table = benchmark(
        _seed_range(args),
        config,
        _generator_config(args),
        _corruption_config(args),
        tol=config.boundary_tolerance,
        jobs=args.jobs,
    )
    _emit(table, args.out)
    return 0


@log_command_call("loop-sim")
def cmd_loop_sim(args: argparse.Namespace) -> int:
    config = engine_config_from_args(args)
    sequence = ObjectRemovalSequence.generate(config.seed, _generator_config(args))
    corruption = _corruption_config(args) if args.corrupt else None
    report = uncertainty_loop_sim(sequence, config, corruption=corruption, max_steps=args.max_steps)
    _emit(report.to_dict(), args.out)
    return 0


@log_command_call("graph")
def cmd_graph(args: argparse.Namespace) -> int:
    config = engine_config_from_args(args)
    scene, labels = _scene_and_labels(args)
    _emit(root_graph(scene, labels, config).to_dict(), args.out)
    return 0


@log_command_call("init-model")
def cmd_init_model(args: argparse.Namespace) -> int:
    model = init_model(
        args.seed,
        args.node_dim,
        args.edge_dim,
        num_layers=args.layers,
        hidden=args.hidden,
    )
    save_model(model, args.out)
    return 0


def _add_engine_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("engine")
    group.add_argument("--config", type=Path, help="Engine config file (JSON or YAML); flags override it")
    group.add_argument("--K", dest="K", type=int, help="Sample-tree expansion iterations")
    group.add_argument("--B", dest="B", type=int, help="Branching factor")
    group.add_argument("--m-n", dest="m_n", type=int, help="Budget of stored graph nodes")
    group.add_argument("--m-e", dest="m_e", type=int, help="Budget of stored directed graph edges")
    group.add_argument("--edge-threshold", type=float, help="Neighbour distance in pixels")
    group.add_argument("--nu", type=float, help="Boundary confidence threshold for split endpoints")
    group.add_argument("--add-threshold", type=float)
    group.add_argument("--proposal-threshold", type=float)
    group.add_argument("--proposals-per-op", type=int)
    group.add_argument("--boundary-provider", choices=BOUNDARY_PROVIDERS)
    group.add_argument("--boundary-map", dest="boundary_map_path", help="16-bit PNG for the from_file provider")
    group.add_argument("--delete-provider", choices=DELETE_PROVIDERS)
    group.add_argument("--scorer", choices=SCORERS)
    group.add_argument("--model", dest="model_path", help="Score model file for --scorer model")
    group.add_argument("--operations", nargs="+", choices=ALL_OPERATIONS)
    group.add_argument("--admission", choices=ADMISSION_MODES)
    group.add_argument("--seed", type=int, help="Engine seed (default 0)")


def _add_synthetic_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--generator-config", type=Path)
    parser.add_argument("--corruption-config", type=Path)
    parser.add_argument("--num-objects", type=int)
    parser.add_argument("--num-corruptions", type=int)


def _add_scene_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--scene", type=Path, required=True, help="Scene directory")
    parser.add_argument("--labels", type=Path, help="Label PNG to use instead of the scene's labels")


def _add_harness_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed-start", type=int, default=0)
    parser.add_argument("--count", type=int, default=10)
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument("--out", type=Path, help="Write JSON here instead of stdout")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="segrefine", description=__doc__.splitlines()[0])
    parser.add_argument("--log-level", help="Override SEGREFINE_LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True)

    generate = sub.add_parser("generate", help="Render a synthetic tabletop scene")
    generate.add_argument("--seed", type=int, default=0)
    generate.add_argument("--out", type=Path, help="Scene directory to write (default: SEGREFINE_DATA_DIR/scene_<seed>)")
    generate.add_argument("--generator-config", type=Path)
    generate.add_argument("--num-objects", type=int)
    generate.set_defaults(handler=cmd_generate)

    corrupt = sub.add_parser("corrupt", help="Inject seeded segmentation errors")
    _add_scene_flags(corrupt)
    corrupt.add_argument("--seed", type=int, default=0)
    corrupt.add_argument("--out", type=Path, required=True, help="Label PNG to write")
    corrupt.add_argument("--corruption-config", type=Path)
    corrupt.add_argument("--num-corruptions", type=int)
    corrupt.set_defaults(handler=cmd_corrupt)

    refine_cmd = sub.add_parser("refine", help="Refine a segmentation with the sample tree")
    _add_scene_flags(refine_cmd)
    _add_engine_flags(refine_cmd)
    refine_cmd.add_argument("--out", type=Path, help="Output directory (default: SEGREFINE_OUTPUT_DIR/<scene name>)")
    refine_cmd.set_defaults(handler=cmd_refine)

    evaluate = sub.add_parser("evaluate", help="Score predictions against ground truth")
    evaluate.add_argument("--pred-dir", type=Path, required=True)
    evaluate.add_argument("--gt-dir", type=Path, required=True)
    evaluate.add_argument("--tol", type=float, default=2.0, help="Boundary tolerance in pixels")
    evaluate.add_argument("--jobs", type=int, default=1)
    evaluate.add_argument("--out", type=Path)
    evaluate.set_defaults(handler=cmd_evaluate)

    score = sub.add_parser("score", help="Score one segmentation graph")
    _add_scene_flags(score)
    _add_engine_flags(score)
    score.add_argument("--out", type=Path)
    score.set_defaults(handler=cmd_score)

    rank_cmd = sub.add_parser("rank", help="nDCG of iterative-refinement chains")
    _add_engine_flags(rank_cmd)
    _add_synthetic_flags(rank_cmd)
    _add_harness_flags(rank_cmd)
    rank_cmd.add_argument("--steps", type=int, default=5)
    rank_cmd.set_defaults(handler=cmd_rank)

    for name, handler, help_text in (
        ("ablate", cmd_ablate, "Refinement gains per operation group"),
        ("benchmark", cmd_benchmark, "Generate, corrupt, refine and evaluate over seeds"),
    ):
        harness = sub.add_parser(name, help=help_text)
        _add_engine_flags(harness)
        _add_synthetic_flags(harness)
        _add_harness_flags(harness)
        harness.set_defaults(handler=handler)

    loop = sub.add_parser("loop-sim", help="Uncertainty-driven object removal loop")
    _add_engine_flags(loop)
    _add_synthetic_flags(loop)
    loop.add_argument("--corrupt", action="store_true", help="Corrupt each step's initial labels")
    loop.add_argument("--max-steps", type=int)
    loop.add_argument("--out", type=Path)
    loop.set_defaults(handler=cmd_loop_sim)

    graph = sub.add_parser("graph", help="Dump the segmentation graph as JSON")
    _add_scene_flags(graph)
    _add_engine_flags(graph)
    graph.add_argument("--out", type=Path)
    graph.set_defaults(handler=cmd_graph)

    model = sub.add_parser("init-model", help="Write a seeded random score model")
    model.add_argument("--seed", type=int, default=0)
    model.add_argument("--node-dim", type=int, default=32)
    model.add_argument("--edge-dim", type=int, default=32)
    model.add_argument("--layers", type=int, default=3)
    model.add_argument("--hidden", type=int, nargs="*")
    model.add_argument("--out", type=Path, required=True)
    model.set_defaults(handler=cmd_init_model)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else 2
    if args.log_level:
        load_settings(log_level=args.log_level)
    initialize_logging(get_settings().log_level)
    handler: Callable[[argparse.Namespace], int] = args.handler
    try:
        return handler(args)
    except SegRefineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def run() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    run()
