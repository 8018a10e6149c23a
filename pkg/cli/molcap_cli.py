#!/usr/bin/env python3
"""molcap - image-to-InChI captioning from the command line.

Every run first prints its fully resolved configuration as one
``config {...}`` line on standard output; logs go to standard error.

Usage:
  molcap gen-data --out DIR --count N [--size PX] [--seed S] [augmentation flags]
  molcap build-vocab --manifest FILE --out vocab.txt
  molcap train --manifest FILE --vocab FILE --out ckpt.isck [--config FILE] [overrides]
  molcap infer --ckpt FILE --vocab FILE --image IMG [--engine naive|memory|cached]
  molcap eval --ckpt FILE --vocab FILE --manifest FILE --engine E --report OUT
  molcap bench-decode --ckpt FILE --image IMG --steps 16,32,64,128

Exit codes: 0 success, 1 internal or assertion failure, 2 usage, IO or config error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import structlog
from pydantic import ValidationError

from config import get_settings
from config.presets import PRESETS
from core.foundation import ConfigurationError, MolcapException
from models.schemas import Engine, RunConfig, RunValues, SampleManifest
from services.checkpoint_store import load_checkpoint
from services.dataset_service import generate_dataset, load_manifest, recipe_line, write_manifest
from services.decode_bench import bench_decode, format_bench_table
from services.evaluation_service import ModelCaptioner, evaluate, format_report_text, write_report
from services.inference_service import greedy_decode
from services.model_weights import CaptionModel, build_model
from services.run_config import (
    augment_params_from,
    model_config_from,
    resolve_run_config,
    train_config_from,
)
from services.tokenizer import Vocab, build_vocab, decode
from services.training_service import Example, TrainingService, prepare_examples, split_dataset
from services.vit_encoder import image_to_input
from utils.images import load_image
from utils.logging import configure_logging

logger = structlog.get_logger()
settings = get_settings()


def _resolve(
    args: argparse.Namespace,
    overrides: Dict[str, Any],
    paths: Dict[str, Any],
    options: Optional[Dict[str, Any]] = None,
) -> Tuple[RunConfig, RunValues]:
    run, values = resolve_run_config(
        command=args.command,
        preset=args.preset,
        seed=args.seed,
        config_file=args.config,
        overrides=overrides,
        paths=paths,
        options=options,
    )
    _echo(run)
    return run, values


def _echo(run: RunConfig) -> None:
    print(run.echo_line(), flush=True)


def _parse_steps(raw: str) -> List[int]:
    try:
        steps = [int(part) for part in raw.split(",") if part.strip()]
    except ValueError as exc:
        raise ConfigurationError("steps", f"expected comma-separated integers, got '{raw}'") from exc
    if not steps or any(step < 1 for step in steps):
        raise ConfigurationError("steps", "step counts must be positive")
    return steps


def _check_vocab(vocab: Vocab, model: CaptionModel) -> None:
    expected = model.config.decoder.vocab_size
    if len(vocab) != expected:
        raise ConfigurationError("vocab", f"{len(vocab)} tokens but the checkpoint expects {expected}")


def _write_splits(checkpoint: Path, splits: Tuple[SampleManifest, ...]) -> None:
    """Write <stem>.train.tsv, .validation.tsv and .test.tsv beside the checkpoint."""
    for name, part in zip(("train", "validation", "test"), splits):
        rows = [row.model_copy(update={"image_path": row.path}) for row in part.rows]
        write_manifest(checkpoint.with_name(f"{checkpoint.stem}.{name}.tsv"), rows)


# ============================================================================
# COMMANDS
# ============================================================================


def cmd_gen_data(args: argparse.Namespace) -> int:
    overrides = {
        "image_size": args.size,
        "sp_density": args.sp_density,
        "atom_drop": args.atom_drop,
        "double_to_single": args.double_to_single,
        "artifact_strokes": args.artifact_strokes,
    }
    _, values = _resolve(args, overrides, {"out": args.out}, {"count": args.count})
    if args.count < 1:
        raise ConfigurationError("count", "must be at least 1")
    params = augment_params_from(values)
    manifest = generate_dataset(args.out, args.count, values.image_size, args.seed, params)
    print(f"wrote {len(manifest)} samples to {manifest.path}")
    print(f"recipe {recipe_line(args.out, args.count, values.image_size, args.seed, params)}")
    return 0


def cmd_build_vocab(args: argparse.Namespace) -> int:
    _resolve(args, {}, {"manifest": args.manifest, "out": args.out})
    manifest = load_manifest(args.manifest)
    vocab = build_vocab(manifest.labels)
    vocab.save(args.out)
    print(f"vocab size {len(vocab)} written to {args.out}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    overrides = {
        "epochs": args.epochs,
        "lr": args.lr,
        "decay": args.decay,
        "batch_size": args.batch_size,
        "max_steps": args.max_steps,
        "dropout": args.dropout,
        "grad_clip_norm": 0.0 if args.no_grad_clip else None,
        "holdout": True if args.holdout else None,
    }
    paths = {"manifest": args.manifest, "vocab": args.vocab, "out": args.out}
    _, values = _resolve(args, overrides, paths)

    # Validate everything before the checkpoint path is touched.
    vocab = Vocab.load(args.vocab)
    manifest = load_manifest(args.manifest)
    model = build_model(model_config_from(values, len(vocab)), seed=args.seed)
    train_cfg = train_config_from(values, args.seed)

    # Labels are checked here, across every row, so one error lists all bad samples.
    examples = prepare_examples(manifest, vocab, model)
    validation: List[Example] = []
    if train_cfg.holdout:
        splits = split_dataset(manifest, args.seed)
        by_line = {row.line: example for row, example in zip(manifest.rows, examples)}
        examples = [by_line[row.line] for row in splits[0].rows]
        validation = [by_line[row.line] for row in splits[1].rows]
        _write_splits(Path(args.out), splits)

    result = TrainingService(model, train_cfg, checkpoint_path=args.out).fit(examples, validation)
    final = result.epoch_losses[-1] if result.epoch_losses else float("nan")
    print(f"trained {result.steps} steps, final epoch loss {final:.6f}, checkpoint {result.checkpoint_path}")
    return 0


def cmd_infer(args: argparse.Namespace) -> int:
    paths = {"ckpt": args.ckpt, "vocab": args.vocab, "image": args.image}
    _resolve(args, {}, paths, {"engine": args.engine, "max_steps": args.max_steps})
    model = load_checkpoint(args.ckpt)
    vocab = Vocab.load(args.vocab)
    _check_vocab(vocab, model)
    image = image_to_input(load_image(args.image))
    max_steps = args.max_steps or min(settings.max_decode_len, model.config.decoder.max_len)
    result = greedy_decode(model, image, Engine(args.engine), max_steps)
    print(decode(vocab, result.tokens))
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    paths = {"ckpt": args.ckpt, "vocab": args.vocab, "manifest": args.manifest, "report": args.report}
    _resolve(args, {}, paths, {"engine": args.engine})
    model = load_checkpoint(args.ckpt)
    vocab = Vocab.load(args.vocab)
    _check_vocab(vocab, model)
    manifest = load_manifest(args.manifest)
    report = evaluate(ModelCaptioner(model, vocab, Engine(args.engine)), manifest)
    write_report(report, args.report)
    print(format_report_text(report), end="")
    return 0


def cmd_bench_decode(args: argparse.Namespace) -> int:
    steps = _parse_steps(args.steps)
    paths = {"ckpt": args.ckpt, "image": args.image}
    _resolve(args, {}, paths, {"steps": steps, "memory_engine": args.memory_engine})
    model = load_checkpoint(args.ckpt)
    if max(steps) > model.config.decoder.max_len:
        raise ConfigurationError("steps", f"largest step count exceeds max_len {model.config.decoder.max_len}")
    image = image_to_input(load_image(args.image))
    rows = bench_decode(model, image, steps, include_memory_engine=args.memory_engine)
    print(format_bench_table(rows))
    return 0


COMMANDS = {
    "gen-data": cmd_gen_data,
    "build-vocab": cmd_build_vocab,
    "train": cmd_train,
    "infer": cmd_infer,
    "eval": cmd_eval,
    "bench-decode": cmd_bench_decode,
}


# ============================================================================
# PARSER
# ============================================================================


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--preset",
        choices=sorted(PRESETS),
        default=settings.default_preset,
        help=f"Built-in value set (default: {settings.default_preset})",
    )
    common.add_argument("--config", metavar="FILE", help="key=value file applied over the preset")
    common.add_argument("--seed", type=int, default=settings.default_seed, help="Run seed")
    common.add_argument(
        "--log-level",
        type=str.upper,
        choices=["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"],
        default=None,
        help="Override MOLCAP_LOG_LEVEL",
    )
    common.add_argument("--log-format", choices=["json", "console"], default=None, help="Override MOLCAP_LOG_FORMAT")

    parser = argparse.ArgumentParser(
        prog="molcap",
        description="Translate molecule drawings into InChI-style strings.",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=(
            "Environment variables:\n"
            "  MOLCAP_LOG_LEVEL       DEBUG, INFO, WARNING, ERROR or CRITICAL\n"
            "  MOLCAP_LOG_FORMAT      json or console\n"
            "  MOLCAP_DEBUG           check every forward op for NaN/Inf\n"
            "  MOLCAP_DEFAULT_PRESET  preset used when --preset is absent\n"
        ),
    )
    sub = parser.add_subparsers(dest="command", metavar="<command>")
    sub.required = True

    # gen-data
    p_gen = sub.add_parser(
        "gen-data",
        parents=[common],
        help="Generate a synthetic dataset",
        description="Render random molecules to PGM files and write manifest.tsv and recipe.txt.",
    )
    p_gen.add_argument("--out", required=True, metavar="DIR", help="Output directory")
    p_gen.add_argument("--count", type=int, required=True, metavar="N", help="Number of samples")
    p_gen.add_argument("--size", type=int, default=None, metavar="PX", help="Image side (default: preset image_size)")
    p_gen.add_argument("--sp-density", type=float, default=None, help="Salt-and-pepper probability per pixel")
    p_gen.add_argument("--atom-drop", type=float, default=None, help="Probability of erasing one atom")
    p_gen.add_argument("--double-to-single", type=float, default=None, help="Probability of dropping one double-bond line")
    p_gen.add_argument("--artifact-strokes", type=int, default=None, help="Maximum random short strokes")

    # build-vocab
    p_vocab = sub.add_parser("build-vocab", parents=[common], help="Build a vocabulary from manifest labels")
    p_vocab.add_argument("--manifest", required=True, metavar="FILE")
    p_vocab.add_argument("--out", required=True, metavar="FILE")

    # train
    p_train = sub.add_parser(
        "train",
        parents=[common],
        help="Train a model with teacher forcing",
        description="Train and save a checkpoint after every epoch. Loss lines go to standard output.",
    )
    p_train.add_argument("--manifest", required=True, metavar="FILE")
    p_train.add_argument("--vocab", required=True, metavar="FILE")
    p_train.add_argument("--out", required=True, metavar="FILE", help="Checkpoint path")
    p_train.add_argument("--epochs", type=int, default=None)
    p_train.add_argument("--lr", type=float, default=None, help="Initial learning rate")
    p_train.add_argument("--decay", type=float, default=None, help="Factor applied entering each of the last two epochs")
    p_train.add_argument("--batch-size", type=int, default=None)
    p_train.add_argument("--max-steps", type=int, default=None, help="Stop after this many optimizer steps")
    p_train.add_argument("--dropout", type=float, default=None)
    p_train.add_argument("--no-grad-clip", action="store_true", help="Disable global-norm gradient clipping")
    p_train.add_argument("--holdout", action="store_true", help="Train on 70%%, report validation loss on 20%%")

    # infer
    p_infer = sub.add_parser("infer", parents=[common], help="Caption one image")
    p_infer.add_argument("--ckpt", required=True, metavar="FILE")
    p_infer.add_argument("--vocab", required=True, metavar="FILE")
    p_infer.add_argument("--image", required=True, metavar="IMG")
    p_infer.add_argument("--engine", choices=[e.value for e in Engine], default=Engine.CACHED.value)
    p_infer.add_argument("--max-steps", type=int, default=None, help="Decode at most this many tokens")

    # eval
    p_eval = sub.add_parser("eval", parents=[common], help="Levenshtein evaluation over a manifest")
    p_eval.add_argument("--ckpt", required=True, metavar="FILE")
    p_eval.add_argument("--vocab", required=True, metavar="FILE")
    p_eval.add_argument("--manifest", required=True, metavar="FILE")
    p_eval.add_argument("--engine", choices=[e.value for e in Engine], default=Engine.CACHED.value)
    p_eval.add_argument("--report", required=True, metavar="OUT", help="TSV report path")

    # bench-decode
    p_bench = sub.add_parser(
        "bench-decode",
        parents=[common],
        help="Compare engine costs against the closed-form counts",
    )
    p_bench.add_argument("--ckpt", required=True, metavar="FILE")
    p_bench.add_argument("--image", required=True, metavar="IMG")
    p_bench.add_argument("--steps", default="16,32,64,128", help="Comma-separated step counts")
    p_bench.add_argument("--memory-engine", action="store_true", help="Also run the encoder-once, full-decoder engine")

    return parser


def run(argv: Optional[Sequence[str]] = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    configure_logging(args.log_level or settings.log_level, args.log_format or settings.log_format)
    try:
        return COMMANDS[args.command](args)
    except MolcapException as exc:
        logger.error("command_failed", command=args.command, error_code=exc.error_code, error=exc.message)
        print(f"Error: {exc.message}", file=sys.stderr)
        return exc.exit_code
    except ValidationError as exc:
        print(f"Error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"Error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        logger.exception("command_crashed", command=args.command)
        print(f"Error: internal failure: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
