# lut_retouch/cli.py

import argparse
import json
import logging
import os
import sys
import traceback
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Sequence, Tuple

from .core import config
from .core import dataset
from .core import engine
from .core import metrics
from .core import reports
from .core.bundle_io import export_bundle, import_bundle
from .core.errors import (
    BundleError,
    CheckpointError,
    ConfigError,
    DatasetError,
    DimensionMismatch,
    EmptyDataset,
    ImageError,
    IoFailure,
    LutRetouchError,
    PreconditionError,
    UnsupportedGroupLength,
    UnsupportedVariant,
)
from .core.imaging import ImageU8, load_image, save_image
from .core.lutgen import LutBundle, bake, bundle_storage
from .core.model import TrainableModel
from .core.run_config import (
    BakeSection,
    BenchSection,
    MetricsSection,
    RetouchSection,
    RunConfig,
    SynthSection,
    TrainSection,
    VerifySection,
    load_run_config,
    merge_overrides,
)
from .core.synth import write_synth_dataset
from .core.training import load_checkpoint, save_checkpoint, train, write_loss_history
from .core.utils import ensure_parent_dir, list_images, resolve_threads, sha256_file

logger = logging.getLogger("lut_retouch")


def _widths(text: str) -> Tuple[int, ...]:
    try:
        return tuple(int(part) for part in text.split("-") if part)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected widths like 32-64-128, got '{text}'") from None


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--config",
        metavar="FILE",
        help="JSON run config; command-line flags override its values.",
    )
    verbosity_group = parser.add_mutually_exclusive_group()
    verbosity_group.add_argument(
        "--verbose", "-v", action="store_true", help="Enable detailed debug output."
    )
    verbosity_group.add_argument(
        "--silent",
        "-s",
        action="store_true",
        help="Suppress informational output. Only results and errors are printed.",
    )


def build_parser() -> argparse.ArgumentParser:
    """
    Builds the argument parser with one subcommand per pipeline stage.

    Overridable options default to None so that values from `--config`
    apply unless the flag is given explicitly.
    """
    parser = argparse.ArgumentParser(
        prog="lut-retouch",
        description="Train, bake and run LUT-based photo retouching models.",
    )
    commands = parser.add_subparsers(dest="command", metavar="COMMAND")
    commands.required = True

    p = commands.add_parser("train", help="Train a model on paired images.")
    _add_common(p)
    p.add_argument("--input-dir", help="Directory of input images.")
    p.add_argument("--target-dir", help="Directory of identically named target images.")
    p.add_argument("--out", "-o", help="Checkpoint path (default: model.icemdl).")
    p.add_argument("--loss-csv", help="Loss history CSV (default: next to the checkpoint).")
    p.add_argument("--epochs", type=int, help=f"Epochs (default: {config.DEFAULT_EPOCHS}).")
    p.add_argument("--steps", type=int, help="Stop after this many optimizer steps.")
    p.add_argument("--learning-rate", "--lr", dest="learning_rate", type=float,
                   help=f"Adam learning rate (default: {config.DEFAULT_LEARNING_RATE}).")
    p.add_argument("--batch-size", type=int, help=f"Pairs per step (default: {config.DEFAULT_BATCH_SIZE}).")
    p.add_argument("--seed", type=int, help=f"Random seed (default: {config.DEFAULT_SEED}).")
    p.add_argument("--channels", type=int, help=f"Feature channels C (default: {config.DEFAULT_CHANNELS}).")
    p.add_argument("--groups", type=int, help=f"Split-FC groups K (default: {config.DEFAULT_GROUPS}).")
    p.add_argument("--group-length", type=int, help="Split-FC group length L (default: 2).")
    p.add_argument("--basis", type=int, help=f"Basis lattices N (default: {config.DEFAULT_BASIS_COUNT}).")
    p.add_argument("--bins", type=int, help=f"Lattice vertices M per axis (default: {config.DEFAULT_LATTICE_BINS}).")
    p.add_argument("--layer-widths", type=_widths, help="Hidden branch widths, e.g. 32-64-128-64-32.")
    p.add_argument("--working-size", type=int,
                   help=f"Working image side used in training (default: {config.DEFAULT_TRAIN_RESOLUTION}).")
    p.add_argument("--branch-mode", choices=config.BRANCH_MODES, help="Nibble branches or one byte branch.")
    p.add_argument("--input-channels", type=int, choices=(1, 3), help="Colour-aware (3) or per-channel (1) branches.")
    p.add_argument("--first-kernel", type=int, choices=(1, 3), help="Spatial size of the first branch layer.")
    p.add_argument("--head-mode", choices=config.HEAD_MODES, help="Split FC or one full FC.")
    p.set_defaults(handler=cmd_train)

    p = commands.add_parser("bake", help="Convert a checkpoint into a LUT bundle.")
    _add_common(p)
    p.add_argument("--checkpoint", "-c", help="Model checkpoint to bake.")
    p.add_argument("--out", "-o", help="Bundle path (default: model.icelut).")
    p.add_argument("--delta-s", type=float, help=f"Sampling interval (default: {config.DEFAULT_DELTA_S}).")
    p.add_argument("--offset", type=float, help=f"Offset R (default: {config.DEFAULT_OFFSET_R}).")
    p.add_argument("--json", action="store_true", help="Print the storage report as JSON.")
    p.set_defaults(handler=cmd_bake)

    p = commands.add_parser("retouch", help="Retouch a directory of images with a bundle.")
    _add_common(p)
    p.add_argument("--bundle", "-b", help="LUT bundle.")
    p.add_argument("--input-dir", help="Directory of images to retouch.")
    p.add_argument("--out-dir", help="Directory for retouched images.")
    p.add_argument("--target-dir", help="Optional targets; enables metrics.")
    p.add_argument("--metrics-csv", help="Metrics CSV (default: <out-dir>/metrics.csv).")
    p.add_argument("--working-size", type=int, help=f"Working image side (default: {config.DEFAULT_WORKING_SIZE}).")
    p.add_argument("--threads", type=int, help=f"Images processed in parallel (capped by {config.THREADS_ENV_VAR}).")
    p.set_defaults(handler=cmd_retouch)

    p = commands.add_parser("verify", help="Compare LUT inference against the network.")
    _add_common(p)
    p.add_argument("--checkpoint", "-c", help="Model checkpoint.")
    p.add_argument("--bundle", "-b", help="Bundle baked from the checkpoint.")
    p.add_argument("--images", help="Directory of images to check.")
    p.add_argument("--working-size", type=int, help=f"Working image side (default: {config.DEFAULT_WORKING_SIZE}).")
    p.add_argument("--json", action="store_true", help="Print the report as JSON.")
    p.set_defaults(handler=cmd_verify)

    p = commands.add_parser("bench", help="Time LUT inference stages.")
    _add_common(p)
    p.add_argument("--bundle", "-b", help="LUT bundle.")
    p.add_argument("--images", help="Directory of benchmark images.")
    p.add_argument("--repeats", type=int, help=f"Timed repeats, >= 3 (default: {config.DEFAULT_BENCH_REPEATS}).")
    p.add_argument("--warmup", type=int, help=f"Untimed warmup passes (default: {config.DEFAULT_BENCH_WARMUP}).")
    p.add_argument("--compare-checkpoint", help="Also time the network weight stage of this checkpoint.")
    p.add_argument("--threads", type=int, help="Interpolation threads (default: 1).")
    p.add_argument("--working-size", type=int, help=f"Working image side (default: {config.DEFAULT_WORKING_SIZE}).")
    p.set_defaults(handler=cmd_bench)

    p = commands.add_parser("metrics", help="Compare predictions with targets.")
    _add_common(p)
    p.add_argument("--pred-dir", help="Directory of predicted images.")
    p.add_argument("--target-dir", help="Directory of identically named targets.")
    p.add_argument("--csv", help="Per-image metrics CSV.")
    p.set_defaults(handler=cmd_metrics)

    p = commands.add_parser("synth", help="Write a synthetic paired dataset.")
    _add_common(p)
    p.add_argument("--out-dir", "-o", help="Dataset root (input/ and target/ are created).")
    p.add_argument("--count", type=int, help="Number of pairs (default: 50).")
    p.add_argument("--size", type=int, help="Image side in pixels (default: 64).")
    p.add_argument("--transform", help="gamma:<value>, channel-mix, warm-tone, gamma-mix or swap.")
    p.add_argument("--seed", type=int, help=f"Random seed (default: {config.DEFAULT_SEED}).")
    p.set_defaults(handler=cmd_synth)
    return parser


def parse_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    args = build_parser().parse_args(argv)
    if args.silent:
        args.verbose = False
    return args


def _configure_logging(args: argparse.Namespace) -> None:
    level = logging.INFO
    if args.verbose:
        level = logging.DEBUG
    elif args.silent:
        level = logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s: %(message)s", stream=sys.stderr, force=True)


def _require(value: Optional[str], flag: str) -> str:
    if not value:
        raise ConfigError(f"{flag} is required (as a flag or in the run config).")
    return value


def _load_model(path: str) -> TrainableModel:
    try:
        return load_checkpoint(path)
    except IoFailure as e:
        raise CheckpointError(str(e)) from e


def _load_bundle(path: str) -> LutBundle:
    try:
        return import_bundle(path)
    except IoFailure as e:
        raise BundleError(str(e)) from e


def _say(args: argparse.Namespace, text: str) -> None:
    if not args.silent:
        print(text.rstrip("\n"))


# --- Commands ---


def cmd_train(args: argparse.Namespace, run_config: Optional[RunConfig]) -> int:
    section = merge_overrides(TrainSection, run_config, "train", args)
    model_config = section.model_config()
    train_config = section.train_config()
    pairs = dataset.load_pairs(
        _require(section.input_dir, "--input-dir"), _require(section.target_dir, "--target-dir")
    )
    result = train([(p.source, p.target) for p in pairs], model_config, train_config)

    ensure_parent_dir(section.out)
    save_checkpoint(result.model, section.out)
    loss_csv = section.loss_csv or os.path.splitext(section.out)[0] + "_loss.csv"
    write_loss_history(result.loss_history, loss_csv)
    _say(args, reports.render_training_summary(result.loss_history, len(pairs)))
    _say(args, f"Checkpoint written to '{section.out}' (sha256 {sha256_file(section.out)}), loss history to '{loss_csv}'.")
    return config.EXIT_OK


def cmd_bake(args: argparse.Namespace, run_config: Optional[RunConfig]) -> int:
    section = merge_overrides(BakeSection, run_config, "bake", args)
    quant = section.quant()
    model = _load_model(_require(section.checkpoint, "--checkpoint"))
    try:
        bundle = bake(model, quant)
    except (UnsupportedGroupLength, UnsupportedVariant) as e:
        raise ConfigError(str(e)) from e
    ensure_parent_dir(section.out)
    size = export_bundle(bundle, section.out)

    storage = bundle_storage(bundle)
    if args.json:
        print(json.dumps(storage.to_dict(), indent=2))
    else:
        print(reports.render_storage_report(bundle, storage).rstrip("\n"))
    _say(args, f"Bundle written to '{section.out}' ({size:,} bytes, sha256 {sha256_file(section.out)}).")
    return config.EXIT_OK


def _retouch_one(
    bundle: LutBundle, section: RetouchSection, name: str
) -> Optional[Tuple[str, ImageU8]]:
    src = os.path.join(_require(section.input_dir, "--input-dir"), name)
    try:
        img = load_image(src)
        out = engine.retouch(bundle, img, working_size=section.working_size, threads=1)
        save_image(out, os.path.join(_require(section.out_dir, "--out-dir"), name))
        return name, out
    except (ImageError, IoFailure) as e:
        logger.warning("Skipping '%s': %s", name, e)
        return None


def cmd_retouch(args: argparse.Namespace, run_config: Optional[RunConfig]) -> int:
    section = merge_overrides(RetouchSection, run_config, "retouch", args)
    if section.working_size < 1:
        raise ConfigError(f"--working-size must be >= 1, got {section.working_size}.")
    bundle = _load_bundle(_require(section.bundle, "--bundle"))
    input_dir = _require(section.input_dir, "--input-dir")
    out_dir = _require(section.out_dir, "--out-dir")
    if not os.path.isdir(input_dir):
        raise DatasetError(f"Input directory '{input_dir}' does not exist.")
    names = list_images(input_dir)
    if not names:
        raise EmptyDataset(f"No images found in '{input_dir}'.")
    os.makedirs(out_dir, exist_ok=True)

    workers = resolve_threads(section.threads)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(lambda n: _retouch_one(bundle, section, n), names))
    done = [r for r in results if r is not None]
    if not done:
        raise DatasetError(f"None of the {len(names)} image(s) in '{input_dir}' could be retouched.")
    _say(args, f"Retouched {len(done)} of {len(names)} image(s) into '{out_dir}'.")

    if section.target_dir:
        rows = []
        for name, out in done:
            target_path = os.path.join(section.target_dir, name)
            if not os.path.isfile(target_path):
                logger.warning("No target for '%s'; skipping metrics.", name)
                continue
            try:
                rows.append((name, metrics.evaluate(out, load_image(target_path))))
            except LutRetouchError as e:
                logger.warning("Cannot score '%s': %s", name, e)
        if rows:
            csv_path = section.metrics_csv or os.path.join(out_dir, "metrics.csv")
            metrics.write_metrics_csv(rows, csv_path)
            summary = metrics.mean_report([report for _, report in rows]).to_dict()
            summary["count"] = len(rows)
            print(json.dumps(summary, indent=2))
    return config.EXIT_OK


def cmd_verify(args: argparse.Namespace, run_config: Optional[RunConfig]) -> int:
    section = merge_overrides(VerifySection, run_config, "verify", args)
    model = _load_model(_require(section.checkpoint, "--checkpoint"))
    bundle = _load_bundle(_require(section.bundle, "--bundle"))
    image_dir = _require(section.images, "--images")
    try:
        images = [img for _, img in dataset.load_images(image_dir)]
    except EmptyDataset as e:
        raise ConfigError(f"verify needs at least one image: {e}") from e
    try:
        report = engine.verify_equivalence(model, bundle, images, section.working_size)
    except DimensionMismatch as e:
        print(f"\nVerification failed: {e}", file=sys.stderr)
        return config.EXIT_VERIFY

    if args.json:
        print(report.to_json())
    else:
        print(reports.render_equivalence_report(report, verbose=args.verbose).rstrip("\n"))
    return config.EXIT_OK if report.within_bounds else config.EXIT_VERIFY


def cmd_bench(args: argparse.Namespace, run_config: Optional[RunConfig]) -> int:
    section = merge_overrides(BenchSection, run_config, "bench", args)
    if section.repeats < 3:
        raise PreconditionError(f"--repeats must be >= 3, got {section.repeats}.")
    bundle = _load_bundle(_require(section.bundle, "--bundle"))
    images = [img for _, img in dataset.load_images(_require(section.images, "--images"))]
    model = _load_model(section.compare_checkpoint) if section.compare_checkpoint else None
    try:
        report = engine.bench(
            bundle,
            images,
            repeats=section.repeats,
            model=model,
            threads=section.threads,
            warmup=section.warmup,
            working_size=section.working_size,
        )
    except DimensionMismatch as e:
        raise ConfigError(str(e)) from e
    print(report.to_json())
    # stdout stays pure JSON; the readable summary goes to stderr.
    if not args.silent:
        print(reports.render_bench_report(report).rstrip("\n"), file=sys.stderr)
    return config.EXIT_OK


def cmd_metrics(args: argparse.Namespace, run_config: Optional[RunConfig]) -> int:
    section = merge_overrides(MetricsSection, run_config, "metrics", args)
    pairs = dataset.load_pairs(
        _require(section.pred_dir, "--pred-dir"), _require(section.target_dir, "--target-dir")
    )
    rows = [(p.name, metrics.evaluate(p.source, p.target)) for p in pairs]
    if section.csv:
        metrics.write_metrics_csv(rows, section.csv)
    summary = metrics.mean_report([report for _, report in rows]).to_dict()
    summary["count"] = len(rows)
    print(json.dumps(summary, indent=2))
    return config.EXIT_OK


def cmd_synth(args: argparse.Namespace, run_config: Optional[RunConfig]) -> int:
    section = merge_overrides(SynthSection, run_config, "synth", args)
    result = write_synth_dataset(
        _require(section.out_dir, "--out-dir"),
        section.count,
        section.size,
        section.transform,
        section.seed,
    )
    _say(args, f"Wrote {len(result.names)} pair(s) to '{result.input_dir}' and '{result.target_dir}'.")
    return config.EXIT_OK


def main(argv: Optional[List[str]] = None) -> None:
    """
    Main function for the Command Line Interface.

    Parses arguments, loads the optional run config, dispatches to the
    subcommand and maps failures onto stable exit codes:
    0 ok, 2 config, 3 dataset, 4 checkpoint, 5 bundle, 6 verification,
    130 interrupted, 1 anything else.
    """
    args = parse_args(argv)
    _configure_logging(args)
    exit_code = config.EXIT_OK

    try:
        run_config = load_run_config(args.config) if args.config else None
        exit_code = args.handler(args, run_config)
    except SystemExit as e:
        exit_code = e.code if isinstance(e.code, int) else config.EXIT_UNEXPECTED
    except KeyboardInterrupt:
        print("\nOperation cancelled by user.", file=sys.stderr)
        exit_code = config.EXIT_INTERRUPTED
    except (ConfigError, PreconditionError) as e:
        print(f"\nConfiguration Error: {e}", file=sys.stderr)
        exit_code = config.EXIT_CONFIG
    except DatasetError as e:
        print(f"\nDataset Error: {e}", file=sys.stderr)
        exit_code = config.EXIT_DATASET
    except CheckpointError as e:
        print(f"\nCheckpoint Error: {e}", file=sys.stderr)
        exit_code = config.EXIT_CHECKPOINT
    except BundleError as e:
        print(f"\nBundle Error: {e}", file=sys.stderr)
        exit_code = config.EXIT_BUNDLE
    except (LutRetouchError, OSError) as e:
        print(f"\nError: {e}", file=sys.stderr)
        if args.verbose:
            traceback.print_exc(file=sys.stderr)
        exit_code = config.EXIT_UNEXPECTED
    except Exception as e:
        print("\n--- Unexpected Error ---", file=sys.stderr)
        print(f"An unhandled error occurred: {e}", file=sys.stderr)
        print("\n--- Traceback ---", file=sys.stderr)
        traceback.print_exc(file=sys.stderr)
        print("--- End Traceback ---", file=sys.stderr)
        exit_code = config.EXIT_UNEXPECTED
    finally:
        if not args.silent:
            if exit_code == config.EXIT_OK:
                print("Finished successfully.", file=sys.stderr)
            else:
                print(f"Finished with errors (exit code {exit_code}).", file=sys.stderr)
        sys.exit(exit_code)


if __name__ == "__main__":
    main()
