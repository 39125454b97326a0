"""Command-line entry point.

Subcommands cover the codec (encode/decode/inspect), the synthetic
fixture generator, and the training/evaluation pipeline.  Reports go to
stdout (or a file via ``--report``); progress logs go to stderr, so
output is pipeline-composable.  Exit codes: 0 success, 1 usage error,
2 bad input data, 3 internal failure.

Heavy imports happen inside the handlers so ``--threads`` can pin the
BLAS/OpenMP pool sizes before numpy loads; timing-sensitive commands
default to one thread to keep measured ratios comparable.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import __version__

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INTERNAL = 3

_THREAD_VARS = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
    "VECLIB_MAXIMUM_THREADS",
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with code 2 on bad flags; remap to the usage contract
    def error(self, message):
        raise UsageError(message)


def _set_threads(n: int) -> None:
    if n < 1:
        raise UsageError("--threads must be >= 1")
    for var in _THREAD_VARS:
        os.environ[var] = str(n)


def _write_product(blob: bytes, path: str | None) -> None:
    if path:
        with open(path, "wb") as fh:
            fh.write(blob)
    else:
        sys.stdout.buffer.write(blob)
        sys.stdout.buffer.flush()


def _log(message: str) -> None:
    print(message, file=sys.stderr)


# ---------------------------------------------------------------- handlers


def cmd_encode(args) -> int:
    from .codestream import encode_image, write_wcs
    from .imageio import read_image

    image = read_image(args.input)
    cs = encode_image(image, levels=args.levels, block_size=args.block_size)
    nbytes = write_wcs(cs, args.output)
    raw = image.data.size * (image.bit_depth // 8)
    _log(
        f"{args.input} -> {args.output}: {raw} raw bytes -> {nbytes} "
        f"({100 * nbytes / raw:.1f}%), {args.levels} levels"
    )
    return EXIT_OK


def cmd_decode(args) -> int:
    import numpy as np

    from .codestream import decode_partial, read_wcs
    from .imageio import write_image
    from .wavelet import SUBBAND_NAMES

    cs = read_wcs(args.input, stop_level=max(args.level, 1))
    result = decode_partial(cs, args.level)
    if args.level == 0:
        write_image(result, args.output)
        _log(f"{args.input} -> {args.output}: full decode {result.height}x{result.width}")
        return EXIT_OK
    arrays = {}
    for b, band in enumerate(result.bands):
        arrays[f"band{b}_LL"] = band.ll
        for level, details in band.details.items():
            for name, arr in zip(SUBBAND_NAMES[1:], details):
                arrays[f"band{b}_level{level}_{name}"] = arr
    arrays["shape"] = np.array([result.height, result.width])
    arrays["levels"] = np.array([result.num_levels, result.min_level])
    arrays["bit_depth"] = np.array([result.bit_depth])
    with open(args.output, "wb") as fh:
        np.savez(fh, **arrays)
    _log(f"{args.input} -> {args.output}: sub-bands down to level {args.level}")
    return EXIT_OK


def cmd_inspect(args) -> int:
    from .codestream import extract_header_features, read_wcs

    cs = read_wcs(args.input)
    features = extract_header_features(cs)
    header = cs.header
    if args.json:
        doc = {
            "height": header.height,
            "width": header.width,
            "bands": header.bands,
            "levels": header.num_levels,
            "bit_depth": header.bit_depth,
            "block_size": header.block_size,
            "total_payload_bytes": features.total_bytes,
            "blocks": [f._asdict() for f in features.blocks],
            "by_level": {
                str(level): agg for level, agg in sorted(features.by_level.items())
            },
            "by_subband": {
                f"level{level}/{name}": agg
                for (level, name), agg in sorted(features.by_subband.items())
            },
        }
        print(json.dumps(doc, indent=2))
        return EXIT_OK
    print(
        f"{args.input}: {header.height}x{header.width}, {header.bands} band(s), "
        f"{header.num_levels} level(s), {header.bit_depth}-bit, block {header.block_size}"
    )
    print(f"{'level':>5} {'band':>4} {'subband':>7} {'y0':>5} {'x0':>5} {'B':>7} {'MB':>3}")
    for f in features.blocks:
        print(f"{f.level:>5} {f.band:>4} {f.subband:>7} {f.y0:>5} {f.x0:>5} {f.b:>7} {f.mb:>3}")
    print(f"total payload bytes: {features.total_bytes}")
    return EXIT_OK


def cmd_synth(args) -> int:
    from .synth import generate_dataset

    manifest = generate_dataset(
        args.out_dir,
        classes=args.classes,
        per_class=args.n,
        size=args.size,
        seed=args.seed,
    )
    _log(f"wrote {len(manifest)} images in {args.classes} classes under {args.out_dir}")
    return EXIT_OK


def _experiment_from_args(args) -> "ExperimentConfig":
    from dataclasses import replace

    from .pipeline import ExperimentConfig, load_experiment_config

    if args.config:
        exp = load_experiment_config(args.config)
    elif args.dataset:
        exp = ExperimentConfig(dataset=args.dataset)
    else:
        raise UsageError("provide --config or --dataset")
    overrides = {}
    for flag, field in (
        ("dataset", "dataset"),
        ("work_dir", "work_dir"),
        ("scenario", "scenario"),
        ("levels", "levels"),
        ("m", "m"),
        ("target", "target"),
        ("epochs", "epochs"),
        ("batch_size", "batch_size"),
        ("lr", "learning_rate"),
        ("seed", "seed"),
        ("block_size", "block_size"),
        ("report_format", "report_format"),
        ("report", "report_path"),
    ):
        value = getattr(args, flag, None)
        if value is not None:
            overrides[field] = value
    return replace(exp, **overrides)


def _emit(report_or_list, fmt: str, path: str) -> None:
    from .pipeline import emit_report

    _write_product(emit_report(report_or_list, fmt), path or None)


def cmd_train(args) -> int:
    from .model import save_model_config

    from .pipeline import run_experiment

    exp = _experiment_from_args(args)
    result, report = run_experiment(exp, log_stream=sys.stderr)
    _log(
        f"best validation accuracy {100 * result.best_val_accuracy:.1f}% "
        f"at epoch {result.best_epoch}"
    )
    if args.checkpoint:
        result.model.save(args.checkpoint)
        _log(f"checkpoint written to {args.checkpoint}")
    if args.model_config:
        save_model_config(result.model.config, args.model_config)
        _log(f"model config written to {args.model_config}")
    _emit(report, exp.report_format, exp.report_path)
    return EXIT_OK


def _load_model(args):
    from .model import build_model, load_model_config

    cfg = load_model_config(args.model_config)
    model = build_model(cfg)
    model.load(args.checkpoint)
    return model


def cmd_evaluate(args) -> int:
    from .pipeline import evaluate, load_dataset, transcode_dataset

    model = _load_model(args)
    cfg = model.config
    dataset = load_dataset(args.dataset, seed=cfg.seed)
    work_dir = args.work_dir or os.path.join(args.dataset, ".wcs")
    dataset = transcode_dataset(dataset, work_dir, cfg.levels, block_size=args.block_size)
    report = evaluate(model, dataset, args.split)
    _emit(report, args.report_format, args.report)
    return EXIT_OK


def cmd_bench(args) -> int:
    from .pipeline import bench

    exp = _experiment_from_args(args)
    methods = ("1", "2", "full") if args.scenario == "all" else (args.scenario,)
    reports = bench(exp, methods=methods, log_stream=sys.stderr)
    _emit(reports, exp.report_format, exp.report_path)
    return EXIT_OK


def cmd_approximate(args) -> int:
    import numpy as np

    from .imageio import write_image
    from .pipeline import _decode_input, _decode_training_example, _rmse_accumulate
    from .wavelet import Image

    model = _load_model(args)
    cfg = model.config
    if cfg.m == 0:
        raise UsageError("the checkpointed model has no approximation stages (m = 0)")
    with open(args.input, "rb") as fh:
        blob = fh.read()
    x, _ = _decode_input(blob, cfg)
    approx, _ = model.forward(x[None], train=False)
    _, truth = _decode_training_example(blob, cfg)

    os.makedirs(args.out_dir, exist_ok=True)
    written = 0
    for level, arr in approx.items():
        scaled = arr[0] * cfg.coeff_scale
        for c in range(scaled.shape[0]):
            if cfg.target == "image" and level == 0:
                name = f"band{c}_image"
            else:
                from .wavelet import SUBBAND_NAMES

                name = f"band{c // 4}_level{level}_{SUBBAND_NAMES[c % 4]}"
            plane = scaled[c]
            lo, hi = plane.min(), plane.max()
            span = hi - lo if hi > lo else 1.0
            normalized = ((plane - lo) / span * 255.0).round().astype(np.uint8)
            write_image(Image(data=normalized[None]), os.path.join(args.out_dir, name + ".png"))
            written += 1

    accum: dict = {}
    scaled_approx = {lvl: arr * cfg.coeff_scale for lvl, arr in approx.items() if lvl in truth}
    scaled_truth = {lvl: arr[None] * cfg.coeff_scale for lvl, arr in truth.items()}
    _rmse_accumulate(accum, scaled_approx, scaled_truth, cfg.bands)
    print(f"{'plane':<14}{'rmse':>10}")
    for key, (sse, cnt) in sorted(accum.items()):
        print(f"{key:<14}{np.sqrt(sse / cnt):>10.3f}")
    _log(f"wrote {written} approximation images under {args.out_dir}")
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser() -> _Parser:
    parser = _Parser(prog="wavescene", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument(
        "--threads",
        type=int,
        default=1,
        help="BLAS/OpenMP thread cap, set before numpy loads (default 1)",
    )
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("encode", help="compress an image into a .wcs codestream")
    p.add_argument("--levels", type=int, default=3, help="decomposition levels")
    p.add_argument("--block-size", type=int, default=64, help="codeblock size (>= 32)")
    p.add_argument("input", help="input image (.png/.ppm/.pgm)")
    p.add_argument("output", help="output .wcs path")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="decode a .wcs prefix to an image or sub-bands")
    p.add_argument(
        "--level",
        type=int,
        default=0,
        help="0 = full image; t >= 1 stops at resolution level t (.npz-style .pyr output)",
    )
    p.add_argument("input", help="input .wcs path")
    p.add_argument("output", help="output image (level 0) or .pyr archive")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("inspect", help="print per-codeblock header features (B, MB)")
    p.add_argument("--json", action="store_true", help="machine-readable output")
    p.add_argument("input", help="input .wcs path")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("synth", help="generate the synthetic texture fixture set")
    p.add_argument("--classes", type=int, default=4, help="number of texture classes")
    p.add_argument("--n", type=int, default=100, help="images per class")
    p.add_argument("--size", type=int, default=64, help="square image size")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("out_dir", help="output dataset directory")
    p.set_defaults(func=cmd_synth)

    def add_experiment_flags(p, with_scenario=True):
        p.add_argument("--config", help="experiment config file")
        p.add_argument("--dataset", help="dataset root of class-named directories")
        p.add_argument("--work-dir", dest="work_dir", help="directory for .wcs archives")
        if with_scenario:
            p.add_argument("--scenario", choices=("minimal", "partial", "full-decode", "no-decode"))
        p.add_argument("--levels", type=int)
        p.add_argument("--m", type=int, help="approximation stages")
        p.add_argument("--target", choices=("subbands", "image"))
        p.add_argument("--epochs", type=int)
        p.add_argument("--batch-size", dest="batch_size", type=int)
        p.add_argument("--lr", type=float, help="learning rate")
        p.add_argument("--seed", type=int)
        p.add_argument("--block-size", dest="block_size", type=int)
        p.add_argument("--report", help="report output path (default stdout)")
        p.add_argument(
            "--report-format",
            dest="report_format",
            choices=("json", "csv", "text-table"),
        )

    p = sub.add_parser("train", help="train a model and emit its evaluation report")
    add_experiment_flags(p)
    p.add_argument("--checkpoint", help="write trained weights here")
    p.add_argument("--model-config", dest="model_config", help="write the model config here")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint on a dataset split")
    p.add_argument("--checkpoint", required=True, help="trained weights")
    p.add_argument("--model-config", dest="model_config", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--work-dir", dest="work_dir")
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.add_argument("--block-size", dest="block_size", type=int, default=64)
    p.add_argument("--report", help="report output path (default stdout)")
    p.add_argument(
        "--report-format", dest="report_format", choices=("json", "csv", "text-table"),
        default="json",
    )
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("bench", help="compare decode scenarios on one dataset")
    add_experiment_flags(p, with_scenario=False)
    p.add_argument(
        "--scenario",
        choices=("1", "2", "full", "all"),
        default="all",
        help="which comparison rows to run",
    )
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser(
        "approximate", help="write a model's sub-band approximations for one codestream"
    )
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--model-config", dest="model_config", required=True)
    p.add_argument("input", help="input .wcs path")
    p.add_argument("out_dir", help="directory for approximation images")
    p.set_defaults(func=cmd_approximate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help/--version print and leave
        return int(exc.code or 0)
    if getattr(args, "func", None) is None:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    try:
        _set_threads(args.threads)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BrokenPipeError:
        return EXIT_OK
    except Exception as exc:
        from .errors import WavesceneError

        if isinstance(exc, (WavesceneError, OSError)):
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_DATA
        import traceback

        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
