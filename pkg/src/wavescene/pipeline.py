"""Dataset handling, training/evaluation loops, and report emission.

A dataset is a directory of class-named subdirectories of images.  All
images are transcoded to ``.wcs`` archives once, up front, so evaluation
timing measures partial decode plus inference and nothing else.  The
split -> train -> evaluate chain is a pure function of (data, config,
seed); only the wall-clock fields of the report vary between runs.

Examples are decoded into memory as whole-split arrays, which is the
right trade for the fixture scale this pipeline targets (hundreds to a
few thousand small images).
"""

from __future__ import annotations

import io
import json
import os
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .codestream import decode_bytes, encode_image, write_wcs
from .config import load_config, parse_config, save_config
from .errors import ConfigError, DataError
from .imageio import read_image
from .model import ModelConfig, SceneModel, build_model, train_step
from .nn import Adam
from .wavelet import level_stacks, reconstruct

IMAGE_EXTENSIONS = (".png", ".ppm", ".pgm", ".pnm")
SPLIT_NAMES = ("train", "val", "test")
DEFAULT_FRACTIONS = (0.8, 0.1, 0.1)


@dataclass(frozen=True)
class SplitIndices:
    """Disjoint, exhaustive index sets over a manifest."""

    train: tuple[int, ...]
    val: tuple[int, ...]
    test: tuple[int, ...]

    def named(self, name: str) -> tuple[int, ...]:
        if name not in SPLIT_NAMES:
            raise DataError(f"split must be one of {SPLIT_NAMES}, got {name!r}")
        return getattr(self, name)


@dataclass(frozen=True)
class Dataset:
    """Scanned manifest plus the split assignment.

    ``archives`` holds one ``.wcs`` path per manifest entry once
    :func:`transcode_dataset` has run.
    """

    root: str
    paths: tuple[str, ...]
    labels: tuple[int, ...]
    class_names: tuple[str, ...]
    split: SplitIndices
    archives: tuple[str, ...] | None = None


def scan_dataset(root) -> tuple[list[tuple[str, str]], tuple[str, ...]]:
    """List (path, class_name) pairs from class-named subdirectories."""
    root = str(root)
    if not os.path.isdir(root):
        raise DataError(f"{root}: not a directory")
    class_names = sorted(
        entry
        for entry in os.listdir(root)
        if os.path.isdir(os.path.join(root, entry)) and not entry.startswith(".")
    )
    if not class_names:
        raise DataError(f"{root}: no class subdirectories")
    manifest = []
    for name in class_names:
        class_dir = os.path.join(root, name)
        files = sorted(
            f for f in os.listdir(class_dir) if f.lower().endswith(IMAGE_EXTENSIONS)
        )
        if not files:
            raise DataError(f"{class_dir}: class directory contains no images")
        manifest.extend((os.path.join(class_dir, f), name) for f in files)
    return manifest, tuple(class_names)


def split_indices(
    n: int, fractions: tuple[float, float, float] = DEFAULT_FRACTIONS, seed: int = 0
) -> SplitIndices:
    """Shuffled train/val/test index split with rounded boundaries."""
    if len(fractions) != 3 or any(f < 0 for f in fractions):
        raise DataError(f"fractions must be three non-negative numbers, got {fractions}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise DataError(f"fractions must sum to 1, got {fractions}")
    perm = np.random.default_rng(seed).permutation(n)
    n_train = round(n * fractions[0])
    n_trainval = round(n * (fractions[0] + fractions[1]))
    return SplitIndices(
        train=tuple(int(i) for i in perm[:n_train]),
        val=tuple(int(i) for i in perm[n_train:n_trainval]),
        test=tuple(int(i) for i in perm[n_trainval:]),
    )


def split_dataset(
    manifest: list[tuple[str, str]],
    class_names: tuple[str, ...],
    fractions: tuple[float, float, float] = DEFAULT_FRACTIONS,
    seed: int = 0,
    root: str = "",
) -> Dataset:
    """Assign manifest entries to train/val/test, reproducibly from seed."""
    if not manifest:
        raise DataError("empty manifest")
    index = {name: i for i, name in enumerate(class_names)}
    labels = tuple(index[c] for _, c in manifest)
    return Dataset(
        root=root,
        paths=tuple(p for p, _ in manifest),
        labels=labels,
        class_names=tuple(class_names),
        split=split_indices(len(manifest), fractions, seed),
    )


def load_dataset(
    root, fractions: tuple[float, float, float] = DEFAULT_FRACTIONS, seed: int = 0
) -> Dataset:
    """Scan and split a class-per-directory image tree."""
    manifest, class_names = scan_dataset(root)
    return split_dataset(manifest, class_names, fractions, seed, root=str(root))


def transcode_dataset(
    dataset: Dataset, wcs_dir, levels: int, block_size: int = 64
) -> Dataset:
    """Encode every image to a ``.wcs`` archive; returns the dataset with
    archive paths attached.  Existing archives are rewritten."""
    wcs_dir = str(wcs_dir)
    os.makedirs(wcs_dir, exist_ok=True)
    archives = []
    for i, path in enumerate(dataset.paths):
        stem = os.path.splitext(os.path.basename(path))[0]
        out = os.path.join(wcs_dir, f"{i:05d}_{stem}.wcs")
        write_wcs(encode_image(read_image(path), levels=levels, block_size=block_size), out)
        archives.append(out)
    return replace(dataset, archives=tuple(archives))


def _require_archives(dataset: Dataset) -> tuple[str, ...]:
    if dataset.archives is None:
        raise DataError("dataset has no .wcs archives; run transcode_dataset first")
    return dataset.archives


def _decode_input(blob: bytes, cfg: ModelConfig) -> tuple[np.ndarray, int]:
    """Scenario input array from a codestream, touching only the bytes the
    scenario's input level requires.  Returns (array, bytes_read)."""
    result, nread = decode_bytes(blob, cfg.input_level)
    if cfg.input_level == 0:
        return result.data.astype(np.float64) / cfg.coeff_scale, nread
    stack = level_stacks(result)[cfg.input_level]
    return stack.astype(np.float64) / cfg.coeff_scale, nread


def _decode_training_example(
    blob: bytes, cfg: ModelConfig
) -> tuple[np.ndarray, dict[int, np.ndarray]]:
    """Input plus supervision targets; training may decode below the input
    level, inference never does."""
    if cfg.m == 0:
        x, _ = _decode_input(blob, cfg)
        return x, {}
    supervised = cfg.emitted_levels if cfg.supervise_all_levels else cfg.emitted_levels[-1:]
    pyramid, _ = decode_bytes(blob, max(min(supervised), 1))
    stacks = level_stacks(pyramid)
    x = stacks[cfg.input_level].astype(np.float64) / cfg.coeff_scale
    targets = {}
    for level in supervised:
        if level == 0:
            image = reconstruct(pyramid, 0)
            targets[0] = image.data.astype(np.float64) / cfg.coeff_scale
        else:
            targets[level] = stacks[level].astype(np.float64) / cfg.coeff_scale
    return x, targets


def _load_split_arrays(
    dataset: Dataset, indices, cfg: ModelConfig, with_targets: bool
):
    """Stack one split's decoded inputs (and targets) into batch arrays."""
    archives = _require_archives(dataset)
    xs, target_lists = [], {}
    for i in indices:
        with open(archives[i], "rb") as fh:
            blob = fh.read()
        if with_targets:
            x, targets = _decode_training_example(blob, cfg)
            for level, arr in targets.items():
                target_lists.setdefault(level, []).append(arr)
        else:
            x, _ = _decode_input(blob, cfg)
        xs.append(x)
    x_all = np.stack(xs)
    t_all = {level: np.stack(arrs) for level, arrs in target_lists.items()}
    y_all = np.array([dataset.labels[i] for i in indices], dtype=np.int64)
    return x_all, t_all, y_all


def _one_hot(labels: np.ndarray, num_classes: int) -> np.ndarray:
    out = np.zeros((len(labels), num_classes))
    out[np.arange(len(labels)), labels] = 1.0
    return out


def _batched_predict(model: SceneModel, x: np.ndarray, batch_size: int = 64) -> np.ndarray:
    preds = [model.predict(x[s : s + batch_size]) for s in range(0, len(x), batch_size)]
    return np.concatenate(preds)


@dataclass
class TrainResult:
    model: SceneModel
    log: list[dict] = field(default_factory=list)
    train_s: float = 0.0
    best_epoch: int = 0
    best_val_accuracy: float = 0.0


def train(
    dataset: Dataset,
    config: ModelConfig,
    epochs: int = 30,
    batch_size: int = 32,
    learning_rate: float | None = None,
    seed: int | None = None,
    log_stream=None,
) -> TrainResult:
    """Train a model on the dataset's train split.

    Logs joint and component losses plus validation accuracy per epoch and
    keeps the best-validation-accuracy parameters.  Every random choice
    (init, shuffling, dropout) derives from the seed, so two runs with the
    same inputs produce bit-identical logs.
    """
    config.validate()
    if epochs < 1 or batch_size < 1:
        raise ConfigError("epochs and batch_size must be >= 1")
    seed = config.seed if seed is None else seed
    lr = config.learning_rate if learning_rate is None else learning_rate
    if not dataset.split.train or not dataset.split.val:
        raise DataError("train and val splits must be non-empty")

    x_train, t_train, y_train = _load_split_arrays(
        dataset, dataset.split.train, config, with_targets=True
    )
    x_val, _, y_val = _load_split_arrays(dataset, dataset.split.val, config, with_targets=False)

    model = build_model(replace(config, seed=seed))
    optimizer = Adam(model.params(), lr=lr)
    rng = np.random.default_rng([seed, len(dataset.paths)])

    n = len(x_train)
    result = TrainResult(model=model)
    best_state = {k: v.copy() for k, v in model.state_dict().items()}
    started = time.monotonic()
    for epoch in range(1, epochs + 1):
        order = rng.permutation(n)
        sums = np.zeros(3)
        for s in range(0, n, batch_size):
            batch = order[s : s + batch_size]
            targets = {level: arr[batch] for level, arr in t_train.items()}
            labels = _one_hot(y_train[batch], config.num_classes)
            step = train_step(model, optimizer, x_train[batch], targets, labels, rng)
            sums += np.array([step.total, step.classification, step.approximation]) * len(batch)
        means = sums / n
        val_accuracy = float(np.mean(_batched_predict(model, x_val) == y_val))
        entry = {
            "epoch": epoch,
            "total": float(means[0]),
            "classification": float(means[1]),
            "approximation": float(means[2]),
            "val_accuracy": val_accuracy,
        }
        result.log.append(entry)
        if log_stream is not None:
            print(
                f"epoch {epoch:3d}  loss {entry['total']:.4f} "
                f"(ce {entry['classification']:.4f} + approx {entry['approximation']:.4f})  "
                f"val acc {100 * val_accuracy:.1f}%",
                file=log_stream,
            )
        if val_accuracy > result.best_val_accuracy or result.best_epoch == 0:
            result.best_val_accuracy = val_accuracy
            result.best_epoch = epoch
            best_state = {k: v.copy() for k, v in model.state_dict().items()}
    model.load_state_dict(best_state)
    result.train_s = time.monotonic() - started
    return result


@dataclass(frozen=True)
class MetricsReport:
    """Evaluation result: accuracy, approximation error, and phase times.

    ``rmse`` maps "band{b}/{LL|LH|HL|HH|image}" to the root-mean-square
    error between approximated and decoded values, in raw coefficient
    units, aggregated over the evaluated split and all supervised levels.
    ``test_s`` includes the partial-decode time (``decode_s``) spent on
    the evaluated split.
    """

    method: str
    split: str
    accuracy: float
    correct: int
    total: int
    per_class: dict
    rmse: dict
    decoded_bytes: int
    decode_s: float
    train_s: float
    val_s: float
    test_s: float
    config: dict

    TIMING_FIELDS = ("decode_s", "train_s", "val_s", "test_s")

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "split": self.split,
            "accuracy": self.accuracy,
            "correct": self.correct,
            "total": self.total,
            "per_class": self.per_class,
            "rmse": self.rmse,
            "decoded_bytes": self.decoded_bytes,
            "decode_s": self.decode_s,
            "train_s": self.train_s,
            "val_s": self.val_s,
            "test_s": self.test_s,
            "config": self.config,
        }

    @classmethod
    def from_dict(cls, values: dict) -> "MetricsReport":
        return cls(**values)

    def without_timing(self) -> dict:
        out = self.to_dict()
        for key in self.TIMING_FIELDS:
            del out[key]
        return out


def _rmse_accumulate(
    accum: dict, approx: dict[int, np.ndarray], truth: dict[int, np.ndarray], bands: int
) -> None:
    """Add squared errors per (band, sub-band type) in raw units."""
    from .wavelet import SUBBAND_NAMES

    for level, a in approx.items():
        t = truth[level]
        se = (a - t) ** 2
        if level == 0:
            for b in range(bands):
                key = f"band{b}/image"
                sse, cnt = accum.get(key, (0.0, 0))
                accum[key] = (sse + float(se[:, b].sum()), cnt + se[:, b].size)
        else:
            for b in range(bands):
                for s, name in enumerate(SUBBAND_NAMES):
                    key = f"band{b}/{name}"
                    c = 4 * b + s
                    sse, cnt = accum.get(key, (0.0, 0))
                    accum[key] = (sse + float(se[:, c].sum()), cnt + se[:, c].size)


def _timed_split_pass(
    model: SceneModel, dataset: Dataset, indices, batch_size: int
):
    """Decode + forward one split, timing both phases.

    The first item is decoded and forwarded once untimed to warm caches
    and code paths, then the clock covers every item including the first.
    Returns (predictions, approximations per batch, decode_s, total_s,
    bytes_read).
    """
    archives = _require_archives(dataset)
    cfg = model.config
    blobs = []
    for i in indices:
        with open(archives[i], "rb") as fh:
            blobs.append(fh.read())

    warm, _ = _decode_input(blobs[0], cfg)
    model.forward(warm[None], train=False)

    decode_s = 0.0
    started = time.monotonic()
    xs = []
    nbytes = 0
    for blob in blobs:
        x, nread = _decode_input(blob, cfg)
        xs.append(x)
        nbytes += nread
    decode_s = time.monotonic() - started
    x_all = np.stack(xs)
    preds, approx_batches = [], []
    for s in range(0, len(x_all), batch_size):
        approx, logits = model.forward(x_all[s : s + batch_size], train=False)
        preds.append(np.argmax(logits, axis=1))
        approx_batches.append(approx)
    total_s = time.monotonic() - started
    return np.concatenate(preds), approx_batches, decode_s, total_s, nbytes


def evaluate(
    model: SceneModel,
    dataset: Dataset,
    split: str = "test",
    train_s: float = 0.0,
    batch_size: int = 64,
) -> MetricsReport:
    """Measure accuracy, per-band RMSE, and phase wall-times on a split.

    Decode work during the timed passes touches only the scenario's input
    level; ground truth for RMSE is decoded afterwards, outside the clock.
    Each phase runs one discarded warm-up before timing starts.
    """
    cfg = model.config
    indices = dataset.split.named(split)
    if not indices:
        raise DataError(f"split {split!r} is empty")

    val_s = 0.0
    if dataset.split.val:
        _, _, _, val_s, _ = _timed_split_pass(model, dataset, dataset.split.val, batch_size)
    preds, approx_batches, decode_s, test_s, nbytes = _timed_split_pass(
        model, dataset, indices, batch_size
    )

    labels = np.array([dataset.labels[i] for i in indices], dtype=np.int64)
    correct = int(np.sum(preds == labels))
    per_class = {}
    for c, name in enumerate(dataset.class_names):
        mask = labels == c
        c_total = int(mask.sum())
        c_correct = int(np.sum(preds[mask] == c))
        per_class[name] = {
            "correct": c_correct,
            "total": c_total,
            "accuracy": 100.0 * c_correct / c_total if c_total else 0.0,
        }

    rmse_accum: dict[str, tuple[float, int]] = {}
    if cfg.m > 0:
        archives = _require_archives(dataset)
        pos = 0
        for approx in approx_batches:
            nb = len(next(iter(approx.values())))
            truth_lists: dict[int, list] = {}
            for i in indices[pos : pos + nb]:
                with open(archives[i], "rb") as fh:
                    _, targets = _decode_training_example(fh.read(), cfg)
                for level, arr in targets.items():
                    truth_lists.setdefault(level, []).append(arr)
            truth = {lvl: np.stack(arrs) for lvl, arrs in truth_lists.items()}
            scaled = {
                lvl: arr * cfg.coeff_scale for lvl, arr in approx.items() if lvl in truth
            }
            truth = {lvl: arr * cfg.coeff_scale for lvl, arr in truth.items()}
            _rmse_accumulate(rmse_accum, scaled, truth, cfg.bands)
            pos += nb
    rmse = {
        key: float(np.sqrt(sse / cnt)) for key, (sse, cnt) in sorted(rmse_accum.items())
    }

    return MetricsReport(
        method=cfg.scenario,
        split=split,
        accuracy=100.0 * correct / len(indices),
        correct=correct,
        total=len(indices),
        per_class=per_class,
        rmse=rmse,
        decoded_bytes=nbytes,
        decode_s=decode_s,
        train_s=train_s,
        val_s=val_s,
        test_s=test_s,
        config=cfg.to_dict(),
    )


def _table_rows(reports) -> str:
    header = f"{'method':<14}{'accuracy':>10}{'train_s':>12}{'val_s':>10}{'test_s':>10}"
    lines = [header, "-" * len(header)]
    for r in reports:
        lines.append(
            f"{r.method:<14}{r.accuracy:>9.2f}%{r.train_s:>12.3f}{r.val_s:>10.3f}{r.test_s:>10.3f}"
        )
    return "\n".join(lines) + "\n"


def emit_report(report, fmt: str = "text-table") -> bytes:
    """Render one report (or a sequence, one row each) to bytes.

    ``json`` round-trips through :meth:`MetricsReport.from_dict`; ``csv``
    uses the fixed header ``method,accuracy,train_s,val_s,test_s``;
    ``text-table`` prints aligned accuracy/time columns.
    """
    reports = [report] if isinstance(report, MetricsReport) else list(report)
    if fmt == "json":
        payload = [r.to_dict() for r in reports]
        doc = payload[0] if isinstance(report, MetricsReport) else payload
        return (json.dumps(doc, indent=2) + "\n").encode()
    if fmt == "csv":
        out = io.StringIO()
        out.write("method,accuracy,train_s,val_s,test_s\r\n")
        for r in reports:
            out.write(
                f"{r.method},{r.accuracy:.4f},{r.train_s:.6f},{r.val_s:.6f},{r.test_s:.6f}\r\n"
            )
        return out.getvalue().encode()
    if fmt == "text-table":
        return _table_rows(reports).encode()
    raise ConfigError(f"unknown report format {fmt!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a full split/train/evaluate run needs, file-loadable."""

    dataset: str
    work_dir: str = ""
    scenario: str = "minimal"
    levels: int = 2
    m: int = 1
    target: str = "subbands"
    epochs: int = 30
    batch_size: int = 32
    learning_rate: float = 1e-3
    seed: int = 0
    block_size: int = 64
    fractions: tuple[float, float, float] = DEFAULT_FRACTIONS
    head_channels: tuple[int, ...] = (64, 192, 384, 256, 256)
    fc_width: int = 1024
    dropout: float = 0.5
    supervise_all_levels: bool = True
    normalize_approx_loss: bool = False
    report_format: str = "text-table"
    report_path: str = ""
    checkpoint_path: str = ""

    def to_dict(self) -> dict:
        out = {}
        for name in self.__dataclass_fields__:
            value = getattr(self, name)
            out[name] = list(value) if isinstance(value, tuple) else value
        return out

    @classmethod
    def from_dict(cls, values: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(values) - known
        if unknown:
            raise ConfigError(f"unknown experiment config keys: {sorted(unknown)}")
        if "dataset" not in values:
            raise ConfigError("experiment config requires a dataset path")
        coerced = dict(values)
        for key in ("fractions", "head_channels"):
            if key in coerced:
                value = coerced[key]
                if not isinstance(value, (list, tuple)):
                    raise ConfigError(f"{key} must be a list")
                coerced[key] = tuple(value)
        return cls(**coerced)


def save_experiment_config(cfg: ExperimentConfig, path) -> None:
    save_config(cfg.to_dict(), path)


def load_experiment_config(path) -> ExperimentConfig:
    return ExperimentConfig.from_dict(load_config(path))


def parse_experiment_config(text: str) -> ExperimentConfig:
    return ExperimentConfig.from_dict(parse_config(text))


def _probe_geometry(dataset: Dataset) -> tuple[int, int, int]:
    image = read_image(dataset.paths[0])
    return image.bands, image.height, image.width


def model_config_for(exp: ExperimentConfig, dataset: Dataset) -> ModelConfig:
    """Instantiate the model configuration against the scanned dataset."""
    bands, height, width = _probe_geometry(dataset)
    return ModelConfig(
        scenario=exp.scenario,
        levels=exp.levels,
        m=exp.m,
        target=exp.target,
        bands=bands,
        image_height=height,
        image_width=width,
        num_classes=len(dataset.class_names),
        head_channels=exp.head_channels,
        fc_width=exp.fc_width,
        dropout=exp.dropout,
        learning_rate=exp.learning_rate,
        supervise_all_levels=exp.supervise_all_levels,
        normalize_approx_loss=exp.normalize_approx_loss,
        seed=exp.seed,
    )


def prepare_dataset(exp: ExperimentConfig) -> Dataset:
    """Scan, split, and transcode the experiment's dataset."""
    dataset = load_dataset(exp.dataset, exp.fractions, exp.seed)
    work_dir = exp.work_dir or os.path.join(str(exp.dataset), ".wcs")
    return transcode_dataset(dataset, work_dir, exp.levels, exp.block_size)


def run_experiment(
    exp: ExperimentConfig, log_stream=None
) -> tuple[TrainResult, MetricsReport]:
    """Full pipeline: split, transcode, train, evaluate the test split."""
    dataset = prepare_dataset(exp)
    cfg = model_config_for(exp, dataset)
    result = train(
        dataset,
        cfg,
        epochs=exp.epochs,
        batch_size=exp.batch_size,
        learning_rate=exp.learning_rate,
        seed=exp.seed,
        log_stream=log_stream,
    )
    report = evaluate(result.model, dataset, "test", train_s=result.train_s)
    return result, report


_BENCH_METHODS = ("1", "2", "full")


def bench(
    exp: ExperimentConfig, methods=_BENCH_METHODS, log_stream=None
) -> list[MetricsReport]:
    """Run the scenario comparison on one dataset.

    Method "1" decodes only the coarsest packet, "2" one more resolution
    level, and "full" is the full-decode baseline; each trains its own
    model on the shared split so the reported rows differ only in scenario.
    """
    dataset = prepare_dataset(exp)
    reports = []
    for method in methods:
        if method == "1":
            variant = replace(exp, scenario="minimal")
        elif method == "2":
            m = exp.m - 1 if exp.m > 0 else 0
            target = exp.target if m > 0 or exp.target == "image" else "subbands"
            variant = replace(exp, scenario="partial", m=m, target=target)
        elif method == "full":
            variant = replace(exp, scenario="full-decode", m=0, target="subbands")
        else:
            raise ConfigError(f"unknown bench method {method!r}")
        cfg = model_config_for(variant, dataset)
        if log_stream is not None:
            print(f"bench: training scenario {cfg.scenario}", file=log_stream)
        result = train(
            dataset,
            cfg,
            epochs=variant.epochs,
            batch_size=variant.batch_size,
            learning_rate=variant.learning_rate,
            seed=variant.seed,
            log_stream=log_stream,
        )
        reports.append(evaluate(result.model, dataset, "test", train_s=result.train_s))
    return reports
