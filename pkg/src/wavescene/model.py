"""Two-part network: sub-band approximation stages plus a classifier head.

The approximation half upsamples a coarse sub-band stack with m
transposed-convolution stages (stride 2, kernel 2, so each stage doubles
the spatial size); every emitted level is returned so the training loss
can supervise it against the decoded sub-bands.  The classifier half is
an AlexNet-like stack of five convolutions with batch norm, ReLU,
dropout, and max pooling after convolutions 1, 2 and 5, followed by two
fully connected layers.  Training minimizes the sum of the
classification cross-entropy and the approximation error.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .config import load_config, save_config
from .errors import ConfigError
from .nn import (
    Adam,
    BatchNorm2d,
    Conv2d,
    Dense,
    Dropout,
    Flatten,
    MaxPool2d,
    ReLU,
    Sequential,
    TransposedConv2d,
    approximation_loss,
    cross_entropy_loss,
    load_checkpoint,
    save_checkpoint,
)

SCENARIOS = ("minimal", "partial", "full-decode", "no-decode")
TARGETS = ("subbands", "image")

# pooling follows convolutions 1, 2 and 5 of the five-layer head
_POOL_AFTER = (0, 1, 4)


@dataclass(frozen=True)
class ModelConfig:
    """Complete description of one model instance.

    ``scenario`` picks the network input: ``minimal`` feeds the sub-band
    stack at level L, ``partial`` the stack at L-1, ``no-decode`` the
    level-L stack straight into the head (m = 0), and ``full-decode`` the
    reconstructed image into the head (m = 0).  ``m`` transposed-conv
    stages approximate finer levels; ``target`` selects whether the final
    stage emits a sub-band stack or the image itself.
    """

    scenario: str = "minimal"
    levels: int = 3
    m: int = 2
    target: str = "subbands"
    bands: int = 3
    image_height: int = 256
    image_width: int = 256
    num_classes: int = 4
    head_channels: tuple[int, ...] = (64, 192, 384, 256, 256)
    fc_width: int = 1024
    dropout: float = 0.5
    learning_rate: float = 1e-3
    coeff_scale: float = 255.0
    supervise_all_levels: bool = True
    normalize_approx_loss: bool = False
    seed: int = 0

    @property
    def input_level(self) -> int:
        if self.scenario == "partial":
            return self.levels - 1
        if self.scenario == "full-decode":
            return 0
        return self.levels

    @property
    def input_channels(self) -> int:
        if self.scenario == "full-decode":
            return self.bands
        return 4 * self.bands

    def level_size(self, level: int) -> tuple[int, int]:
        h, w = self.image_height, self.image_width
        for _ in range(level):
            h = (h + 1) // 2
            w = (w + 1) // 2
        return h, w

    @property
    def emitted_levels(self) -> tuple[int, ...]:
        """Levels produced by the approximation stages, input side first."""
        return tuple(self.input_level - i for i in range(1, self.m + 1))

    def validate(self) -> None:
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"scenario must be one of {SCENARIOS}, got {self.scenario!r}")
        if self.target not in TARGETS:
            raise ConfigError(f"target must be one of {TARGETS}, got {self.target!r}")
        if self.levels < 1:
            raise ConfigError("levels must be >= 1")
        if self.scenario == "partial" and self.levels < 2:
            raise ConfigError("partial decoding needs levels >= 2")
        if self.m < 0 or self.m > self.levels:
            raise ConfigError(f"m must be in [0, levels], got {self.m}")
        if self.scenario in ("full-decode", "no-decode") and self.m != 0:
            raise ConfigError(f"{self.scenario} baseline requires m = 0")
        if self.m > 0:
            if self.target == "image" and self.m != self.input_level:
                raise ConfigError(
                    f"image target needs m == input level ({self.input_level}), got {self.m}"
                )
            if self.target == "subbands" and self.input_level - self.m < 1:
                raise ConfigError(
                    f"sub-band target allows m <= {self.input_level - 1}, got {self.m}"
                )
        if len(self.head_channels) != 5:
            raise ConfigError("head needs exactly five convolution widths")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must be in [0, 1)")
        if self.num_classes < 2:
            raise ConfigError("need at least two classes")
        if self.bands < 1:
            raise ConfigError("bands must be >= 1")
        if self.coeff_scale <= 0:
            raise ConfigError("coeff_scale must be positive")
        # stages double sizes exactly, so every supervised level must have
        # even-doubling dimensions (odd sizes would break the shape chain)
        for step in range(self.m):
            level = self.input_level - step
            coarse = self.level_size(level)
            fine = self.level_size(level - 1)
            if (coarse[0] * 2, coarse[1] * 2) != fine:
                raise ConfigError(
                    f"level {level - 1} size {fine} is not double level {level} "
                    f"size {coarse}; pick dimensions divisible by 2^levels"
                )
        # the head halves the spatial size three times; make sure it fits
        h, w = self.head_input_size()
        for _ in _POOL_AFTER:
            if h < 2 or w < 2:
                raise ConfigError(
                    f"head input {self.head_input_size()} too small for three 2x2 pools"
                )
            h, w = h // 2, w // 2
        if h < 1 or w < 1:
            raise ConfigError("head spatial size collapsed to zero")

    def head_input_size(self) -> tuple[int, int]:
        h, w = self.level_size(self.input_level)
        return h * 2**self.m, w * 2**self.m

    def head_input_channels(self) -> int:
        if self.m == 0:
            return self.input_channels
        if self.target == "image":
            return self.bands
        return 4 * self.bands

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            out[f.name] = list(value) if isinstance(value, tuple) else value
        return out

    @classmethod
    def from_dict(cls, values: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs = dict(values)
        if "head_channels" in kwargs:
            kwargs["head_channels"] = tuple(kwargs["head_channels"])
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg


def save_model_config(cfg: ModelConfig, path) -> None:
    save_config(cfg.to_dict(), path)


def load_model_config(path) -> ModelConfig:
    return ModelConfig.from_dict(load_config(path))


class SceneModel:
    """Instantiated network with explicit forward/backward passes."""

    def __init__(self, config: ModelConfig):
        config.validate()
        self.config = config
        rng = np.random.default_rng(config.seed)
        cfg = config
        self.stages: list[tuple[TransposedConv2d, ReLU]] = []
        in_ch = cfg.input_channels
        for i in range(cfg.m):
            final = i == cfg.m - 1
            out_ch = cfg.bands if (final and cfg.target == "image") else 4 * cfg.bands
            tconv = TransposedConv2d(
                in_ch, out_ch, kernel=2, stride=2, padding=0, rng=rng,
                name=f"approx{i + 1}",
            )
            self.stages.append((tconv, ReLU()))
            in_ch = out_ch
        layers = []
        ch = cfg.head_input_channels()
        for i, width in enumerate(cfg.head_channels):
            layers.append(
                Conv2d(ch, width, kernel=3, stride=1, padding=1, rng=rng,
                       name=f"head_conv{i + 1}")
            )
            layers.append(BatchNorm2d(width, name=f"head_bn{i + 1}"))
            layers.append(ReLU())
            if i in _POOL_AFTER:
                layers.append(MaxPool2d(2, 2))
            layers.append(Dropout(cfg.dropout))
            ch = width
        layers.append(Flatten())
        h, w = cfg.head_input_size()
        for i in _POOL_AFTER:
            h, w = h // 2, w // 2
        layers.append(Dense(ch * h * w, cfg.fc_width, rng=rng, name="head_fc1"))
        layers.append(ReLU())
        layers.append(Dropout(cfg.dropout))
        layers.append(Dense(cfg.fc_width, cfg.num_classes, rng=rng, name="head_fc2"))
        self.head = Sequential(layers)

    def params(self):
        out = []
        for tconv, _ in self.stages:
            out.extend(tconv.params())
        out.extend(self.head.params())
        return out

    def forward(self, x: np.ndarray, train: bool = False, rng=None):
        """Run the whole network.

        Returns (approximations, logits) where approximations maps each
        emitted level (level 0 means the image itself) to its array.
        """
        cfg = self.config
        if x.ndim != 4 or x.shape[1] != cfg.input_channels:
            raise ValueError(
                f"expected (B, {cfg.input_channels}, H, W) input, got {x.shape}"
            )
        approx: dict[int, np.ndarray] = {}
        out = x
        for (tconv, relu), level in zip(self.stages, cfg.emitted_levels):
            out = relu.forward(tconv.forward(out, train=train), train=train)
            approx[level] = out
        logits = self.head.forward(out, train=train, rng=rng)
        return approx, logits

    def backward(self, dapprox: dict[int, np.ndarray], dlogits: np.ndarray):
        """Propagate loss gradients through head and stages."""
        d = self.head.backward(dlogits)
        for (tconv, relu), level in zip(
            reversed(self.stages), reversed(self.config.emitted_levels)
        ):
            if level in dapprox:
                d = d + dapprox[level]
            d = tconv.backward(relu.backward(d))
        return d

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Class indices for a batch; ties resolve to the lowest index."""
        _, logits = self.forward(x, train=False)
        return np.argmax(logits, axis=1)

    def state_dict(self) -> dict[str, np.ndarray]:
        out = {p.name: p.data for p in self.params()}
        for layer in self.head.layers:
            if isinstance(layer, BatchNorm2d):
                prefix = layer.gamma.name.rsplit(".", 1)[0]
                out[f"{prefix}.running_mean"] = layer.running_mean
                out[f"{prefix}.running_var"] = layer.running_var
        return out

    def load_state_dict(self, arrays: dict[str, np.ndarray]) -> None:
        for p in self.params():
            if p.name not in arrays:
                raise ValueError(f"checkpoint missing parameter {p.name!r}")
            if arrays[p.name].shape != p.data.shape:
                raise ValueError(
                    f"shape mismatch for {p.name!r}: checkpoint "
                    f"{arrays[p.name].shape}, model {p.data.shape}"
                )
            p.data[...] = arrays[p.name]
        for layer in self.head.layers:
            if isinstance(layer, BatchNorm2d):
                prefix = layer.gamma.name.rsplit(".", 1)[0]
                layer.running_mean[...] = arrays[f"{prefix}.running_mean"]
                layer.running_var[...] = arrays[f"{prefix}.running_var"]

    def save(self, path) -> None:
        save_checkpoint(path, self.state_dict())

    def load(self, path) -> None:
        self.load_state_dict(load_checkpoint(path))


def build_model(config: ModelConfig) -> SceneModel:
    """Validate the configuration and instantiate the network."""
    return SceneModel(config)


def joint_loss(
    approximations: dict[int, np.ndarray],
    targets: dict[int, np.ndarray],
    logits: np.ndarray,
    labels: np.ndarray,
    normalize_approx: bool = False,
):
    """Total loss = cross-entropy + approximation error, with gradients.

    ``targets`` may supervise any subset of the emitted levels (an empty
    dict turns approximation supervision off).  Returns (total,
    classification, approximation, dapprox, dlogits).
    """
    ce, dlogits = cross_entropy_loss(logits, labels)
    supervised = {lvl: approximations[lvl] for lvl in targets}
    if supervised:
        al, dapprox = approximation_loss(supervised, targets, normalize=normalize_approx)
    else:
        al, dapprox = 0.0, {}
    return ce + al, ce, al, dapprox, dlogits


@dataclass
class TrainStepResult:
    total: float
    classification: float
    approximation: float


def train_step(
    model: SceneModel,
    optimizer: Adam,
    x: np.ndarray,
    targets: dict[int, np.ndarray],
    labels: np.ndarray,
    rng: np.random.Generator,
) -> TrainStepResult:
    """One optimization step on a batch; returns the loss components."""
    approx, logits = model.forward(x, train=True, rng=rng)
    total, ce, al, dapprox, dlogits = joint_loss(
        approx, targets, logits, labels,
        normalize_approx=model.config.normalize_approx_loss,
    )
    optimizer.zero_grad()
    model.backward(dapprox, dlogits)
    optimizer.step()
    return TrainStepResult(total=total, classification=ce, approximation=al)
