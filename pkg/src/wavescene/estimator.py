"""Scikit-learn estimator facade over the compressed-domain classifier.

``X`` is a sequence of codestreams rather than a feature matrix: each
element may be a ``.wcs`` path, raw codestream bytes, or a parsed
:class:`~wavescene.codestream.Codestream`.  The estimator handles label
encoding, the train/validation carve-out, and decoding at the scenario's
input level, so it composes with scikit-learn model selection utilities
that only need ``fit``/``predict``/``score``.
"""

from __future__ import annotations

import io
import os
import tempfile

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .codestream import parse, serialize, write_wcs
from .errors import DataError
from .model import ModelConfig
from .pipeline import Dataset, SplitIndices, _decode_input, train


class WaveletSceneClassifier(BaseEstimator, ClassifierMixin):
    """Scene classifier that reads wavelet codestream prefixes.

    Parameters mirror the training pipeline: ``scenario`` picks how much
    of each codestream is decoded at inference time, ``m`` how many
    sub-band approximation stages run on top of it, and
    ``validation_fraction`` how much of the training data is held out to
    select the best epoch.
    """

    def __init__(
        self,
        scenario: str = "minimal",
        levels: int = 2,
        m: int = 1,
        target: str = "subbands",
        epochs: int = 30,
        batch_size: int = 32,
        learning_rate: float = 1e-3,
        head_channels: tuple[int, ...] = (64, 192, 384, 256, 256),
        fc_width: int = 1024,
        dropout: float = 0.5,
        supervise_all_levels: bool = True,
        normalize_approx_loss: bool = False,
        validation_fraction: float = 0.1,
        random_state: int = 0,
    ):
        self.scenario = scenario
        self.levels = levels
        self.m = m
        self.target = target
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.head_channels = head_channels
        self.fc_width = fc_width
        self.dropout = dropout
        self.supervise_all_levels = supervise_all_levels
        self.normalize_approx_loss = normalize_approx_loss
        self.validation_fraction = validation_fraction
        self.random_state = random_state

    @staticmethod
    def _as_blob(item) -> bytes:
        if isinstance(item, (str, os.PathLike)):
            with open(item, "rb") as fh:
                return fh.read()
        if isinstance(item, (bytes, bytearray)):
            return bytes(item)
        if hasattr(item, "header") and hasattr(item, "packets"):
            return serialize(item)
        raise DataError(
            f"X items must be .wcs paths, codestream bytes, or Codestream objects, "
            f"got {type(item).__name__}"
        )

    def _model_config(self, blob: bytes, num_classes: int) -> ModelConfig:
        cs, _ = parse(io.BytesIO(blob), stop_level=max(self.levels, 1))
        header = cs.header
        return ModelConfig(
            scenario=self.scenario,
            levels=self.levels,
            m=self.m,
            target=self.target,
            bands=header.bands,
            image_height=header.height,
            image_width=header.width,
            num_classes=num_classes,
            head_channels=tuple(self.head_channels),
            fc_width=self.fc_width,
            dropout=self.dropout,
            learning_rate=self.learning_rate,
            supervise_all_levels=self.supervise_all_levels,
            normalize_approx_loss=self.normalize_approx_loss,
            seed=self.random_state,
        )

    def fit(self, X, y):
        """Train on codestreams ``X`` and labels ``y``; returns ``self``."""
        blobs = [self._as_blob(item) for item in X]
        y = np.asarray(y)
        if len(blobs) != len(y):
            raise ValueError(f"X and y disagree on length: {len(blobs)} vs {len(y)}")
        if len(blobs) < 2:
            raise ValueError("need at least two samples to fit")
        self.classes_, encoded = np.unique(y, return_inverse=True)
        if len(self.classes_) < 2:
            raise ValueError("need at least two classes to fit")
        if not 0.0 < self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must be in (0, 1)")

        cfg = self._model_config(blobs[0], num_classes=len(self.classes_))
        cfg.validate()

        n = len(blobs)
        perm = np.random.default_rng(self.random_state).permutation(n)
        n_val = max(1, round(n * self.validation_fraction))
        if n_val >= n:
            raise ValueError("validation_fraction leaves no training samples")
        val_idx = tuple(int(i) for i in perm[:n_val])
        train_idx = tuple(int(i) for i in perm[n_val:])

        with tempfile.TemporaryDirectory(prefix="wavescene-fit-") as tmp:
            archives = []
            for i, blob in enumerate(blobs):
                path = os.path.join(tmp, f"{i:06d}.wcs")
                with open(path, "wb") as fh:
                    fh.write(blob)
                archives.append(path)
            dataset = Dataset(
                root="",
                paths=tuple(archives),
                labels=tuple(int(c) for c in encoded),
                class_names=tuple(str(c) for c in self.classes_),
                split=SplitIndices(train=train_idx, val=val_idx, test=()),
                archives=tuple(archives),
            )
            result = train(
                dataset,
                cfg,
                epochs=self.epochs,
                batch_size=self.batch_size,
                learning_rate=self.learning_rate,
                seed=self.random_state,
            )
        self.model_ = result.model
        self.config_ = cfg
        self.training_log_ = result.log
        self.best_epoch_ = result.best_epoch
        return self

    def _decode_batch(self, X) -> np.ndarray:
        inputs = [_decode_input(self._as_blob(item), self.config_)[0] for item in X]
        return np.stack(inputs)

    def decision_function(self, X) -> np.ndarray:
        """Raw logits, one row per sample."""
        check_is_fitted(self, "model_")
        x = self._decode_batch(X)
        chunks = []
        for s in range(0, len(x), 64):
            _, logits = self.model_.forward(x[s : s + 64], train=False)
            chunks.append(logits)
        return np.concatenate(chunks)

    def predict_proba(self, X) -> np.ndarray:
        logits = self.decision_function(X)
        shifted = logits - logits.max(axis=1, keepdims=True)
        exp = np.exp(shifted)
        return exp / exp.sum(axis=1, keepdims=True)

    def predict(self, X) -> np.ndarray:
        logits = self.decision_function(X)
        return self.classes_[np.argmax(logits, axis=1)]

    def save(self, path) -> None:
        """Persist the fitted network weights."""
        check_is_fitted(self, "model_")
        self.model_.save(path)


def encode_for_classifier(images, paths, levels: int, block_size: int = 64) -> list[str]:
    """Write images as ``.wcs`` archives ready for the estimator."""
    from .codestream import encode_image

    out = []
    for image, path in zip(images, paths):
        write_wcs(encode_image(image, levels=levels, block_size=block_size), path)
        out.append(str(path))
    return out
