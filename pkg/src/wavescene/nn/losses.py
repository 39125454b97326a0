"""Loss functions with analytic gradients.

Both losses average over the batch axis, so a batch of one reproduces
the single-sample formulas exactly.
"""

from __future__ import annotations

import numpy as np


def cross_entropy_loss(logits: np.ndarray, targets: np.ndarray) -> tuple[float, np.ndarray]:
    """Softmax cross-entropy against one-hot targets.

    ``logits`` and ``targets`` are (B, Q).  The softmax is folded in via
    log-sum-exp for stability.  Returns the batch-mean loss and its
    gradient (softmax - target) / B.
    """
    logits = np.asarray(logits, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if logits.ndim != 2 or logits.shape != targets.shape:
        raise ValueError(
            f"logits and targets must share a (B, Q) shape, got {logits.shape} "
            f"and {targets.shape}"
        )
    if logits.shape[1] < 2:
        raise ValueError("need at least two classes")
    b = logits.shape[0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    loss = float(-(targets * log_probs).sum() / b)
    grad = (np.exp(log_probs) - targets) / b
    return loss, grad


def approximation_loss(
    approx: dict[int, np.ndarray],
    targets: dict[int, np.ndarray],
    normalize: bool = False,
) -> tuple[float, dict[int, np.ndarray]]:
    """Sum over levels of squared coefficient differences.

    ``approx`` and ``targets`` map a level to a (B, C, H, W) array.  The
    loss is the batch mean of the per-sample double sum of squared
    errors; with ``normalize`` each level's term is divided by its H*W so
    levels of different sizes weigh equally.  Returns the loss and
    per-level gradients with respect to ``approx``.
    """
    if approx.keys() != targets.keys():
        raise ValueError(
            f"level sets differ: {sorted(approx)} vs {sorted(targets)}"
        )
    loss = 0.0
    grads: dict[int, np.ndarray] = {}
    for level in sorted(approx):
        a = np.asarray(approx[level], dtype=np.float64)
        d = np.asarray(targets[level], dtype=np.float64)
        if a.shape != d.shape:
            raise ValueError(
                f"level {level} shape mismatch: {a.shape} vs {d.shape}"
            )
        b = a.shape[0]
        diff = a - d
        scale = 1.0 / (a.shape[2] * a.shape[3]) if normalize else 1.0
        loss += scale * float((diff * diff).sum()) / b
        grads[level] = (2.0 * scale / b) * diff
    return loss, grads
