"""Parameter initialization."""

from __future__ import annotations

import numpy as np


def fan_in_out(shape: tuple[int, ...]) -> tuple[int, int]:
    """Fan counts for dense (out, in) and conv (out, in, kh, kw) shapes."""
    if len(shape) == 2:
        return shape[1], shape[0]
    if len(shape) == 4:
        receptive = int(np.prod(shape[2:]))
        return shape[1] * receptive, shape[0] * receptive
    raise ValueError(f"no fan convention for shape {shape}")


def xavier_uniform(shape: tuple[int, ...], rng: np.random.Generator) -> np.ndarray:
    """Uniform samples in +-sqrt(6 / (fan_in + fan_out))."""
    fan_in, fan_out = fan_in_out(shape)
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)
