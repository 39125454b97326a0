"""Synthetic texture dataset generator.

Produces small RGB images in class-named directories, one parameterized
low-spatial-frequency texture family per class, so the classes stay
separable even from coarse wavelet sub-bands.  Every image randomizes
phase, frequency jitter, amplitude, color mapping and additive noise,
all drawn from a seeded generator for reproducibility.
"""

from __future__ import annotations

import os

import numpy as np

from .errors import DataError

CLASS_NAMES = (
    "hstripes",
    "vstripes",
    "checker",
    "blobs",
    "gradient",
    "rings",
    "diagonal",
    "spots",
)


def _grid(size: int) -> tuple[np.ndarray, np.ndarray]:
    c = np.arange(size, dtype=np.float64)
    return np.meshgrid(c, c, indexing="ij")


def _pattern(name: str, size: int, rng: np.random.Generator) -> np.ndarray:
    """One [0, 1] grayscale pattern of the named family."""
    y, x = _grid(size)
    freq = (2.0 * np.pi / size) * rng.uniform(2.0, 4.0)
    phase = rng.uniform(0.0, 2.0 * np.pi)
    if name == "hstripes":
        field = np.sin(freq * y + phase)
    elif name == "vstripes":
        field = np.sin(freq * x + phase)
    elif name == "checker":
        field = np.sin(freq * y + phase) * np.sin(freq * x + rng.uniform(0, 2 * np.pi))
    elif name == "blobs":
        field = np.zeros((size, size))
        for _ in range(int(rng.integers(2, 5))):
            cy, cx = rng.uniform(0.2 * size, 0.8 * size, size=2)
            radius = rng.uniform(0.12, 0.22) * size
            field += np.exp(-((y - cy) ** 2 + (x - cx) ** 2) / (2 * radius**2))
        field = field / field.max() * 2.0 - 1.0
    elif name == "gradient":
        angle = rng.uniform(0.0, 2.0 * np.pi)
        proj = np.cos(angle) * x + np.sin(angle) * y
        field = 2.0 * (proj - proj.min()) / (np.ptp(proj) + 1e-12) - 1.0
    elif name == "rings":
        cy, cx = rng.uniform(0.35 * size, 0.65 * size, size=2)
        r = np.sqrt((y - cy) ** 2 + (x - cx) ** 2)
        field = np.sin(freq * 1.5 * r + phase)
    elif name == "diagonal":
        field = np.sin(freq * (x + y) / np.sqrt(2.0) + phase)
    elif name == "spots":
        fy = freq * rng.uniform(0.9, 1.1)
        fx = freq * rng.uniform(0.9, 1.1)
        field = np.cos(fy * y + phase) + np.cos(fx * x + rng.uniform(0, 2 * np.pi))
        field /= 2.0
    else:
        raise DataError(f"unknown texture class {name!r}")
    return 0.5 * (field + 1.0)


def make_image(class_name: str, rng: np.random.Generator, size: int = 64) -> np.ndarray:
    """One (3, size, size) uint8 sample of the class texture."""
    base = _pattern(class_name, size, rng)
    amplitude = rng.uniform(0.6, 1.0)
    offset = rng.uniform(0.0, 1.0 - amplitude)
    shaped = offset + amplitude * base
    # random but well-spread color mapping per channel
    gains = rng.uniform(0.4, 1.0, size=3)
    biases = rng.uniform(0.0, 0.3, size=3)
    planes = [np.clip(biases[c] + gains[c] * shaped, 0.0, 1.0) for c in range(3)]
    img = np.stack(planes)
    img += rng.normal(0.0, 0.01, size=img.shape)
    return (np.clip(img, 0.0, 1.0) * 255.0).round().astype(np.uint8)


def generate_dataset(
    out_dir,
    classes: int = 4,
    per_class: int = 100,
    size: int = 64,
    seed: int = 0,
) -> list[tuple[str, str]]:
    """Write a class-per-directory PNG dataset; returns (path, class) pairs.

    Deterministic for a given seed.  ``classes`` selects the first k
    texture families of :data:`CLASS_NAMES`.
    """
    if not 2 <= classes <= len(CLASS_NAMES):
        raise DataError(f"classes must be in [2, {len(CLASS_NAMES)}], got {classes}")
    if per_class < 1:
        raise DataError("per_class must be >= 1")
    from .imageio import write_image
    from .wavelet import Image

    rng = np.random.default_rng(seed)
    manifest = []
    for name in CLASS_NAMES[:classes]:
        class_dir = os.path.join(str(out_dir), name)
        os.makedirs(class_dir, exist_ok=True)
        for i in range(per_class):
            path = os.path.join(class_dir, f"{name}_{i:04d}.png")
            write_image(Image(data=make_image(name, rng, size)), path)
            manifest.append((path, name))
    return manifest
