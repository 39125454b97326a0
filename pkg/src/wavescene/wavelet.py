"""Lossless multilevel 2-D discrete wavelet transform.

Integer 5/3 (LeGall) lifting with whole-sample symmetric boundary
extension, the reversible filter pair used for lossless wavelet coding.
Forward analysis splits a signal into a low-pass half (even grid, ceil
length) and a high-pass half (odd grid, floor length); the 2-D transform
applies the 1-D lifting to rows then columns and recurses on the LL band.
All arithmetic is exact integer arithmetic, so synthesis inverts analysis
bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidStopLevelError, LevelTooDeepError

SUBBAND_NAMES = ("LL", "LH", "HL", "HH")

_COEFF_DTYPE = np.int32


@dataclass(frozen=True)
class Image:
    """Planar multi-band raster of unsigned integer samples.

    ``data`` has shape (bands, height, width) and dtype uint8 or uint16.
    """

    data: np.ndarray

    def __post_init__(self):
        d = self.data
        if d.ndim != 3:
            raise ValueError(f"image data must be (bands, height, width), got shape {d.shape}")
        if d.dtype not in (np.uint8, np.uint16):
            raise ValueError(f"image dtype must be uint8 or uint16, got {d.dtype}")
        if d.shape[1] < 1 or d.shape[2] < 1:
            raise ValueError("image dimensions must be >= 1")

    @property
    def bands(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def bit_depth(self) -> int:
        return 8 if self.data.dtype == np.uint8 else 16

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Image)
            and self.data.shape == other.data.shape
            and self.data.dtype == other.data.dtype
            and bool(np.array_equal(self.data, other.data))
        )


@dataclass
class BandSubbands:
    """Coefficients of one colour band: coarsest LL plus per-level details.

    ``details[level]`` maps a decomposition level to its (LH, HL, HH)
    arrays; the LL array lives at the pyramid's ``num_levels``.
    """

    ll: np.ndarray
    details: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]] = field(default_factory=dict)


@dataclass
class SubbandPyramid:
    """Per-band multilevel DWT decomposition of an image.

    The LL band sits at ``num_levels``; detail triples exist for levels
    ``min_level .. num_levels``.  A full pyramid has ``min_level == 1``.
    Partial decodes keep only the coarser levels, so ``min_level`` may sit
    anywhere in [1, num_levels]; ``min_level == num_levels + 1`` marks an
    LL-only pyramid with no detail levels at all.
    """

    height: int
    width: int
    bit_depth: int
    num_levels: int
    min_level: int
    bands: list[BandSubbands]

    @property
    def num_bands(self) -> int:
        return len(self.bands)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SubbandPyramid):
            return NotImplemented
        if (self.height, self.width, self.bit_depth, self.num_levels, self.min_level) != (
            other.height,
            other.width,
            other.bit_depth,
            other.num_levels,
            other.min_level,
        ):
            return False
        if len(self.bands) != len(other.bands):
            return False
        for a, b in zip(self.bands, other.bands):
            if not np.array_equal(a.ll, b.ll):
                return False
            if a.details.keys() != b.details.keys():
                return False
            for lvl in a.details:
                if any(not np.array_equal(x, y) for x, y in zip(a.details[lvl], b.details[lvl])):
                    return False
        return True


def subband_dims(height: int, width: int, level: int) -> tuple[int, int]:
    """Dimensions of the approximation band after ``level`` ceil-halvings."""
    if level < 0:
        raise ValueError("level must be >= 0")
    h, w = height, width
    for _ in range(level):
        h = (h + 1) // 2
        w = (w + 1) // 2
    return h, w


def max_levels(height: int, width: int) -> int:
    """Deepest decomposition for which no detail band becomes empty."""
    n = 0
    h, w = height, width
    while h >= 2 and w >= 2:
        h = (h + 1) // 2
        w = (w + 1) // 2
        n += 1
    return n


def _analyze_rows(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """One 5/3 lifting step along the last axis of a 2-D int64 array.

    Returns (low, high) with widths ceil(n/2) and floor(n/2).  Boundary
    samples mirror symmetrically about the first/last sample.
    """
    n = x.shape[1]
    if n == 1:
        return x.copy(), x[:, :0].copy()
    s = x[:, 0::2]
    d = x[:, 1::2]
    ns = s.shape[1]
    nd = d.shape[1]
    # predict: subtract the floor-average of the even neighbours
    if ns == nd:
        left = s
        right = np.concatenate([s[:, 1:], s[:, -1:]], axis=1)
    else:
        left = s[:, :-1]
        right = s[:, 1:]
    high = d - ((left + right) >> 1)
    # update: add the rounded quarter-sum of the odd neighbours
    d_left = np.concatenate([high[:, :1], high[:, : ns - 1]], axis=1)
    d_right = high if ns == nd else np.concatenate([high, high[:, -1:]], axis=1)
    low = s + ((d_left + d_right + 2) >> 2)
    return low, high


def _synthesize_rows(low: np.ndarray, high: np.ndarray) -> np.ndarray:
    """Exact inverse of :func:`_analyze_rows`."""
    ns = low.shape[1]
    nd = high.shape[1]
    n = ns + nd
    if n == 1:
        return low.copy()
    d_left = np.concatenate([high[:, :1], high[:, : ns - 1]], axis=1)
    d_right = high if ns == nd else np.concatenate([high, high[:, -1:]], axis=1)
    s = low - ((d_left + d_right + 2) >> 2)
    if ns == nd:
        left = s
        right = np.concatenate([s[:, 1:], s[:, -1:]], axis=1)
    else:
        left = s[:, :-1]
        right = s[:, 1:]
    d = high + ((left + right) >> 1)
    out = np.empty((low.shape[0], n), dtype=np.int64)
    out[:, 0::2] = s
    out[:, 1::2] = d
    return out


def dwt53_forward_1d(signal) -> tuple[np.ndarray, np.ndarray]:
    """Forward 1-D reversible 5/3 transform of an integer sequence."""
    x = np.asarray(signal, dtype=np.int64)
    if x.ndim != 1:
        raise ValueError("signal must be one-dimensional")
    if x.size < 1:
        raise ValueError("signal must have length >= 1")
    low, high = _analyze_rows(x[None, :])
    return low[0].astype(_COEFF_DTYPE), high[0].astype(_COEFF_DTYPE)


def dwt53_inverse_1d(low, high) -> np.ndarray:
    """Inverse 1-D transform; exact inverse of :func:`dwt53_forward_1d`."""
    lo = np.asarray(low, dtype=np.int64)
    hi = np.asarray(high, dtype=np.int64)
    if lo.size - hi.size not in (0, 1) or lo.size < 1:
        raise ValueError("low band must be as long as or one longer than high band")
    return _synthesize_rows(lo[None, :], hi[None, :])[0].astype(_COEFF_DTYPE)


def _analyze_2d(a: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """One 2-D analysis step, rows then columns.  Returns (LL, LH, HL, HH)."""
    lo, hi = _analyze_rows(a)
    ll_t, lh_t = _analyze_rows(np.ascontiguousarray(lo.T))
    hl_t, hh_t = _analyze_rows(np.ascontiguousarray(hi.T))
    return ll_t.T, lh_t.T, hl_t.T, hh_t.T


def _synthesize_2d(ll, lh, hl, hh) -> np.ndarray:
    """Inverse of :func:`_analyze_2d`, columns then rows."""
    lo = _synthesize_rows(np.ascontiguousarray(ll.T), np.ascontiguousarray(lh.T)).T
    hi = _synthesize_rows(np.ascontiguousarray(hl.T), np.ascontiguousarray(hh.T)).T
    return _synthesize_rows(np.ascontiguousarray(lo), np.ascontiguousarray(hi))


def decompose(image: Image, levels: int) -> SubbandPyramid:
    """Full multilevel decomposition of ``image``.

    ``levels == 0`` stores the untransformed image as the LL band, the
    only depth available when either dimension is 1.  Raises
    :class:`LevelTooDeepError` if the LL band would have a dimension
    below 2 before any requested split (the detail band along that axis
    would be empty).
    """
    if levels < 0:
        raise ValueError("levels must be >= 0")
    if levels > max_levels(image.height, image.width):
        raise LevelTooDeepError(
            f"{image.height}x{image.width} image supports at most "
            f"{max_levels(image.height, image.width)} level(s), requested {levels}"
        )
    bands: list[BandSubbands] = []
    for b in range(image.bands):
        current = image.data[b].astype(np.int64)
        details: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}
        for lvl in range(1, levels + 1):
            ll, lh, hl, hh = _analyze_2d(current)
            details[lvl] = (
                lh.astype(_COEFF_DTYPE),
                hl.astype(_COEFF_DTYPE),
                hh.astype(_COEFF_DTYPE),
            )
            current = ll
        bands.append(BandSubbands(ll=current.astype(_COEFF_DTYPE), details=details))
    return SubbandPyramid(
        height=image.height,
        width=image.width,
        bit_depth=image.bit_depth,
        num_levels=levels,
        min_level=1,
        bands=bands,
    )


def reconstruct(pyramid: SubbandPyramid, stop_level: int = 0):
    """Run synthesis until ``stop_level``.

    ``stop_level == 0`` returns the original :class:`Image` exactly;
    ``stop_level == num_levels`` is the identity; any s in between yields
    a pyramid whose LL band sits at level s.
    """
    L = pyramid.num_levels
    if not 0 <= stop_level <= L:
        raise InvalidStopLevelError(f"stop level {stop_level} outside [0, {L}]")
    if stop_level == L and L > 0:
        return pyramid
    if stop_level < pyramid.min_level - 1:
        raise InvalidStopLevelError(
            f"stop level {stop_level} needs detail levels below {pyramid.min_level}, "
            "which this pyramid does not carry"
        )
    new_bands: list[BandSubbands] = []
    planes: list[np.ndarray] = []
    for band in pyramid.bands:
        current = band.ll.astype(np.int64)
        for lvl in range(L, stop_level, -1):
            lh, hl, hh = band.details[lvl]
            current = _synthesize_2d(
                current, lh.astype(np.int64), hl.astype(np.int64), hh.astype(np.int64)
            )
        if stop_level == 0:
            planes.append(current)
        else:
            kept = {lvl: band.details[lvl] for lvl in band.details if lvl <= stop_level}
            new_bands.append(BandSubbands(ll=current.astype(_COEFF_DTYPE), details=kept))
    if stop_level == 0:
        dtype = np.uint8 if pyramid.bit_depth == 8 else np.uint16
        return Image(data=np.stack(planes).astype(dtype))
    kept_levels = new_bands[0].details.keys()
    return SubbandPyramid(
        height=pyramid.height,
        width=pyramid.width,
        bit_depth=pyramid.bit_depth,
        num_levels=stop_level,
        min_level=min(kept_levels) if kept_levels else stop_level + 1,
        bands=new_bands,
    )


def level_stacks(pyramid: SubbandPyramid) -> dict[int, np.ndarray]:
    """Channel stacks of the four sub-bands at every populated level.

    Returns {level: array of shape (4 * bands, h_level, w_level)} where the
    channels run [LL, LH, HL, HH] per band, bands outermost.  Level keys go
    from ``num_levels`` down to ``min_level``.  The LL plane at levels below
    ``num_levels`` is synthesized from the coarser levels.
    """
    stacks: dict[int, np.ndarray] = {}
    L = pyramid.num_levels
    per_band_ll = [band.ll.astype(np.int64) for band in pyramid.bands]
    for lvl in range(L, pyramid.min_level - 1, -1):
        planes = []
        for b, band in enumerate(pyramid.bands):
            lh, hl, hh = band.details[lvl]
            planes.extend([per_band_ll[b], lh, hl, hh])
        stacks[lvl] = np.stack([p.astype(np.int64) for p in planes])
        if lvl > pyramid.min_level:
            for b, band in enumerate(pyramid.bands):
                lh, hl, hh = band.details[lvl]
                per_band_ll[b] = _synthesize_2d(
                    per_band_ll[b], lh.astype(np.int64), hl.astype(np.int64), hh.astype(np.int64)
                )
    return stacks
