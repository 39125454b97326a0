"""Raster image reading and writing.

PNG is handled through Pillow; binary PGM (P5) and PPM (P6) are parsed
directly since the formats are trivial and support 16-bit samples for
every band count.  Everything converts to and from the planar
:class:`~wavescene.wavelet.Image` container.
"""

from __future__ import annotations

import os

import numpy as np

from .errors import DataError
from .wavelet import Image

_PNM_MAGICS = {b"P5": 1, b"P6": 3}


def _interleaved_to_image(arr: np.ndarray) -> Image:
    if arr.ndim == 2:
        arr = arr[:, :, None]
    return Image(data=np.ascontiguousarray(arr.transpose(2, 0, 1)))


def _read_pnm(path: str) -> Image:
    with open(path, "rb") as fh:
        blob = fh.read()
    magic = blob[:2]
    if magic not in _PNM_MAGICS:
        raise DataError(f"{path}: not a binary PGM/PPM file (magic {magic!r})")
    bands = _PNM_MAGICS[magic]

    # header = magic + 3 whitespace-separated ints, '#' comments allowed
    pos = 2
    fields = []
    while len(fields) < 3:
        while pos < len(blob) and blob[pos : pos + 1].isspace():
            pos += 1
        if pos < len(blob) and blob[pos : pos + 1] == b"#":
            while pos < len(blob) and blob[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos : pos + 1].isspace():
            pos += 1
        if pos == start:
            raise DataError(f"{path}: truncated PNM header")
        try:
            fields.append(int(blob[start:pos]))
        except ValueError:
            raise DataError(f"{path}: bad PNM header field {blob[start:pos]!r}") from None
    pos += 1  # single whitespace byte before the raster
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise DataError(f"{path}: bad PNM dimensions {width}x{height}")
    if not 0 < maxval < 65536:
        raise DataError(f"{path}: bad PNM maxval {maxval}")

    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    count = width * height * bands
    raster = blob[pos : pos + count * dtype.itemsize]
    if len(raster) < count * dtype.itemsize:
        raise DataError(f"{path}: PNM raster shorter than {width}x{height}x{bands}")
    arr = np.frombuffer(raster, dtype=dtype).reshape(height, width, bands)
    return _interleaved_to_image(arr.astype(np.uint16 if maxval > 255 else np.uint8))


def _write_pnm(image: Image, path: str) -> None:
    if image.bands == 1:
        magic = b"P5"
    elif image.bands == 3:
        magic = b"P6"
    else:
        raise DataError(f"PNM supports 1 or 3 bands, image has {image.bands}")
    maxval = 255 if image.bit_depth == 8 else 65535
    interleaved = image.data.transpose(1, 2, 0)
    if image.bit_depth == 16:
        interleaved = interleaved.astype(">u2")
    header = b"%s\n%d %d\n%d\n" % (magic, image.width, image.height, maxval)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(interleaved.tobytes())


def _read_png(path: str) -> Image:
    from PIL import Image as PILImage, UnidentifiedImageError

    try:
        with PILImage.open(path) as pil:
            if pil.mode in ("P", "RGBA", "LA", "CMYK"):
                pil = pil.convert("RGB")
            arr = np.asarray(pil)
    except UnidentifiedImageError:
        raise DataError(f"{path}: unrecognized image format") from None
    if arr.dtype == np.int32:  # Pillow mode "I", 16-bit grayscale PNGs land here
        if arr.min() < 0 or arr.max() > 65535:
            raise DataError(f"{path}: integer PNG samples exceed 16 bits")
        arr = arr.astype(np.uint16)
    if arr.dtype not in (np.uint8, np.uint16):
        raise DataError(f"{path}: unsupported PNG sample type {arr.dtype}")
    return _interleaved_to_image(arr)


def _write_png(image: Image, path: str) -> None:
    from PIL import Image as PILImage

    arr = image.data.transpose(1, 2, 0)
    if image.bit_depth == 16:
        if image.bands != 1:
            raise DataError("16-bit PNG output is grayscale only; use PPM for 16-bit colour")
        PILImage.fromarray(arr[:, :, 0]).save(path)  # uint16 maps to mode I;16
        return
    if image.bands == 1:
        pil = PILImage.fromarray(arr[:, :, 0], mode="L")
    elif image.bands == 3:
        pil = PILImage.fromarray(arr, mode="RGB")
    else:
        raise DataError(f"PNG output supports 1 or 3 bands, image has {image.bands}")
    pil.save(path)


def read_image(path) -> Image:
    """Load a PNG/PGM/PPM file into a planar image."""
    path = str(path)
    if not os.path.exists(path):
        raise DataError(f"{path}: no such file")
    with open(path, "rb") as fh:
        magic = fh.read(2)
    if magic in _PNM_MAGICS:
        return _read_pnm(path)
    return _read_png(path)


def write_image(image: Image, path) -> None:
    """Write a planar image; format is chosen by file extension."""
    path = str(path)
    ext = os.path.splitext(path)[1].lower()
    if ext in (".pgm", ".ppm", ".pnm"):
        _write_pnm(image, path)
    elif ext == ".png":
        _write_png(image, path)
    else:
        raise DataError(f"unsupported image extension {ext!r} (use .png, .pgm or .ppm)")
