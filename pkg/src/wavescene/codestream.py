"""Resolution-progressive codestream container (.wcs).

A codestream serializes a full wavelet pyramid as one packet per
resolution level, coarsest first, so a reader wanting only a coarse view
consumes a strict byte prefix.  Each packet holds the entropy-coded
codeblocks of its level's sub-bands together with two header fields per
block: MB, the significant-bitplane count, and B, the payload byte
length.  Both are readable without touching payload bytes, which is what
makes header-feature extraction and partial decoding cheap.

Byte layout (all integers little-endian):

    magic     4 bytes  b"WCS1"
    version   u8       1
    bit_depth u8       8 or 16
    bands     u8
    levels    u8       L >= 1
    height    u32
    width     u32
    block     u16      codeblock size (square), >= 32

followed by packets for levels L, L-1, ..., 1.  The level-L packet
carries the LL sub-band and the level-L details; every other packet
carries its level's three detail sub-bands.  Segments appear in a fixed
order (bands outer, sub-bands LL/LH/HL/HH, blocks row-major):

    band     u8
    subband  u8       0=LL 1=LH 2=HL 3=HH
    y0       u32      block origin inside the sub-band
    x0       u32
    mb       u8
    b        u32      payload length in bytes
    payload  b bytes
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from typing import BinaryIO, NamedTuple

import numpy as np

from .errors import (
    BlockSizeError,
    CodestreamError,
    InvalidStopLevelError,
    TruncatedStreamError,
)
from .rangecoder import decode_codeblock, encode_codeblock
from .wavelet import (
    SUBBAND_NAMES,
    BandSubbands,
    Image,
    SubbandPyramid,
    decompose,
    max_levels,
    reconstruct,
    subband_dims,
)

MAGIC = b"WCS1"
VERSION = 1
DEFAULT_BLOCK_SIZE = 64
MIN_BLOCK_SIZE = 32

_HEADER_FMT = "<4sBBBBIIH"
_HEADER_SIZE = struct.calcsize(_HEADER_FMT)
_SEGMENT_FMT = "<BBIIBI"
_SEGMENT_SIZE = struct.calcsize(_SEGMENT_FMT)

_MAX_MB = 40  # int32 coefficients can never need more planes


@dataclass(frozen=True)
class CodestreamHeader:
    height: int
    width: int
    bands: int
    bit_depth: int
    num_levels: int
    block_size: int


@dataclass(frozen=True)
class CodeblockSegment:
    """One entropy-coded codeblock plus the header fields describing it."""

    band: int
    subband: str
    y0: int
    x0: int
    height: int
    width: int
    mb: int
    payload: bytes

    @property
    def b(self) -> int:
        return len(self.payload)


@dataclass(frozen=True)
class Packet:
    level: int
    segments: tuple[CodeblockSegment, ...]


@dataclass(frozen=True)
class Codestream:
    header: CodestreamHeader
    packets: tuple[Packet, ...]

    @property
    def num_levels(self) -> int:
        return self.header.num_levels

    def packet_at(self, level: int) -> Packet:
        for packet in self.packets:
            if packet.level == level:
                return packet
        raise CodestreamError(f"no packet for level {level}")


class BlockFeatures(NamedTuple):
    level: int
    band: int
    subband: str
    y0: int
    x0: int
    b: int
    mb: int


@dataclass(frozen=True)
class HeaderFeatures:
    """Per-codeblock (B, MB) plus per-sub-band and per-level aggregates."""

    blocks: tuple[BlockFeatures, ...]
    by_subband: dict[tuple[int, str], dict[str, float]]
    by_level: dict[int, dict[str, float]]

    @property
    def total_bytes(self) -> int:
        return sum(f.b for f in self.blocks)


def subband_shape(height: int, width: int, level: int, name: str) -> tuple[int, int]:
    """Shape of one sub-band of a ``height`` x ``width`` image at ``level``."""
    if name not in SUBBAND_NAMES:
        raise ValueError(f"unknown sub-band {name!r}")
    if name == "LL":
        return subband_dims(height, width, level)
    ph, pw = subband_dims(height, width, level - 1)
    if name == "LH":
        return ph // 2, (pw + 1) // 2
    if name == "HL":
        return (ph + 1) // 2, pw // 2
    return ph // 2, pw // 2


def block_grid(sb_height: int, sb_width: int, block_size: int) -> list[tuple[int, int, int, int]]:
    """Row-major (y0, x0, h, w) tiling of a sub-band, edge blocks clipped."""
    if sb_height <= 0 or sb_width <= 0:
        return []
    grid = []
    for y0 in range(0, sb_height, block_size):
        for x0 in range(0, sb_width, block_size):
            grid.append(
                (y0, x0, min(block_size, sb_height - y0), min(block_size, sb_width - x0))
            )
    return grid


def _packet_plan(header: CodestreamHeader, level: int):
    """Deterministic (band, subband, y0, x0, h, w) order of one packet.

    The coarsest packet carries the LL band; a zero-level stream has a
    single packet holding nothing but LL.
    """
    if level == header.num_levels:
        names = SUBBAND_NAMES if level > 0 else SUBBAND_NAMES[:1]
    else:
        names = SUBBAND_NAMES[1:]
    for band in range(header.bands):
        for name in names:
            sbh, sbw = subband_shape(header.height, header.width, level, name)
            for y0, x0, bh, bw in block_grid(sbh, sbw, header.block_size):
                yield band, name, y0, x0, bh, bw


def encode(pyramid: SubbandPyramid, block_size: int = DEFAULT_BLOCK_SIZE) -> Codestream:
    """Entropy-code a full pyramid into a resolution-progressive stream."""
    if block_size < MIN_BLOCK_SIZE:
        raise BlockSizeError(
            f"block size {block_size} below the minimum of {MIN_BLOCK_SIZE}"
        )
    if block_size > 0xFFFF:
        raise BlockSizeError(f"block size {block_size} does not fit the u16 header field")
    if pyramid.min_level != 1:
        raise ValueError("only a full pyramid (min_level == 1) can be encoded")
    header = CodestreamHeader(
        height=pyramid.height,
        width=pyramid.width,
        bands=pyramid.num_bands,
        bit_depth=pyramid.bit_depth,
        num_levels=pyramid.num_levels,
        block_size=block_size,
    )
    packets = []
    packet_levels = range(pyramid.num_levels, 0, -1) if pyramid.num_levels else (0,)
    for level in packet_levels:
        segments = []
        for band, name, y0, x0, bh, bw in _packet_plan(header, level):
            coeffs = _subband_array(pyramid.bands[band], pyramid.num_levels, level, name)
            mb, payload = encode_codeblock(coeffs[y0 : y0 + bh, x0 : x0 + bw])
            segments.append(
                CodeblockSegment(
                    band=band,
                    subband=name,
                    y0=y0,
                    x0=x0,
                    height=bh,
                    width=bw,
                    mb=mb,
                    payload=payload,
                )
            )
        packets.append(Packet(level=level, segments=tuple(segments)))
    return Codestream(header=header, packets=tuple(packets))


def _subband_array(band: BandSubbands, num_levels: int, level: int, name: str) -> np.ndarray:
    if name == "LL":
        if level != num_levels:
            raise ValueError("LL is stored only at the coarsest level")
        return band.ll
    return band.details[level][SUBBAND_NAMES.index(name) - 1]


def encode_image(
    image: Image, levels: int, block_size: int = DEFAULT_BLOCK_SIZE
) -> Codestream:
    """Decompose ``image`` to ``levels`` and entropy-code the result."""
    return encode(decompose(image, levels), block_size)


def serialize(cs: Codestream) -> bytes:
    """Exact on-disk byte string of a codestream."""
    out = io.BytesIO()
    h = cs.header
    out.write(
        struct.pack(
            _HEADER_FMT,
            MAGIC,
            VERSION,
            h.bit_depth,
            h.bands,
            h.num_levels,
            h.height,
            h.width,
            h.block_size,
        )
    )
    for packet in cs.packets:
        for seg in packet.segments:
            out.write(
                struct.pack(
                    _SEGMENT_FMT,
                    seg.band,
                    SUBBAND_NAMES.index(seg.subband),
                    seg.y0,
                    seg.x0,
                    seg.mb,
                    len(seg.payload),
                )
            )
            out.write(seg.payload)
    return out.getvalue()


class CountingReader:
    """Seekable-source wrapper that counts consumed bytes and hard-fails
    on short reads."""

    def __init__(self, source: BinaryIO):
        self._source = source
        self.bytes_read = 0

    def read(self, n: int) -> bytes:
        data = self._source.read(n)
        got = len(data) if data else 0
        if got < n:
            raise TruncatedStreamError(
                f"needed {n} bytes, got {got}", offset=self.bytes_read
            )
        self.bytes_read += n
        return data


def _parse_header(reader: CountingReader) -> CodestreamHeader:
    raw = reader.read(_HEADER_SIZE)
    magic, version, bit_depth, bands, levels, height, width, block_size = struct.unpack(
        _HEADER_FMT, raw
    )
    if magic != MAGIC:
        raise CodestreamError(f"bad magic {magic!r}", offset=0)
    if version != VERSION:
        raise CodestreamError(f"unsupported version {version}", offset=4)
    if bit_depth not in (8, 16):
        raise CodestreamError(f"bad bit depth {bit_depth}", offset=5)
    if bands < 1:
        raise CodestreamError("band count must be >= 1", offset=6)
    if height < 1 or width < 1:
        raise CodestreamError("image dimensions must be >= 1", offset=8)
    if levels > max_levels(height, width):
        raise CodestreamError(
            f"{height}x{width} image cannot carry {levels} levels", offset=7
        )
    if block_size < MIN_BLOCK_SIZE:
        raise CodestreamError(f"block size {block_size} below minimum", offset=16)
    return CodestreamHeader(
        height=height,
        width=width,
        bands=bands,
        bit_depth=bit_depth,
        num_levels=levels,
        block_size=block_size,
    )


def _parse_packet(reader: CountingReader, header: CodestreamHeader, level: int) -> Packet:
    segments = []
    for band, name, y0, x0, bh, bw in _packet_plan(header, level):
        offset = reader.bytes_read
        raw = reader.read(_SEGMENT_SIZE)
        sband, scode, sy0, sx0, mb, b = struct.unpack(_SEGMENT_FMT, raw)
        if scode >= len(SUBBAND_NAMES):
            raise CodestreamError(f"bad sub-band code {scode}", offset=offset)
        if (sband, SUBBAND_NAMES[scode], sy0, sx0) != (band, name, y0, x0):
            raise CodestreamError(
                f"segment out of order: expected band {band} {name} block "
                f"({y0},{x0}), found band {sband} {SUBBAND_NAMES[scode]} "
                f"({sy0},{sx0})",
                offset=offset,
            )
        if mb > _MAX_MB:
            raise CodestreamError(f"implausible bitplane count {mb}", offset=offset)
        if (mb == 0) != (b == 0):
            raise CodestreamError(
                f"bitplane count {mb} inconsistent with payload length {b}",
                offset=offset,
            )
        payload = reader.read(b)
        segments.append(
            CodeblockSegment(
                band=band,
                subband=name,
                y0=y0,
                x0=x0,
                height=bh,
                width=bw,
                mb=mb,
                payload=payload,
            )
        )
    return Packet(level=level, segments=tuple(segments))


def parse(source, stop_level: int = 1) -> tuple[Codestream, int]:
    """Parse a codestream from bytes or a seekable binary source.

    Only the packets for levels ``num_levels .. max(stop_level, 1)`` are
    read; no byte beyond them is consumed.  Returns the parsed (possibly
    partial) codestream and the number of bytes consumed.
    """
    if isinstance(source, (bytes, bytearray, memoryview)):
        source = io.BytesIO(source)
    reader = CountingReader(source)
    header = _parse_header(reader)
    lowest = max(stop_level, 1)
    if stop_level > max(header.num_levels, 1):
        raise InvalidStopLevelError(
            f"stop level {stop_level} exceeds stream levels {header.num_levels}"
        )
    if header.num_levels:
        packet_levels = range(header.num_levels, lowest - 1, -1)
    else:  # a zero-level stream is one LL packet; any stop reads it
        packet_levels = (0,)
    packets = [_parse_packet(reader, header, level) for level in packet_levels]
    return Codestream(header=header, packets=tuple(packets)), reader.bytes_read


def decode_partial(cs: Codestream, target_level: int):
    """Reassemble sub-bands for levels ``num_levels .. max(t, 1)``.

    ``target_level == 0`` additionally runs the full inverse transform and
    returns the :class:`~wavescene.wavelet.Image`; any other level returns
    a :class:`~wavescene.wavelet.SubbandPyramid` whose ``min_level`` is the
    target.  Only the needed packets are entropy-decoded.
    """
    L = cs.header.num_levels
    if not 0 <= target_level <= L:
        raise InvalidStopLevelError(f"target level {target_level} outside [0, {L}]")
    lowest = max(target_level, 1)
    available = {p.level for p in cs.packets}
    needed = set(range(lowest, L + 1)) if L else {0}
    if not needed <= available:
        raise CodestreamError(
            f"codestream carries packets {sorted(available, reverse=True)}, "
            f"target level {target_level} needs {sorted(needed, reverse=True)}"
        )
    h = cs.header
    bands = [BandSubbands(ll=None, details={}) for _ in range(h.bands)]
    planes: dict[tuple[int, int, str], np.ndarray] = {}
    for level in range(L, lowest - 1, -1) if L else (0,):
        packet = cs.packet_at(level)
        for seg in packet.segments:
            key = (seg.band, level, seg.subband)
            if key not in planes:
                planes[key] = np.zeros(
                    subband_shape(h.height, h.width, level, seg.subband), dtype=np.int32
                )
            planes[key][seg.y0 : seg.y0 + seg.height, seg.x0 : seg.x0 + seg.width] = (
                decode_codeblock(seg.payload, seg.mb, seg.height, seg.width)
            )
    for (band, level, name), arr in planes.items():
        if name == "LL":
            bands[band].ll = arr
        else:
            triple = bands[band].details.setdefault(level, [None, None, None])
            triple[SUBBAND_NAMES.index(name) - 1] = arr
    for band in bands:
        band.details = {lvl: tuple(t) for lvl, t in band.details.items()}
    pyramid = SubbandPyramid(
        height=h.height,
        width=h.width,
        bit_depth=h.bit_depth,
        num_levels=L,
        min_level=lowest,
        bands=bands,
    )
    if target_level == 0:
        return reconstruct(pyramid, 0)
    return pyramid


def decode_bytes(data, target_level: int):
    """Parse and decode the shortest prefix of ``data`` serving ``target_level``.

    Returns (result, bytes_read) where bytes_read counts every byte
    consumed from the buffer, headers and payloads alike.
    """
    cs, n = parse(data, stop_level=target_level)
    return decode_partial(cs, target_level), n


def extract_header_features(cs: Codestream) -> HeaderFeatures:
    """Collect per-codeblock (B, MB) and aggregates from segment headers.

    Touches only header fields; payload bytes are never entropy-decoded.
    """
    blocks = []
    by_subband: dict[tuple[int, str], dict[str, float]] = {}
    by_level: dict[int, dict[str, float]] = {}
    for packet in cs.packets:
        for seg in packet.segments:
            blocks.append(
                BlockFeatures(
                    level=packet.level,
                    band=seg.band,
                    subband=seg.subband,
                    y0=seg.y0,
                    x0=seg.x0,
                    b=seg.b,
                    mb=seg.mb,
                )
            )
    for f in blocks:
        for agg in (by_subband.setdefault((f.level, f.subband), _new_agg()),
                    by_level.setdefault(f.level, _new_agg())):
            agg["blocks"] += 1
            agg["bytes"] += f.b
            agg["max_mb"] = max(agg["max_mb"], f.mb)
            agg["sum_mb"] += f.mb
    for agg in list(by_subband.values()) + list(by_level.values()):
        agg["mean_mb"] = agg.pop("sum_mb") / agg["blocks"]
    return HeaderFeatures(blocks=tuple(blocks), by_subband=by_subband, by_level=by_level)


def _new_agg() -> dict[str, float]:
    return {"blocks": 0, "bytes": 0, "max_mb": 0, "sum_mb": 0}


def write_wcs(cs: Codestream, path) -> int:
    """Write the stream to ``path``; returns the byte count written."""
    data = serialize(cs)
    with open(path, "wb") as fh:
        fh.write(data)
    return len(data)


def read_wcs(path, stop_level: int = 1) -> Codestream:
    """Read a .wcs file, consuming only the packets down to ``stop_level``."""
    with open(path, "rb") as fh:
        cs, _ = parse(fh, stop_level=stop_level)
    return cs
