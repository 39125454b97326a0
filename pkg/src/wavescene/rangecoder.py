"""Adaptive binary range coder and bitplane codeblock coding.

The arithmetic-coding core is a carry-aware byte-oriented range coder
with 32-bit state and 11-bit adaptive probabilities (shift-5 update),
the construction used by LZMA.  On top of it sits a sign-magnitude
bitplane coder: codeblock coefficients are coded most significant plane
first, each sample conditioned on one of four contexts

    0  significance, no significant 8-neighbour yet
    1  significance, at least one significant 8-neighbour
    2  sign of a sample that just became significant
    3  refinement of an already significant sample

Context statistics reset per codeblock, so every payload decodes
independently of all others.  The hot loops are numba-compiled.
"""

from __future__ import annotations

import numpy as np
from numba import njit

PROB_BITS = 11
PROB_INIT = 1 << (PROB_BITS - 1)
ADAPT_SHIFT = 5
TOP = 1 << 24
MASK32 = 0xFFFFFFFF
NUM_CONTEXTS = 4
FLUSH_BYTES = 5


@njit(cache=True)
def _shift_low(low, cache, cache_size, buf, pos):
    if low < 0xFF000000 or low > MASK32:
        carry = low >> 32
        buf[pos] = (cache + carry) & 0xFF
        pos += 1
        for _ in range(cache_size - 1):
            buf[pos] = (0xFF + carry) & 0xFF
            pos += 1
        cache = (low >> 24) & 0xFF
        cache_size = 0
    cache_size += 1
    low = (low << 8) & MASK32
    return low, cache, cache_size, pos


@njit(cache=True)
def _enc_bit(bit, probs, ctx, low, rng, cache, cache_size, buf, pos):
    prob = probs[ctx]
    bound = (rng >> PROB_BITS) * prob
    if bit == 0:
        rng = bound
        probs[ctx] = prob + (((1 << PROB_BITS) - prob) >> ADAPT_SHIFT)
    else:
        low += bound
        rng -= bound
        probs[ctx] = prob - (prob >> ADAPT_SHIFT)
    while rng < TOP:
        low, cache, cache_size, pos = _shift_low(low, cache, cache_size, buf, pos)
        rng = (rng << 8) & MASK32
    return low, rng, cache, cache_size, pos


@njit(cache=True)
def _enc_flush(low, cache, cache_size, buf, pos):
    for _ in range(FLUSH_BYTES):
        low, cache, cache_size, pos = _shift_low(low, cache, cache_size, buf, pos)
    return pos


@njit(cache=True)
def _dec_byte(buf, pos):
    if pos < buf.size:
        return np.int64(buf[pos]), pos + 1
    return np.int64(0), pos + 1


@njit(cache=True)
def _dec_init(buf):
    code = np.int64(0)
    pos = 0
    for _ in range(FLUSH_BYTES):
        b, pos = _dec_byte(buf, pos)
        code = ((code << 8) | b) & MASK32
    return code, pos


@njit(cache=True)
def _dec_bit(probs, ctx, code, rng, buf, pos):
    prob = probs[ctx]
    bound = (rng >> PROB_BITS) * prob
    if code < bound:
        bit = 0
        rng = bound
        probs[ctx] = prob + (((1 << PROB_BITS) - prob) >> ADAPT_SHIFT)
    else:
        bit = 1
        code -= bound
        rng -= bound
        probs[ctx] = prob - (prob >> ADAPT_SHIFT)
    while rng < TOP:
        b, pos = _dec_byte(buf, pos)
        code = ((code << 8) | b) & MASK32
        rng = (rng << 8) & MASK32
    return bit, code, rng, pos


@njit(cache=True)
def _encode_bit_string(bits, ctxs, n_ctx, buf):
    probs = np.full(n_ctx, PROB_INIT, dtype=np.int64)
    low = np.int64(0)
    rng = np.int64(MASK32)
    cache = np.int64(0)
    cache_size = np.int64(1)
    pos = np.int64(0)
    for k in range(bits.size):
        low, rng, cache, cache_size, pos = _enc_bit(
            bits[k], probs, ctxs[k], low, rng, cache, cache_size, buf, pos
        )
    return _enc_flush(low, cache, cache_size, buf, pos)


@njit(cache=True)
def _decode_bit_string(data, ctxs, n_ctx):
    probs = np.full(n_ctx, PROB_INIT, dtype=np.int64)
    out = np.empty(ctxs.size, dtype=np.uint8)
    code, pos = _dec_init(data)
    rng = np.int64(MASK32)
    for k in range(ctxs.size):
        bit, code, rng, pos = _dec_bit(probs, ctxs[k], code, rng, data, pos)
        out[k] = bit
    return out


def encode_bits(bits, contexts, num_contexts: int) -> bytes:
    """Range-encode a 0/1 sequence, one adaptive model per context id."""
    bits = np.ascontiguousarray(bits, dtype=np.uint8)
    ctxs = np.ascontiguousarray(contexts, dtype=np.int64)
    if bits.shape != ctxs.shape or bits.ndim != 1:
        raise ValueError("bits and contexts must be equal-length 1-D sequences")
    buf = np.empty(bits.size + 8 * FLUSH_BYTES + 16, dtype=np.uint8)
    n = _encode_bit_string(bits, ctxs, num_contexts, buf)
    return buf[:n].tobytes()


def decode_bits(data: bytes, contexts, num_contexts: int) -> np.ndarray:
    """Inverse of :func:`encode_bits` given the same context sequence."""
    ctxs = np.ascontiguousarray(contexts, dtype=np.int64)
    buf = np.frombuffer(data, dtype=np.uint8)
    return _decode_bit_string(buf, ctxs, num_contexts)


@njit(cache=True)
def _encode_block(mag, neg, mb, buf):
    h, w = mag.shape
    probs = np.full(NUM_CONTEXTS, PROB_INIT, dtype=np.int64)
    signif = np.zeros((h, w), dtype=np.uint8)
    low = np.int64(0)
    rng = np.int64(MASK32)
    cache = np.int64(0)
    cache_size = np.int64(1)
    pos = np.int64(0)
    for p in range(mb - 1, -1, -1):
        for i in range(h):
            for j in range(w):
                bit = (mag[i, j] >> p) & 1
                if signif[i, j]:
                    low, rng, cache, cache_size, pos = _enc_bit(
                        bit, probs, 3, low, rng, cache, cache_size, buf, pos
                    )
                else:
                    ctx = 0
                    for ii in range(max(0, i - 1), min(h, i + 2)):
                        for jj in range(max(0, j - 1), min(w, j + 2)):
                            if signif[ii, jj]:
                                ctx = 1
                    low, rng, cache, cache_size, pos = _enc_bit(
                        bit, probs, ctx, low, rng, cache, cache_size, buf, pos
                    )
                    if bit:
                        low, rng, cache, cache_size, pos = _enc_bit(
                            neg[i, j], probs, 2, low, rng, cache, cache_size, buf, pos
                        )
                        signif[i, j] = 1
    return _enc_flush(low, cache, cache_size, buf, pos)


@njit(cache=True)
def _decode_block(data, mb, h, w):
    probs = np.full(NUM_CONTEXTS, PROB_INIT, dtype=np.int64)
    signif = np.zeros((h, w), dtype=np.uint8)
    negative = np.zeros((h, w), dtype=np.uint8)
    mag = np.zeros((h, w), dtype=np.int64)
    code, pos = _dec_init(data)
    rng = np.int64(MASK32)
    for p in range(mb - 1, -1, -1):
        for i in range(h):
            for j in range(w):
                if signif[i, j]:
                    bit, code, rng, pos = _dec_bit(probs, 3, code, rng, data, pos)
                    mag[i, j] |= bit << p
                else:
                    ctx = 0
                    for ii in range(max(0, i - 1), min(h, i + 2)):
                        for jj in range(max(0, j - 1), min(w, j + 2)):
                            if signif[ii, jj]:
                                ctx = 1
                    bit, code, rng, pos = _dec_bit(probs, ctx, code, rng, data, pos)
                    if bit:
                        neg, code, rng, pos = _dec_bit(probs, 2, code, rng, data, pos)
                        mag[i, j] = 1 << p
                        negative[i, j] = neg
                        signif[i, j] = 1
    for i in range(h):
        for j in range(w):
            if negative[i, j]:
                mag[i, j] = -mag[i, j]
    return mag


def significant_bitplanes(coeffs) -> int:
    """Count of magnitude bitplanes needed for ``coeffs``; 0 when all zero.

    Equals floor(log2(max abs)) + 1 for a nonzero block.
    """
    coeffs = np.asarray(coeffs)
    if coeffs.size == 0:
        return 0
    return int(np.abs(coeffs, dtype=np.int64).max()).bit_length()


def encode_codeblock(coeffs) -> tuple[int, bytes]:
    """Losslessly code one codeblock of integer coefficients.

    Returns (mb, payload) where mb is the significant-bitplane count the
    decoder must be told and payload is the range-coded byte string.  An
    all-zero or empty block yields (0, b"").
    """
    coeffs = np.ascontiguousarray(coeffs, dtype=np.int64)
    if coeffs.ndim != 2:
        raise ValueError("codeblock must be two-dimensional")
    mb = significant_bitplanes(coeffs)
    if mb == 0:
        return 0, b""
    mag = np.abs(coeffs)
    neg = (coeffs < 0).astype(np.uint8)
    cap = coeffs.size * (mb + 1) + 8 * FLUSH_BYTES + 16
    buf = np.empty(cap, dtype=np.uint8)
    n = _encode_block(mag, neg, mb, buf)
    return mb, buf[:n].tobytes()


def decode_codeblock(payload: bytes, mb: int, height: int, width: int) -> np.ndarray:
    """Exact inverse of :func:`encode_codeblock`."""
    if mb == 0:
        return np.zeros((height, width), dtype=np.int32)
    data = np.frombuffer(payload, dtype=np.uint8)
    out = _decode_block(data, mb, height, width)
    return out.astype(np.int32)


def warm_up() -> None:
    """Trigger JIT compilation of the hot paths with a tiny block."""
    block = np.array([[1, -2], [0, 3]], dtype=np.int32)
    mb, payload = encode_codeblock(block)
    decode_codeblock(payload, mb, 2, 2)
    data = encode_bits([0, 1, 1], [0, 1, 0], 2)
    decode_bits(data, [0, 1, 0], 2)
