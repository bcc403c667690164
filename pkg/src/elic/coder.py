"""Symbol quantization and the binding between CDF tables and the range coder.

Coding convention: the encoder writes q = round(y - mean) (half away from
zero, computed in float32) and both sides reconstruct the coding symbol as
q + mean, so |reconstruction - y| <= 0.5 and the decoder sees bit-identical
context inputs. Symbols outside a table's support escape to 16-bit raw
coding, clamped to int16 range.
"""

import numpy as np

from ._backend import RangeDecoder, RangeEncoder, decode_symbols, encode_symbols

RAW_MIN = -32768
RAW_MAX = 32767


def quantize(y, mean):
    """round(y - mean), half away from zero, elementwise in float32."""
    v = np.asarray(y, dtype=np.float32) - np.asarray(mean, dtype=np.float32)
    q = np.copysign(np.floor(np.abs(v) + np.float32(0.5)), v)
    return np.clip(q, RAW_MIN, RAW_MAX).astype(np.int32)


def dequantize(q, mean):
    """Reconstruct coding symbols: q + mean in float32."""
    return q.astype(np.float32) + np.asarray(mean, dtype=np.float32)


def encode_with_store(encoder, symbols, levels, store):
    """Push int32 symbols with per-symbol sigma levels through ``encoder``."""
    symbols = np.ascontiguousarray(symbols, dtype=np.int32).reshape(-1)
    levels = np.ascontiguousarray(levels, dtype=np.int32).reshape(-1)
    if symbols.shape != levels.shape:
        raise ValueError("symbols/levels length mismatch")
    if symbols.size == 0:
        return
    rows, flat, offsets, s_los, nsyms = store.gather(levels)
    encode_symbols(encoder, symbols, rows, flat, offsets, s_los, nsyms)


def decode_with_store(decoder, levels, store):
    """Read back the symbols for a per-symbol sigma level array."""
    levels = np.ascontiguousarray(levels, dtype=np.int32).reshape(-1)
    out = np.zeros(levels.size, dtype=np.int32)
    if levels.size == 0:
        return out
    rows, flat, offsets, s_los, nsyms = store.gather(levels)
    decode_symbols(decoder, rows, flat, offsets, s_los, nsyms, out)
    return out


def encode_segment(symbols, levels, store):
    """One-shot: encode a symbol array into a standalone byte segment."""
    enc = RangeEncoder()
    encode_with_store(enc, symbols, levels, store)
    return enc.flush() if np.asarray(symbols).size else b""


def decode_segment(data, levels, store):
    """One-shot inverse of :func:`encode_segment`."""
    levels = np.asarray(levels, dtype=np.int32).reshape(-1)
    if levels.size == 0:
        return np.zeros(0, dtype=np.int32)
    dec = RangeDecoder(data)
    return decode_with_store(dec, levels, store)


__all__ = [
    "RangeEncoder", "RangeDecoder", "quantize", "dequantize",
    "encode_with_store", "decode_with_store", "encode_segment",
    "decode_segment", "RAW_MIN", "RAW_MAX",
]
